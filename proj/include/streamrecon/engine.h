#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamrecon/config.h"
#include "streamrecon/features.h"
#include "streamrecon/geometry.h"
#include "streamrecon/image.h"
#include "streamrecon/matcher.h"
#include "streamrecon/merger.h"
#include "streamrecon/predictors.h"
#include "streamrecon/scene_store.h"

namespace streamrecon {

struct EngineConfig {
  MatchConfig match;          // K, M, span
  double offset_clamp = kOffsetClamp;
  int levels = kNumLevels;
  int k_recent = 16;
  double eps = 0.0;           // render confidence threshold
  double voxel_size = 0.04;
  std::string predictor = "argmax";  // oracle | argmax | tiny
  std::string extractor = "patch";   // oracle | patch
  std::uint64_t seed = 0;
  double gap_threshold = 0.1;
  double prior_depth = 2.0;
  std::string weights;  // TinyHead weight file; empty uses seeded random heads

  // Throws InputError on out-of-range values.
  void Validate() const;

  // Keys: K, M, span, offset_clamp, levels, K_recent, eps, voxel_size,
  // predictor, extractor, seed, gap_threshold, prior_depth, weights.
  // Unknown keys are rejected.
  static EngineConfig FromKeyValues(const KeyValues& kv);
  static EngineConfig Load(const std::string& path);
  std::string ToText() const;
};

struct FrameResult {
  CameraId id = 0;
  // Depth-head output per level, at that level's resolution.
  std::array<DepthMap, kNumLevels> predicted;
  // Inference render of the finest cloud level after merging.
  DepthMap rendered;
  MergeReport merge;
  std::size_t updated_points = 0;
  bool first = false;
};

// The online loop. Frames must arrive with increasing camera ids; nothing
// about later frames is visible to ProcessFrame.
class Engine {
 public:
  Engine(EngineConfig config, std::shared_ptr<const FeatureExtractor> extractor,
         std::shared_ptr<const Predictor> predictor);

  FrameResult ProcessFrame(const Image& image, const Camera& cam);

  const MultiLevelCloud& cloud() const { return cloud_; }
  const std::vector<Camera>& cameras() const { return history_; }
  const EngineConfig& config() const { return config_; }

 private:
  std::vector<ScenePoint> LiftLevel(const FeatureMap& features, const Camera& cam,
                                    const std::vector<HeadOutput>& heads) const;
  std::size_t UpdatePass(const LevelFeatures& features, const Camera& cam);
  std::vector<HeadOutput> DepthLevel(const FeatureMap& features, int level,
                                     const Camera& cam,
                                     const FeatureMap* coarse_features,
                                     const std::vector<HeadOutput>* coarse) const;

  EngineConfig config_;
  std::shared_ptr<const FeatureExtractor> extractor_;
  std::shared_ptr<const Predictor> predictor_;
  MultiLevelCloud cloud_;
  std::vector<Camera> history_;
};

// Builds the extractor and predictor named by the config. The oracle
// variants need `oracle`.
std::shared_ptr<const FeatureExtractor> MakeExtractor(const EngineConfig& config,
                                                      const SurfaceOracle* oracle);
std::shared_ptr<const Predictor> MakePredictor(const EngineConfig& config,
                                               const SurfaceOracle* oracle);

}  // namespace streamrecon
