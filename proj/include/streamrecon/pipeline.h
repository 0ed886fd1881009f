#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "streamrecon/dataset.h"
#include "streamrecon/engine.h"
#include "streamrecon/mesh.h"
#include "streamrecon/synthetic.h"

namespace streamrecon {

// The synthetic scene a sequence directory was generated from, read back
// from its scene.txt; nullopt when the directory has none.
std::optional<SyntheticScene> LoadSyntheticScene(const std::string& dir);

struct ReconstructionSummary {
  std::size_t frames = 0;
  std::vector<SkippedFrame> skipped;
  std::array<std::size_t, kNumLevels> level_points{};
  std::size_t inserted = 0;
  std::size_t removed = 0;
  TriMesh mesh;
};

// Runs the engine over every frame of `source`, then renders the final
// finest level into each camera, fuses those maps and writes cloud.ply,
// mesh.ply, depth/NNNNNN.pfm, config.txt and metrics.json into `out_dir`.
// metrics.json holds the run statistics and, when the source directory
// carries ground truth, the evaluation report.
ReconstructionSummary RunReconstruction(SequenceSource& source, const EngineConfig& config,
                                        const std::string& out_dir,
                                        const SurfaceOracle* oracle = nullptr,
                                        std::ostream* log = nullptr);

// Ground truth resampled to a coarser grid: each coarse pixel averages the
// valid fine pixels nearest its center (the central 2x2 for even factors).
DepthMap ResampleToGrid(const DepthMap& fine, int width, int height);

// Camera-frame depth of the first mesh hit through each pixel center;
// `cam` sets the resolution.
DepthMap RenderMeshDepth(const MeshBvh& mesh, const Camera& cam);

// True for points seen by at least one camera: in frustum and no farther
// than the camera's depth at that pixel plus `tolerance`.
std::function<bool(const Eigen::Vector3d&)> VisibilityFilter(
    std::vector<Camera> cameras, std::vector<DepthMap> depths, double tolerance);

struct EvaluationOptions {
  std::size_t mesh_samples = 100000;
  double threshold = 0.05;
  std::uint64_t seed = 0;
  double visibility_tolerance = 0.05;
};

// Compares pred_dir (depth/*.pfm, mesh.ply) against gt_dir (poses,
// intrinsics, depth maps, mesh_gt.ply). Frame ids must match exactly.
// Depth is scored twice at the prediction's resolution: rendered from the
// fused mesh ("mesh_depth") and as rendered points ("point_depth").
nlohmann::json Evaluate(const std::string& pred_dir, const std::string& gt_dir,
                        const EvaluationOptions& options = {});

}  // namespace streamrecon
