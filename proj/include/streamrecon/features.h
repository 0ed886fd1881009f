#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/geometry.h"
#include "streamrecon/image.h"
#include "streamrecon/scene_store.h"

namespace streamrecon {

using LevelFeatures = std::array<FeatureMap, kNumLevels>;

// Throws InputError unless both dims are divisible by 32.
void CheckPyramidDims(int width, int height);

// Full-resolution centers of the level-l pixel grid, row-major.
std::vector<Eigen::Vector2d> LevelPixelCenters(int level, int width, int height);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // Four levels of features; level l holds (W / 2^(6-l)) * (H / 2^(6-l))
  // points in row-major order.
  virtual LevelFeatures Extract(const Image& image, const Camera& cam) const = 0;
  virtual int channels() const = 0;
};

// Training-free reference extractor. Each level pixel gets a 4x4 bilinear
// patch of the pooled image (RGB) plus gradient magnitudes at the same taps,
// normalized to zero mean and unit variance, then reduced to 32 channels by
// a fixed Gaussian projection.
class PatchExtractor : public FeatureExtractor {
 public:
  explicit PatchExtractor(std::uint64_t seed = 0);
  LevelFeatures Extract(const Image& image, const Camera& cam) const override;
  int channels() const override { return kDefaultChannels; }

  std::vector<float> Reduce(const std::vector<float>& feature) const;

 private:
  Eigen::MatrixXf projection_;  // 32 x 64
};

// First surface point hit by a ray, if any.
using SurfaceOracle = std::function<std::optional<Eigen::Vector3d>(const Ray&)>;

// Test extractor for synthetic scenes: the feature of a pixel is a unit
// sin/cos encoding of the surface point its center ray hits, so features of
// the same 3D point match with dot 1 across views. Pixels that hit nothing
// get zero features.
class OracleExtractor : public FeatureExtractor {
 public:
  explicit OracleExtractor(SurfaceOracle oracle);
  LevelFeatures Extract(const Image& image, const Camera& cam) const override;
  int channels() const override { return kDefaultChannels; }

  std::vector<float> Encode(const Eigen::Vector3d& point) const;
  std::vector<float> EncodeReduced(const Eigen::Vector3d& point) const;

 private:
  SurfaceOracle oracle_;
};

// Unit-norm encoding [sin(2 pi x_d / lambda_k), cos(2 pi x_d / lambda_k)]
// over coordinates d and wavelengths k, zero padded to `channels`.
std::vector<float> PositionalEncoding(const Eigen::Vector3d& point,
                                      const std::vector<double>& wavelengths,
                                      int channels);

float Dot(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace streamrecon
