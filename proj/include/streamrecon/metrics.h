#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "json.hpp"

#include "streamrecon/image.h"
#include "streamrecon/mesh.h"

namespace streamrecon {

// Fractions (not percentages) for the delta and completeness fields.
struct DepthMetrics {
  double abs_diff = 0.0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double delta_1_05 = 0.0;
  double delta_1_25 = 0.0;
  double completeness = 0.0;
  std::size_t valid_pixels = 0;  // valid in both maps
  std::size_t gt_pixels = 0;
  bool valid = false;  // false when no pixel is valid in both
};

// Throws InputError on size mismatch.
DepthMetrics ComputeDepthMetrics(const DepthMap& pred, const DepthMap& gt);
// Pixel-count weighted mean of per-frame metrics.
DepthMetrics AggregateDepthMetrics(const std::vector<DepthMetrics>& frames);

struct MeshMetrics {
  double accuracy = 0.0;
  double completeness = 0.0;
  double chamfer = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  double threshold = 0.05;
};

struct MeshMetricsOptions {
  std::size_t samples = 100000;
  double threshold = 0.05;
  std::uint64_t seed = 0;
  // When set, only ground-truth samples passing the filter count toward
  // completeness and recall.
  std::function<bool(const Eigen::Vector3d&)> gt_filter;
};

MeshMetrics ComputeMeshMetrics(const TriMesh& pred, const TriMesh& gt,
                               const MeshMetricsOptions& options = {});

nlohmann::json ToJson(const DepthMetrics& m);
nlohmann::json ToJson(const MeshMetrics& m);

}  // namespace streamrecon
