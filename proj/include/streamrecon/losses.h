#pragma once

#include <array>
#include <optional>
#include <vector>

#include "streamrecon/common.h"
#include "streamrecon/geometry.h"
#include "streamrecon/image.h"

namespace streamrecon {

// Gradients are written per pixel into maps of the prediction's size when
// the output pointer is non-null. A pixel is valid where gt > 0; invalid
// pixels are left out of every sum and every normalizer.

// sum_l (1 / l^2) sum_i |ln d_i^l - ln g_i| / HW with HW the valid gt count.
// Every level map must match the gt size and be positive on valid pixels.
double DepthLoss(const std::array<DepthMap, kNumLevels>& pred, const DepthMap& gt,
                 std::array<DepthMap, kNumLevels>* grad = nullptr);

// sum over scales r = 0..3 of sum |grad pred_r - grad gt_r| / HW, with
// forward differences in x and y and each scale a 2x2 valid-pixel average of
// the previous one. HW is the full-resolution valid count.
double GradLoss(const DepthMap& pred, const DepthMap& gt, DepthMap* grad = nullptr);

// sum (1 - n . n_gt) / (2 N) over the N pixels where both normals exist.
// Normals come from the cross product of the forward-difference tangents of
// the back-projected maps; pixels needing an invalid or out-of-image
// neighbor, or with a zero-area tangent pair, are skipped. `cam` must match
// the map resolution.
double NormalLoss(const DepthMap& pred, const DepthMap& gt, const Camera& cam,
                  DepthMap* grad = nullptr);

// mean |z_i - z_gt_i| over points with a ground truth value.
double UpdateLoss(const std::vector<double>& z,
                  const std::vector<std::optional<double>>& z_gt,
                  std::vector<double>* grad = nullptr);

struct LossReport {
  double depth = 0.0;
  double grad = 0.0;
  double normal = 0.0;
  double update = 0.0;
  double total = 0.0;
};

// All four terms; `finest` is the level-4 map at gt resolution, and
// `finest_cam` matches it.
LossReport ComputeLosses(const std::array<DepthMap, kNumLevels>& pred,
                         const DepthMap& gt, const Camera& finest_cam,
                         const std::vector<double>& z,
                         const std::vector<std::optional<double>>& z_gt);

// Upsamples a depth map by an integer factor with inverse-distance weights
// over the 4 nearest valid coarse pixel centers.
DepthMap UpsampleIdw(const DepthMap& coarse, int factor);

// Per-pixel forward-difference normals of a depth map in the camera frame;
// pixels without a normal hold NaN.
std::vector<Eigen::Vector3d> DepthNormals(const DepthMap& depth, const Camera& cam);

}  // namespace streamrecon
