#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/geometry.h"
#include "streamrecon/scene_store.h"

namespace streamrecon {

constexpr int kUpdateMetaSize = 10;
constexpr int kDepthMetaSize = 13;
using UpdateMeta = std::array<double, kUpdateMetaSize>;
using DepthMeta = std::array<double, kDepthMetaSize>;

struct MatchConfig {
  int samples = 32;    // K
  int neighbors = 1;   // M
  double span = 1.5;   // total sampling range along the ray, meters
};

// One (3D point, sample, 2D neighbor) triple of the scene update.
struct UpdateCandidate {
  PointId point_id = 0;
  int sample_index = 0;      // 0-based position along the ray
  std::size_t neighbor = 0;  // index into the level's FeatureMap
  float dot = 0.f;
  UpdateMeta meta{};
};

// One (2D point, sample, 3D neighbor) triple of depth prediction.
struct DepthCandidate {
  std::size_t pixel_id = 0;  // index into the level's FeatureMap
  int sample_index = 0;
  PointId neighbor = 0;
  float dot = 0.f;
  DepthMeta meta{};
};

// Metadata of the scene update, in order:
//  0 (p1 - p).r          1 (s - p).r            2 (p1 - s).r
//  3 |p1 - ray origin|   4 depth of p1 in cam   5 |p1 - p2|
//  6 r . r_j             7 |s' - p_j'| (full-resolution pixels)
//  8 N((p1 - p).r; 0, sigma)                    9 in_frustum(cam, s)
// p1, p2 are the closest points of q's ray and the neighbor ray; s' is the
// projection of s clamped into the image (principal point when s lies on the
// camera plane).
UpdateMeta UpdateMetadata(const ScenePoint& q, const Eigen::Vector3d& sample,
                          const Ray& neighbor_ray,
                          const Eigen::Vector2d& neighbor_pixel,
                          const Camera& cam);

// Metadata of depth prediction, in order:
//  0 depth of p1 in cam   1 depth of s          2 [0] - [1]
//  3 dist(s, nbr ray)     4 |p1 - p2|           5 |p_j - p1|
//  6 |p_j - s|            7 |p1 - cam center|   8 |p2 - nbr ray origin|
//  9 ray.dir . r_j       10 cos(ray.dir, s - nbr ray origin)
// 11 N((p2 - p_j).r_j; 0, sigma_j)             12 [depth of p_j in cam > 0]
// with p1 on `ray` and p2 on the neighbor's ray.
DepthMeta DepthMetadata(const Ray& ray, const Eigen::Vector3d& sample,
                        const ScenePoint& neighbor, const Camera& cam);

// Pixel used to look up 2D neighbors of a 3D sample: its projection clamped
// into [0, width] x [0, height]. *inside reports in_frustum.
Eigen::Vector2d SampleLookupPixel(const Camera& cam, const Eigen::Vector3d& sample,
                                  bool* inside);

// K*M candidates for one visible scene point. `features` is the level's map
// of the current frame; `cam` the full-resolution current camera.
void GatherUpdateCandidates(const ScenePoint& q, const Camera& cam,
                            const FeatureMap& features, const MatchConfig& config,
                            std::vector<UpdateCandidate>* out);

// K*M candidates for the 2D point `pixel_id` of `features`, sampling around
// the camera-frame depth `center_depth`. Throws InputError if the cloud
// level is empty.
void GatherDepthCandidates(std::size_t pixel_id, const FeatureMap& features,
                           const Camera& cam, const MultiLevelCloud& cloud,
                           int level, double center_depth,
                           const MatchConfig& config,
                           std::vector<DepthCandidate>* out);

// One line per candidate: "U point sample neighbor dot meta..." or
// "D pixel sample neighbor dot meta...".
void WriteCandidates(std::ostream& out, const std::vector<UpdateCandidate>& c);
void WriteCandidates(std::ostream& out, const std::vector<DepthCandidate>& c);

// 1-D normal density.
double GaussianDensity(double x, double sigma);

}  // namespace streamrecon
