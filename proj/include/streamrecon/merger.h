#pragma once

#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

#include "streamrecon/geometry.h"
#include "streamrecon/image.h"
#include "streamrecon/scene_store.h"

namespace streamrecon {

struct BucketMember {
  PointId id = 0;
  double depth = 0.0;  // camera-frame z
  double conf = 0.0;
};

// Points falling into one pixel of a camera, by floor discretization.
struct PixelBucket {
  CameraId camera = 0;
  int x = 0;
  int y = 0;
  std::vector<BucketMember> members;  // ascending id
};

// Buckets of every occupied pixel of `cam`, row-major. `cam` must already be
// at the rendering resolution.
std::vector<PixelBucket> BuildBuckets(const std::vector<ScenePoint>& points,
                                      const Camera& cam);

// Confidence-softmax average depth per pixel.
DepthMap RenderTrain(const std::vector<ScenePoint>& points, const Camera& cam);
// Minimum depth over members with conf > eps.
DepthMap RenderInfer(const std::vector<ScenePoint>& points, const Camera& cam,
                     double eps = 0.0);
// Renders one cloud level at that level's resolution of the full-resolution
// camera `cam`.
DepthMap RenderTrain(const MultiLevelCloud& cloud, int level, const Camera& cam);
DepthMap RenderInfer(const MultiLevelCloud& cloud, int level, const Camera& cam,
                     double eps = 0.0);

// Ids to remove so each bucket over `cams` keeps its best point. A point
// loses a bucket unless it has the highest confidence there (ties: lowest
// id). Points losing every bucket they occupy, occupying at least one, and
// not in `protected_ids` are returned in ascending order. Cameras are at the
// bucket resolution.
std::vector<PointId> Trim(const std::vector<ScenePoint>& points,
                          const std::vector<Camera>& cams,
                          const std::unordered_set<PointId>& protected_ids = {});

// True if a corner ray of either camera, sampled at 0.5 m and 5 m, lands
// inside the other's frustum.
bool FrustaOverlap(const Camera& a, const Camera& b);

struct MergeConfig {
  int recent = 16;  // number of most recent overlapping cameras, current included
};

struct MergeReport {
  std::size_t inserted = 0;
  std::size_t removed = 0;
  std::size_t protected_points = 0;
  std::size_t protected_removed = 0;  // must stay 0
  std::vector<CameraId> trim_cameras;
  std::vector<CameraId> protect_cameras;
};

// Inserts `new_points` (which must reference `current`) and trims per level
// against the current camera and the most recent overlapping history
// cameras. Older overlapping cameras protect every point they see.
// `history` holds earlier cameras in any order; ids order them in time.
MergeReport MergeStep(MultiLevelCloud* cloud, std::vector<ScenePoint> new_points,
                      const Camera& current, const std::vector<Camera>& history,
                      const MergeConfig& config = {});

}  // namespace streamrecon
