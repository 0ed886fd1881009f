#include "streamrecon/merger.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace streamrecon {
namespace {

// Linear pixel of `p` in `cam`, or -1 outside the frustum.
long PixelOf(const Camera& cam, const Eigen::Vector3d& p, double* depth) {
  const Eigen::Vector3d local = cam.WorldToCamera(p);
  if (!(local.z() >= kCameraPlaneEps)) return -1;
  const Intrinsics& k = cam.intrinsics();
  const double u = k.fx * local.x() / local.z() + k.cx;
  const double v = k.fy * local.y() / local.z() + k.cy;
  if (!(u >= 0.0 && u < cam.width() && v >= 0.0 && v < cam.height())) return -1;
  *depth = local.z();
  return static_cast<long>(std::floor(v)) * cam.width() +
         static_cast<long>(std::floor(u));
}

Camera LevelCamera(const Camera& cam, int level) {
  return cam.Scaled(LevelScale(level));
}

}  // namespace

std::vector<PixelBucket> BuildBuckets(const std::vector<ScenePoint>& points,
                                      const Camera& cam) {
  std::vector<std::pair<long, BucketMember>> hits;
  for (const auto& p : points) {
    double depth = 0.0;
    const long pixel = PixelOf(cam, p.position, &depth);
    if (pixel >= 0) hits.push_back({pixel, BucketMember{p.id, depth, p.confidence}});
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second.id < b.second.id;
  });
  std::vector<PixelBucket> buckets;
  for (const auto& [pixel, member] : hits) {
    if (buckets.empty() ||
        buckets.back().y * cam.width() + buckets.back().x != pixel) {
      PixelBucket b;
      b.camera = cam.id();
      b.x = static_cast<int>(pixel % cam.width());
      b.y = static_cast<int>(pixel / cam.width());
      buckets.push_back(std::move(b));
    }
    buckets.back().members.push_back(member);
  }
  return buckets;
}

DepthMap RenderTrain(const std::vector<ScenePoint>& points, const Camera& cam) {
  DepthMap out(cam.width(), cam.height(), cam.id());
  for (const auto& b : BuildBuckets(points, cam)) {
    double max_c = -std::numeric_limits<double>::infinity();
    for (const auto& m : b.members) max_c = std::max(max_c, m.conf);
    double num = 0.0, den = 0.0;
    for (const auto& m : b.members) {
      const double w = std::exp(m.conf - max_c);
      num += w * m.depth;
      den += w;
    }
    out.at(b.x, b.y) = num / den;
  }
  return out;
}

DepthMap RenderInfer(const std::vector<ScenePoint>& points, const Camera& cam,
                     double eps) {
  DepthMap out(cam.width(), cam.height(), cam.id());
  for (const auto& p : points) {
    if (!(p.confidence > eps)) continue;
    double depth = 0.0;
    const long pixel = PixelOf(cam, p.position, &depth);
    if (pixel < 0) continue;
    double& d = out.values()[static_cast<std::size_t>(pixel)];
    if (d == 0.0 || depth < d) d = depth;
  }
  return out;
}

DepthMap RenderTrain(const MultiLevelCloud& cloud, int level, const Camera& cam) {
  return RenderTrain(cloud.Level(level), LevelCamera(cam, level));
}

DepthMap RenderInfer(const MultiLevelCloud& cloud, int level, const Camera& cam,
                     double eps) {
  return RenderInfer(cloud.Level(level), LevelCamera(cam, level), eps);
}

std::vector<PointId> Trim(const std::vector<ScenePoint>& points,
                          const std::vector<Camera>& cams,
                          const std::unordered_set<PointId>& protected_ids) {
  const std::size_t n = points.size();
  std::vector<char> occupies(n, 0), wins(n, 0);
  std::vector<long> pixel_of(n);
  std::vector<long> winner;
  for (const Camera& cam : cams) {
    winner.assign(static_cast<std::size_t>(cam.width()) * cam.height(), -1);
    for (std::size_t i = 0; i < n; ++i) {
      double depth = 0.0;
      pixel_of[i] = PixelOf(cam, points[i].position, &depth);
      if (pixel_of[i] < 0) continue;
      occupies[i] = 1;
      long& w = winner[static_cast<std::size_t>(pixel_of[i])];
      if (w < 0) {
        w = static_cast<long>(i);
        continue;
      }
      const ScenePoint& a = points[i];
      const ScenePoint& b = points[static_cast<std::size_t>(w)];
      if (a.confidence > b.confidence ||
          (a.confidence == b.confidence && a.id < b.id)) {
        w = static_cast<long>(i);
      }
    }
    for (long w : winner) {
      if (w >= 0) wins[static_cast<std::size_t>(w)] = 1;
    }
  }
  std::vector<PointId> removed;
  for (std::size_t i = 0; i < n; ++i) {
    if (occupies[i] && !wins[i] && protected_ids.count(points[i].id) == 0) {
      removed.push_back(points[i].id);
    }
  }
  std::sort(removed.begin(), removed.end());
  return removed;
}

bool FrustaOverlap(const Camera& a, const Camera& b) {
  auto corners_land = [](const Camera& from, const Camera& to) {
    const double w = from.width(), h = from.height();
    const Eigen::Vector2d corners[4] = {
        {0.5, 0.5}, {w - 0.5, 0.5}, {0.5, h - 0.5}, {w - 0.5, h - 0.5}};
    for (const auto& c : corners) {
      for (double depth : {0.5, 5.0}) {
        if (InFrustum(to, Backproject(from, c, depth))) return true;
      }
    }
    return false;
  };
  return corners_land(a, b) || corners_land(b, a);
}

MergeReport MergeStep(MultiLevelCloud* cloud, std::vector<ScenePoint> new_points,
                      const Camera& current, const std::vector<Camera>& history,
                      const MergeConfig& config) {
  STREAMRECON_CHECK_INPUT(config.recent >= 1, "recent camera count must be >= 1");
  for (const auto& p : new_points) {
    STREAMRECON_CHECK_INPUT(p.origin_cam == current.id(),
                            "new point from camera ", p.origin_cam,
                            " merged into frame ", current.id());
  }
  MergeReport report;
  cloud->RegisterCamera(current);

  std::vector<const Camera*> overlapping;
  for (const Camera& cam : history) {
    STREAMRECON_CHECK_INPUT(cam.id() < current.id(), "history camera ", cam.id(),
                            " is not older than ", current.id());
    if (FrustaOverlap(current, cam)) overlapping.push_back(&cam);
  }
  std::sort(overlapping.begin(), overlapping.end(),
            [](const Camera* a, const Camera* b) { return a->id() > b->id(); });
  const std::size_t keep = static_cast<std::size_t>(config.recent - 1);
  std::vector<const Camera*> trim_cams{&current};
  std::vector<const Camera*> protect_cams;
  for (std::size_t i = 0; i < overlapping.size(); ++i) {
    (i < keep ? trim_cams : protect_cams).push_back(overlapping[i]);
  }
  for (const Camera* c : trim_cams) report.trim_cameras.push_back(c->id());
  for (const Camera* c : protect_cams) report.protect_cameras.push_back(c->id());

  std::unordered_set<PointId> protected_ids;
  for (int level = 1; level <= kNumLevels; ++level) {
    for (const auto& p : cloud->Level(level)) {
      for (const Camera* c : protect_cams) {
        if (InFrustum(*c, p.position)) {
          protected_ids.insert(p.id);
          break;
        }
      }
    }
  }
  report.protected_points = protected_ids.size();

  report.inserted = new_points.size();
  cloud->Insert(std::move(new_points));

  std::vector<PointId> removal;
  for (int level = 1; level <= kNumLevels; ++level) {
    std::vector<Camera> cams;
    for (const Camera* c : trim_cams) cams.push_back(LevelCamera(*c, level));
    const auto ids = Trim(cloud->Level(level), cams, protected_ids);
    removal.insert(removal.end(), ids.begin(), ids.end());
  }
  for (PointId id : removal) {
    if (protected_ids.count(id)) ++report.protected_removed;
  }
  STREAMRECON_CHECK_INVARIANT(report.protected_removed == 0,
                              report.protected_removed,
                              " protected points selected for removal");
  const std::size_t unknown = cloud->Remove(removal);
  STREAMRECON_CHECK_INVARIANT(unknown == 0, unknown, " trimmed ids were not live");
  report.removed = removal.size();
  return report;
}

}  // namespace streamrecon
