#include "streamrecon/matcher.h"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "streamrecon/features.h"

namespace streamrecon {
namespace {

constexpr double kOnRayTolerance = 1e-6;

double CameraDepth(const Camera& cam, const Eigen::Vector3d& p) {
  return cam.WorldToCamera(p).z();
}

}  // namespace

double GaussianDensity(double x, double sigma) {
  static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
  const double u = x / sigma;
  return kInvSqrt2Pi / sigma * std::exp(-0.5 * u * u);
}

Eigen::Vector2d SampleLookupPixel(const Camera& cam, const Eigen::Vector3d& sample,
                                  bool* inside) {
  const auto proj = TryProject(cam, sample);
  *inside = InFrustum(cam, sample);
  if (!proj) {
    return Eigen::Vector2d(cam.intrinsics().cx, cam.intrinsics().cy);
  }
  return Eigen::Vector2d(std::clamp(proj->pixel.x(), 0.0, double(cam.width())),
                         std::clamp(proj->pixel.y(), 0.0, double(cam.height())));
}

UpdateMeta UpdateMetadata(const ScenePoint& q, const Eigen::Vector3d& sample,
                          const Ray& neighbor_ray,
                          const Eigen::Vector2d& neighbor_pixel,
                          const Camera& cam) {
  const Ray ray = q.ray();
  STREAMRECON_CHECK_INVARIANT(PointToLineDistance(ray, sample) <= kOnRayTolerance,
                              "sample is off the point's ray");
  const RayCrossing x = ClosestPoints(ray, neighbor_ray);
  bool inside = false;
  const Eigen::Vector2d s_pixel = SampleLookupPixel(cam, sample, &inside);
  UpdateMeta m;
  m[0] = (x.p1 - q.position).dot(q.ray_dir);
  m[1] = (sample - q.position).dot(q.ray_dir);
  m[2] = (x.p1 - sample).dot(q.ray_dir);
  m[3] = (x.p1 - q.ray_origin).norm();
  m[4] = CameraDepth(cam, x.p1);
  m[5] = x.gap;
  m[6] = q.ray_dir.dot(neighbor_ray.dir);
  m[7] = (s_pixel - neighbor_pixel).norm();
  m[8] = GaussianDensity(m[0], q.sigma);
  m[9] = inside ? 1.0 : 0.0;
  return m;
}

DepthMeta DepthMetadata(const Ray& ray, const Eigen::Vector3d& sample,
                        const ScenePoint& neighbor, const Camera& cam) {
  STREAMRECON_CHECK_INVARIANT(PointToLineDistance(ray, sample) <= kOnRayTolerance,
                              "sample is off the query ray");
  const Ray nray = neighbor.ray();
  const RayCrossing x = ClosestPoints(ray, nray);
  DepthMeta m;
  m[0] = CameraDepth(cam, x.p1);
  m[1] = CameraDepth(cam, sample);
  m[2] = m[0] - m[1];
  m[3] = PointToLineDistance(nray, sample);
  m[4] = x.gap;
  m[5] = (neighbor.position - x.p1).norm();
  m[6] = (neighbor.position - sample).norm();
  m[7] = (x.p1 - cam.center()).norm();
  m[8] = (x.p2 - nray.origin).norm();
  m[9] = ray.dir.dot(nray.dir);
  const Eigen::Vector3d to_sample = sample - nray.origin;
  const double n = to_sample.norm();
  m[10] = n > 1e-12 ? ray.dir.dot(to_sample) / n : 0.0;
  m[11] = GaussianDensity((x.p2 - neighbor.position).dot(nray.dir), neighbor.sigma);
  m[12] = CameraDepth(cam, neighbor.position) > 0.0 ? 1.0 : 0.0;
  return m;
}

void GatherUpdateCandidates(const ScenePoint& q, const Camera& cam,
                            const FeatureMap& features, const MatchConfig& config,
                            std::vector<UpdateCandidate>* out) {
  STREAMRECON_CHECK_INPUT(!features.empty(), "feature map is empty");
  out->clear();
  out->reserve(static_cast<std::size_t>(config.samples) * config.neighbors);
  const Ray ray = q.ray();
  const auto params = SampleParameters(q.distance, config.span, config.samples);
  thread_local std::vector<GridNeighbor> found;
  for (int k = 0; k < config.samples; ++k) {
    const Eigen::Vector3d s = ray.At(params[k]);
    bool inside = false;
    const Eigen::Vector2d pixel = SampleLookupPixel(cam, s, &inside);
    features.KnnPixels(pixel, config.neighbors, &found);
    for (int j = 0; j < config.neighbors; ++j) {
      // Fewer features than M: the found ones repeat to keep K*M candidates.
      const GridNeighbor& n = found[j % found.size()];
      const FeaturePoint2D& f = features[n.index];
      UpdateCandidate c;
      c.point_id = q.id;
      c.sample_index = k;
      c.neighbor = n.index;
      c.dot = Dot(q.reduced, f.reduced);
      c.meta = UpdateMetadata(q, s, RayThroughPixel(cam, f.pixel), f.pixel, cam);
      out->push_back(c);
    }
  }
}

void GatherDepthCandidates(std::size_t pixel_id, const FeatureMap& features,
                           const Camera& cam, const MultiLevelCloud& cloud,
                           int level, double center_depth,
                           const MatchConfig& config,
                           std::vector<DepthCandidate>* out) {
  STREAMRECON_CHECK_INPUT(cloud.LevelSize(level) > 0, "no scene points at level ",
                          level);
  STREAMRECON_CHECK_INPUT(center_depth > 0.0, "center depth must be positive");
  out->clear();
  out->reserve(static_cast<std::size_t>(config.samples) * config.neighbors);
  const FeaturePoint2D& fp = features[pixel_id];
  const Ray ray = RayThroughPixel(cam, fp.pixel);
  const double dir_z = cam.WorldToCamera(cam.center() + ray.dir).z();
  const auto params =
      SampleParameters(center_depth / dir_z, config.span, config.samples);
  for (int k = 0; k < config.samples; ++k) {
    const Eigen::Vector3d s = ray.At(params[k]);
    const auto nearest = cloud.NearestRays(level, s, config.neighbors);
    for (int j = 0; j < config.neighbors; ++j) {
      const PointId id = nearest.ids[j % nearest.ids.size()];
      const ScenePoint& nbr = cloud.Get(id);
      DepthCandidate c;
      c.pixel_id = pixel_id;
      c.sample_index = k;
      c.neighbor = id;
      c.dot = Dot(fp.reduced, nbr.reduced);
      c.meta = DepthMetadata(ray, s, nbr, cam);
      out->push_back(c);
    }
  }
}

void WriteCandidates(std::ostream& out, const std::vector<UpdateCandidate>& c) {
  out << std::setprecision(9);
  for (const auto& x : c) {
    out << "U " << x.point_id << ' ' << x.sample_index << ' ' << x.neighbor << ' '
        << x.dot;
    for (double v : x.meta) out << ' ' << v;
    out << '\n';
  }
}

void WriteCandidates(std::ostream& out, const std::vector<DepthCandidate>& c) {
  out << std::setprecision(9);
  for (const auto& x : c) {
    out << "D " << x.pixel_id << ' ' << x.sample_index << ' ' << x.neighbor << ' '
        << x.dot;
    for (double v : x.meta) out << ' ' << v;
    out << '\n';
  }
}

}  // namespace streamrecon
