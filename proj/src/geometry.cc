#include "streamrecon/geometry.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace streamrecon {

Eigen::Matrix3d Intrinsics::Matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

Intrinsics Intrinsics::FromMatrix(const Eigen::Matrix3d& K) {
  return Intrinsics{K(0, 0), K(1, 1), K(0, 2), K(1, 2)};
}

Intrinsics Intrinsics::Scaled(double scale) const {
  return Intrinsics{fx * scale, fy * scale, cx * scale, cy * scale};
}

Camera::Camera(const Intrinsics& intrinsics, const Eigen::Matrix3d& rotation,
               const Eigen::Vector3d& center, int width, int height,
               CameraId id)
    : intrinsics_(intrinsics),
      rotation_(rotation),
      center_(center),
      width_(width),
      height_(height),
      id_(id) {}

Camera Camera::FromPose(const Eigen::Matrix4d& cam_to_world,
                        const Eigen::Matrix3d& K, int width, int height,
                        CameraId id) {
  STREAMRECON_CHECK_INPUT(cam_to_world.allFinite(), "pose is not finite");
  return Camera(Intrinsics::FromMatrix(K), cam_to_world.block<3, 3>(0, 0),
                cam_to_world.block<3, 1>(0, 3), width, height, id);
}

Camera Camera::LookAt(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& up, const Intrinsics& intrinsics,
                      int width, int height, CameraId id) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  STREAMRECON_CHECK_INPUT(right.norm() > 1e-9, "view direction parallel to up");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = forward;
  return Camera(intrinsics, R, eye, width, height, id);
}

void Camera::Validate() const {
  STREAMRECON_CHECK_INPUT(rotation_.allFinite() && center_.allFinite(),
                          "camera ", id_, " pose not finite");
  const double ortho =
      (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  STREAMRECON_CHECK_INPUT(ortho <= 1e-6, "camera ", id_,
                          " rotation not orthonormal (", ortho, ")");
  STREAMRECON_CHECK_INPUT(std::abs(rotation_.determinant() - 1.0) <= 1e-6,
                          "camera ", id_, " rotation determinant not +1");
  STREAMRECON_CHECK_INPUT(intrinsics_.fx > 0.0 && intrinsics_.fy > 0.0,
                          "camera ", id_, " focal lengths must be positive");
  STREAMRECON_CHECK_INPUT(width_ > 0 && height_ > 0, "camera ", id_,
                          " has empty image");
  STREAMRECON_CHECK_INPUT(intrinsics_.cx >= 0.0 && intrinsics_.cx < width_ &&
                              intrinsics_.cy >= 0.0 &&
                              intrinsics_.cy < height_,
                          "camera ", id_, " principal point outside image");
}

Camera Camera::Scaled(double scale) const {
  const double w = width_ * scale;
  const double h = height_ * scale;
  STREAMRECON_CHECK_INPUT(std::abs(w - std::round(w)) < 1e-9 &&
                              std::abs(h - std::round(h)) < 1e-9,
                          "image ", width_, "x", height_,
                          " does not scale by ", scale, " to whole pixels");
  return Camera(intrinsics_.Scaled(scale), rotation_, center_,
                static_cast<int>(std::lround(w)),
                static_cast<int>(std::lround(h)), id_);
}

Eigen::Matrix4d Camera::CamToWorld() const {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.block<3, 3>(0, 0) = rotation_;
  T.block<3, 1>(0, 3) = center_;
  return T;
}

std::optional<Projection> TryProject(const Camera& cam,
                                     const Eigen::Vector3d& point) {
  const Eigen::Vector3d local = cam.WorldToCamera(point);
  if (std::abs(local.z()) < kCameraPlaneEps) {
    return std::nullopt;
  }
  const Intrinsics& k = cam.intrinsics();
  Projection proj;
  proj.pixel = Eigen::Vector2d(k.fx * local.x() / local.z() + k.cx,
                               k.fy * local.y() / local.z() + k.cy);
  proj.depth = local.z();
  return proj;
}

Projection Project(const Camera& cam, const Eigen::Vector3d& point) {
  auto proj = TryProject(cam, point);
  if (!proj) {
    throw InputError(internal::StrCat("point lies on the camera plane of camera ",
                                      cam.id()));
  }
  return *proj;
}

Eigen::Vector3d Backproject(const Camera& cam, const Eigen::Vector2d& pixel,
                            double depth) {
  STREAMRECON_CHECK_INPUT(depth > 0.0, "invalid depth ", depth);
  const Intrinsics& k = cam.intrinsics();
  const Eigen::Vector3d local((pixel.x() - k.cx) / k.fx * depth,
                              (pixel.y() - k.cy) / k.fy * depth, depth);
  return cam.CameraToWorld(local);
}

Ray RayThroughPixel(const Camera& cam, const Eigen::Vector2d& pixel) {
  const Intrinsics& k = cam.intrinsics();
  const Eigen::Vector3d local((pixel.x() - k.cx) / k.fx,
                              (pixel.y() - k.cy) / k.fy, 1.0);
  Ray ray;
  ray.origin = cam.center();
  ray.dir = (cam.rotation() * local).normalized();
  return ray;
}

RayCrossing ClosestPoints(const Ray& a, const Ray& b) {
  const Eigen::Vector3d w0 = a.origin - b.origin;
  const double cos_ab = a.dir.dot(b.dir);
  const double da = a.dir.dot(w0);
  const double db = b.dir.dot(w0);
  const double denom = 1.0 - cos_ab * cos_ab;

  RayCrossing out;
  if (std::abs(denom) < 1e-12) {
    out.degenerate = true;
    out.t1 = -da;  // projection of b.origin onto a
    out.t2 = 0.0;
  } else {
    out.t1 = (cos_ab * db - da) / denom;
    out.t2 = (db - cos_ab * da) / denom;
  }
  out.p1 = a.At(out.t1);
  out.p2 = b.At(out.t2);
  out.gap = (out.p1 - out.p2).norm();
  return out;
}

double PointToLineDistance(const Ray& ray, const Eigen::Vector3d& point) {
  return (point - ray.origin).cross(ray.dir).norm();
}

bool InFrustum(const Camera& cam, const Eigen::Vector3d& point) {
  const auto proj = TryProject(cam, point);
  if (!proj || proj->depth <= 0.0) {
    return false;
  }
  return proj->pixel.x() >= 0.0 && proj->pixel.x() < cam.width() &&
         proj->pixel.y() >= 0.0 && proj->pixel.y() < cam.height();
}

std::vector<double> SampleParameters(double center_t, double span, int count) {
  STREAMRECON_CHECK_INPUT(count >= 1, "sample count must be >= 1");
  STREAMRECON_CHECK_INPUT(span > 0.0, "sample span must be positive");
  std::vector<double> params(count, center_t);
  if (count == 1) {
    return params;
  }
  const double step = span / (count - 1);
  const double mid = 0.5 * (count - 1);
  for (int k = 0; k < count; ++k) {
    params[k] = center_t + (k - mid) * step;
  }
  return params;
}

std::vector<Eigen::Vector3d> SampleAlongRay(const Ray& ray, double center_t,
                                            double span, int count) {
  std::vector<Eigen::Vector3d> points;
  points.reserve(count);
  for (double t : SampleParameters(center_t, span, count)) {
    points.push_back(ray.At(t));
  }
  return points;
}

namespace {

std::vector<double> ReadNumbers(const std::string& path) {
  std::ifstream in(path);
  STREAMRECON_CHECK_INPUT(in.good(), "cannot open ", path);
  std::vector<double> values;
  double v = 0.0;
  while (in >> v) {
    values.push_back(v);
  }
  STREAMRECON_CHECK_INPUT(in.eof(), "non-numeric content in ", path);
  return values;
}

}  // namespace

Eigen::Matrix4d ReadPoseFile(const std::string& path) {
  const auto values = ReadNumbers(path);
  STREAMRECON_CHECK_INPUT(values.size() == 16, path, " must hold 16 numbers, got ",
                          values.size());
  Eigen::Matrix4d pose;
  for (int i = 0; i < 16; ++i) {
    pose(i / 4, i % 4) = values[i];
  }
  STREAMRECON_CHECK_INPUT(pose.allFinite(), "non-finite pose in ", path);
  return pose;
}

void WritePoseFile(const std::string& path, const Eigen::Matrix4d& pose) {
  std::ofstream out(path);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  out << std::setprecision(17);
  for (int r = 0; r < 4; ++r) {
    out << pose(r, 0) << ' ' << pose(r, 1) << ' ' << pose(r, 2) << ' '
        << pose(r, 3) << '\n';
  }
}

Eigen::Matrix3d ReadIntrinsicsFile(const std::string& path) {
  const auto values = ReadNumbers(path);
  Eigen::Matrix3d K;
  if (values.size() == 9) {
    for (int i = 0; i < 9; ++i) K(i / 3, i % 3) = values[i];
  } else if (values.size() == 16) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) K(r, c) = values[r * 4 + c];
  } else {
    throw InputError(internal::StrCat(path, " must hold a 3x3 or 4x4 matrix"));
  }
  return K;
}

void WriteIntrinsicsFile(const std::string& path, const Eigen::Matrix3d& K) {
  std::ofstream out(path);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  out << std::setprecision(17);
  for (int r = 0; r < 3; ++r) {
    out << K(r, 0) << ' ' << K(r, 1) << ' ' << K(r, 2) << '\n';
  }
}

}  // namespace streamrecon
