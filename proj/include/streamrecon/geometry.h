#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "streamrecon/common.h"

namespace streamrecon {

// Pinhole intrinsics in pixels. Pixel (i, j) covers [i, i+1) x [j, j+1), so
// the center of the top-left pixel is at (0.5, 0.5).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Eigen::Matrix3d Matrix() const;
  static Intrinsics FromMatrix(const Eigen::Matrix3d& K);
  // Intrinsics for an image resampled by `scale` (0.25 = quarter size).
  Intrinsics Scaled(double scale) const;
};

// Camera with a camera-to-world rigid pose. Camera frame is x right, y down,
// z forward.
class Camera {
 public:
  Camera() = default;
  Camera(const Intrinsics& intrinsics, const Eigen::Matrix3d& rotation,
         const Eigen::Vector3d& center, int width, int height, CameraId id);

  static Camera FromPose(const Eigen::Matrix4d& cam_to_world,
                         const Eigen::Matrix3d& K, int width, int height,
                         CameraId id);
  // Camera at `eye` looking at `target`, with `up` roughly pointing up.
  static Camera LookAt(const Eigen::Vector3d& eye,
                       const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, const Intrinsics& intrinsics,
                       int width, int height, CameraId id);

  // Throws InputError if the rotation is not a proper rotation (1e-6) or
  // the intrinsics fall outside the image.
  void Validate() const;

  // Same pose, image resampled by `scale`. Width and height must scale to
  // whole pixels.
  Camera Scaled(double scale) const;

  const Intrinsics& intrinsics() const { return intrinsics_; }
  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& center() const { return center_; }
  int width() const { return width_; }
  int height() const { return height_; }
  CameraId id() const { return id_; }

  Eigen::Matrix4d CamToWorld() const;
  Eigen::Vector3d WorldToCamera(const Eigen::Vector3d& world) const {
    return rotation_.transpose() * (world - center_);
  }
  Eigen::Vector3d CameraToWorld(const Eigen::Vector3d& local) const {
    return rotation_ * local + center_;
  }
  // Optical axis in world coordinates.
  Eigen::Vector3d Forward() const { return rotation_.col(2); }

 private:
  Intrinsics intrinsics_;
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d center_ = Eigen::Vector3d::Zero();
  int width_ = 0;
  int height_ = 0;
  CameraId id_ = 0;
};

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();

  Eigen::Vector3d At(double t) const { return origin + t * dir; }
};

// Mutually closest points of two lines.
struct RayCrossing {
  Eigen::Vector3d p1 = Eigen::Vector3d::Zero();  // on the first ray
  Eigen::Vector3d p2 = Eigen::Vector3d::Zero();  // on the second ray
  double t1 = 0.0;
  double t2 = 0.0;
  double gap = 0.0;  // |p1 - p2|
  bool degenerate = false;
};

struct Projection {
  Eigen::Vector2d pixel;
  double depth = 0.0;  // camera-frame z, may be negative
};

// Distance under which a point counts as lying on the camera plane.
constexpr double kCameraPlaneEps = 1e-9;

// Returns nullopt when the point lies on the camera plane.
std::optional<Projection> TryProject(const Camera& cam,
                                     const Eigen::Vector3d& point);
// Like TryProject but throws InputError on the camera plane.
Projection Project(const Camera& cam, const Eigen::Vector3d& point);

// Point with camera-frame depth `depth` seen at `pixel`. Throws on depth <= 0.
Eigen::Vector3d Backproject(const Camera& cam, const Eigen::Vector2d& pixel,
                            double depth);

// Unit-direction ray from the camera center through `pixel`. Since dir is
// normalized, the ray parameter is metric distance from the center, and
// Backproject(cam, pixel, d) == origin + (d / dir_cam.z()) * dir.
Ray RayThroughPixel(const Camera& cam, const Eigen::Vector2d& pixel);

// Closest points of two infinite lines. For (near-)parallel lines, i.e.
// |1 - (a.dir . b.dir)^2| < 1e-12, returns t2 = 0 and t1 = projection of
// b.origin onto a, with `degenerate` set.
RayCrossing ClosestPoints(const Ray& a, const Ray& b);

// Distance from `point` to the infinite line carrying `ray`.
double PointToLineDistance(const Ray& ray, const Eigen::Vector3d& point);

// Depth > 0 and projection inside [0, width) x [0, height).
bool InFrustum(const Camera& cam, const Eigen::Vector3d& point);

// K ray parameters evenly spaced over [center - span/2, center + span/2],
// endpoints included. K = 1 yields the center. Not clamped to positive.
std::vector<double> SampleParameters(double center_t, double span, int count);
std::vector<Eigen::Vector3d> SampleAlongRay(const Ray& ray, double center_t,
                                            double span, int count);

// 4x4 row-major whitespace separated camera-to-world matrix.
Eigen::Matrix4d ReadPoseFile(const std::string& path);
void WritePoseFile(const std::string& path, const Eigen::Matrix4d& pose);
// 3x3 row-major matrix; a 4x4 file (ScanNet) is accepted and its upper-left
// block used.
Eigen::Matrix3d ReadIntrinsicsFile(const std::string& path);
void WriteIntrinsicsFile(const std::string& path, const Eigen::Matrix3d& K);

}  // namespace streamrecon
