#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/config.h"
#include "streamrecon/features.h"
#include "streamrecon/geometry.h"
#include "streamrecon/image.h"
#include "streamrecon/mesh.h"

namespace streamrecon {

struct AxisBox {
  Eigen::Vector3d lo, hi;
};

// Rectangle center +- u +- v with orthogonal half-axes u, v.
struct Quad {
  Eigen::Vector3d center, u, v;
};

struct SurfaceHit {
  double t = 0.0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();  // facing the ray origin
  int surface = -1;  // 0 room, 1.. boxes, then quads
};

// A closed axis-aligned room with solid boxes and thin rectangles inside,
// posed cameras, an analytic raycaster and a procedural texture.
class SyntheticScene {
 public:
  SyntheticScene() = default;

  // Spec keys:
  //   room_min, room_max = x y z
  //   box = x0 y0 z0 x1 y1 z1          (repeatable)
  //   quad = cx cy cz ux uy uz vx vy vz (repeatable)
  //   width, height, fx, fy, cx, cy
  //   trajectory = orbit | explicit
  //   frames, orbit_center = x y z, orbit_radius, orbit_start, orbit_arc
  //     (degrees), look_at = x y z, jitter (meters, seeded)
  //   camera = ex ey ez tx ty tz       (repeatable, explicit trajectory)
  static SyntheticScene FromSpec(const KeyValues& spec, std::uint64_t seed);
  static SyntheticScene FromSpecFile(const std::string& path, std::uint64_t seed);

  void SetRoom(const AxisBox& room) { room_ = room; }
  void AddBox(const AxisBox& box) { boxes_.push_back(box); }
  void AddQuad(const Quad& quad) { quads_.push_back(quad); }
  void AddCamera(const Camera& cam) { cameras_.push_back(cam); }
  void SetTextureSeed(std::uint64_t seed);

  // Throws InputError on degenerate geometry, e.g. a camera outside the
  // room or inside a box.
  void Validate() const;

  std::optional<SurfaceHit> Raycast(const Ray& ray) const;
  // Raycast as a SurfaceOracle. The scene must outlive the oracle.
  SurfaceOracle Oracle() const;

  // Camera-frame depth at every pixel center of `cam`, 0 where nothing is hit.
  DepthMap RenderDepth(const Camera& cam) const;
  Image RenderImage(const Camera& cam) const;
  Eigen::Vector3f Color(const SurfaceHit& hit) const;

  TriMesh Mesh() const;

  const AxisBox& room() const { return room_; }
  const std::vector<AxisBox>& boxes() const { return boxes_; }
  const std::vector<Quad>& quads() const { return quads_; }
  const std::vector<Camera>& cameras() const { return cameras_; }

 private:
  AxisBox room_{Eigen::Vector3d(-2, -2, 0), Eigen::Vector3d(2, 2, 3)};
  std::vector<AxisBox> boxes_;
  std::vector<Quad> quads_;
  std::vector<Camera> cameras_;
  std::uint64_t texture_seed_ = 0;
  std::array<Eigen::Vector3d, 3> wave_dir_{};
  std::array<double, 3> wave_phase_{};
};

// Writes images/, poses/, depth/ (16-bit millimeter PNG and float PFM per
// frame), intrinsics.txt, mesh_gt.ply and scene.txt (the spec with the seed).
void WriteSyntheticSequence(const SyntheticScene& scene, const std::string& spec_text,
                            std::uint64_t seed, const std::string& out_dir);

std::string FrameName(std::int64_t id);

}  // namespace streamrecon
