#include "streamrecon/synthetic.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

namespace streamrecon {
namespace {

constexpr double kHitEps = 1e-9;

Eigen::Vector3d Vec3(const KeyValues& spec, const std::string& key,
                     const Eigen::Vector3d& fallback) {
  if (!spec.Has(key)) return fallback;
  const auto v = KeyValues::Numbers(spec.Get(key), key);
  STREAMRECON_CHECK_INPUT(v.size() == 3, "key '", key, "' needs 3 numbers");
  return Eigen::Vector3d(v[0], v[1], v[2]);
}

// Entry and exit parameters of a ray through an axis-aligned box.
bool SlabInterval(const Ray& ray, const AxisBox& box, double* t_near, double* t_far) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int d = 0; d < 3; ++d) {
    if (std::abs(ray.dir[d]) < 1e-300) {
      if (ray.origin[d] < box.lo[d] || ray.origin[d] > box.hi[d]) return false;
      continue;
    }
    double a = (box.lo[d] - ray.origin[d]) / ray.dir[d];
    double b = (box.hi[d] - ray.origin[d]) / ray.dir[d];
    if (a > b) std::swap(a, b);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
  }
  if (lo > hi) return false;
  *t_near = lo;
  *t_far = hi;
  return true;
}

// Outward normal of the box face containing p.
Eigen::Vector3d BoxNormal(const AxisBox& box, const Eigen::Vector3d& p) {
  double best_d = std::numeric_limits<double>::infinity();
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  for (int d = 0; d < 3; ++d) {
    const double dl = std::abs(p[d] - box.lo[d]);
    const double dh = std::abs(p[d] - box.hi[d]);
    if (dl < best_d) {
      best_d = dl;
      n = -Eigen::Vector3d::Unit(d);
    }
    if (dh < best_d) {
      best_d = dh;
      n = Eigen::Vector3d::Unit(d);
    }
  }
  return n;
}

void AddBoxMesh(const AxisBox& box, bool inward, TriMesh* mesh) {
  TriMesh m;
  for (int c = 0; c < 8; ++c) {
    m.vertices.emplace_back(c & 1 ? box.hi.x() : box.lo.x(), c & 2 ? box.hi.y() : box.lo.y(),
                            c & 4 ? box.hi.z() : box.lo.z());
  }
  // Outward-facing quads as corner index cycles.
  const int faces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (const auto& f : faces) {
    if (inward) {
      m.triangles.push_back({std::uint32_t(f[0]), std::uint32_t(f[2]), std::uint32_t(f[1])});
      m.triangles.push_back({std::uint32_t(f[0]), std::uint32_t(f[3]), std::uint32_t(f[2])});
    } else {
      m.triangles.push_back({std::uint32_t(f[0]), std::uint32_t(f[1]), std::uint32_t(f[2])});
      m.triangles.push_back({std::uint32_t(f[0]), std::uint32_t(f[2]), std::uint32_t(f[3])});
    }
  }
  mesh->Append(m);
}

bool Inside(const AxisBox& box, const Eigen::Vector3d& p) {
  return (p.array() > box.lo.array()).all() && (p.array() < box.hi.array()).all();
}

}  // namespace

std::string FrameName(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(id));
  return buf;
}

void SyntheticScene::SetTextureSeed(std::uint64_t seed) {
  texture_seed_ = seed;
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d d(uniform(rng) - 0.5, uniform(rng) - 0.5, uniform(rng) - 0.5);
    if (d.norm() < 1e-3) d = Eigen::Vector3d::UnitX();
    wave_dir_[k] = d.normalized() * (1.5 + 3.0 * uniform(rng));  // cycles per meter
    wave_phase_[k] = uniform(rng);
  }
}

SyntheticScene SyntheticScene::FromSpec(const KeyValues& spec, std::uint64_t seed) {
  SyntheticScene scene;
  scene.SetTextureSeed(seed);
  scene.room_.lo = Vec3(spec, "room_min", Eigen::Vector3d(-2, -2, 0));
  scene.room_.hi = Vec3(spec, "room_max", Eigen::Vector3d(2, 2, 3));
  for (const auto& s : spec.All("box")) {
    const auto v = KeyValues::Numbers(s, "box");
    STREAMRECON_CHECK_INPUT(v.size() == 6, "box needs 6 numbers");
    scene.boxes_.push_back(
        {Eigen::Vector3d(v[0], v[1], v[2]), Eigen::Vector3d(v[3], v[4], v[5])});
  }
  for (const auto& s : spec.All("quad")) {
    const auto v = KeyValues::Numbers(s, "quad");
    STREAMRECON_CHECK_INPUT(v.size() == 9, "quad needs 9 numbers");
    scene.quads_.push_back({Eigen::Vector3d(v[0], v[1], v[2]),
                            Eigen::Vector3d(v[3], v[4], v[5]),
                            Eigen::Vector3d(v[6], v[7], v[8])});
  }
  const int width = spec.GetInt("width", 640);
  const int height = spec.GetInt("height", 480);
  Intrinsics k;
  k.fx = spec.GetDouble("fx", 0.9 * width);
  k.fy = spec.GetDouble("fy", k.fx);
  k.cx = spec.GetDouble("cx", 0.5 * width);
  k.cy = spec.GetDouble("cy", 0.5 * height);

  const std::string trajectory = spec.GetString("trajectory", "orbit");
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  if (trajectory == "explicit") {
    CameraId id = 1;
    for (const auto& s : spec.All("camera")) {
      const auto v = KeyValues::Numbers(s, "camera");
      STREAMRECON_CHECK_INPUT(v.size() == 6, "camera needs 6 numbers");
      scene.cameras_.push_back(Camera::LookAt(Eigen::Vector3d(v[0], v[1], v[2]),
                                              Eigen::Vector3d(v[3], v[4], v[5]), up, k,
                                              width, height, id++));
    }
  } else if (trajectory == "orbit") {
    const int frames = spec.GetInt("frames", 9);
    STREAMRECON_CHECK_INPUT(frames >= 1, "frames must be >= 1");
    const Eigen::Vector3d center = Vec3(spec, "orbit_center", Eigen::Vector3d(0, 0, 1.4));
    const Eigen::Vector3d look_at = Vec3(spec, "look_at", Eigen::Vector3d(0, 3, 1.2));
    const double radius = spec.GetDouble("orbit_radius", 0.3);
    const double start = spec.GetDouble("orbit_start", 0.0) * M_PI / 180.0;
    const double arc = spec.GetDouble("orbit_arc", 90.0) * M_PI / 180.0;
    const double jitter = spec.GetDouble("jitter", 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < frames; ++i) {
      const double a = start + (frames == 1 ? 0.0 : arc * i / (frames - 1));
      Eigen::Vector3d eye = center + radius * Eigen::Vector3d(std::cos(a), std::sin(a), 0);
      if (jitter > 0.0) eye += jitter * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
      scene.cameras_.push_back(Camera::LookAt(eye, look_at, up, k, width, height, i + 1));
    }
  } else {
    throw InputError("unknown trajectory '" + trajectory + "'");
  }
  scene.Validate();
  return scene;
}

SyntheticScene SyntheticScene::FromSpecFile(const std::string& path, std::uint64_t seed) {
  return FromSpec(KeyValues::Load(path), seed);
}

void SyntheticScene::Validate() const {
  STREAMRECON_CHECK_INPUT((room_.hi.array() > room_.lo.array()).all(),
                          "room bounds are empty");
  for (const auto& b : boxes_) {
    STREAMRECON_CHECK_INPUT((b.hi.array() > b.lo.array()).all(), "box bounds are empty");
  }
  for (const auto& q : quads_) {
    STREAMRECON_CHECK_INPUT(q.u.norm() > 0 && q.v.norm() > 0, "quad axis is zero");
    STREAMRECON_CHECK_INPUT(std::abs(q.u.normalized().dot(q.v.normalized())) < 1e-9,
                            "quad axes must be orthogonal");
  }
  for (const auto& cam : cameras_) {
    cam.Validate();
    STREAMRECON_CHECK_INPUT(Inside(room_, cam.center()), "camera ", cam.id(),
                            " is outside the room");
    for (const auto& b : boxes_) {
      STREAMRECON_CHECK_INPUT(!Inside(b, cam.center()), "camera ", cam.id(),
                              " is inside a box");
    }
  }
  for (std::size_t i = 1; i < cameras_.size(); ++i) {
    STREAMRECON_CHECK_INPUT(cameras_[i].id() > cameras_[i - 1].id(),
                            "camera ids must increase");
  }
}

std::optional<SurfaceHit> SyntheticScene::Raycast(const Ray& ray) const {
  std::optional<SurfaceHit> best;
  auto offer = [&](double t, int surface, const Eigen::Vector3d& normal) {
    if (!(t > kHitEps)) return;
    if (best && best->t <= t) return;
    SurfaceHit h;
    h.t = t;
    h.point = ray.At(t);
    h.normal = normal.dot(ray.dir) > 0.0 ? Eigen::Vector3d(-normal) : normal;
    h.surface = surface;
    best = h;
  };
  double t0 = 0.0, t1 = 0.0;
  if (SlabInterval(ray, room_, &t0, &t1)) {
    const double t = t0 > kHitEps ? t0 : t1;
    offer(t, 0, -BoxNormal(room_, ray.At(t)));
  }
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    if (!SlabInterval(ray, boxes_[i], &t0, &t1)) continue;
    const double t = t0 > kHitEps ? t0 : t1;
    offer(t, static_cast<int>(1 + i), BoxNormal(boxes_[i], ray.At(t)));
  }
  for (std::size_t i = 0; i < quads_.size(); ++i) {
    const Quad& q = quads_[i];
    const Eigen::Vector3d n = q.u.cross(q.v).normalized();
    const double denom = n.dot(ray.dir);
    if (std::abs(denom) < 1e-15) continue;
    const double t = n.dot(q.center - ray.origin) / denom;
    const Eigen::Vector3d rel = ray.At(t) - q.center;
    if (std::abs(rel.dot(q.u)) > q.u.squaredNorm() ||
        std::abs(rel.dot(q.v)) > q.v.squaredNorm()) {
      continue;
    }
    offer(t, static_cast<int>(1 + boxes_.size() + i), n);
  }
  return best;
}

SurfaceOracle SyntheticScene::Oracle() const {
  return [this](const Ray& ray) -> std::optional<Eigen::Vector3d> {
    const auto hit = Raycast(ray);
    if (!hit) return std::nullopt;
    return hit->point;
  };
}

DepthMap SyntheticScene::RenderDepth(const Camera& cam) const {
  DepthMap depth(cam.width(), cam.height(), cam.id());
  for (int y = 0; y < cam.height(); ++y) {
    for (int x = 0; x < cam.width(); ++x) {
      const auto hit = Raycast(RayThroughPixel(cam, Eigen::Vector2d(x + 0.5, y + 0.5)));
      if (hit) depth.at(x, y) = cam.WorldToCamera(hit->point).z();
    }
  }
  return depth;
}

Eigen::Vector3f SyntheticScene::Color(const SurfaceHit& hit) const {
  static const float kBase[6][3] = {{0.55f, 0.5f, 0.45f}, {0.7f, 0.3f, 0.3f},
                                    {0.3f, 0.6f, 0.35f},  {0.3f, 0.4f, 0.7f},
                                    {0.7f, 0.65f, 0.3f},  {0.5f, 0.35f, 0.65f}};
  const float* base = kBase[hit.surface < 0 ? 0 : hit.surface % 6];
  const Eigen::Vector3d& p = hit.point;
  const int checker = (static_cast<int>(std::floor(p.x() * 4)) +
                       static_cast<int>(std::floor(p.y() * 4)) +
                       static_cast<int>(std::floor(p.z() * 4))) & 1;
  Eigen::Vector3f c;
  for (int k = 0; k < 3; ++k) {
    const double wave = std::sin(2.0 * M_PI * (wave_dir_[k].dot(p) + wave_phase_[k]));
    c[k] = static_cast<float>(base[k] + 0.2 * wave + (checker ? 0.1 : -0.1));
  }
  return c.cwiseMax(0.f).cwiseMin(1.f);
}

Image SyntheticScene::RenderImage(const Camera& cam) const {
  Image image(cam.width(), cam.height(), 3);
  for (int y = 0; y < cam.height(); ++y) {
    for (int x = 0; x < cam.width(); ++x) {
      const auto hit = Raycast(RayThroughPixel(cam, Eigen::Vector2d(x + 0.5, y + 0.5)));
      if (!hit) continue;
      const Eigen::Vector3f c = Color(*hit);
      for (int k = 0; k < 3; ++k) image.at(x, y, k) = c[k];
    }
  }
  return image;
}

TriMesh SyntheticScene::Mesh() const {
  TriMesh mesh;
  AddBoxMesh(room_, true, &mesh);
  for (const auto& b : boxes_) AddBoxMesh(b, false, &mesh);
  for (const auto& q : quads_) {
    TriMesh m;
    m.vertices = {q.center - q.u - q.v, q.center + q.u - q.v, q.center + q.u + q.v,
                  q.center - q.u + q.v};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    mesh.Append(m);
  }
  return mesh;
}

void WriteSyntheticSequence(const SyntheticScene& scene, const std::string& spec_text,
                            std::uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  STREAMRECON_CHECK_INPUT(!scene.cameras().empty(), "scene has no cameras");
  for (const char* sub : {"images", "poses", "depth"}) {
    fs::create_directories(fs::path(out_dir) / sub);
  }
  const Camera& first = scene.cameras().front();
  WriteIntrinsicsFile((fs::path(out_dir) / "intrinsics.txt").string(),
                      first.intrinsics().Matrix());
  for (const auto& cam : scene.cameras()) {
    const std::string name = FrameName(cam.id());
    WritePng((fs::path(out_dir) / "images" / (name + ".png")).string(),
             scene.RenderImage(cam));
    WritePoseFile((fs::path(out_dir) / "poses" / (name + ".txt")).string(),
                  cam.CamToWorld());
    const DepthMap depth = scene.RenderDepth(cam);
    WriteDepthPng((fs::path(out_dir) / "depth" / (name + ".png")).string(), depth);
    WritePfm((fs::path(out_dir) / "depth" / (name + ".pfm")).string(), depth);
  }
  WriteMeshPly((fs::path(out_dir) / "mesh_gt.ply").string(), scene.Mesh());
  std::ofstream out(fs::path(out_dir) / "scene.txt");
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write scene.txt in ", out_dir);
  out << spec_text;
  if (!spec_text.empty() && spec_text.back() != '\n') out << '\n';
  out << "seed = " << seed << '\n';
}

}  // namespace streamrecon
