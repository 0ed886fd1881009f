#include "streamrecon/fusion.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace streamrecon {
namespace {

constexpr std::int64_t kKeyBits = 21;
constexpr std::int64_t kKeyOffset = std::int64_t{1} << (kKeyBits - 1);
constexpr std::int64_t kKeyMask = (std::int64_t{1} << kKeyBits) - 1;

std::int64_t PackKey(const Eigen::Vector3i& v) {
  for (int d = 0; d < 3; ++d) {
    STREAMRECON_CHECK_INPUT(v[d] > -kKeyOffset && v[d] < kKeyOffset,
                            "volume index out of range");
  }
  return ((v.x() + kKeyOffset) & kKeyMask) |
         (((v.y() + kKeyOffset) & kKeyMask) << kKeyBits) |
         (((v.z() + kKeyOffset) & kKeyMask) << (2 * kKeyBits));
}

int FloorDiv(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

Eigen::Vector3i CornerOffset(int c) {
  return Eigen::Vector3i(c & 1, (c >> 1) & 1, (c >> 2) & 1);
}

// Marching cubes case table derived from first principles: on every cube
// face the crossing edges are paired into segments (an ambiguous face cuts
// off its negative corners), the segments close into loops, and each loop
// becomes a fan oriented towards the positive side.
struct CaseTable {
  std::array<std::array<int, 2>, 12> edges;
  std::array<std::vector<std::array<int, 3>>, 256> triangles;

  CaseTable() {
    int n = 0;
    for (int a = 0; a < 8; ++a)
      for (int d = 0; d < 3; ++d)
        if (!(a & (1 << d))) edges[n++] = {a, a | (1 << d)};
    auto edge_of = [&](int a, int b) {
      if (a > b) std::swap(a, b);
      for (int e = 0; e < 12; ++e)
        if (edges[e][0] == a && edges[e][1] == b) return e;
      return -1;
    };
    std::array<std::array<int, 4>, 6> faces;
    int f = 0;
    for (int d = 0; d < 3; ++d) {
      const int u = (d + 1) % 3, v = (d + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        const int base = side << d;
        faces[f++] = {base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
      }
    }
    for (int mask = 0; mask < 256; ++mask) {
      auto negative = [&](int c) { return (mask >> c) & 1; };
      std::array<std::vector<int>, 12> links;
      for (const auto& face : faces) {
        std::array<int, 4> fe;
        int crossing = 0;
        for (int k = 0; k < 4; ++k) {
          const int a = face[k], b = face[(k + 1) % 4];
          fe[k] = negative(a) != negative(b) ? edge_of(a, b) : -1;
          crossing += fe[k] >= 0;
        }
        auto link = [&](int e1, int e2) {
          links[e1].push_back(e2);
          links[e2].push_back(e1);
        };
        if (crossing == 2) {
          int first = -1;
          for (int k = 0; k < 4; ++k) {
            if (fe[k] < 0) continue;
            if (first < 0) {
              first = fe[k];
            } else {
              link(first, fe[k]);
            }
          }
        } else if (crossing == 4) {
          for (int k = 0; k < 4; ++k)
            if (negative(face[k])) link(fe[(k + 3) % 4], fe[k]);
        }
      }
      std::array<bool, 12> used{};
      for (int start = 0; start < 12; ++start) {
        if (used[start] || links[start].empty()) continue;
        std::vector<int> loop{start};
        used[start] = true;
        int prev = start, cur = links[start][0];
        while (cur != start) {
          loop.push_back(cur);
          used[cur] = true;
          const int next = links[cur][0] == prev ? links[cur][1] : links[cur][0];
          prev = cur;
          cur = next;
        }
        Orient(mask, &loop);
        for (std::size_t i = 1; i + 1 < loop.size(); ++i)
          triangles[mask].push_back({loop[0], loop[i], loop[i + 1]});
      }
    }
  }

  Eigen::Vector3d Midpoint(int e) const {
    return 0.5 * (CornerOffset(edges[e][0]) + CornerOffset(edges[e][1])).cast<double>();
  }

  // Reverses the loop if its normal points to the negative side.
  void Orient(int mask, std::vector<int>* loop) const {
    Eigen::Vector3d normal = Eigen::Vector3d::Zero(), centroid = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < loop->size(); ++i) {
      const Eigen::Vector3d a = Midpoint((*loop)[i]);
      const Eigen::Vector3d b = Midpoint((*loop)[(i + 1) % loop->size()]);
      normal += a.cross(b);
      centroid += a;
    }
    centroid /= static_cast<double>(loop->size());
    auto field = [&](const Eigen::Vector3d& p) {
      double v = 0.0;
      for (int c = 0; c < 8; ++c) {
        const Eigen::Vector3i o = CornerOffset(c);
        double w = 1.0;
        for (int d = 0; d < 3; ++d) w *= o[d] ? p[d] : 1.0 - p[d];
        v += w * (((mask >> c) & 1) ? -1.0 : 1.0);
      }
      return v;
    };
    const Eigen::Vector3d step = 0.05 * normal.normalized();
    if (field(centroid + step) < field(centroid - step)) {
      std::reverse(loop->begin(), loop->end());
    }
  }
};

const CaseTable& Table() {
  static const CaseTable table;
  return table;
}

}  // namespace

TsdfVolume::TsdfVolume(double voxel_size, double truncation, const Eigen::Vector3d& origin)
    : voxel_size_(voxel_size),
      truncation_(truncation > 0.0 ? truncation : 3.0 * voxel_size),
      origin_(origin) {
  STREAMRECON_CHECK_INPUT(voxel_size > 0.0, "voxel size must be positive");
}

std::int64_t TsdfVolume::Key(const Eigen::Vector3i& block) { return PackKey(block); }

TsdfVolume::Block& TsdfVolume::Allocate(const Eigen::Vector3i& block) {
  auto [it, inserted] = blocks_.try_emplace(Key(block));
  if (inserted) block_order_.push_back(block);
  return it->second;
}

Eigen::Vector3d TsdfVolume::VoxelCenter(const Eigen::Vector3i& v) const {
  return origin_ + (v.cast<double>() + Eigen::Vector3d::Constant(0.5)) * voxel_size_;
}

Eigen::Vector3i TsdfVolume::VoxelOf(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d f = ((p - origin_) / voxel_size_).array().floor();
  return f.cast<int>();
}

const TsdfVoxel* TsdfVolume::Find(const Eigen::Vector3i& v) const {
  const Eigen::Vector3i b(FloorDiv(v.x(), kBlockSide), FloorDiv(v.y(), kBlockSide),
                          FloorDiv(v.z(), kBlockSide));
  auto it = blocks_.find(Key(b));
  if (it == blocks_.end()) return nullptr;
  const Eigen::Vector3i l = v - b * kBlockSide;
  return &it->second[(l.z() * kBlockSide + l.y()) * kBlockSide + l.x()];
}

void TsdfVolume::Bounds(Eigen::Vector3d* lo, Eigen::Vector3d* hi) const {
  *lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  *hi = -*lo;
  const double side = kBlockSide * voxel_size_;
  for (const auto& b : block_order_) {
    const Eigen::Vector3d a = origin_ + b.cast<double>() * side;
    *lo = lo->cwiseMin(a);
    *hi = hi->cwiseMax(a + Eigen::Vector3d::Constant(side));
  }
}

void TsdfVolume::Integrate(const DepthMap& depth, const Camera& cam) {
  STREAMRECON_CHECK_INPUT(cam.width() == depth.width() && cam.height() == depth.height(),
                          "camera does not match the depth map size");
  // Allocate blocks along the truncation band of every valid pixel.
  const double step = 0.5 * voxel_size_;
  const Intrinsics& k = cam.intrinsics();
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth.at(x, y);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Eigen::Vector3d dir_cam((x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0);
      const double len = dir_cam.norm();
      const Eigen::Vector3d dir = cam.rotation() * (dir_cam / len);
      const double t0 = std::max(0.0, (d - truncation_) * len);
      const double t1 = (d + truncation_) * len;
      for (double t = t0; t <= t1 + step; t += step) {
        const Eigen::Vector3i v = VoxelOf(cam.center() + std::min(t, t1) * dir);
        Allocate(Eigen::Vector3i(FloorDiv(v.x(), kBlockSide), FloorDiv(v.y(), kBlockSide),
                                 FloorDiv(v.z(), kBlockSide)));
      }
    }
  }
  const Eigen::Matrix3d world_to_cam = cam.rotation().transpose();
  for (const auto& b : block_order_) {
    Block& block = blocks_.at(Key(b));
    for (int lz = 0; lz < kBlockSide; ++lz)
      for (int ly = 0; ly < kBlockSide; ++ly)
        for (int lx = 0; lx < kBlockSide; ++lx) {
          const Eigen::Vector3i v = b * kBlockSide + Eigen::Vector3i(lx, ly, lz);
          const Eigen::Vector3d local = world_to_cam * (VoxelCenter(v) - cam.center());
          if (local.z() <= kCameraPlaneEps) continue;
          const double u = k.fx * local.x() / local.z() + k.cx;
          const double w = k.fy * local.y() / local.z() + k.cy;
          if (!(u >= 0.0 && u < cam.width() && w >= 0.0 && w < cam.height())) continue;
          const double d = depth.at(static_cast<int>(u), static_cast<int>(w));
          if (!(d > 0.0) || !std::isfinite(d)) continue;
          const double sdf = d - local.z();
          if (!(sdf > -truncation_)) continue;
          TsdfVoxel& voxel = block[(lz * kBlockSide + ly) * kBlockSide + lx];
          const double value = std::min(1.0, sdf / truncation_);
          const double wt = voxel.weight;
          voxel.tsdf = static_cast<float>((wt * voxel.tsdf + value) / (wt + 1.0));
          voxel.weight = static_cast<float>(wt + 1.0);
        }
  }
}

TriMesh TsdfVolume::ExtractMesh() const {
  const CaseTable& table = Table();
  TriMesh mesh;
  std::unordered_map<std::int64_t, std::uint32_t> edge_vertex;
  std::array<const TsdfVoxel*, 8> corner;
  std::array<Eigen::Vector3i, 8> corner_index;
  for (const auto& b : block_order_) {
    for (int lz = 0; lz < kBlockSide; ++lz)
      for (int ly = 0; ly < kBlockSide; ++ly)
        for (int lx = 0; lx < kBlockSide; ++lx) {
          const Eigen::Vector3i base = b * kBlockSide + Eigen::Vector3i(lx, ly, lz);
          int mask = 0;
          bool complete = true;
          for (int c = 0; c < 8 && complete; ++c) {
            corner_index[c] = base + CornerOffset(c);
            corner[c] = Find(corner_index[c]);
            complete = corner[c] != nullptr && corner[c]->weight > 0.f;
            if (complete && corner[c]->tsdf < 0.f) mask |= 1 << c;
          }
          if (!complete || mask == 0 || mask == 255) continue;
          std::array<std::uint32_t, 12> vid;
          for (const auto& tri : table.triangles[mask]) {
            for (int e : tri) {
              const int a = table.edges[e][0], c = table.edges[e][1];
              int axis = 0;
              while (((a ^ c) >> axis) != 1) ++axis;
              const std::int64_t key = PackKey(corner_index[a]) * 3 + axis;
              auto [it, inserted] =
                  edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
              if (inserted) {
                const double va = corner[a]->tsdf, vc = corner[c]->tsdf;
                const double t = va / (va - vc);
                mesh.vertices.push_back(VoxelCenter(corner_index[a]) +
                                        t * voxel_size_ *
                                            CornerOffset(c ^ a).cast<double>());
              }
              vid[e] = it->second;
            }
            mesh.triangles.push_back({vid[tri[0]], vid[tri[1]], vid[tri[2]]});
          }
        }
  }
  mesh.normals.assign(mesh.vertices.size(), Eigen::Vector3d::Zero());
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d n = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                                  .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (std::uint32_t i : t) mesh.normals[i] += n;
  }
  for (auto& n : mesh.normals) {
    const double len = n.norm();
    n = len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
  }
  return mesh;
}

}  // namespace streamrecon
