#include "streamrecon/mesh.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include "streamrecon/ply.h"

namespace streamrecon {

void TriMesh::Validate() const {
  for (const auto& v : vertices) {
    STREAMRECON_CHECK_INVARIANT(v.allFinite(), "mesh has a non-finite vertex");
  }
  for (const auto& t : triangles) {
    for (std::uint32_t i : t) {
      STREAMRECON_CHECK_INVARIANT(i < vertices.size(), "triangle index ", i,
                                  " out of range");
    }
  }
  STREAMRECON_CHECK_INVARIANT(normals.empty() || normals.size() == vertices.size(),
                              "normal count differs from vertex count");
}

double TriMesh::Area() const {
  double area = 0.0;
  for (const auto& t : triangles) {
    area += 0.5 * (vertices[t[1]] - vertices[t[0]])
                      .cross(vertices[t[2]] - vertices[t[0]])
                      .norm();
  }
  return area;
}

void TriMesh::Append(const TriMesh& other) {
  const auto base = static_cast<std::uint32_t>(vertices.size());
  const bool keep_normals = normals.size() == vertices.size() &&
                            other.normals.size() == other.vertices.size();
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  if (keep_normals) {
    normals.insert(normals.end(), other.normals.begin(), other.normals.end());
  } else {
    normals.clear();
  }
  for (auto t : other.triangles) {
    triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
}

void WriteMeshPly(const std::string& path, const TriMesh& mesh) {
  mesh.Validate();
  const bool with_normals = !mesh.normals.empty();
  ply::Schema schema;
  ply::Element vertex{"vertex", mesh.vertices.size(), {}};
  for (const char* n : {"x", "y", "z"}) vertex.properties.push_back({n, ply::Type::kFloat32});
  if (with_normals) {
    for (const char* n : {"nx", "ny", "nz"})
      vertex.properties.push_back({n, ply::Type::kFloat32});
  }
  ply::Element face{"face", mesh.triangles.size(), {}};
  face.properties.push_back(
      {"vertex_indices", ply::Type::kInt32, true, ply::Type::kUInt8});
  schema.elements = {vertex, face};
  std::ofstream out(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  ply::WriteHeader(out, schema);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int d = 0; d < 3; ++d) ply::WriteLE(out, static_cast<float>(mesh.vertices[i][d]));
    if (with_normals) {
      for (int d = 0; d < 3; ++d) ply::WriteLE(out, static_cast<float>(mesh.normals[i][d]));
    }
  }
  for (const auto& t : mesh.triangles) {
    ply::WriteLE(out, static_cast<std::uint8_t>(3));
    for (std::uint32_t i : t) ply::WriteLE(out, static_cast<std::int32_t>(i));
  }
  STREAMRECON_CHECK_INPUT(out.good(), "failed writing ", path);
}

TriMesh ReadMeshPly(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(in.good(), "cannot open ", path);
  const ply::Schema schema = ply::ReadHeader(in);
  TriMesh mesh;
  std::vector<double> scalars;
  std::vector<std::vector<double>> lists;
  for (const auto& element : schema.elements) {
    if (element.name == "vertex") {
      const int ix = element.PropertyIndex("x");
      const int iy = element.PropertyIndex("y");
      const int iz = element.PropertyIndex("z");
      STREAMRECON_CHECK_INPUT(ix >= 0 && iy >= 0 && iz >= 0, path,
                              " vertices lack x/y/z");
      const int nx = element.PropertyIndex("nx");
      const int ny = element.PropertyIndex("ny");
      const int nz = element.PropertyIndex("nz");
      const bool normals = nx >= 0 && ny >= 0 && nz >= 0;
      for (std::size_t r = 0; r < element.count; ++r) {
        ply::ReadRow(in, schema.format, element, &scalars, &lists);
        mesh.vertices.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
        if (normals) mesh.normals.emplace_back(scalars[nx], scalars[ny], scalars[nz]);
      }
    } else if (element.name == "face") {
      int idx = element.PropertyIndex("vertex_indices");
      if (idx < 0) idx = element.PropertyIndex("vertex_index");
      STREAMRECON_CHECK_INPUT(idx >= 0 && element.properties[idx].is_list, path,
                              " faces lack vertex_indices");
      for (std::size_t r = 0; r < element.count; ++r) {
        ply::ReadRow(in, schema.format, element, &scalars, &lists);
        const auto& poly = lists[idx];
        STREAMRECON_CHECK_INPUT(poly.size() >= 3, path, " has a face with ",
                                poly.size(), " vertices");
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
          mesh.triangles.push_back({static_cast<std::uint32_t>(poly[0]),
                                    static_cast<std::uint32_t>(poly[k]),
                                    static_cast<std::uint32_t>(poly[k + 1])});
        }
      }
    } else {
      ply::SkipElement(in, schema.format, element);
    }
  }
  for (const auto& t : mesh.triangles) {
    for (std::uint32_t i : t) {
      STREAMRECON_CHECK_INPUT(i < mesh.vertices.size(), path,
                              " has an out-of-range face index");
    }
  }
  return mesh;
}

void WriteMeshObj(const std::string& path, const TriMesh& mesh) {
  mesh.Validate();
  std::ofstream out(path);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  out << std::setprecision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  const bool normals = !mesh.normals.empty();
  for (const auto& t : mesh.triangles) {
    out << 'f';
    for (std::uint32_t i : t) {
      out << ' ' << i + 1;
      if (normals) out << "//" << i + 1;
    }
    out << '\n';
  }
  STREAMRECON_CHECK_INPUT(out.good(), "failed writing ", path);
}

std::vector<Eigen::Vector3d> SampleSurface(const TriMesh& mesh, std::size_t count,
                                           std::uint64_t seed) {
  STREAMRECON_CHECK_INPUT(!mesh.empty(), "cannot sample an empty mesh");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    total += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                       .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                       .norm();
    cumulative.push_back(total);
  }
  STREAMRECON_CHECK_INPUT(total > 0.0, "mesh has zero area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Eigen::Vector3d> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = uniform(rng) * total;
    std::size_t tri = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    tri = std::min(tri, mesh.triangles.size() - 1);
    const auto& t = mesh.triangles[tri];
    double u = uniform(rng), v = uniform(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Eigen::Vector3d& a = mesh.vertices[t[0]];
    out.push_back(a + u * (mesh.vertices[t[1]] - a) + v * (mesh.vertices[t[2]] - a));
  }
  return out;
}

// Ericson, Real-Time Collision Detection, 5.1.5.
Eigen::Vector3d ClosestPointOnTriangle(const Eigen::Vector3d& p,
                                       const Eigen::Vector3d& a,
                                       const Eigen::Vector3d& b,
                                       const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

namespace {

constexpr std::uint32_t kLeafSize = 4;

double BoxDistanceSq(const Eigen::Vector3d& p, const Eigen::Vector3d& lo,
                     const Eigen::Vector3d& hi) {
  const Eigen::Vector3d d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
  return d.squaredNorm();
}

bool RayBox(const Ray& ray, const Eigen::Vector3d& inv, const Eigen::Vector3d& lo,
            const Eigen::Vector3d& hi, double t_min, double t_max) {
  for (int d = 0; d < 3; ++d) {
    double t0 = (lo[d] - ray.origin[d]) * inv[d];
    double t1 = (hi[d] - ray.origin[d]) * inv[d];
    if (std::isnan(t0) || std::isnan(t1)) {
      // Ray parallel to the slab and on its boundary plane.
      if (ray.origin[d] < lo[d] || ray.origin[d] > hi[d]) return false;
      continue;
    }
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
    if (t_min > t_max) return false;
  }
  return true;
}

}  // namespace

MeshBvh::MeshBvh(const TriMesh& mesh)
    : vertices_(mesh.vertices), triangles_(mesh.triangles) {
  mesh.Validate();
  STREAMRECON_CHECK_INPUT(!mesh.empty(), "cannot index an empty mesh");
  order_.resize(triangles_.size());
  centroids_.resize(triangles_.size());
  for (std::uint32_t i = 0; i < triangles_.size(); ++i) {
    order_[i] = i;
    const auto& t = triangles_[i];
    centroids_[i] = (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0;
  }
  nodes_.reserve(2 * triangles_.size() / kLeafSize + 2);
  Build(0, static_cast<std::uint32_t>(triangles_.size()));
}

std::uint32_t MeshBvh::Build(std::uint32_t begin, std::uint32_t end) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  Eigen::Vector3d clo = lo, chi = hi;
  for (std::uint32_t i = begin; i < end; ++i) {
    const auto& t = triangles_[order_[i]];
    for (std::uint32_t v : t) {
      lo = lo.cwiseMin(vertices_[v]);
      hi = hi.cwiseMax(vertices_[v]);
    }
    clo = clo.cwiseMin(centroids_[order_[i]]);
    chi = chi.cwiseMax(centroids_[order_[i]]);
  }
  nodes_[index].lo = lo;
  nodes_[index].hi = hi;
  if (end - begin <= kLeafSize) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return centroids_[a][axis] < centroids_[b][axis];
                   });
  const std::uint32_t left = Build(begin, mid);
  const std::uint32_t right = Build(mid, end);
  nodes_[index].first = left;
  nodes_[index].right = right;
  nodes_[index].count = 0;
  return index;
}

void MeshBvh::Closest(std::uint32_t node_index, const Eigen::Vector3d& p,
                      double* best_sq, Eigen::Vector3d* best) const {
  const Node& node = nodes_[node_index];
  if (node.count > 0) {
    for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
      const auto& t = triangles_[order_[i]];
      const Eigen::Vector3d q =
          ClosestPointOnTriangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
      const double d = (q - p).squaredNorm();
      if (d < *best_sq) {
        *best_sq = d;
        *best = q;
      }
    }
    return;
  }
  const Node& l = nodes_[node.first];
  const Node& r = nodes_[node.right];
  const double dl = BoxDistanceSq(p, l.lo, l.hi);
  const double dr = BoxDistanceSq(p, r.lo, r.hi);
  const std::uint32_t near = dl <= dr ? node.first : node.right;
  const std::uint32_t far = dl <= dr ? node.right : node.first;
  if (std::min(dl, dr) < *best_sq) Closest(near, p, best_sq, best);
  if (std::max(dl, dr) < *best_sq) Closest(far, p, best_sq, best);
}

Eigen::Vector3d MeshBvh::ClosestPoint(const Eigen::Vector3d& p) const {
  double best_sq = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  Closest(0, p, &best_sq, &best);
  return best;
}

double MeshBvh::Distance(const Eigen::Vector3d& p) const {
  return (ClosestPoint(p) - p).norm();
}

std::optional<RayHit> MeshBvh::Raycast(const Ray& ray, double t_min,
                                       double t_max) const {
  const Eigen::Vector3d inv = ray.dir.cwiseInverse();
  std::optional<RayHit> hit;
  double best = t_max;
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!RayBox(ray, inv, node.lo, node.hi, t_min, best)) continue;
    if (node.count == 0) {
      stack.push_back(node.first);
      stack.push_back(node.right);
      continue;
    }
    for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
      const auto& t = triangles_[order_[i]];
      // Moller-Trumbore.
      const Eigen::Vector3d& a = vertices_[t[0]];
      const Eigen::Vector3d e1 = vertices_[t[1]] - a;
      const Eigen::Vector3d e2 = vertices_[t[2]] - a;
      const Eigen::Vector3d pvec = ray.dir.cross(e2);
      const double det = e1.dot(pvec);
      if (std::abs(det) < 1e-14) continue;
      const double inv_det = 1.0 / det;
      const Eigen::Vector3d tvec = ray.origin - a;
      const double u = tvec.dot(pvec) * inv_det;
      if (u < 0.0 || u > 1.0) continue;
      const Eigen::Vector3d qvec = tvec.cross(e1);
      const double v = ray.dir.dot(qvec) * inv_det;
      if (v < 0.0 || u + v > 1.0) continue;
      const double th = e2.dot(qvec) * inv_det;
      if (th > t_min && th < best) {
        best = th;
        hit = RayHit{th, order_[i], ray.At(th)};
      }
    }
  }
  return hit;
}

}  // namespace streamrecon
