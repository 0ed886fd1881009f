#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/geometry.h"

namespace streamrecon {

struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Eigen::Vector3d> normals;  // optional, per vertex

  bool empty() const { return triangles.empty(); }
  // Throws InvariantError on out-of-range indices or non-finite vertices.
  void Validate() const;
  double Area() const;
  void Append(const TriMesh& other);
};

// Binary little-endian PLY (vertex x,y,z[,nx,ny,nz]; face vertex_indices).
void WriteMeshPly(const std::string& path, const TriMesh& mesh);
// Accepts ASCII and binary PLY with triangle or polygon faces (fanned).
TriMesh ReadMeshPly(const std::string& path);
void WriteMeshObj(const std::string& path, const TriMesh& mesh);

// Area-uniform random surface samples.
std::vector<Eigen::Vector3d> SampleSurface(const TriMesh& mesh, std::size_t count,
                                           std::uint64_t seed);

struct RayHit {
  double t = 0.0;
  std::size_t triangle = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

// Bounding-volume hierarchy over the triangles of a mesh, for closest-point
// and ray queries. Keeps a copy of the geometry.
class MeshBvh {
 public:
  explicit MeshBvh(const TriMesh& mesh);

  // Distance from `p` to the closest surface point.
  double Distance(const Eigen::Vector3d& p) const;
  Eigen::Vector3d ClosestPoint(const Eigen::Vector3d& p) const;
  // First hit with t in (t_min, t_max).
  std::optional<RayHit> Raycast(const Ray& ray, double t_min = 1e-9,
                                double t_max = 1e30) const;

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    std::uint32_t first = 0;  // first triangle slot or left child
    std::uint32_t count = 0;  // > 0 for leaves
    std::uint32_t right = 0;
  };
  std::uint32_t Build(std::uint32_t begin, std::uint32_t end);
  void Closest(std::uint32_t node, const Eigen::Vector3d& p, double* best_sq,
               Eigen::Vector3d* best) const;

  std::vector<Eigen::Vector3d> vertices_;
  std::vector<std::array<std::uint32_t, 3>> triangles_;
  std::vector<std::uint32_t> order_;
  std::vector<Eigen::Vector3d> centroids_;
  std::vector<Node> nodes_;
};

// Closest point of triangle (a, b, c) to p.
Eigen::Vector3d ClosestPointOnTriangle(const Eigen::Vector3d& p,
                                       const Eigen::Vector3d& a,
                                       const Eigen::Vector3d& b,
                                       const Eigen::Vector3d& c);

}  // namespace streamrecon
