#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/geometry.h"
#include "streamrecon/image.h"
#include "streamrecon/mesh.h"

namespace streamrecon {

struct TsdfVoxel {
  float tsdf = 1.f;
  float weight = 0.f;
};

// Sparse truncated signed distance volume in 8^3 voxel blocks allocated on
// first touch. Voxel i covers [origin + i * size, origin + (i + 1) * size)
// with its sample at the center.
class TsdfVolume {
 public:
  static constexpr int kBlockSide = 8;
  static constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;
  using Block = std::array<TsdfVoxel, kBlockVoxels>;

  // truncation <= 0 picks 3 voxels.
  explicit TsdfVolume(double voxel_size, double truncation = 0.0,
                      const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

  double voxel_size() const { return voxel_size_; }
  double truncation() const { return truncation_; }
  std::size_t block_count() const { return blocks_.size(); }

  // Projective update of every allocated voxel in view with sdf > -trunc:
  // tsdf <- (w tsdf + min(1, sdf / trunc)) / (w + 1), w <- w + 1. `cam` must
  // be at the depth map's resolution.
  void Integrate(const DepthMap& depth, const Camera& cam);

  // Marching cubes over voxel centers. Cubes with a zero-weight corner are
  // skipped; vertices shared by neighboring cubes are merged.
  TriMesh ExtractMesh() const;

  const TsdfVoxel* Find(const Eigen::Vector3i& voxel) const;
  Eigen::Vector3d VoxelCenter(const Eigen::Vector3i& voxel) const;
  Eigen::Vector3i VoxelOf(const Eigen::Vector3d& p) const;
  // Axis-aligned bounds of the allocated blocks.
  void Bounds(Eigen::Vector3d* lo, Eigen::Vector3d* hi) const;

 private:
  static std::int64_t Key(const Eigen::Vector3i& block);
  Block& Allocate(const Eigen::Vector3i& block);

  double voxel_size_;
  double truncation_;
  Eigen::Vector3d origin_;
  std::unordered_map<std::int64_t, Block> blocks_;
  std::vector<Eigen::Vector3i> block_order_;  // allocation order
};

}  // namespace streamrecon
