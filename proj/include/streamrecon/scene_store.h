#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/common.h"
#include "streamrecon/geometry.h"
#include "streamrecon/spatial_grid.h"

namespace streamrecon {

// A feature-augmented scene point. The point only ever moves along the ray
// it was created on: position == ray_origin + distance * ray_dir.
struct ScenePoint {
  PointId id = 0;  // assigned on insertion
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::vector<float> feature;
  std::vector<float> reduced;
  Eigen::Vector3d ray_origin = Eigen::Vector3d::Zero();  // origin camera center
  Eigen::Vector3d ray_dir = Eigen::Vector3d::UnitZ();
  double distance = 1.0;  // metric distance to the origin camera
  double sigma = 1.0;     // std of the position along the ray
  double confidence = 0.0;
  CameraId origin_cam = 0;
  int level = kNumLevels;

  Ray ray() const { return Ray{ray_origin, ray_dir}; }
  // Re-derives position from distance.
  void PlaceAt(double new_distance) {
    distance = new_distance;
    position = ray_origin + distance * ray_dir;
  }
};

// One 2D feature of an image level. Pixel coordinates are full-resolution.
struct FeaturePoint2D {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  std::vector<float> feature;
  std::vector<float> reduced;
  int level = kNumLevels;
};

// Result of an M-nearest query; `short_result` is set when fewer than M
// candidates exist.
template <typename Key>
struct NeighborQuery {
  std::vector<Key> ids;
  std::vector<double> distances;
  bool short_result = false;
};

// All 2D feature points of one image level with a pixel-space index.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int level, std::vector<FeaturePoint2D> points);

  int level() const { return level_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<FeaturePoint2D>& points() const { return points_; }
  const FeaturePoint2D& operator[](std::size_t i) const { return points_[i]; }

  // M nearest features by pixel distance; ties go to the lower index.
  // Throws InputError on an empty map.
  NeighborQuery<std::size_t> KnnPixels(const Eigen::Vector2d& query,
                                       int count) const;
  void KnnPixels(const Eigen::Vector2d& query, int count,
                 std::vector<GridNeighbor>* out) const;

 private:
  int level_ = kNumLevels;
  std::vector<FeaturePoint2D> points_;
  GridIndex<2> index_;
};

// Nearest-line index for the rays of one level.
//
// Rays are grouped by origin camera. Within a camera each ray is filed in a
// 2D grid over its normalized image coordinates q' = (x/z, y/z). For a query
// v = x - origin with camera-frame z component Z and normalized coordinates
// q, every stored line satisfies
//   dist(x, line) >= |Z| * |q - q'| / sqrt(1 + |q'|^2),
// which bounds cells ring by ring and keeps the search exact.
class RayIndex {
 public:
  // cell_pixels: grid cell edge in full-resolution pixels.
  explicit RayIndex(double cell_pixels = 4.0) : cell_pixels_(cell_pixels) {}

  void Insert(PointId id, const Camera& origin_cam, const Ray& ray);
  // Returns false if the id is not indexed.
  bool Remove(PointId id);
  void Clear();

  std::size_t size() const { return locations_.size(); }
  bool Contains(PointId id) const { return locations_.count(id) > 0; }

  // M ids with the smallest point-to-line distance; ties by lower id.
  NeighborQuery<PointId> Nearest(const Eigen::Vector3d& query, int count) const;

  // Every indexed id, for audits.
  std::vector<PointId> Ids() const;

 private:
  struct Entry {
    PointId id;
    Eigen::Vector3d dir;
  };
  struct CameraGrid {
    Eigen::Vector3d origin;
    Eigen::Matrix3d world_to_cam;
    double x0 = 0, y0 = 0, cell = 1;  // normalized-plane grid
    long nx = 0, ny = 0;
    double max_q_norm = 0.0;  // monotone upper bound over stored rays
    std::vector<std::vector<Entry>> cells;
    std::size_t count = 0;
  };
  struct Location {
    CameraId cam;
    long cell;  // -1 for the overflow list
    std::size_t slot;
  };

  // Query expressed in one camera's grid.
  struct Probe {
    const CameraGrid* grid = nullptr;
    bool bounded = false;  // false: no usable bound, scan everything
    bool seeded = false;   // home cell already scanned
    double qx = 0, qy = 0, scale = 0;
    long cx = 0, cy = 0;
  };
  static Probe MakeProbe(const CameraGrid& grid, const Eigen::Vector3d& query);
  static void ScanCell(const CameraGrid& grid, long ix, long iy,
                       const Eigen::Vector3d& query, BestK<PointId>* best);
  static void Seed(Probe* probe, const Eigen::Vector3d& query, BestK<PointId>* best);
  static void Search(const Probe& probe, const Eigen::Vector3d& query,
                     BestK<PointId>* best);

  double cell_pixels_;
  std::map<CameraId, CameraGrid> grids_;
  std::vector<std::pair<Entry, Eigen::Vector3d>> overflow_;  // (entry, origin)
  std::unordered_map<PointId, Location> locations_;
};

// Exported per-point record of the cloud PLY format.
struct PointRecord {
  Eigen::Vector3f position;
  Eigen::Vector3f ray_dir;
  float confidence = 0.f;
  float sigma = 0.f;
  int level = kNumLevels;
};

// The global four-level point cloud.
//
// Single writer, multiple readers: const methods may run concurrently, but a
// mutation must not overlap with anything else.
class MultiLevelCloud {
 public:
  MultiLevelCloud();

  // Cameras must be registered before points referencing them are inserted.
  void RegisterCamera(const Camera& cam);
  bool HasCamera(CameraId id) const { return cameras_.count(id) > 0; }
  const Camera& GetCamera(CameraId id) const;
  const std::map<CameraId, Camera>& cameras() const { return cameras_; }

  // Validates every point first; any violation rejects the whole batch with
  // InputError. Returns the assigned ids in input order.
  std::vector<PointId> Insert(std::vector<ScenePoint> points);
  // Unknown ids are skipped; returns how many were unknown.
  std::size_t Remove(const std::vector<PointId>& ids);

  // Moves a point along its ray and updates its uncertainty and confidence.
  void UpdateAlongRay(PointId id, double distance, double sigma,
                      double confidence);

  const ScenePoint* Find(PointId id) const;
  const ScenePoint& Get(PointId id) const;
  const std::vector<ScenePoint>& Level(int level) const;
  std::size_t LevelSize(int level) const { return Level(level).size(); }
  std::size_t Size() const;
  bool Empty() const { return Size() == 0; }

  // M points of `level` whose rays pass closest to `query`.
  NeighborQuery<PointId> NearestRays(int level, const Eigen::Vector3d& query,
                                     int count) const;

  // Throws InvariantError unless the indices hold exactly the live point
  // set and every point satisfies the ray-consistency invariant.
  void Audit() const;

 private:
  struct Location {
    int level;
    std::size_t index;
  };
  void ValidatePoint(const ScenePoint& p) const;

  std::map<CameraId, Camera> cameras_;
  std::array<std::vector<ScenePoint>, kNumLevels> levels_;
  std::vector<RayIndex> ray_index_;
  std::unordered_map<PointId, Location> where_;
  PointId next_id_ = 1;
};

// Level-l resolution relative to the input image: 1 / 2^(6 - l).
double LevelScale(int level);

// Binary little-endian PLY with x,y,z,nx,ny,nz (= ray direction),
// confidence, sigma (float) and level (uchar).
void WriteCloudPly(const std::string& path, const MultiLevelCloud& cloud);
void WriteCloudPly(const std::string& path,
                   const std::vector<PointRecord>& records);
std::vector<PointRecord> ReadCloudPly(const std::string& path);
std::vector<PointRecord> ToRecords(const MultiLevelCloud& cloud);

}  // namespace streamrecon
