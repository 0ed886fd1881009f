#include "streamrecon/scene_store.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "streamrecon/ply.h"

namespace streamrecon {

double LevelScale(int level) {
  STREAMRECON_CHECK_INPUT(level >= 1 && level <= kNumLevels, "bad level ",
                          level);
  return 1.0 / static_cast<double>(1 << (6 - level));
}

// ---------------------------------------------------------------------------
// FeatureMap

FeatureMap::FeatureMap(int level, std::vector<FeaturePoint2D> points)
    : level_(level), points_(std::move(points)) {
  std::vector<Eigen::Vector2d> pixels;
  pixels.reserve(points_.size());
  for (const auto& p : points_) pixels.push_back(p.pixel);
  // A cell per level pixel keeps about one point per cell on regular maps.
  const double cell =
      (level >= 1 && level <= kNumLevels) ? 1.0 / LevelScale(level) : 0.0;
  index_.Build(std::move(pixels), points_.size() > 16 ? cell : 0.0);
}

NeighborQuery<std::size_t> FeatureMap::KnnPixels(const Eigen::Vector2d& query,
                                                 int count) const {
  std::vector<GridNeighbor> found;
  KnnPixels(query, count, &found);
  NeighborQuery<std::size_t> out;
  for (const auto& n : found) {
    out.ids.push_back(n.index);
    out.distances.push_back(n.distance);
  }
  out.short_result = static_cast<int>(found.size()) < count;
  return out;
}

void FeatureMap::KnnPixels(const Eigen::Vector2d& query, int count,
                           std::vector<GridNeighbor>* out) const {
  STREAMRECON_CHECK_INPUT(!points_.empty(), "feature map level ", level_,
                          " is empty");
  index_.Knn(query, count, out);
}

// ---------------------------------------------------------------------------
// RayIndex

void RayIndex::Insert(PointId id, const Camera& origin_cam, const Ray& ray) {
  STREAMRECON_CHECK_INPUT(!Contains(id), "ray ", id, " already indexed");
  auto it = grids_.find(origin_cam.id());
  if (it == grids_.end()) {
    CameraGrid grid;
    grid.origin = origin_cam.center();
    grid.world_to_cam = origin_cam.rotation().transpose();
    const Intrinsics& k = origin_cam.intrinsics();
    grid.cell = cell_pixels_ / k.fx;
    grid.x0 = -k.cx / k.fx - grid.cell;
    grid.y0 = -k.cy / k.fy - grid.cell;
    const double x1 = (origin_cam.width() - k.cx) / k.fx + grid.cell;
    const double y1 = (origin_cam.height() - k.cy) / k.fy + grid.cell;
    grid.nx = static_cast<long>(std::ceil((x1 - grid.x0) / grid.cell));
    grid.ny = static_cast<long>(std::ceil((y1 - grid.y0) / grid.cell));
    grid.cells.resize(static_cast<std::size_t>(grid.nx * grid.ny));
    it = grids_.emplace(origin_cam.id(), std::move(grid)).first;
  }
  CameraGrid& grid = it->second;

  const Eigen::Vector3d local = grid.world_to_cam * ray.dir;
  long cell = -1;
  double qnorm = 0.0;
  if (local.z() > 1e-9 && (ray.origin - grid.origin).norm() == 0.0) {
    const double qx = local.x() / local.z();
    const double qy = local.y() / local.z();
    const long ix = static_cast<long>(std::floor((qx - grid.x0) / grid.cell));
    const long iy = static_cast<long>(std::floor((qy - grid.y0) / grid.cell));
    if (ix >= 0 && ix < grid.nx && iy >= 0 && iy < grid.ny) {
      cell = iy * grid.nx + ix;
      qnorm = std::hypot(qx, qy);
    }
  }
  if (cell < 0) {
    locations_[id] = Location{origin_cam.id(), -1, overflow_.size()};
    overflow_.push_back({Entry{id, ray.dir}, ray.origin});
    return;
  }
  grid.max_q_norm = std::max(grid.max_q_norm, qnorm);
  auto& bucket = grid.cells[static_cast<std::size_t>(cell)];
  locations_[id] = Location{origin_cam.id(), cell, bucket.size()};
  bucket.push_back(Entry{id, ray.dir});
  ++grid.count;
}

bool RayIndex::Remove(PointId id) {
  auto it = locations_.find(id);
  if (it == locations_.end()) return false;
  const Location loc = it->second;
  locations_.erase(it);
  if (loc.cell < 0) {
    if (loc.slot + 1 != overflow_.size()) {
      overflow_[loc.slot] = overflow_.back();
      locations_[overflow_[loc.slot].first.id].slot = loc.slot;
    }
    overflow_.pop_back();
    return true;
  }
  auto git = grids_.find(loc.cam);
  CameraGrid& grid = git->second;
  auto& bucket = grid.cells[static_cast<std::size_t>(loc.cell)];
  if (loc.slot + 1 != bucket.size()) {
    bucket[loc.slot] = bucket.back();
    locations_[bucket[loc.slot].id].slot = loc.slot;
  }
  bucket.pop_back();
  if (--grid.count == 0) grids_.erase(git);
  return true;
}

void RayIndex::Clear() {
  grids_.clear();
  overflow_.clear();
  locations_.clear();
}

std::vector<PointId> RayIndex::Ids() const {
  std::vector<PointId> ids;
  ids.reserve(locations_.size());
  for (const auto& [cam, grid] : grids_) {
    for (const auto& bucket : grid.cells)
      for (const auto& e : bucket) ids.push_back(e.id);
  }
  for (const auto& [e, origin] : overflow_) ids.push_back(e.id);
  return ids;
}

namespace {

// Squared point-to-line distance; its sqrt equals PointToLineDistance.
inline double LineDistanceSq(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                             const Eigen::Vector3d& point) {
  return (point - origin).cross(dir).squaredNorm();
}

// Slack for rounding in the lower bounds.
constexpr double kBoundSlack = 1.0 - 1e-9;

}  // namespace

RayIndex::Probe RayIndex::MakeProbe(const CameraGrid& grid, const Eigen::Vector3d& query) {
  Probe p;
  p.grid = &grid;
  const Eigen::Vector3d v = query - grid.origin;
  const Eigen::Vector3d local = grid.world_to_cam * v;
  const double abs_z = std::abs(local.z());
  if (!(abs_z > 1e-12 * v.norm()) || abs_z == 0.0) return p;
  p.qx = local.x() / local.z();
  p.qy = local.y() / local.z();
  if (!(std::abs(p.qx) < 1e8 && std::abs(p.qy) < 1e8)) return p;
  p.bounded = true;
  // A ray filed at q' is at least scale * |q - q'| from the query.
  p.scale = abs_z / std::sqrt(1.0 + grid.max_q_norm * grid.max_q_norm) * kBoundSlack;
  p.cx = static_cast<long>(std::floor((p.qx - grid.x0) / grid.cell));
  p.cy = static_cast<long>(std::floor((p.qy - grid.y0) / grid.cell));
  return p;
}

void RayIndex::ScanCell(const CameraGrid& grid, long ix, long iy,
                        const Eigen::Vector3d& query, BestK<PointId>* best) {
  for (const auto& e : grid.cells[static_cast<std::size_t>(iy * grid.nx + ix)])
    best->Offer(LineDistanceSq(grid.origin, e.dir, query), e.id);
}

void RayIndex::Seed(Probe* p, const Eigen::Vector3d& query, BestK<PointId>* best) {
  const CameraGrid& grid = *p->grid;
  if (!p->bounded || p->cx < 0 || p->cx >= grid.nx || p->cy < 0 || p->cy >= grid.ny) return;
  ScanCell(grid, p->cx, p->cy, query, best);
  p->seeded = true;
}

void RayIndex::Search(const Probe& p, const Eigen::Vector3d& query, BestK<PointId>* best) {
  const CameraGrid& grid = *p.grid;
  if (!p.bounded) {
    for (const auto& bucket : grid.cells)
      for (const auto& e : bucket) best->Offer(LineDistanceSq(grid.origin, e.dir, query), e.id);
    return;
  }
  const double qx = p.qx, qy = p.qy, cell = grid.cell;
  const long cx = p.cx, cy = p.cy;
  // Normalized-plane radius that can still beat the current worst.
  auto radius = [&]() {
    return best->Full() ? std::sqrt(best->Worst()) / p.scale
                        : std::numeric_limits<double>::infinity();
  };
  const double x1 = grid.x0 + grid.nx * cell;
  const double y1 = grid.y0 + grid.ny * cell;
  const double gx = std::max({grid.x0 - qx, 0.0, qx - x1});
  const double gy = std::max({grid.y0 - qy, 0.0, qy - y1});
  if (std::hypot(gx, gy) > radius()) return;

  const long ring_max = std::max({std::abs(cx), std::abs(cx - (grid.nx - 1)),
                                  std::abs(cy), std::abs(cy - (grid.ny - 1))});
  // Gap between q and the border of its own cell; ring r lies at least
  // (r - 1) cells plus this gap away.
  const double ox = qx - (grid.x0 + cx * cell);
  const double oy = qy - (grid.y0 + cy * cell);
  const double gap = std::max(0.0, std::min({ox, cell - ox, oy, cell - oy}));
  auto clamp_cell = [&](double q, double q0, long n) {
    return static_cast<long>(
        std::clamp(std::floor((q - q0) / cell), -1.0, static_cast<double>(n)));
  };
  const long ring_start = std::max({0L, -cx, cx - (grid.nx - 1), -cy, cy - (grid.ny - 1)});
  for (long r = ring_start; r <= ring_max; ++r) {
    // Window of cells the current bound leaves open.
    long wxa = 0, wxb = grid.nx - 1, wya = 0, wyb = grid.ny - 1;
    if (best->Full()) {
      const double rad = radius();
      if (r >= 1 && (r - 1) * cell + gap > rad) break;
      wxa = std::max(wxa, clamp_cell(qx - rad, grid.x0, grid.nx));
      wxb = std::min(wxb, clamp_cell(qx + rad, grid.x0, grid.nx));
      wya = std::max(wya, clamp_cell(qy - rad, grid.y0, grid.ny));
      wyb = std::min(wyb, clamp_cell(qy + rad, grid.y0, grid.ny));
      if (wxa > wxb || wya > wyb) break;
    }
    if (r == 0) {
      if (!p.seeded) ScanCell(grid, cx, cy, query, best);
      continue;
    }
    const long xa = std::max(cx - r, wxa), xb = std::min(cx + r, wxb);
    for (long ix = xa; ix <= xb; ++ix) {
      if (cy - r >= wya && cy - r <= wyb) ScanCell(grid, ix, cy - r, query, best);
      if (cy + r >= wya && cy + r <= wyb) ScanCell(grid, ix, cy + r, query, best);
    }
    const long ya = std::max(cy - r + 1, wya), yb = std::min(cy + r - 1, wyb);
    for (long iy = ya; iy <= yb; ++iy) {
      if (cx - r >= wxa && cx - r <= wxb) ScanCell(grid, cx - r, iy, query, best);
      if (cx + r >= wxa && cx + r <= wxb) ScanCell(grid, cx + r, iy, query, best);
    }
  }
}

NeighborQuery<PointId> RayIndex::Nearest(const Eigen::Vector3d& query,
                                         int count) const {
  BestK<PointId> best(count);
  for (const auto& [e, origin] : overflow_) {
    best.Offer(LineDistanceSq(origin, e.dir, query), e.id);
  }
  // Seed from the cell under the query in every camera, so each full search
  // starts with a tight bound.
  std::vector<Probe> probes;
  probes.reserve(grids_.size());
  for (const auto& [cam, grid] : grids_) {
    probes.push_back(MakeProbe(grid, query));
    Seed(&probes.back(), query, &best);
  }
  for (const Probe& p : probes) Search(p, query, &best);
  NeighborQuery<PointId> out;
  for (const auto& [d, id] : best.items()) {
    out.ids.push_back(id);
    out.distances.push_back(std::sqrt(d));
  }
  out.short_result = static_cast<int>(out.ids.size()) < count;
  return out;
}

// ---------------------------------------------------------------------------
// MultiLevelCloud

MultiLevelCloud::MultiLevelCloud() {
  for (int level = 1; level <= kNumLevels; ++level) {
    ray_index_.emplace_back(1.0 / LevelScale(level));
  }
}

void MultiLevelCloud::RegisterCamera(const Camera& cam) {
  cam.Validate();
  auto it = cameras_.find(cam.id());
  if (it != cameras_.end()) {
    STREAMRECON_CHECK_INPUT(
        (it->second.center() - cam.center()).norm() == 0.0 &&
            (it->second.rotation() - cam.rotation()).norm() == 0.0,
        "camera ", cam.id(), " re-registered with a different pose");
    return;
  }
  cameras_.emplace(cam.id(), cam);
}

const Camera& MultiLevelCloud::GetCamera(CameraId id) const {
  auto it = cameras_.find(id);
  STREAMRECON_CHECK_INPUT(it != cameras_.end(), "unknown camera ", id);
  return it->second;
}

void MultiLevelCloud::ValidatePoint(const ScenePoint& p) const {
  STREAMRECON_CHECK_INPUT(p.level >= 1 && p.level <= kNumLevels,
                          "point level ", p.level, " out of range");
  auto cam = cameras_.find(p.origin_cam);
  STREAMRECON_CHECK_INPUT(cam != cameras_.end(), "point references unknown camera ",
                          p.origin_cam);
  STREAMRECON_CHECK_INPUT(
      (p.ray_origin - cam->second.center()).norm() <= 1e-9,
      "ray origin is not the center of camera ", p.origin_cam);
  STREAMRECON_CHECK_INPUT(std::abs(p.ray_dir.norm() - 1.0) <= 1e-9,
                          "ray direction not unit");
  STREAMRECON_CHECK_INPUT(std::isfinite(p.distance) && p.distance > 0.0,
                          "distance must be positive, got ", p.distance);
  STREAMRECON_CHECK_INPUT(std::isfinite(p.sigma) && p.sigma > 0.0,
                          "sigma must be positive, got ", p.sigma);
  STREAMRECON_CHECK_INPUT(std::isfinite(p.confidence), "confidence not finite");
  const double err =
      (p.position - (p.ray_origin + p.distance * p.ray_dir)).norm();
  STREAMRECON_CHECK_INPUT(err <= 1e-6, "position off its ray by ", err);
}

std::vector<PointId> MultiLevelCloud::Insert(std::vector<ScenePoint> points) {
  for (const auto& p : points) ValidatePoint(p);
  std::vector<PointId> ids;
  ids.reserve(points.size());
  for (auto& p : points) {
    const Camera& cam = cameras_.at(p.origin_cam);
    p.ray_origin = cam.center();
    p.PlaceAt(p.distance);
    p.id = next_id_++;
    auto& level = levels_[p.level - 1];
    ray_index_[p.level - 1].Insert(p.id, cam, p.ray());
    where_[p.id] = Location{p.level, level.size()};
    ids.push_back(p.id);
    level.push_back(std::move(p));
  }
  return ids;
}

std::size_t MultiLevelCloud::Remove(const std::vector<PointId>& ids) {
  std::size_t unknown = 0;
  for (PointId id : ids) {
    auto it = where_.find(id);
    if (it == where_.end()) {
      ++unknown;
      continue;
    }
    const Location loc = it->second;
    where_.erase(it);
    ray_index_[loc.level - 1].Remove(id);
    auto& level = levels_[loc.level - 1];
    if (loc.index + 1 != level.size()) {
      level[loc.index] = std::move(level.back());
      where_[level[loc.index].id].index = loc.index;
    }
    level.pop_back();
  }
  return unknown;
}

void MultiLevelCloud::UpdateAlongRay(PointId id, double distance, double sigma,
                                     double confidence) {
  auto it = where_.find(id);
  STREAMRECON_CHECK_INPUT(it != where_.end(), "unknown point ", id);
  STREAMRECON_CHECK_INPUT(std::isfinite(distance) && distance > 0.0,
                          "distance must be positive");
  STREAMRECON_CHECK_INPUT(std::isfinite(sigma) && sigma > 0.0,
                          "sigma must be positive");
  STREAMRECON_CHECK_INPUT(std::isfinite(confidence), "confidence not finite");
  ScenePoint& p = levels_[it->second.level - 1][it->second.index];
  p.PlaceAt(distance);
  p.sigma = sigma;
  p.confidence = confidence;
}

const ScenePoint* MultiLevelCloud::Find(PointId id) const {
  auto it = where_.find(id);
  if (it == where_.end()) return nullptr;
  return &levels_[it->second.level - 1][it->second.index];
}

const ScenePoint& MultiLevelCloud::Get(PointId id) const {
  const ScenePoint* p = Find(id);
  STREAMRECON_CHECK_INPUT(p != nullptr, "unknown point ", id);
  return *p;
}

const std::vector<ScenePoint>& MultiLevelCloud::Level(int level) const {
  STREAMRECON_CHECK_INPUT(level >= 1 && level <= kNumLevels, "bad level ",
                          level);
  return levels_[level - 1];
}

std::size_t MultiLevelCloud::Size() const {
  std::size_t n = 0;
  for (const auto& l : levels_) n += l.size();
  return n;
}

NeighborQuery<PointId> MultiLevelCloud::NearestRays(
    int level, const Eigen::Vector3d& query, int count) const {
  STREAMRECON_CHECK_INPUT(!Level(level).empty(), "cloud level ", level,
                          " is empty");
  return ray_index_[level - 1].Nearest(query, count);
}

void MultiLevelCloud::Audit() const {
  std::size_t total = 0;
  for (int l = 1; l <= kNumLevels; ++l) {
    const auto& pts = levels_[l - 1];
    total += pts.size();
    const RayIndex& index = ray_index_[l - 1];
    STREAMRECON_CHECK_INVARIANT(index.size() == pts.size(), "level ", l,
                                " ray index holds ", index.size(),
                                " rays for ", pts.size(), " points");
    std::vector<PointId> live;
    live.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const ScenePoint& p = pts[i];
      live.push_back(p.id);
      auto it = where_.find(p.id);
      STREAMRECON_CHECK_INVARIANT(
          it != where_.end() && it->second.level == l && it->second.index == i,
          "location map out of sync for point ", p.id);
      const double err =
          (p.position - (p.ray_origin + p.distance * p.ray_dir)).norm();
      STREAMRECON_CHECK_INVARIANT(err <= 1e-6, "point ", p.id,
                                  " left its ray by ", err);
      STREAMRECON_CHECK_INVARIANT(p.distance > 0.0 && p.sigma > 0.0,
                                  "point ", p.id, " has non-positive z/sigma");
    }
    std::vector<PointId> indexed = index.Ids();
    std::sort(live.begin(), live.end());
    std::sort(indexed.begin(), indexed.end());
    STREAMRECON_CHECK_INVARIANT(live == indexed, "level ", l,
                                " ray index differs from live set");
  }
  STREAMRECON_CHECK_INVARIANT(where_.size() == total,
                              "location map has stale entries");
}

// ---------------------------------------------------------------------------
// PLY

std::vector<PointRecord> ToRecords(const MultiLevelCloud& cloud) {
  std::vector<PointRecord> records;
  records.reserve(cloud.Size());
  for (int l = 1; l <= kNumLevels; ++l) {
    // Sort by id so exports do not depend on removal history.
    std::vector<const ScenePoint*> pts;
    for (const auto& p : cloud.Level(l)) pts.push_back(&p);
    std::sort(pts.begin(), pts.end(),
              [](const ScenePoint* a, const ScenePoint* b) { return a->id < b->id; });
    for (const ScenePoint* p : pts) {
      PointRecord r;
      r.position = p->position.cast<float>();
      r.ray_dir = p->ray_dir.cast<float>();
      r.confidence = static_cast<float>(p->confidence);
      r.sigma = static_cast<float>(p->sigma);
      r.level = p->level;
      records.push_back(r);
    }
  }
  return records;
}

void WriteCloudPly(const std::string& path, const MultiLevelCloud& cloud) {
  WriteCloudPly(path, ToRecords(cloud));
}

void WriteCloudPly(const std::string& path,
                   const std::vector<PointRecord>& records) {
  ply::Schema schema;
  schema.elements.push_back(
      {"vertex",
       records.size(),
       {{"x", ply::Type::kFloat32, false},
        {"y", ply::Type::kFloat32, false},
        {"z", ply::Type::kFloat32, false},
        {"nx", ply::Type::kFloat32, false},
        {"ny", ply::Type::kFloat32, false},
        {"nz", ply::Type::kFloat32, false},
        {"confidence", ply::Type::kFloat32, false},
        {"sigma", ply::Type::kFloat32, false},
        {"level", ply::Type::kUInt8, false}}});
  std::ofstream out(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  ply::WriteHeader(out, schema);
  for (const auto& r : records) {
    ply::WriteLE(out, r.position.x());
    ply::WriteLE(out, r.position.y());
    ply::WriteLE(out, r.position.z());
    ply::WriteLE(out, r.ray_dir.x());
    ply::WriteLE(out, r.ray_dir.y());
    ply::WriteLE(out, r.ray_dir.z());
    ply::WriteLE(out, r.confidence);
    ply::WriteLE(out, r.sigma);
    ply::WriteLE(out, static_cast<std::uint8_t>(r.level));
  }
  STREAMRECON_CHECK_INPUT(out.good(), "failed writing ", path);
}

std::vector<PointRecord> ReadCloudPly(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(in.good(), "cannot open ", path);
  const ply::Schema schema = ply::ReadHeader(in);
  const ply::Element* vertex = schema.Find("vertex");
  STREAMRECON_CHECK_INPUT(vertex != nullptr, path, " has no vertex element");
  const char* names[] = {"x", "y", "z", "nx", "ny", "nz",
                         "confidence", "sigma", "level"};
  std::vector<int> slot;
  for (const char* n : names) {
    const int idx = vertex->PropertyIndex(n);
    STREAMRECON_CHECK_INPUT(idx >= 0, path, " lacks vertex property ", n);
    slot.push_back(idx);
  }
  std::vector<PointRecord> records(vertex->count);
  for (const auto& element : schema.elements) {
    if (&element != vertex) {
      ply::SkipElement(in, schema.format, element);
      continue;
    }
    std::vector<double> row;
    for (auto& r : records) {
      ply::ReadRow(in, schema.format, element, &row);
      r.position = Eigen::Vector3f(row[slot[0]], row[slot[1]], row[slot[2]]);
      r.ray_dir = Eigen::Vector3f(row[slot[3]], row[slot[4]], row[slot[5]]);
      r.confidence = static_cast<float>(row[slot[6]]);
      r.sigma = static_cast<float>(row[slot[7]]);
      r.level = static_cast<int>(row[slot[8]]);
      STREAMRECON_CHECK_INPUT(r.level >= 1 && r.level <= kNumLevels,
                              path, " has point level ", r.level);
    }
  }
  return records;
}

}  // namespace streamrecon
