// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any
// fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "oracles.h"
#include "streamrecon/engine.h"
#include "streamrecon/features.h"
#include "streamrecon/fusion.h"
#include "streamrecon/losses.h"
#include "streamrecon/merger.h"
#include "streamrecon/metrics.h"
#include "streamrecon/pipeline.h"
#include "streamrecon/predictors.h"
#include "streamrecon/synthetic.h"
#include "test_util.h"

namespace streamrecon {
namespace {

using testing::LookAtCamera;
using testing::PointOnRay;
using testing::RandomUnit;
using testing::RandomVec;

// Collects failed conditions of one criterion.
class Checks {
 public:
  void Expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void Note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failed_ == 0; }
  std::string Summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < notes_.size(); ++i) os << (i ? "; " : "") << notes_[i];
    if (failed_ > 0) {
      os << (notes_.empty() ? "" : "; ") << failed_ << " failed:";
      for (const auto& f : failures_) os << " [" << f << "]";
    }
    return os.str();
  }

 private:
  int failed_ = 0;
  std::vector<std::string> failures_, notes_;
};

std::string Num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

void RayGeometry(Checks& c) {
  std::mt19937_64 rng(101);
  double worst_grid = 0, worst_sym = 0, worst_orth = 0;
  for (int i = 0; i < 1000; ++i) {
    const Ray a{RandomVec(rng, -1, 1), RandomUnit(rng)};
    const Ray b{RandomVec(rng, -1, 1), RandomUnit(rng)};
    const RayCrossing x = ClosestPoints(a, b);
    const testing::LinePair g = testing::GridClosestPoints(a, b);
    worst_grid = std::max({worst_grid, (x.p1 - g.p1).norm(), (x.p2 - g.p2).norm()});
    const RayCrossing y = ClosestPoints(b, a);
    worst_sym = std::max({worst_sym, (x.p1 - y.p2).norm(), (x.p2 - y.p1).norm(),
                          std::abs(x.gap - y.gap)});
    const Eigen::Vector3d w = x.p1 - x.p2;
    worst_orth = std::max({worst_orth, std::abs(w.dot(a.dir)), std::abs(w.dot(b.dir))});
  }
  c.Expect(worst_grid < 1e-6, "grid minimization " + Num(worst_grid));
  c.Expect(worst_sym < 1e-9, "symmetry " + Num(worst_sym));
  c.Expect(worst_orth < 1e-9, "orthogonality " + Num(worst_orth));
  c.Note("max |closest - grid| " + Num(worst_grid) + " m");
}

void MetadataDual(Checks& c) {
  std::mt19937_64 rng(202);
  double worst_u = 0, worst_d = 0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  for (int i = 0; i < 10000; ++i) {
    const auto u = testing::RandomUpdateConfig(rng);
    const UpdateMeta got = UpdateMetadata(u.q, u.sample, u.nbr_ray, u.pixel, u.cam);
    const UpdateMeta want = testing::OracleUpdateMeta(u.q, u.sample, u.nbr_ray, u.pixel, u.cam);
    for (int k = 0; k < kUpdateMetaSize; ++k) {
      c.Expect(std::isfinite(got[k]), "update component " + std::to_string(k) + " not finite");
      worst_u = std::max(worst_u, rel(got[k], want[k]));
    }
    const auto d = testing::RandomDepthConfig(rng);
    const DepthMeta gd = DepthMetadata(d.ray, d.sample, d.nbr, d.cam);
    const DepthMeta wd = testing::OracleDepthMeta(d.ray, d.sample, d.nbr, d.cam);
    for (int k = 0; k < kDepthMetaSize; ++k) {
      c.Expect(std::isfinite(gd[k]), "depth component " + std::to_string(k) + " not finite");
      worst_d = std::max(worst_d, rel(gd[k], wd[k]));
    }
  }
  c.Expect(kUpdateMetaSize == 10, "update metadata size");
  c.Expect(kDepthMetaSize == 13, "depth metadata size");
  c.Expect(worst_u <= 1e-9, "update metadata " + Num(worst_u));
  c.Expect(worst_d <= 1e-9, "depth metadata " + Num(worst_d));
  c.Note("10^4 configs, max rel err update " + Num(worst_u) + ", depth " + Num(worst_d));
}

void NeighborQueries(Checks& c) {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int compared = 0;
  for (int n : {1, 100, 3000, 10000}) {
    // Feature maps, with duplicated pixels for ties.
    std::vector<FeaturePoint2D> fp(n);
    for (int i = 0; i < n; ++i) {
      fp[i].pixel = i > 0 && i % 9 == 0 ? fp[i / 2].pixel
                                        : Eigen::Vector2d(640 * u(rng), 480 * u(rng));
      fp[i].level = 4;
    }
    const FeatureMap map(4, fp);
    for (int q = 0; q < 100; ++q) {
      const Eigen::Vector2d query(700 * u(rng) - 30, 520 * u(rng) - 20);
      for (int m : {1, 4, 9}) {
        std::vector<std::pair<double, std::size_t>> all;
        for (int i = 0; i < n; ++i) all.emplace_back((fp[i].pixel - query).norm(), i);
        std::sort(all.begin(), all.end());
        all.resize(std::min<std::size_t>(all.size(), m));
        const auto got = map.KnnPixels(query, m);
        bool same = got.ids.size() == all.size();
        for (std::size_t k = 0; same && k < all.size(); ++k)
          same = got.ids[k] == all[k].second && got.distances[k] == all[k].first;
        c.Expect(same, "knn_pixels n=" + std::to_string(n) + " q=" + std::to_string(q));
        ++compared;
      }
    }

    // Ray cloud over several cameras, with shared rays.
    MultiLevelCloud cloud;
    std::vector<Camera> cams;
    for (int k = 0; k < 6; ++k) {
      cams.push_back(testing::RandomCamera(rng, k + 1));
      cloud.RegisterCamera(cams.back());
    }
    std::vector<ScenePoint> pts;
    for (int i = 0; i < n; ++i) {
      if (i > 0 && i % 11 == 0) {
        ScenePoint p = pts[i / 3];
        p.PlaceAt(p.distance * (1 + u(rng)));
        pts.push_back(p);
        continue;
      }
      const Camera& cam = cams[i % 6];
      pts.push_back(PointOnRay(cam, {cam.width() * u(rng), cam.height() * u(rng)},
                               0.2 + 3 * u(rng), cam.id()));
    }
    cloud.Insert(pts);
    for (int q = 0; q < 100; ++q) {
      Eigen::Vector3d x = RandomVec(rng, -4, 4);
      if (q % 10 == 0) x = cams[0].center();
      for (int m : {1, 3, 8}) {
        std::vector<std::pair<double, PointId>> all;
        for (const auto& p : cloud.Level(4)) all.emplace_back(PointToLineDistance(p.ray(), x), p.id);
        std::sort(all.begin(), all.end());
        all.resize(std::min<std::size_t>(all.size(), m));
        const auto got = cloud.NearestRays(4, x, m);
        bool same = got.ids.size() == all.size();
        for (std::size_t k = 0; same && k < all.size(); ++k)
          same = got.ids[k] == all[k].second && got.distances[k] == all[k].first;
        c.Expect(same, "nearest_rays n=" + std::to_string(n) + " q=" + std::to_string(q));
        ++compared;
      }
    }
  }
  c.Note(std::to_string(compared) + " queries equal to exhaustive scans");
}

// After a merge the trim is at a fixpoint: trimming again against the same
// cameras removes nothing.
bool TrimIsFixpoint(const MultiLevelCloud& cloud, const std::vector<Camera>& history,
                    const std::vector<CameraId>& trim_cams) {
  for (int l = 1; l <= kNumLevels; ++l) {
    std::vector<Camera> cams;
    for (CameraId id : trim_cams) {
      const auto cam = std::find_if(history.begin(), history.end(),
                                    [&](const Camera& h) { return h.id() == id; });
      if (cam == history.end()) return false;
      cams.push_back(cam->Scaled(LevelScale(l)));
    }
    if (!Trim(cloud.Level(l), cams).empty()) return false;
  }
  return true;
}

void OracleEndToEnd(Checks& c) {
  const SyntheticScene scene =
      SyntheticScene::FromSpec(KeyValues::Parse(testing::RoomSpec(9)), 0);
  const SurfaceOracle oracle = scene.Oracle();
  EngineConfig config;
  config.predictor = "oracle";
  config.extractor = "oracle";
  Engine engine(config, MakeExtractor(config, &oracle), MakePredictor(config, &oracle));
  double worst_pred = 0, worst_render = 0, worst_surface = 0, worst_center = 0;
  std::size_t rendered = 0;
  for (const Camera& cam : scene.cameras()) {
    const FrameResult r = engine.ProcessFrame(scene.RenderImage(cam), cam);
    const Camera l4 = cam.Scaled(LevelScale(4));
    const DepthMap gt = scene.RenderDepth(l4);
    for (std::size_t i = 0; i < gt.size(); ++i)
      worst_pred = std::max(worst_pred, std::abs(r.predicted[3].values()[i] - gt.values()[i]));

    // Rendered pixels against the analytic depth of the surface point that
    // wins them.
    std::map<std::pair<int, int>, double> nearest;
    for (const ScenePoint& p : engine.cloud().Level(4)) {
      const auto hit = scene.Raycast(p.ray());
      worst_surface = std::max(worst_surface, hit ? std::abs(hit->t - p.distance) : 1e9);
      if (!(p.confidence > config.eps) || !InFrustum(l4, p.position)) continue;
      const Projection pr = Project(l4, p.position);
      const auto key = std::make_pair(static_cast<int>(std::floor(pr.pixel.x())),
                                      static_cast<int>(std::floor(pr.pixel.y())));
      const double z = l4.WorldToCamera(hit->point).z();
      auto it = nearest.find(key);
      if (it == nearest.end() || z < it->second) nearest[key] = z;
    }
    for (int y = 0; y < l4.height(); ++y)
      for (int x = 0; x < l4.width(); ++x) {
        const auto it = nearest.find({x, y});
        const double want = it == nearest.end() ? 0.0 : it->second;
        worst_render = std::max(worst_render, std::abs(r.rendered.at(x, y) - want));
        if (r.rendered.Valid(x, y)) {
          ++rendered;
          worst_center = std::max(worst_center, std::abs(r.rendered.at(x, y) - gt.at(x, y)));
        }
      }

    engine.cloud().Audit();
    c.Expect(r.merge.protected_removed == 0, "protected point removed");
    c.Expect(r.merge.protect_cameras.empty(), "unexpected protecting camera");
    c.Expect(TrimIsFixpoint(engine.cloud(), engine.cameras(), r.merge.trim_cameras),
             "trim not at a fixpoint after frame " + std::to_string(cam.id()));
  }
  c.Expect(worst_pred < 1e-6, "predicted level-4 depth " + Num(worst_pred));
  c.Expect(worst_surface < 1e-6, "points off the surface " + Num(worst_surface));
  c.Expect(worst_render < 1e-6, "rendered depth " + Num(worst_render));
  c.Expect(rendered > 0, "nothing rendered");
  c.Note("max |pred - gt| " + Num(worst_pred) + " m, max |render - analytic| " +
         Num(worst_render) + " m over " + std::to_string(rendered) +
         " pixels, max |render - gt at pixel center| " + Num(worst_center) + " m");
}

void GeometricEndToEnd(Checks& c) {
  const SyntheticScene scene =
      SyntheticScene::FromSpec(KeyValues::Parse(testing::RoomSpec(2)), 0);
  const Camera& a = scene.cameras()[0];
  const Camera& b = scene.cameras()[1];
  const Camera l4 = b.Scaled(LevelScale(4));
  const DepthMap gt = scene.RenderDepth(l4);

  // Bound from the setup alone: median true depth, baseline and focal length
  // give the triangulation angle; samples are 1.5 m / 31 apart.
  std::vector<double> depths(gt.values().begin(), gt.values().end());
  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  const double d = depths[depths.size() / 2];
  const double baseline = (a.center() - b.center()).norm();
  const double sin_theta = std::sin(2 * std::atan(0.5 * baseline / d));
  const double bound =
      testing::QuantizationDepthBound(d, l4.intrinsics().fx, sin_theta, 1.5 / 31) / d;

  const SurfaceOracle oracle = scene.Oracle();
  EngineConfig config;
  config.predictor = "argmax";
  config.extractor = "oracle";
  Engine engine(config, MakeExtractor(config, &oracle), MakePredictor(config, &oracle));
  FrameResult r;
  for (const Camera& cam : scene.cameras()) r = engine.ProcessFrame(scene.RenderImage(cam), cam);
  std::vector<double> rel;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.values()[i] > 0 && r.rendered.values()[i] > 0)
      rel.push_back(std::abs(r.rendered.values()[i] - gt.values()[i]) / gt.values()[i]);
  }
  c.Expect(!rel.empty(), "frame 2 rendered nothing");
  if (rel.empty()) return;
  std::nth_element(rel.begin(), rel.begin() + rel.size() / 2, rel.end());
  const double median = rel[rel.size() / 2];
  c.Expect(median < bound, "median abs-rel " + Num(median) + " >= bound " + Num(bound));
  c.Note("median abs-rel " + Num(median) + " vs bound " + Num(bound) + " (baseline " +
         Num(baseline) + " m, depth " + Num(d) + " m), coverage " +
         Num(static_cast<double>(rel.size()) / gt.size()));
}

DepthMap RandomMap(std::mt19937_64& rng, int w, int h, double invalid) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DepthMap m(w, h);
  for (double& v : m.values()) v = u(rng) < invalid ? 0.0 : 1.0 + 2 * u(rng);
  return m;
}

double WorstGradientError(const DepthMap& analytic, const DepthMap& pred,
                          const std::function<double(const DepthMap&)>& loss) {
  double worst = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(pred.values()[i] > 0)) continue;
    DepthMap p = pred;
    p.values()[i] += 1e-6;
    const double up = loss(p);
    p.values()[i] -= 2e-6;
    const double fd = (up - loss(p)) / 2e-6;
    const double a = analytic.values()[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3}));
  }
  return worst;
}

void LossSuite(Checks& c) {
  std::mt19937_64 rng(606);
  const int w = 16, h = 12;
  const Camera cam(Intrinsics{12.8, 12.8, 8, 6}, Eigen::Matrix3d::Identity(),
                   Eigen::Vector3d::Zero(), w, h, 1);
  const DepthMap gt = RandomMap(rng, w, h, 0.1);
  DepthMap twice = gt;
  for (double& v : twice.values()) v *= 2;
  const double expect = std::log(2.0) * (1 + 1.0 / 4 + 1.0 / 9 + 1.0 / 16);
  const double got = DepthLoss({twice, twice, twice, twice}, gt);
  c.Expect(std::abs(got - expect) <= 1e-5, "pred = 2 gt gives " + Num(got));

  const LossReport zero = ComputeLosses({gt, gt, gt, gt}, gt, cam, {1, 2}, {1.0, 2.0});
  c.Expect(std::max({zero.depth, zero.grad, zero.normal, zero.update}) < 1e-12,
           "losses at pred = gt: " + Num(zero.depth) + " " + Num(zero.grad) + " " +
               Num(zero.normal) + " " + Num(zero.update));

  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const DepthMap g = RandomMap(rng, w, h, 0.1);
    std::array<DepthMap, kNumLevels> pred;
    for (auto& m : pred) m = RandomMap(rng, w, h, 0.0);
    std::array<DepthMap, kNumLevels> dg;
    DepthLoss(pred, g, &dg);
    for (int l = 0; l < kNumLevels; ++l)
      worst = std::max(worst, WorstGradientError(dg[l], pred[l], [&](const DepthMap& m) {
                         auto p = pred;
                         p[l] = m;
                         return DepthLoss(p, g);
                       }));
    DepthMap gg, ng;
    GradLoss(pred[3], g, &gg);
    worst = std::max(worst, WorstGradientError(gg, pred[3], [&](const DepthMap& m) {
                       return GradLoss(m, g);
                     }));
    NormalLoss(pred[3], g, cam, &ng);
    worst = std::max(worst, WorstGradientError(ng, pred[3], [&](const DepthMap& m) {
                       return NormalLoss(m, g, cam);
                     }));
    std::vector<double> z(10), ug;
    std::vector<std::optional<double>> zg(10);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 10; ++i) {
      z[i] = n(rng);
      if (i % 3) zg[i] = n(rng);
    }
    UpdateLoss(z, zg, &ug);
    for (int i = 0; i < 10; ++i) {
      auto zp = z, zm = z;
      zp[i] += 1e-6;
      zm[i] -= 1e-6;
      const double fd = (UpdateLoss(zp, zg) - UpdateLoss(zm, zg)) / 2e-6;
      worst = std::max(worst, std::abs(ug[i] - fd) / std::max({std::abs(ug[i]), std::abs(fd), 1e-3}));
    }
  }
  c.Expect(worst < 1e-4, "gradient check " + Num(worst));
  c.Note("pred = 2 gt gives " + Num(got) + " (formula " + Num(expect) +
         "); max gradient rel err " + Num(worst));
}

std::vector<ScenePoint> Stack(const Camera& cam, const std::vector<double>& depths,
                              const std::vector<double>& confs) {
  std::vector<ScenePoint> pts;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    ScenePoint p = PointOnRay(cam, {cam.width() / 2 + 0.5, cam.height() / 2 + 0.5}, depths[i],
                              cam.id(), 4, confs[i]);
    p.id = i + 1;
    pts.push_back(p);
  }
  return pts;
}

std::vector<PointId> BruteForceTrim(const std::vector<ScenePoint>& pts,
                                    const std::vector<Camera>& cams,
                                    const std::unordered_set<PointId>& protect) {
  std::set<PointId> occupying, winning;
  for (const Camera& cam : cams) {
    std::map<std::pair<int, int>, const ScenePoint*> winner;
    for (const auto& p : pts) {
      if (!testing::Visible(cam, p.position)) continue;
      const Eigen::Vector3d hp = testing::ProjectK(cam, p.position);
      const auto key = std::make_pair(static_cast<int>(std::floor(hp.x() / hp.z())),
                                      static_cast<int>(std::floor(hp.y() / hp.z())));
      occupying.insert(p.id);
      auto it = winner.find(key);
      if (it == winner.end() || p.confidence > it->second->confidence ||
          (p.confidence == it->second->confidence && p.id < it->second->id))
        winner[key] = &p;
    }
    for (const auto& [key, p] : winner) winning.insert(p->id);
  }
  std::vector<PointId> out;
  for (PointId id : occupying)
    if (!winning.count(id) && !protect.count(id)) out.push_back(id);
  return out;
}

void MergeSuite(Checks& c) {
  const Camera cam = LookAtCamera({0, 0, 1}, {0, 1, 1}, 1, 8, 8);
  const double soft = RenderTrain(Stack(cam, {1, 3}, {std::log(3.0), 0}), cam).at(4, 4);
  c.Expect(std::abs(soft - 1.5) <= 1e-9, "softmax renders " + Num(soft));
  const double gated = RenderInfer(Stack(cam, {2, 1, 3}, {0.5, -1, 0.5}), cam).at(4, 4);
  c.Expect(std::abs(gated - 2.0) <= 1e-12, "gating renders " + Num(gated));

  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int trials = 0;
  for (; trials < 50; ++trials) {
    std::vector<Camera> cams;
    for (int k = 0; k < 3; ++k)
      cams.push_back(LookAtCamera({u(rng) - 0.5, 0.3 * u(rng), 1 + 0.3 * u(rng)}, {0, 3, 1},
                                  k + 1, 16, 12));
    std::vector<ScenePoint> pts;
    std::unordered_set<PointId> protect;
    for (int i = 0; i < 1000; ++i) {
      const Camera& from = cams[i % 3];
      ScenePoint p = PointOnRay(from, {16 * u(rng), 12 * u(rng)}, 2 + u(rng), from.id(), 4,
                                std::round(8 * u(rng)) / 8);
      p.id = 1000 - i;
      if (u(rng) < 0.05) protect.insert(p.id);
      pts.push_back(p);
    }
    c.Expect(Trim(pts, cams, protect) == BruteForceTrim(pts, cams, protect),
             "trim differs from simulation in trial " + std::to_string(trials));
  }

  // 20 overlapping cameras with K_recent = 16: the four oldest only protect.
  MultiLevelCloud cloud;
  std::vector<Camera> history;
  std::set<PointId> seen_by_old;
  MergeReport last;
  for (CameraId id = 1; id <= 20; ++id) {
    const Camera cur = LookAtCamera({0.02 * id, 0, 1}, {0.02 * id, 3, 1}, id, 64, 64);
    std::vector<ScenePoint> pts;
    for (int i = 0; i < 300; ++i)
      pts.push_back(PointOnRay(cur, {64 * u(rng), 64 * u(rng)}, 3.0, id, 4, u(rng)));
    if (id == 20) {
      for (int l = 1; l <= kNumLevels; ++l)
        for (const auto& p : cloud.Level(l))
          for (int old = 0; old < 4; ++old)
            if (InFrustum(history[old], p.position)) seen_by_old.insert(p.id);
    }
    last = MergeStep(&cloud, pts, cur, history, MergeConfig{16});
    c.Expect(last.protected_removed == 0, "protected point removed");
    history.push_back(cur);
  }
  c.Expect(last.protect_cameras == std::vector<CameraId>({4, 3, 2, 1}), "protect cameras");
  c.Expect(last.trim_cameras.size() == 16, "trim cameras");
  c.Expect(!seen_by_old.empty(), "scenario has no protected points");
  std::size_t survived = 0;
  for (PointId id : seen_by_old) survived += cloud.Find(id) != nullptr;
  c.Expect(survived == seen_by_old.size(), "protected point missing");
  c.Note("softmax " + Num(soft) + ", gating " + Num(gated) + ", " + std::to_string(trials) +
         " trim simulations, " + std::to_string(survived) + "/" +
         std::to_string(seen_by_old.size()) + " protected points kept");
}

double ReadChamfer(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  const auto j = nlohmann::json::parse(in);
  return j.at("mesh").at("chamfer").get<double>();
}

void FusionSuite(Checks& c) {
  // Plane at z = 2 seen head on.
  double plane_worst = 0;
  for (double voxel : {0.02, 0.04}) {
    const Camera cam(Intrinsics{50, 50, 32, 24}, Eigen::Matrix3d::Identity(),
                     Eigen::Vector3d::Zero(), 64, 48, 1);
    DepthMap d(64, 48);
    for (double& v : d.values()) v = 2.0;
    TsdfVolume volume(voxel);
    volume.Integrate(d, cam);
    const TriMesh mesh = volume.ExtractMesh();
    c.Expect(!mesh.empty(), "plane mesh empty");
    double worst = 0;
    for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.z() - 2.0));
    c.Expect(worst <= 0.5 * voxel, "plane off by " + Num(worst));
    plane_worst = std::max(plane_worst, worst / voxel);
  }

  // A box seen from six sides; chamfer against its own surface.
  SyntheticScene scene;
  scene.SetRoom(AxisBox{Eigen::Vector3d(-3, -3, -3), Eigen::Vector3d(3, 3, 3)});
  const AxisBox box{Eigen::Vector3d(-0.5, -0.4, -0.3), Eigen::Vector3d(0.5, 0.4, 0.3)};
  scene.AddBox(box);
  const double box_voxel = 0.02;
  TsdfVolume volume(box_voxel);
  int id = 1;
  for (const Eigen::Vector3d& eye :
       {Eigen::Vector3d(2, 0.3, 0.5), Eigen::Vector3d(-2, -0.3, 0.5), Eigen::Vector3d(0.3, 2, -0.5),
        Eigen::Vector3d(-0.3, -2, -0.5), Eigen::Vector3d(0.4, 0.2, 2.2),
        Eigen::Vector3d(-0.2, 0.4, -2.2)}) {
    const Camera cam = LookAtCamera(eye, Eigen::Vector3d::Zero(), id++, 128, 96);
    volume.Integrate(scene.RenderDepth(cam), cam);
  }
  const TriMesh fused = volume.ExtractMesh();
  TriMesh near_box;
  for (const auto& t : fused.triangles) {
    bool inside = true;
    for (auto i : t)
      inside &= (fused.vertices[i].cwiseAbs().array() < Eigen::Array3d(0.8, 0.7, 0.6)).all();
    if (!inside) continue;
    const auto base = static_cast<std::uint32_t>(near_box.vertices.size());
    for (auto i : t) near_box.vertices.push_back(fused.vertices[i]);
    near_box.triangles.push_back({base, base + 1, base + 2});
  }
  SyntheticScene box_only;
  box_only.SetRoom(AxisBox{Eigen::Vector3d(-0.5, -0.4, -0.3), Eigen::Vector3d(0.5, 0.4, 0.3)});
  const TriMesh box_mesh = box_only.Mesh();
  double box_chamfer = 1e9;
  if (!near_box.empty()) {
    box_chamfer = ComputeMeshMetrics(near_box, box_mesh, {50000, 0.05, 1, {}}).chamfer;
  }
  c.Expect(box_chamfer < box_voxel, "box chamfer " + Num(box_chamfer));

  // Full oracle pipeline on the room.
  const std::string seq = testing::TempDir("accept_fusion_seq");
  const std::string spec = testing::RoomSpec(9);
  const SyntheticScene room = SyntheticScene::FromSpec(KeyValues::Parse(spec), 0);
  WriteSyntheticSequence(room, spec, 0, seq);
  const SurfaceOracle oracle = room.Oracle();
  std::ostringstream chamfers;
  for (double voxel : {0.02, 0.04}) {
    EngineConfig config;
    config.predictor = "oracle";
    config.extractor = "oracle";
    config.voxel_size = voxel;
    SequenceSource source(seq);
    const std::string out = testing::TempDir("accept_fusion_out_" + std::to_string(int(voxel * 100)));
    RunReconstruction(source, config, out, &oracle);
    const double chamfer = ReadChamfer(out + "/metrics.json");
    c.Expect(chamfer < 2 * voxel, "room chamfer " + Num(chamfer) + " at voxel " + Num(voxel));
    chamfers << " " << Num(chamfer) << "@" << Num(voxel);
  }
  c.Note("plane max err " + Num(plane_worst) + " voxel, box chamfer " + Num(box_chamfer) +
         " m, room chamfer" + chamfers.str());
}

void ScaleAndPerf(Checks& c) {
  EngineConfig config;
  config.predictor = "argmax";
  config.extractor = "patch";
  const std::string spec =
      "room_min = -2 -2 0\nroom_max = 2 2 3\nbox = -1.2 0.8 0 -0.4 1.6 0.9\n"
      "width = 640\nheight = 480\nfx = 520\nfy = 520\ncx = 320\ncy = 240\n"
      "trajectory = explicit\n"
      "camera = 0 0 1.4 0 2 1.2\ncamera = 0 0 1.4 2 0 1.2\n"
      "camera = 0 0 1.4 0 -2 1.2\ncamera = 0 0 1.4 -2 0 1.2\n"
      "camera = 0.1 0 1.4 0.3 2 1.2\n";
  const SyntheticScene scene = SyntheticScene::FromSpec(KeyValues::Parse(spec), 0);
  Engine engine(config, MakeExtractor(config, nullptr), MakePredictor(config, nullptr));
  const auto& cams = scene.cameras();
  engine.ProcessFrame(scene.RenderImage(cams[0]), cams[0]);
  const std::size_t finest = engine.cloud().LevelSize(4);
  c.Expect(finest == 19200, "first frame has " + std::to_string(finest) + " finest points");
  for (std::size_t i = 1; i + 1 < cams.size(); ++i)
    engine.ProcessFrame(scene.RenderImage(cams[i]), cams[i]);
  const std::size_t before = engine.cloud().Size();
  c.Expect(before >= 100000, "cloud holds only " + std::to_string(before) + " points");
  const Image image = scene.RenderImage(cams.back());
  const auto t0 = std::chrono::steady_clock::now();
  const FrameResult r = engine.ProcessFrame(image, cams.back());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.Expect(secs < 10.0, "frame pass took " + Num(secs) + " s");
  c.Expect(r.updated_points > 0, "frame pass updated no points");
  c.Note(std::to_string(finest) + " finest points from one frame; frame pass over " +
         std::to_string(before) + " points in " + Num(secs) + " s (" +
         std::to_string(r.updated_points) + " updated)");
}

std::vector<TrainExample> ToyMatchingBatch(const TinyHead& head, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> depth(1.0, 4.0), low(0.0, 0.5);
  std::uniform_int_distribution<int> pick(0, head.candidate_count() - 1);
  std::vector<TrainExample> batch;
  for (int e = 0; e < 64; ++e) {
    std::vector<DepthCandidate> cand(head.candidate_count());
    const int hit = pick(rng);
    const double truth = depth(rng);
    for (int k = 0; k < head.candidate_count(); ++k) {
      cand[k].sample_index = k;
      cand[k].dot = k == hit ? 1.f : static_cast<float>(low(rng));
      cand[k].meta[0] = k == hit ? truth : depth(rng);
    }
    batch.push_back({head.DepthInput(cand, HeadOutput{2.0, 1.0, 0.0}, std::nullopt), truth});
  }
  return batch;
}

void TinyHeadTraining(Checks& c) {
  TinyHead head = TinyHead::Random(MatchConfig{8, 1, 1.5}, 3);
  const auto batch = ToyMatchingBatch(head, 9);
  const double initial = head.Loss(HeadKind::kDepth, batch);
  for (int step = 0; step < 100; ++step) {
    const TrainResult r = head.TrainStep(HeadKind::kDepth, batch, 0.05);
    c.Expect(r.applied, "step " + std::to_string(step) + " not applied");
  }
  const double final_loss = head.Loss(HeadKind::kDepth, batch);
  c.Expect(final_loss < 0.5 * initial, "loss " + Num(final_loss) + " vs " + Num(initial));

  double worst = 0;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0.5, 4.0);
  for (int trial = 0; trial < 5; ++trial) {
    TinyHead h = TinyHead::Random(MatchConfig{4, 1, 1.5}, 200 + trial, 0.5);
    for (HeadKind kind : {HeadKind::kMono, HeadKind::kUpdate, HeadKind::kDepth}) {
      Mlp& net = h.net(kind);
      std::vector<TrainExample> ex(8);
      for (auto& e : ex) {
        e.input = Eigen::VectorXd(net.inputs);
        for (Eigen::Index i = 0; i < net.inputs; ++i) e.input[i] = n(rng);
        e.target = kind == HeadKind::kUpdate ? n(rng) : u(rng);
      }
      const Eigen::VectorXd analytic = h.LossGradient(kind, ex);
      const Eigen::VectorXd theta = net.Parameters();
      const double step = 1e-4;
      auto loss_at = [&](Eigen::Index i, double delta) {
        Eigen::VectorXd t = theta;
        t[i] += delta;
        net.SetParameters(t);
        return h.Loss(kind, ex);
      };
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double fd = (-loss_at(i, 2 * step) + 8 * loss_at(i, step) -
                           8 * loss_at(i, -step) + loss_at(i, -2 * step)) /
                          (12 * step);
        worst = std::max(worst, std::abs(analytic[i] - fd) /
                                    std::max({std::abs(analytic[i]), std::abs(fd), 1e-6}));
      }
      net.SetParameters(theta);
    }
  }
  c.Expect(worst < 1e-4, "gradient check " + Num(worst));
  c.Note("loss " + Num(initial) + " -> " + Num(final_loss) + " after 100 steps; max gradient rel err " +
         Num(worst));
}

struct Criterion {
  int number;
  const char* name;
  double limit_seconds;  // <= 0: no runtime bound
  std::function<void(Checks&)> run;
};

}  // namespace
}  // namespace streamrecon

int main() {
  using namespace streamrecon;
  const std::vector<Criterion> criteria = {
      {1, "ray geometry", 10, RayGeometry},
      {2, "metadata dual implementation", 30, MetadataDual},
      {3, "neighbor query equivalence", 60, NeighborQueries},
      {4, "oracle end to end", 120, OracleEndToEnd},
      {5, "geometric end to end", 120, GeometricEndToEnd},
      {6, "losses", 30, LossSuite},
      {7, "merge", 30, MergeSuite},
      {8, "fusion", 180, FusionSuite},
      {9, "scale and performance", 0, ScaleAndPerf},
      {10, "tiny head training", 0, TinyHeadTraining},
  };
  int failed = 0;
  for (const auto& crit : criteria) {
    Checks checks;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      crit.run(checks);
    } catch (const std::exception& e) {
      checks.Expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (crit.limit_seconds > 0)
      checks.Expect(secs < crit.limit_seconds, "runtime over " + Num(crit.limit_seconds) + " s");
    failed += !checks.ok();
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", checks.ok() ? "PASS" : "FAIL",
                crit.number, crit.name, checks.Summary().c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
