#include "streamrecon/merger.h"

#include <cmath>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.h"
#include "streamrecon/engine.h"
#include "streamrecon/synthetic.h"
#include "test_util.h"

namespace streamrecon {
namespace {

using testing::LookAtCamera;
using testing::PointOnRay;

// Camera at the origin looking down +y, 8 x 8 pixels.
Camera SmallCamera(CameraId id, const Eigen::Vector3d& eye = {0, 0, 1}) {
  return LookAtCamera(eye, eye + Eigen::Vector3d(0, 1, 0), id, 8, 8);
}

// Points along the center pixel ray at the given depths and confidences.
std::vector<ScenePoint> Stack(const Camera& cam, const std::vector<double>& depths,
                              const std::vector<double>& confs) {
  std::vector<ScenePoint> pts;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const Eigen::Vector2d center(cam.width() / 2 + 0.5, cam.height() / 2 + 0.5);
    ScenePoint p = PointOnRay(cam, center, depths[i], cam.id(), 4, confs[i]);
    p.id = i + 1;
    pts.push_back(p);
  }
  return pts;
}

TEST(RenderTrainTest, SoftmaxExamples) {
  const Camera cam = SmallCamera(1);
  EXPECT_NEAR(RenderTrain(Stack(cam, {1, 3}, {0, 0}), cam).at(4, 4), 2.0, 1e-12);
  EXPECT_NEAR(RenderTrain(Stack(cam, {1, 3}, {std::log(3.0), 0}), cam).at(4, 4), 1.5, 1e-9);
  EXPECT_NEAR(RenderTrain(Stack(cam, {2.2}, {-4}), cam).at(4, 4), 2.2, 1e-12);
  const DepthMap m = RenderTrain(Stack(cam, {2.2}, {0}), cam);
  EXPECT_EQ(m.CountValid(), 1u);
  EXPECT_FALSE(m.Valid(0, 0));
}

TEST(RenderTrainTest, WeightsSumToOne) {
  const Camera cam = SmallCamera(1);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> confs(7);
    for (double& c : confs) c = n(rng);
    // Equal depths: any weight error shows up as a depth error.
    const DepthMap m = RenderTrain(Stack(cam, std::vector<double>(7, 2.5), confs), cam);
    EXPECT_NEAR(m.at(4, 4), 2.5, 2.5e-9);
  }
}

TEST(RenderInferTest, GatingExamples) {
  const Camera cam = SmallCamera(1);
  EXPECT_NEAR(RenderInfer(Stack(cam, {2, 1, 3}, {0.5, 0.5, 0.5}), cam).at(4, 4), 1.0, 1e-12);
  EXPECT_NEAR(RenderInfer(Stack(cam, {2, 1, 3}, {0.5, -1, 0.5}), cam).at(4, 4), 2.0, 1e-12);
  EXPECT_FALSE(RenderInfer(Stack(cam, {2, 1, 3}, {0, -1, -0.5}), cam).Valid(4, 4));
  EXPECT_FALSE(RenderInfer(Stack(cam, {2}, {0.5}), cam, 0.5).Valid(4, 4));
}

TEST(RenderInferTest, MatchesBruteForceMinimum) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Camera view = LookAtCamera({0.2, -0.1, 1.1}, {0, 3, 1}, 9, 32, 24);
  const Camera origin = LookAtCamera({0, 0, 1}, {0, 3, 1}, 1, 32, 24);
  std::vector<ScenePoint> pts;
  for (int i = 0; i < 3000; ++i) {
    ScenePoint p = PointOnRay(origin, {u(rng) * 32, u(rng) * 24}, 0.5 + 3 * u(rng), 1, 4,
                              u(rng) - 0.3);
    p.id = i + 1;
    pts.push_back(p);
  }
  const DepthMap m = RenderInfer(pts, view, 0.1);
  std::map<std::pair<int, int>, double> best;
  for (const auto& p : pts) {
    if (!(p.confidence > 0.1)) continue;
    const Eigen::Vector3d h = testing::ProjectK(view, p.position);
    if (!(h.z() > 0)) continue;
    const double x = h.x() / h.z(), y = h.y() / h.z();
    if (x < 0 || x >= 32 || y < 0 || y >= 24) continue;
    const auto key = std::make_pair(int(std::floor(x)), int(std::floor(y)));
    auto it = best.find(key);
    if (it == best.end() || h.z() < it->second) best[key] = h.z();
  }
  EXPECT_EQ(m.CountValid(), best.size());
  for (const auto& [key, d] : best) EXPECT_NEAR(m.at(key.first, key.second), d, 1e-12);
}

TEST(BucketTest, MembersProjectIntoTheirPixel) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Camera cam = LookAtCamera({0, 0, 1}, {0, 3, 1}, 1, 16, 12);
  std::vector<ScenePoint> pts;
  for (int i = 0; i < 500; ++i) {
    ScenePoint p = PointOnRay(cam, {u(rng) * 20 - 2, u(rng) * 16 - 2}, 1 + u(rng), 1);
    p.id = i + 1;
    pts.push_back(p);
  }
  std::size_t members = 0;
  for (const auto& b : BuildBuckets(pts, cam)) {
    for (std::size_t k = 0; k < b.members.size(); ++k) {
      const auto& m = b.members[k];
      const auto pr = Project(cam, pts[m.id - 1].position);
      EXPECT_EQ(int(std::floor(pr.pixel.x())), b.x);
      EXPECT_EQ(int(std::floor(pr.pixel.y())), b.y);
      if (k > 0) EXPECT_LT(b.members[k - 1].id, m.id);
      ++members;
    }
  }
  std::size_t inside = 0;
  for (const auto& p : pts) inside += InFrustum(cam, p.position);
  EXPECT_EQ(members, inside);
}

// The removal rule simulated directly: pixel winners per camera by
// (highest confidence, lowest id); remove points that occupy some bucket and
// win none, unless protected.
std::vector<PointId> BruteForceTrim(const std::vector<ScenePoint>& pts,
                                    const std::vector<Camera>& cams,
                                    const std::unordered_set<PointId>& protect) {
  std::set<PointId> occupying, winning;
  for (std::size_t c = 0; c < cams.size(); ++c) {
    std::map<std::pair<int, int>, const ScenePoint*> winner;
    for (const auto& p : pts) {
      if (!testing::Visible(cams[c], p.position)) continue;
      const Eigen::Vector3d h = testing::ProjectK(cams[c], p.position);
      const auto key = std::make_pair(int(std::floor(h.x() / h.z())), int(std::floor(h.y() / h.z())));
      occupying.insert(p.id);
      auto it = winner.find(key);
      if (it == winner.end() || p.confidence > it->second->confidence ||
          (p.confidence == it->second->confidence && p.id < it->second->id)) {
        winner[key] = &p;
      }
    }
    for (const auto& [key, p] : winner) winning.insert(p->id);
  }
  std::vector<PointId> out;
  for (PointId id : occupying) {
    if (!winning.count(id) && !protect.count(id)) out.push_back(id);
  }
  return out;
}

TEST(TrimTest, Examples) {
  const Camera cam = SmallCamera(1);
  EXPECT_EQ(Trim(Stack(cam, {2, 2}, {0.9, 0.1}), {cam}), std::vector<PointId>{2});
  EXPECT_EQ(Trim(Stack(cam, {2, 2}, {0.5, 0.5}), {cam}), std::vector<PointId>{2});
  EXPECT_TRUE(Trim(Stack(cam, {2, 2}, {0.9, 0.1}), {cam}, {2}).empty());

  // c2 looks across c1's view. A wins in c1's bucket but loses to C in c2's.
  const Camera c1 = SmallCamera(1);
  const Camera c2 = LookAtCamera({-2, 2, 1}, {0, 2, 1}, 2, 8, 8);
  auto at = [](const Camera& from, const Eigen::Vector3d& x, PointId id, double conf) {
    ScenePoint p;
    p.ray_origin = from.center();
    p.ray_dir = (x - from.center()).normalized();
    p.PlaceAt((x - from.center()).norm());
    p.origin_cam = from.id();
    p.confidence = conf;
    p.id = id;
    return p;
  };
  const ScenePoint a = at(c1, {0, 2, 1}, 1, 0.5);
  const ScenePoint b = at(c1, {0, 2.5, 1}, 2, 0.1);
  const ScenePoint c = at(c2, {-1, 2, 1}, 3, 0.9);
  ASSERT_EQ(BuildBuckets({a, b}, c1).size(), 1u);
  ASSERT_EQ(BuildBuckets({a, c}, c2).size(), 1u);
  ASSERT_EQ(BuildBuckets({a, c}, c1).size(), 2u);
  EXPECT_TRUE(Trim({a, b, c}, {c1, c2}).empty());
  EXPECT_EQ(Trim({a, b, c}, {c2}), std::vector<PointId>{1});
}

TEST(TrimTest, MatchesBruteForceSimulation) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Camera> cams;
    for (int c = 0; c < 3; ++c) {
      const Eigen::Vector3d eye(u(rng) - 0.5, u(rng) * 0.3, 1 + 0.3 * u(rng));
      cams.push_back(LookAtCamera(eye, {0, 3, 1}, c + 1, 16, 12));
    }
    std::vector<ScenePoint> pts;
    std::unordered_set<PointId> protect;
    for (int i = 0; i < 1000; ++i) {
      const Camera& from = cams[i % 3];
      // Quantized confidences create ties.
      ScenePoint p = PointOnRay(from, {u(rng) * 16, u(rng) * 12}, 2 + u(rng), from.id(), 4,
                                std::round(u(rng) * 8) / 8);
      p.id = 1000 - i;
      if (u(rng) < 0.05) protect.insert(p.id);
      pts.push_back(p);
    }
    EXPECT_EQ(Trim(pts, cams, protect), BruteForceTrim(pts, cams, protect)) << trial;
  }
}

TEST(TrimTest, IdempotentAndOneWinnerPerBucket) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Camera> cams = {LookAtCamera({0, 0, 1}, {0, 3, 1}, 1, 16, 12),
                              LookAtCamera({0.4, 0.1, 1}, {0, 3, 1}, 2, 16, 12)};
  std::vector<ScenePoint> pts;
  for (int i = 0; i < 800; ++i) {
    ScenePoint p = PointOnRay(cams[i % 2], {u(rng) * 16, u(rng) * 12}, 2.5, i % 2 + 1, 4, u(rng));
    p.id = i + 1;
    pts.push_back(p);
  }
  const auto first = Trim(pts, cams);
  std::set<PointId> gone(first.begin(), first.end());
  std::vector<ScenePoint> kept;
  for (const auto& p : pts) {
    if (!gone.count(p.id)) kept.push_back(p);
  }
  EXPECT_TRUE(Trim(kept, cams).empty());
}

TEST(FrustaOverlapTest, Cases) {
  const Camera a = LookAtCamera({0, 0, 1}, {0, 3, 1}, 1, 64, 48);
  const Camera b = LookAtCamera({0.3, 0, 1}, {0.3, 3, 1}, 2, 64, 48);
  const Camera back = LookAtCamera({0, 0, 1}, {0, -3, 1}, 3, 64, 48);
  const Camera twin(a.intrinsics(), a.rotation(), a.center(), 64, 48, 4);
  EXPECT_TRUE(FrustaOverlap(a, b));
  EXPECT_TRUE(FrustaOverlap(b, a));
  EXPECT_TRUE(FrustaOverlap(a, twin));
  EXPECT_FALSE(FrustaOverlap(a, back));
}

TEST(MergeStepTest, FirstFrameIsPureInsertion) {
  MultiLevelCloud cloud;
  const Camera cam = LookAtCamera({0, 0, 1}, {0, 1, 1}, 1, 64, 64);
  const auto report = MergeStep(&cloud, Stack(cam, {1, 2, 3}, {0.1, 0.2, 0.3}), cam, {});
  EXPECT_EQ(report.inserted, 3u);
  EXPECT_EQ(report.removed, 2u);  // one bucket, one winner
  EXPECT_EQ(cloud.Size(), 1u);
  ScenePoint foreign = Stack(cam, {1}, {0})[0];
  foreign.origin_cam = 5;
  EXPECT_THROW(
      MergeStep(&cloud, {foreign}, LookAtCamera({0, 0, 1}, {0, 1, 1}, 2, 64, 64), {cam}),
      InputError);
}

// 20 cameras side by side looking the same way; every one overlaps camera 1.
TEST(MergeStepTest, OldCamerasOnlyProtect) {
  MultiLevelCloud cloud;
  std::vector<Camera> history;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MergeReport last;
  std::set<PointId> seen_by_old;
  for (CameraId id = 1; id <= 20; ++id) {
    const Camera cam = LookAtCamera({0.02 * id, 0, 1}, {0.02 * id, 3, 1}, id, 64, 64);
    std::vector<ScenePoint> pts;
    for (int i = 0; i < 300; ++i) {
      pts.push_back(PointOnRay(cam, {u(rng) * 64, u(rng) * 64}, 3.0, id, 4, u(rng)));
    }
    if (id == 20) {
      for (int l = 1; l <= 4; ++l) {
        for (const auto& p : cloud.Level(l)) {
          for (int old = 0; old < 4; ++old) {
            if (InFrustum(history[old], p.position)) seen_by_old.insert(p.id);
          }
        }
      }
    }
    const std::size_t before = cloud.Size();
    last = MergeStep(&cloud, pts, cam, history);
    EXPECT_LE(cloud.Size(), before + pts.size());
    EXPECT_EQ(last.protected_removed, 0u);
    cloud.Audit();
    history.push_back(cam);
  }
  EXPECT_EQ(last.protect_cameras, (std::vector<CameraId>{4, 3, 2, 1}));
  EXPECT_EQ(last.trim_cameras.size(), 16u);
  EXPECT_EQ(last.trim_cameras.front(), 20);
  EXPECT_GT(last.removed, 0u);
  ASSERT_FALSE(seen_by_old.empty());
  for (PointId id : seen_by_old) EXPECT_NE(cloud.Find(id), nullptr) << id;
}

TEST(MergeStepTest, FullOverlapOracleRenderIsComplete) {
  SyntheticScene scene = SyntheticScene::FromSpec(
      KeyValues::Parse(testing::RoomSpec(1, 320, 256)), 2);
  const Camera first = scene.cameras()[0];
  const Camera second(first.intrinsics(), first.rotation(), first.center(), first.width(),
                      first.height(), 2);
  EngineConfig config;
  config.predictor = "oracle";
  config.extractor = "oracle";
  const SurfaceOracle oracle = scene.Oracle();
  Engine engine(config, MakeExtractor(config, &oracle), MakePredictor(config, &oracle));
  engine.ProcessFrame(scene.RenderImage(first), first);
  engine.ProcessFrame(scene.RenderImage(second), second);
  for (const Camera& cam : {first, second}) {
    const Camera level = cam.Scaled(LevelScale(4));
    const DepthMap r = RenderInfer(engine.cloud(), 4, cam, 0.0);
    EXPECT_EQ(r.CountValid(), r.size()) << "camera " << cam.id();
    for (const auto& b : BuildBuckets(engine.cloud().Level(4), level)) {
      EXPECT_EQ(b.members.size(), 1u);
    }
  }
}

}  // namespace
}  // namespace streamrecon
