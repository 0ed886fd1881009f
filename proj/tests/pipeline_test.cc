#include "streamrecon/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "streamrecon/engine.h"
#include "streamrecon/fusion.h"
#include "test_util.h"

namespace streamrecon {
namespace {

namespace fs = std::filesystem;

std::string ReadAll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small oracle sequence on disk; 256x192 splits evenly into every level.
std::string MakeSequence(const std::string& name, int frames) {
  const std::string dir = testing::TempDir(name);
  const std::string spec = testing::RoomSpec(frames, 256, 192);
  WriteSyntheticSequence(SyntheticScene::FromSpec(KeyValues::Parse(spec), 0), spec, 0, dir);
  return dir;
}

EngineConfig OracleConfig() {
  EngineConfig c;
  c.predictor = "oracle";
  c.extractor = "oracle";
  return c;
}

ReconstructionSummary RunOracle(const std::string& seq, const std::string& out,
                                const EngineConfig& config) {
  const auto scene = LoadSyntheticScene(seq);
  EXPECT_TRUE(scene.has_value());
  const SurfaceOracle oracle = scene->Oracle();
  SequenceSource source(seq);
  return RunReconstruction(source, config, out, &oracle);
}

TEST(EngineTest, FirstFrameOracleDepthIsExact) {
  const SyntheticScene scene =
      SyntheticScene::FromSpec(KeyValues::Parse(testing::RoomSpec(2, 256, 192)), 0);
  const SurfaceOracle oracle = scene.Oracle();
  const EngineConfig config = OracleConfig();
  Engine engine(config, MakeExtractor(config, &oracle), MakePredictor(config, &oracle));
  const Camera& cam = scene.cameras()[0];
  const FrameResult r = engine.ProcessFrame(scene.RenderImage(cam), cam);
  EXPECT_TRUE(r.first);
  for (int l = 1; l <= kNumLevels; ++l) {
    const DepthMap gt = scene.RenderDepth(cam.Scaled(LevelScale(l)));
    const DepthMap& pred = r.predicted[l - 1];
    ASSERT_EQ(pred.size(), gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i)
      EXPECT_NEAR(pred.values()[i], gt.values()[i], 1e-9);
  }
  engine.cloud().Audit();
  EXPECT_EQ(engine.cloud().LevelSize(4), 64u * 48u);

  EXPECT_THROW(engine.ProcessFrame(scene.RenderImage(cam), cam), InputError);
  const Camera odd = testing::LookAtCamera(Eigen::Vector3d(0, 0, 1.4),
                                           Eigen::Vector3d(0, 2, 1), 9, 100, 80);
  EXPECT_THROW(engine.ProcessFrame(Image(100, 80, 3), odd), InputError);
}

TEST(EngineTest, SecondFrameOracleRendersGroundTruth) {
  const SyntheticScene scene =
      SyntheticScene::FromSpec(KeyValues::Parse(testing::RoomSpec(2, 256, 192)), 0);
  const SurfaceOracle oracle = scene.Oracle();
  const EngineConfig config = OracleConfig();
  Engine engine(config, MakeExtractor(config, &oracle), MakePredictor(config, &oracle));
  for (const Camera& cam : scene.cameras()) {
    const FrameResult r = engine.ProcessFrame(scene.RenderImage(cam), cam);
    if (r.first) continue;
    const DepthMap gt = scene.RenderDepth(cam.Scaled(LevelScale(4)));
    ASSERT_EQ(r.rendered.size(), gt.size());
    auto on_edge = [&](int x, int y) {
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int u = std::clamp(x + dx, 0, gt.width() - 1);
          const int v = std::clamp(y + dy, 0, gt.height() - 1);
          if (std::abs(gt.at(u, v) - gt.at(x, y)) > 0.05 * gt.at(x, y)) return true;
        }
      return false;
    };
    std::size_t valid = 0;
    for (int y = 0; y < gt.height(); ++y)
      for (int x = 0; x < gt.width(); ++x) {
        if (!r.rendered.Valid(x, y)) continue;
        ++valid;
        if (on_edge(x, y)) continue;
        // The winning point projects somewhere inside the pixel, so its depth
        // can differ from the center ray by the local depth slope.
        EXPECT_NEAR(r.rendered.at(x, y), gt.at(x, y), 0.05 * gt.at(x, y));
      }
    EXPECT_GT(valid, gt.size() * 9 / 10);
  }
}

TEST(PipelineTest, OracleRunWritesOutputsAndIsDeterministic) {
  const std::string seq = MakeSequence("pipe_seq", 3);
  const std::string out_a = testing::TempDir("pipe_a");
  const std::string out_b = testing::TempDir("pipe_b");
  const std::string out_c = testing::TempDir("pipe_c");
  EngineConfig config = OracleConfig();
  const auto summary = RunOracle(seq, out_a, config);
  EXPECT_EQ(summary.frames, 3u);
  EXPECT_FALSE(summary.mesh.empty());
  for (const char* f : {"cloud.ply", "mesh.ply", "config.txt", "metrics.json"})
    EXPECT_TRUE(fs::exists(fs::path(out_a) / f)) << f;
  for (CameraId id = 1; id <= 3; ++id)
    EXPECT_TRUE(fs::exists(FramePath(out_a, "depth", id, ".pfm")));

  RunOracle(seq, out_b, config);
  EXPECT_EQ(ReadAll(out_a + "/cloud.ply"), ReadAll(out_b + "/cloud.ply"));
  EXPECT_EQ(ReadAll(out_a + "/mesh.ply"), ReadAll(out_b + "/mesh.ply"));

  // Voxel size only affects fusion, never the point cloud.
  config.voxel_size = 0.02;
  RunOracle(seq, out_c, config);
  EXPECT_EQ(ReadAll(out_a + "/cloud.ply"), ReadAll(out_c + "/cloud.ply"));
  EXPECT_NE(ReadAll(out_a + "/mesh.ply"), ReadAll(out_c + "/mesh.ply"));

  const auto metrics = nlohmann::json::parse(ReadAll(out_a + "/metrics.json"));
  EXPECT_EQ(metrics["run"]["frames"], 3);
  ASSERT_TRUE(metrics.contains("point_depth"));
  EXPECT_LT(metrics["point_depth"]["abs_rel"].get<double>(), 0.02);
  ASSERT_TRUE(metrics.contains("mesh"));
  EXPECT_LT(metrics["mesh"]["chamfer"].get<double>(), 2 * 0.04);
  EXPECT_EQ(EngineConfig::Load(out_a + "/config.txt").ToText(), OracleConfig().ToText());
}

TEST(PipelineTest, EvaluateGroundTruthAgainstItself) {
  const std::string seq = MakeSequence("eval_seq", 2);
  const std::string pred = testing::TempDir("eval_pred");
  fs::create_directories(pred + "/depth");
  for (CameraId id = 1; id <= 2; ++id) {
    const GroundTruthFrame gt = ReadGroundTruthFrame(seq, id);
    WritePfm(FramePath(pred, "depth", id, ".pfm"), ResampleToGrid(*gt.depth, 64, 48));
  }
  fs::copy_file(seq + "/mesh_gt.ply", pred + "/mesh.ply");
  EvaluationOptions opt;
  opt.mesh_samples = 20000;
  const auto report = Evaluate(pred, seq, opt);
  EXPECT_NEAR(report["point_depth"]["abs_rel"].get<double>(), 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(report["point_depth"]["completeness"].get<double>(), 1.0);
  EXPECT_NEAR(report["mesh"]["accuracy"].get<double>(), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(report["mesh"]["f_score"].get<double>(), 1.0);
  ASSERT_TRUE(report.contains("mesh_depth"));
  EXPECT_LT(report["mesh_depth"]["abs_rel"].get<double>(), 0.02);

  fs::remove(FramePath(pred, "depth", 2, ".pfm"));
  try {
    Evaluate(pred, seq, opt);
    ADD_FAILURE() << "missing prediction accepted";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("[2]"), std::string::npos) << e.what();
  }
}

TEST(PipelineTest, ResampleToGrid) {
  DepthMap fine(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) fine.at(x, y) = 1 + x + 4 * y;
  const DepthMap c = ResampleToGrid(fine, 2, 2);
  EXPECT_DOUBLE_EQ(c.at(0, 0), (1 + 2 + 5 + 6) / 4.0);
  fine.at(0, 0) = 0;
  EXPECT_DOUBLE_EQ(ResampleToGrid(fine, 2, 2).at(0, 0), (2 + 5 + 6) / 3.0);
  EXPECT_THROW(ResampleToGrid(fine, 3, 3), InputError);
}

int RunCli(const std::string& args) {
  const int status = std::system((std::string(STREAMRECON_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, ExitCodes) {
  const std::string dir = testing::TempDir("cli");
  EXPECT_EQ(RunCli("--help"), 0);
  EXPECT_EQ(RunCli(""), 1);
  EXPECT_EQ(RunCli("reconstruct --scene " + dir + "/missing --out " + dir + "/o"), 1);
  EXPECT_EQ(RunCli("reconstruct --scene x --out y --predictor magic"), 1);

  std::ofstream(dir + "/spec.txt") << testing::RoomSpec(2, 128, 96);
  EXPECT_EQ(RunCli("synth --spec " + dir + "/spec.txt --out " + dir + "/seq"), 0);
  std::ofstream(dir + "/cfg.txt") << OracleConfig().ToText();
  EXPECT_EQ(RunCli("reconstruct --scene " + dir + "/seq --out " + dir + "/rec --config " + dir +
                   "/cfg.txt --voxel 0.08"),
            0);
  EXPECT_TRUE(fs::exists(dir + "/rec/mesh.ply"));
  EXPECT_EQ(RunCli("eval --pred " + dir + "/rec --gt " + dir + "/seq --out " + dir + "/m.json"),
            0);
  EXPECT_TRUE(fs::exists(dir + "/m.json"));
  std::ofstream(dir + "/bad.txt") << "K = abc\n";
  EXPECT_EQ(RunCli("reconstruct --scene " + dir + "/seq --out " + dir + "/rec2 --config " +
                   dir + "/bad.txt"),
            1);
}

}  // namespace
}  // namespace streamrecon
