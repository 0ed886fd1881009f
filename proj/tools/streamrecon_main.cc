#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "streamrecon/config.h"
#include "streamrecon/dataset.h"
#include "streamrecon/engine.h"
#include "streamrecon/pipeline.h"
#include "streamrecon/synthetic.h"

namespace {

using namespace streamrecon;

int Reconstruct(const std::string& scene_dir, const std::string& out_dir,
                const std::string& config_path, const CLI::Option* voxel_opt, double voxel,
                const CLI::Option* predictor_opt, const std::string& predictor,
                const CLI::Option* seed_opt, std::uint64_t seed, int stride) {
  EngineConfig config =
      config_path.empty() ? EngineConfig{} : EngineConfig::Load(config_path);
  if (*voxel_opt) config.voxel_size = voxel;
  if (*predictor_opt) config.predictor = predictor;
  if (*seed_opt) config.seed = seed;
  config.Validate();

  std::optional<SyntheticScene> scene = LoadSyntheticScene(scene_dir);
  SurfaceOracle oracle;
  if (scene) oracle = scene->Oracle();
  SequenceSource source(scene_dir, stride);
  const auto summary =
      RunReconstruction(source, config, out_dir, scene ? &oracle : nullptr, &std::cerr);
  std::cout << summary.frames << " frames, " << summary.skipped.size() << " skipped, "
            << summary.level_points[kNumLevels - 1] << " finest-level points, "
            << summary.mesh.triangles.size() << " triangles\n";
  return 0;
}

int Synth(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed) {
  std::ifstream in(spec_path);
  if (!in.good()) throw InputError("cannot open " + spec_path);
  std::stringstream text;
  text << in.rdbuf();
  const SyntheticScene scene =
      SyntheticScene::FromSpec(KeyValues::Parse(text.str(), spec_path), seed);
  WriteSyntheticSequence(scene, text.str(), seed, out_dir);
  std::cout << scene.cameras().size() << " frames written to " << out_dir << '\n';
  return 0;
}

int Eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out) {
  const nlohmann::json report = Evaluate(pred_dir, gt_dir);
  std::ofstream file(out);
  if (!file.good()) throw InputError("cannot write " + out);
  file << report.dump(2) << '\n';
  if (report.contains("mesh_depth")) std::cout << "mesh_depth " << report["mesh_depth"].dump() << '\n';
  std::cout << "point_depth " << report["point_depth"].dump() << '\n';
  if (report.contains("mesh")) std::cout << "mesh " << report["mesh"].dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online multi-level point cloud reconstruction from posed images"};
  app.require_subcommand(1);

  auto* rec = app.add_subcommand("reconstruct", "reconstruct a posed image sequence");
  std::string scene_dir, out_dir, config_path, predictor;
  double voxel = 0.04;
  std::uint64_t seed = 0;
  int stride = 1;
  rec->add_option("--scene", scene_dir, "sequence directory")->required();
  rec->add_option("--out", out_dir, "output directory")->required();
  rec->add_option("--config", config_path, "key = value engine config");
  auto* voxel_opt = rec->add_option("--voxel", voxel, "fusion voxel size in meters");
  auto* predictor_opt = rec->add_option("--predictor", predictor, "oracle, argmax or tiny")
                            ->check(CLI::IsMember({"oracle", "argmax", "tiny"}));
  auto* seed_opt = rec->add_option("--seed", seed, "random seed");
  rec->add_option("--stride", stride, "keep every n-th frame")->check(CLI::PositiveNumber);

  auto* syn = app.add_subcommand("synth", "render a synthetic sequence");
  std::string spec_path, synth_out;
  std::uint64_t synth_seed = 0;
  syn->add_option("--spec", spec_path, "scene spec file")->required();
  syn->add_option("--out", synth_out, "output directory")->required();
  syn->add_option("--seed", synth_seed, "texture and jitter seed");

  auto* ev = app.add_subcommand("eval", "score a reconstruction against ground truth");
  std::string pred_dir, gt_dir, eval_out;
  ev->add_option("--pred", pred_dir, "reconstruction output directory")->required();
  ev->add_option("--gt", gt_dir, "ground-truth sequence directory")->required();
  ev->add_option("--out", eval_out, "metrics json path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*rec) {
      return Reconstruct(scene_dir, out_dir, config_path, voxel_opt, voxel, predictor_opt,
                         predictor, seed_opt, seed, stride);
    }
    if (*syn) return Synth(spec_path, synth_out, synth_seed);
    return Eval(pred_dir, gt_dir, eval_out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const InvariantError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
