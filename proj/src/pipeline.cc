#include "streamrecon/pipeline.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "streamrecon/fusion.h"
#include "streamrecon/metrics.h"

namespace streamrecon {
namespace fs = std::filesystem;

namespace {

std::vector<CameraId> ListDepthIds(const std::string& dir) {
  const fs::path depth = fs::path(dir) / "depth";
  STREAMRECON_CHECK_INPUT(fs::is_directory(depth), "missing directory ", depth.string());
  std::vector<CameraId> ids;
  for (const auto& entry : fs::directory_iterator(depth)) {
    if (entry.path().extension() != ".pfm") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
    ids.push_back(std::stoll(stem));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string JoinIds(const std::vector<CameraId>& ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? ", " : "") << ids[i];
  return os.str();
}

void WriteJson(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  out << j.dump(2) << '\n';
}

bool HasGroundTruth(const std::string& dir) {
  return fs::is_directory(fs::path(dir) / "depth");
}

}  // namespace

std::optional<SyntheticScene> LoadSyntheticScene(const std::string& dir) {
  const fs::path spec = fs::path(dir) / "scene.txt";
  if (!fs::exists(spec)) return std::nullopt;
  const KeyValues kv = KeyValues::Load(spec.string());
  return SyntheticScene::FromSpec(kv, kv.GetUInt64("seed", 0));
}

ReconstructionSummary RunReconstruction(SequenceSource& source, const EngineConfig& config,
                                        const std::string& out_dir,
                                        const SurfaceOracle* oracle, std::ostream* log) {
  Engine engine(config, MakeExtractor(config, oracle), MakePredictor(config, oracle));
  ReconstructionSummary summary;
  nlohmann::json frames = nlohmann::json::array();
  while (auto frame = source.Next()) {
    const FrameResult r = engine.ProcessFrame(frame->image, frame->camera);
    ++summary.frames;
    summary.inserted += r.merge.inserted;
    summary.removed += r.merge.removed;
    frames.push_back({{"id", r.id},
                      {"updated", r.updated_points},
                      {"inserted", r.merge.inserted},
                      {"removed", r.merge.removed},
                      {"protected", r.merge.protected_points},
                      {"points", engine.cloud().Size()}});
    if (log) {
      *log << "frame " << r.id << ": +" << r.merge.inserted << " -" << r.merge.removed
           << " points " << engine.cloud().Size() << '\n';
    }
  }
  summary.skipped = source.skipped();
  if (log) {
    for (const auto& s : summary.skipped) {
      *log << "skipped frame " << s.id << ": " << s.reason << '\n';
    }
  }
  STREAMRECON_CHECK_INPUT(summary.frames > 0, "no readable frames in ", source.dir());
  engine.cloud().Audit();

  fs::create_directories(fs::path(out_dir) / "depth");
  TsdfVolume volume(config.voxel_size);
  for (const Camera& cam : engine.cameras()) {
    const DepthMap depth = RenderInfer(engine.cloud(), kNumLevels, cam, config.eps);
    WritePfm((fs::path(out_dir) / "depth" / (FrameName(cam.id()) + ".pfm")).string(), depth);
    volume.Integrate(depth, cam.Scaled(LevelScale(kNumLevels)));
  }
  summary.mesh = volume.ExtractMesh();
  for (int l = 1; l <= kNumLevels; ++l) summary.level_points[l - 1] = engine.cloud().LevelSize(l);

  WriteCloudPly((fs::path(out_dir) / "cloud.ply").string(), engine.cloud());
  WriteMeshPly((fs::path(out_dir) / "mesh.ply").string(), summary.mesh);
  {
    std::ofstream cfg(fs::path(out_dir) / "config.txt");
    STREAMRECON_CHECK_INPUT(cfg.good(), "cannot write config.txt in ", out_dir);
    cfg << config.ToText();
  }

  nlohmann::json report;
  nlohmann::json run = {{"frames", summary.frames},
                        {"skipped", summary.skipped.size()},
                        {"points", engine.cloud().Size()},
                        {"level_points", summary.level_points},
                        {"inserted", summary.inserted},
                        {"removed", summary.removed},
                        {"mesh_triangles", summary.mesh.triangles.size()},
                        {"per_frame", frames}};
  report["run"] = run;
  if (HasGroundTruth(source.dir()) && summary.skipped.empty()) {
    EvaluationOptions options;
    options.seed = config.seed;
    const nlohmann::json eval = Evaluate(out_dir, source.dir(), options);
    for (auto it = eval.begin(); it != eval.end(); ++it) report[it.key()] = it.value();
  }
  WriteJson((fs::path(out_dir) / "metrics.json").string(), report);
  return summary;
}

DepthMap ResampleToGrid(const DepthMap& fine, int width, int height) {
  STREAMRECON_CHECK_INPUT(width > 0 && height > 0 && fine.width() % width == 0 &&
                              fine.height() % height == 0 &&
                              fine.width() / width == fine.height() / height,
                          "cannot resample ", fine.width(), "x", fine.height(), " to ",
                          width, "x", height);
  const int f = fine.width() / width;
  const int lo = f % 2 == 0 ? f / 2 - 1 : f / 2;
  const int hi = f / 2;
  DepthMap out(width, height, fine.camera());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = lo; dy <= hi; ++dy) {
        for (int dx = lo; dx <= hi; ++dx) {
          const double d = fine.at(x * f + dx, y * f + dy);
          if (d > 0.0) {
            sum += d;
            ++n;
          }
        }
      }
      out.at(x, y) = n > 0 ? sum / n : 0.0;
    }
  }
  return out;
}

DepthMap RenderMeshDepth(const MeshBvh& mesh, const Camera& cam) {
  DepthMap depth(cam.width(), cam.height(), cam.id());
  for (int y = 0; y < cam.height(); ++y) {
    for (int x = 0; x < cam.width(); ++x) {
      const Ray ray = RayThroughPixel(cam, Eigen::Vector2d(x + 0.5, y + 0.5));
      if (const auto hit = mesh.Raycast(ray)) {
        const double z = cam.WorldToCamera(hit->point).z();
        if (z > 0.0) depth.at(x, y) = z;
      }
    }
  }
  return depth;
}

std::function<bool(const Eigen::Vector3d&)> VisibilityFilter(std::vector<Camera> cameras,
                                                             std::vector<DepthMap> depths,
                                                             double tolerance) {
  STREAMRECON_CHECK_INPUT(cameras.size() == depths.size(), "one depth map per camera");
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    cameras[i] = cameras[i].Scaled(static_cast<double>(depths[i].width()) /
                                   cameras[i].width());
  }
  return [cameras = std::move(cameras), depths = std::move(depths),
          tolerance](const Eigen::Vector3d& p) {
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      const auto proj = TryProject(cameras[i], p);
      if (!proj || !InFrustum(cameras[i], p)) continue;
      const int x = static_cast<int>(std::floor(proj->pixel.x()));
      const int y = static_cast<int>(std::floor(proj->pixel.y()));
      const double d = depths[i].at(x, y);
      if (d > 0.0 && proj->depth <= d + tolerance) return true;
    }
    return false;
  };
}

nlohmann::json Evaluate(const std::string& pred_dir, const std::string& gt_dir,
                        const EvaluationOptions& options) {
  const auto pred_ids = ListDepthIds(pred_dir);
  const auto gt_ids = ListFrameIds(gt_dir);
  std::vector<CameraId> missing, extra;
  std::set_difference(gt_ids.begin(), gt_ids.end(), pred_ids.begin(), pred_ids.end(),
                      std::back_inserter(missing));
  std::set_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(),
                      std::back_inserter(extra));
  STREAMRECON_CHECK_INPUT(missing.empty() && extra.empty(),
                          "frame ids differ; missing predictions for [", JoinIds(missing),
                          "], no ground truth for [", JoinIds(extra), "]");
  STREAMRECON_CHECK_INPUT(!gt_ids.empty(), "no frames to evaluate");

  std::optional<TriMesh> pred_mesh;
  const fs::path mesh_path = fs::path(pred_dir) / "mesh.ply";
  if (fs::exists(mesh_path)) pred_mesh = ReadMeshPly(mesh_path.string());
  std::optional<MeshBvh> bvh;
  if (pred_mesh && !pred_mesh->empty()) bvh.emplace(*pred_mesh);

  nlohmann::json report;
  nlohmann::json frames = nlohmann::json::array();
  std::vector<DepthMetrics> point_all, mesh_all;
  std::vector<Camera> cams;
  std::vector<DepthMap> gt_depths;
  for (CameraId id : gt_ids) {
    const GroundTruthFrame gt = ReadGroundTruthFrame(gt_dir, id);
    STREAMRECON_CHECK_INPUT(gt.depth.has_value(), "no ground-truth depth for frame ", id);
    const DepthMap pred = ReadPfm(FramePath(pred_dir, "depth", id, ".pfm"));
    const DepthMap gt_grid = ResampleToGrid(*gt.depth, pred.width(), pred.height());
    nlohmann::json f = {{"id", id}};
    point_all.push_back(ComputeDepthMetrics(pred, gt_grid));
    f["point_depth"] = ToJson(point_all.back());
    if (bvh) {
      const Camera grid_cam =
          gt.camera.Scaled(static_cast<double>(pred.width()) / gt.camera.width());
      mesh_all.push_back(ComputeDepthMetrics(RenderMeshDepth(*bvh, grid_cam), gt_grid));
      f["mesh_depth"] = ToJson(mesh_all.back());
    }
    frames.push_back(f);
    cams.push_back(gt.camera);
    gt_depths.push_back(*gt.depth);
  }
  report["frames"] = frames;
  report["point_depth"] = ToJson(AggregateDepthMetrics(point_all));
  if (bvh) report["mesh_depth"] = ToJson(AggregateDepthMetrics(mesh_all));

  const fs::path gt_mesh_path = fs::path(gt_dir) / "mesh_gt.ply";
  if (fs::exists(gt_mesh_path)) {
    if (bvh) {
      MeshMetricsOptions mo;
      mo.samples = options.mesh_samples;
      mo.threshold = options.threshold;
      mo.seed = options.seed;
      mo.gt_filter = VisibilityFilter(cams, gt_depths, options.visibility_tolerance);
      report["mesh"] = ToJson(ComputeMeshMetrics(*pred_mesh, ReadMeshPly(gt_mesh_path.string()), mo));
    } else {
      report["mesh"] = nullptr;
      report["mesh_error"] = "predicted mesh is empty";
    }
  }
  return report;
}

}  // namespace streamrecon
