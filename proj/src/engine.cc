#include "streamrecon/engine.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace streamrecon {

void EngineConfig::Validate() const {
  STREAMRECON_CHECK_INPUT(match.samples >= 1, "K must be >= 1");
  STREAMRECON_CHECK_INPUT(match.neighbors >= 1, "M must be >= 1");
  STREAMRECON_CHECK_INPUT(match.span > 0.0, "span must be positive");
  STREAMRECON_CHECK_INPUT(offset_clamp > 0.0, "offset_clamp must be positive");
  STREAMRECON_CHECK_INPUT(levels == kNumLevels, "levels must be ", kNumLevels);
  STREAMRECON_CHECK_INPUT(k_recent >= 1, "K_recent must be >= 1");
  STREAMRECON_CHECK_INPUT(eps >= 0.0 && std::isfinite(eps), "eps must be >= 0");
  STREAMRECON_CHECK_INPUT(voxel_size > 0.0, "voxel_size must be positive");
  STREAMRECON_CHECK_INPUT(gap_threshold > 0.0, "gap_threshold must be positive");
  STREAMRECON_CHECK_INPUT(prior_depth > 0.0, "prior_depth must be positive");
  STREAMRECON_CHECK_INPUT(predictor == "oracle" || predictor == "argmax" ||
                              predictor == "tiny",
                          "unknown predictor '", predictor, "'");
  STREAMRECON_CHECK_INPUT(extractor == "oracle" || extractor == "patch",
                          "unknown extractor '", extractor, "'");
}

EngineConfig EngineConfig::FromKeyValues(const KeyValues& kv) {
  static const std::set<std::string> kKeys = {
      "K",         "M",    "span",       "offset_clamp",  "levels",
      "K_recent",  "eps",  "voxel_size", "predictor",     "extractor",
      "seed",      "gap_threshold",      "prior_depth",   "weights"};
  for (const auto& key : kv.Keys()) {
    STREAMRECON_CHECK_INPUT(kKeys.count(key), "unknown config key '", key, "'");
  }
  EngineConfig c;
  c.match.samples = kv.GetInt("K", c.match.samples);
  c.match.neighbors = kv.GetInt("M", c.match.neighbors);
  c.match.span = kv.GetDouble("span", c.match.span);
  c.offset_clamp = kv.GetDouble("offset_clamp", c.offset_clamp);
  c.levels = kv.GetInt("levels", c.levels);
  c.k_recent = kv.GetInt("K_recent", c.k_recent);
  c.eps = kv.GetDouble("eps", c.eps);
  c.voxel_size = kv.GetDouble("voxel_size", c.voxel_size);
  c.predictor = kv.GetString("predictor", c.predictor);
  c.extractor = kv.GetString("extractor", c.extractor);
  c.seed = kv.GetUInt64("seed", c.seed);
  c.gap_threshold = kv.GetDouble("gap_threshold", c.gap_threshold);
  c.prior_depth = kv.GetDouble("prior_depth", c.prior_depth);
  c.weights = kv.GetString("weights", c.weights);
  c.Validate();
  return c;
}

EngineConfig EngineConfig::Load(const std::string& path) {
  return FromKeyValues(KeyValues::Load(path));
}

std::string EngineConfig::ToText() const {
  std::ostringstream os;
  os.precision(17);
  os << "K = " << match.samples << "\nM = " << match.neighbors << "\nspan = " << match.span
     << "\noffset_clamp = " << offset_clamp << "\nlevels = " << levels
     << "\nK_recent = " << k_recent << "\neps = " << eps << "\nvoxel_size = " << voxel_size
     << "\npredictor = " << predictor << "\nextractor = " << extractor
     << "\nseed = " << seed << "\ngap_threshold = " << gap_threshold
     << "\nprior_depth = " << prior_depth << '\n';
  if (!weights.empty()) os << "weights = " << weights << '\n';
  return os.str();
}

Engine::Engine(EngineConfig config, std::shared_ptr<const FeatureExtractor> extractor,
               std::shared_ptr<const Predictor> predictor)
    : config_(std::move(config)),
      extractor_(std::move(extractor)),
      predictor_(std::move(predictor)) {
  config_.Validate();
  STREAMRECON_CHECK_INPUT(extractor_ && predictor_, "engine needs an extractor and a predictor");
}

namespace {

void CheckHead(const HeadOutput& out, const char* head) {
  STREAMRECON_CHECK_INVARIANT(std::isfinite(out.value) && std::isfinite(out.sigma) &&
                                  std::isfinite(out.conf) && out.sigma > 0.0,
                              head, " head returned value ", out.value, " sigma ",
                              out.sigma, " conf ", out.conf);
}

}  // namespace

FrameResult Engine::ProcessFrame(const Image& image, const Camera& cam) {
  cam.Validate();
  CheckPyramidDims(cam.width(), cam.height());
  STREAMRECON_CHECK_INPUT(image.width() == cam.width() && image.height() == cam.height(),
                          "image size does not match camera ", cam.id());
  STREAMRECON_CHECK_INPUT(history_.empty() || cam.id() > history_.back().id(),
                          "frame ", cam.id(), " arrived after frame ",
                          history_.empty() ? 0 : history_.back().id());

  const LevelFeatures features = extractor_->Extract(image, cam);
  FrameResult result;
  result.id = cam.id();
  result.first = cloud_.Empty();
  if (!result.first) result.updated_points = UpdatePass(features, cam);

  std::vector<ScenePoint> lifted;
  std::vector<HeadOutput> coarse;
  for (int level = 1; level <= kNumLevels; ++level) {
    const FeatureMap& fmap = features[level - 1];
    std::vector<HeadOutput> heads;
    if (result.first) {
      heads.reserve(fmap.size());
      for (const auto& fp : fmap.points()) {
        heads.push_back(predictor_->MonocularDepth(fp, cam));
        CheckHead(heads.back(), "monocular");
      }
    } else {
      heads = DepthLevel(fmap, level, cam, level > 1 ? &features[level - 2] : nullptr,
                         level > 1 ? &coarse : nullptr);
    }
    const Camera level_cam = cam.Scaled(LevelScale(level));
    DepthMap& map = result.predicted[level - 1];
    map = DepthMap(level_cam.width(), level_cam.height(), cam.id());
    STREAMRECON_CHECK_INVARIANT(map.size() == heads.size(), "level ", level, " has ",
                                heads.size(), " features for ", map.size(), " pixels");
    for (std::size_t i = 0; i < heads.size(); ++i) map.values()[i] = heads[i].value;
    auto points = LiftLevel(fmap, cam, heads);
    lifted.insert(lifted.end(), std::make_move_iterator(points.begin()),
                  std::make_move_iterator(points.end()));
    coarse = std::move(heads);
  }

  MergeConfig merge;
  merge.recent = config_.k_recent;
  result.merge = MergeStep(&cloud_, std::move(lifted), cam, history_, merge);
  history_.push_back(cam);
  result.rendered = RenderInfer(cloud_, kNumLevels, cam, config_.eps);
  return result;
}

std::vector<ScenePoint> Engine::LiftLevel(const FeatureMap& features, const Camera& cam,
                                          const std::vector<HeadOutput>& heads) const {
  std::vector<ScenePoint> points;
  points.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeaturePoint2D& fp = features[i];
    const HeadOutput& head = heads[i];
    STREAMRECON_CHECK_INVARIANT(head.value > 0.0, "non-positive depth ", head.value,
                                " at level ", features.level());
    const Ray ray = RayThroughPixel(cam, fp.pixel);
    const double dir_z = cam.rotation().col(2).dot(ray.dir);
    ScenePoint p;
    p.feature = fp.feature;
    p.reduced = fp.reduced;
    p.ray_origin = ray.origin;
    p.ray_dir = ray.dir;
    p.PlaceAt(head.value / dir_z);
    p.sigma = head.sigma / dir_z;
    p.confidence = head.conf;
    p.origin_cam = cam.id();
    p.level = features.level();
    points.push_back(std::move(p));
  }
  return points;
}

std::size_t Engine::UpdatePass(const LevelFeatures& features, const Camera& cam) {
  struct Update {
    PointId id;
    double distance, sigma, conf;
  };
  std::vector<Eigen::Vector3d> coarse_pos, coarse_disp;
  std::vector<UpdateCandidate> candidates;
  std::vector<std::pair<std::size_t, double>> weights;
  std::size_t total = 0;
  for (int level = 1; level <= kNumLevels; ++level) {
    std::optional<IdwInterpolator<3>> idw;
    if (!coarse_pos.empty()) {
      idw.emplace(coarse_pos, std::vector<double>(coarse_pos.size(), 0.0));
    }
    std::vector<Update> updates;
    std::vector<Eigen::Vector3d> pos, disp;
    for (const ScenePoint& q : cloud_.Level(level)) {
      if (!InFrustum(cam, q.position)) continue;
      GatherUpdateCandidates(q, cam, features[level - 1], config_.match, &candidates);
      std::optional<double> guidance;
      if (idw) {
        idw->Weights(q.position, 4, &weights);
        double g = 0.0;
        for (const auto& [k, w] : weights) g += w * coarse_disp[k].dot(q.ray_dir);
        guidance = g;
      }
      const HeadOutput out = predictor_->UpdateHead(q, candidates, guidance, cam);
      CheckHead(out, "update");
      const double offset = std::clamp(out.value, -config_.offset_clamp, config_.offset_clamp);
      double distance = q.distance + offset;
      if (distance <= 0.0) distance = 1e-3;
      updates.push_back({q.id, distance, out.sigma, out.conf});
      pos.push_back(q.position);
      disp.push_back((distance - q.distance) * q.ray_dir);
    }
    for (const Update& u : updates) {
      cloud_.UpdateAlongRay(u.id, u.distance, u.sigma, u.conf);
    }
    total += updates.size();
    coarse_pos = std::move(pos);
    coarse_disp = std::move(disp);
  }
  return total;
}

std::vector<HeadOutput> Engine::DepthLevel(const FeatureMap& features, int level,
                                           const Camera& cam,
                                           const FeatureMap* coarse_features,
                                           const std::vector<HeadOutput>* coarse) const {
  std::optional<IdwInterpolator<2>> idw;
  if (coarse_features && coarse && !coarse->empty()) {
    std::vector<Eigen::Vector2d> positions;
    std::vector<double> values;
    for (std::size_t i = 0; i < coarse->size(); ++i) {
      positions.push_back((*coarse_features)[i].pixel);
      values.push_back((*coarse)[i].value);
    }
    idw.emplace(std::move(positions), std::move(values));
  }
  const bool have_cloud = cloud_.LevelSize(level) > 0;
  std::vector<DepthCandidate> candidates;
  std::vector<HeadOutput> heads;
  heads.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeaturePoint2D& fp = features[i];
    const HeadOutput mono = predictor_->MonocularDepth(fp, cam);
    CheckHead(mono, "monocular");
    std::optional<double> guidance;
    if (idw) guidance = idw->Interpolate(fp.pixel, 4);
    const double center = guidance.value_or(mono.value);
    candidates.clear();
    if (have_cloud) {
      GatherDepthCandidates(i, features, cam, cloud_, level, center, config_.match,
                            &candidates);
    }
    heads.push_back(predictor_->DepthHead(fp, candidates, mono, guidance, cam));
    CheckHead(heads.back(), "depth");
    STREAMRECON_CHECK_INVARIANT(heads.back().value > 0.0, "depth head returned ",
                                heads.back().value);
  }
  return heads;
}

std::shared_ptr<const FeatureExtractor> MakeExtractor(const EngineConfig& config,
                                                      const SurfaceOracle* oracle) {
  if (config.extractor == "oracle") {
    STREAMRECON_CHECK_INPUT(oracle && *oracle,
                            "the oracle extractor needs a synthetic scene");
    return std::make_shared<OracleExtractor>(*oracle);
  }
  return std::make_shared<PatchExtractor>(config.seed);
}

std::shared_ptr<const Predictor> MakePredictor(const EngineConfig& config,
                                               const SurfaceOracle* oracle) {
  if (config.predictor == "oracle") {
    STREAMRECON_CHECK_INPUT(oracle && *oracle,
                            "the oracle predictor needs a synthetic scene");
    return std::make_shared<GroundTruthOracle>(*oracle, config.prior_depth);
  }
  if (config.predictor == "tiny") {
    if (config.weights.empty()) {
      return std::make_shared<TinyHead>(TinyHead::Random(config.match, config.seed));
    }
    TinyHead head = TinyHead::Load(config.weights);
    STREAMRECON_CHECK_INPUT(
        head.candidate_count() == config.match.samples * config.match.neighbors,
        "weights expect ", head.candidate_count(), " candidates, config gives ",
        config.match.samples * config.match.neighbors);
    return std::make_shared<TinyHead>(std::move(head));
  }
  return std::make_shared<ArgmaxGeometric>(config.match, config.prior_depth,
                                           config.gap_threshold);
}

}  // namespace streamrecon
