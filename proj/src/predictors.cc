#include "streamrecon/predictors.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>


namespace streamrecon {
namespace {

double CameraDepthOf(const Camera& cam, const Eigen::Vector3d& p) {
  return cam.WorldToCamera(p).z();
}

// Index of the highest dot; first occurrence wins, and candidates come in
// sample order, so ties go to the lowest sample index.
template <typename C>
std::size_t BestIndex(const std::vector<C>& candidates) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = candidates[i];
    const auto& b = candidates[best];
    if (a.dot > b.dot || (a.dot == b.dot && a.sample_index < b.sample_index)) best = i;
  }
  return best;
}

// A lone candidate is a unique best, not a tie.
template <typename C>
bool AllDotsEqual(const std::vector<C>& candidates) {
  if (candidates.size() < 2) return false;
  for (const auto& c : candidates) {
    if (c.dot != candidates.front().dot) return false;
  }
  return true;
}

template <typename C>
double MeanDot(const std::vector<C>& candidates) {
  double s = 0.0;
  for (const auto& c : candidates) s += c.dot;
  return s / static_cast<double>(candidates.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// GroundTruthOracle

GroundTruthOracle::GroundTruthOracle(SurfaceOracle oracle, double miss_depth)
    : oracle_(std::move(oracle)), miss_depth_(miss_depth) {
  STREAMRECON_CHECK_INPUT(static_cast<bool>(oracle_), "empty surface oracle");
}

HeadOutput GroundTruthOracle::MonocularDepth(const FeaturePoint2D& point,
                                             const Camera& cam) const {
  const auto hit = oracle_(RayThroughPixel(cam, point.pixel));
  if (!hit) return HeadOutput{miss_depth_, 1.0, -1.0};
  return HeadOutput{CameraDepthOf(cam, *hit), kSigma, 0.0};
}

HeadOutput GroundTruthOracle::UpdateHead(const ScenePoint& q,
                                         const std::vector<UpdateCandidate>&,
                                         std::optional<double>, const Camera&) const {
  const auto hit = oracle_(q.ray());
  if (!hit) return HeadOutput{0.0, q.sigma, q.confidence};
  const double offset = (*hit - q.ray_origin).dot(q.ray_dir) - q.distance;
  return HeadOutput{std::clamp(offset, -kOffsetClamp, kOffsetClamp), kSigma, 1.0};
}

HeadOutput GroundTruthOracle::DepthHead(const FeaturePoint2D& point,
                                        const std::vector<DepthCandidate>&,
                                        const HeadOutput&, std::optional<double>,
                                        const Camera& cam) const {
  const auto hit = oracle_(RayThroughPixel(cam, point.pixel));
  if (!hit) return HeadOutput{miss_depth_, 1.0, -1.0};
  return HeadOutput{CameraDepthOf(cam, *hit), kSigma, 1.0};
}

// ---------------------------------------------------------------------------
// ArgmaxGeometric

ArgmaxGeometric::ArgmaxGeometric(const MatchConfig& match, double prior_depth,
                                 double gap_threshold)
    : prior_depth_(prior_depth), gap_threshold_(gap_threshold) {
  STREAMRECON_CHECK_INPUT(prior_depth > 0.0, "prior depth must be positive");
  STREAMRECON_CHECK_INPUT(gap_threshold > 0.0, "gap threshold must be positive");
  spacing_ = match.samples > 1 ? match.span / (match.samples - 1) : match.span;
}

HeadOutput ArgmaxGeometric::MonocularDepth(const FeaturePoint2D&,
                                           const Camera&) const {
  return HeadOutput{prior_depth_, 1.0, 0.0};
}

HeadOutput ArgmaxGeometric::UpdateHead(const ScenePoint& q,
                                       const std::vector<UpdateCandidate>& candidates,
                                       std::optional<double> guidance,
                                       const Camera&) const {
  if (candidates.empty() || AllDotsEqual(candidates)) {
    const double offset = guidance.value_or(0.0);
    return HeadOutput{std::clamp(offset, -kOffsetClamp, kOffsetClamp), q.sigma,
                      q.confidence};
  }
  const UpdateCandidate& best = candidates[BestIndex(candidates)];
  HeadOutput out;
  out.value = std::clamp(best.meta[0], -kOffsetClamp, kOffsetClamp);
  out.sigma = best.meta[5] + spacing_;
  out.conf = best.dot - MeanDot(candidates);
  return out;
}

HeadOutput ArgmaxGeometric::DepthHead(const FeaturePoint2D&,
                                      const std::vector<DepthCandidate>& candidates,
                                      const HeadOutput& mono,
                                      std::optional<double> guidance,
                                      const Camera&) const {
  if (candidates.empty() || AllDotsEqual(candidates)) {
    return HeadOutput{guidance && *guidance > 0.0 ? *guidance : mono.value,
                      mono.sigma, 0.0};
  }
  const DepthCandidate& best = candidates[BestIndex(candidates)];
  if (best.meta[4] < gap_threshold_ && best.meta[0] > 0.0) {
    return HeadOutput{best.meta[0], best.meta[4] + spacing_,
                      best.dot - MeanDot(candidates)};
  }
  // An unconfirmed fallback is kept but not trusted for rendering.
  return HeadOutput{mono.value, mono.sigma, 0.0};
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(int in, int hid, int out)
    : inputs(in),
      hidden(hid),
      outputs(out),
      w1(Eigen::MatrixXd::Zero(hid, in)),
      w2(Eigen::MatrixXd::Zero(out, hid)),
      b1(Eigen::VectorXd::Zero(hid)),
      b2(Eigen::VectorXd::Zero(out)) {}

Eigen::VectorXd Mlp::Forward(const Eigen::VectorXd& x) const {
  STREAMRECON_CHECK_INPUT(x.size() == inputs, "head expects ", inputs,
                          " inputs, got ", x.size());
  const Eigen::VectorXd h = (w1 * x + b1).array().tanh().matrix();
  return w2 * h + b2;
}

std::size_t Mlp::ParameterCount() const {
  return static_cast<std::size_t>(hidden) * inputs + hidden +
         static_cast<std::size_t>(outputs) * hidden + outputs;
}

Eigen::VectorXd Mlp::Parameters() const {
  Eigen::VectorXd flat(ParameterCount());
  Eigen::Index k = 0;
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < inputs; ++c) flat[k++] = w1(r, c);
  for (int r = 0; r < hidden; ++r) flat[k++] = b1[r];
  for (int r = 0; r < outputs; ++r)
    for (int c = 0; c < hidden; ++c) flat[k++] = w2(r, c);
  for (int r = 0; r < outputs; ++r) flat[k++] = b2[r];
  return flat;
}

void Mlp::SetParameters(const Eigen::VectorXd& flat) {
  STREAMRECON_CHECK_INPUT(static_cast<std::size_t>(flat.size()) == ParameterCount(),
                          "parameter count mismatch");
  Eigen::Index k = 0;
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < inputs; ++c) w1(r, c) = flat[k++];
  for (int r = 0; r < hidden; ++r) b1[r] = flat[k++];
  for (int r = 0; r < outputs; ++r)
    for (int c = 0; c < hidden; ++c) w2(r, c) = flat[k++];
  for (int r = 0; r < outputs; ++r) b2[r] = flat[k++];
}

Eigen::VectorXd Mlp::Backward(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& dy) const {
  const Eigen::VectorXd h = (w1 * x + b1).array().tanh().matrix();
  // dL/dpre = (W2^T dy) * (1 - h^2)
  const Eigen::VectorXd dh = w2.transpose() * dy;
  const Eigen::VectorXd dpre = dh.array() * (1.0 - h.array().square());
  Eigen::VectorXd grad(ParameterCount());
  Eigen::Index k = 0;
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < inputs; ++c) grad[k++] = dpre[r] * x[c];
  for (int r = 0; r < hidden; ++r) grad[k++] = dpre[r];
  for (int r = 0; r < outputs; ++r)
    for (int c = 0; c < hidden; ++c) grad[k++] = dy[r] * h[c];
  for (int r = 0; r < outputs; ++r) grad[k++] = dy[r];
  return grad;
}

// ---------------------------------------------------------------------------
// TinyHead

TinyHead::TinyHead(const MatchConfig& match, int feature_channels)
    : candidates_(match.samples * match.neighbors), channels_(feature_channels) {
  STREAMRECON_CHECK_INPUT(candidates_ > 0 && channels_ > 0, "bad head dimensions");
  mono_ = Mlp(channels_, kHidden, 3);
  update_ = Mlp(candidates_ * (1 + kUpdateMetaSize) + 2, kHidden, 3);
  depth_ = Mlp(candidates_ * (1 + kDepthMetaSize) + 3, kHidden, 3);
}

TinyHead TinyHead::Random(const MatchConfig& match, std::uint64_t seed, double scale) {
  TinyHead head(match);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Mlp* m : {&head.mono_, &head.update_, &head.depth_}) {
    const double s1 = scale / std::sqrt(static_cast<double>(m->inputs));
    for (Eigen::Index i = 0; i < m->w1.size(); ++i) m->w1.data()[i] = normal(rng) * s1;
    for (Eigen::Index i = 0; i < m->w2.size(); ++i) m->w2.data()[i] = normal(rng) * scale;
  }
  return head;
}

Mlp& TinyHead::net(HeadKind kind) {
  switch (kind) {
    case HeadKind::kMono: return mono_;
    case HeadKind::kUpdate: return update_;
    case HeadKind::kDepth: return depth_;
  }
  return depth_;
}

const Mlp& TinyHead::net(HeadKind kind) const {
  return const_cast<TinyHead*>(this)->net(kind);
}

Eigen::VectorXd TinyHead::MonoInput(const FeaturePoint2D& point) const {
  STREAMRECON_CHECK_INPUT(static_cast<int>(point.feature.size()) == channels_,
                          "mono head expects ", channels_, " channels");
  Eigen::VectorXd x(channels_);
  for (int i = 0; i < channels_; ++i) x[i] = point.feature[i];
  return x;
}

Eigen::VectorXd TinyHead::UpdateInput(const std::vector<UpdateCandidate>& candidates,
                                      std::optional<double> guidance) const {
  STREAMRECON_CHECK_INPUT(static_cast<int>(candidates.size()) == candidates_,
                          "update head expects ", candidates_, " candidates");
  Eigen::VectorXd x(update_.inputs);
  Eigen::Index k = 0;
  for (const auto& c : candidates) {
    x[k++] = c.dot;
    for (double m : c.meta) x[k++] = m;
  }
  x[k++] = guidance.value_or(0.0);
  x[k++] = guidance ? 1.0 : 0.0;
  return x;
}

Eigen::VectorXd TinyHead::DepthInput(const std::vector<DepthCandidate>& candidates,
                                     const HeadOutput& mono,
                                     std::optional<double> guidance) const {
  STREAMRECON_CHECK_INPUT(static_cast<int>(candidates.size()) == candidates_,
                          "depth head expects ", candidates_, " candidates");
  Eigen::VectorXd x(depth_.inputs);
  Eigen::Index k = 0;
  for (const auto& c : candidates) {
    x[k++] = c.dot;
    for (double m : c.meta) x[k++] = m;
  }
  x[k++] = std::log(mono.value);
  x[k++] = guidance && *guidance > 0.0 ? std::log(*guidance) : 0.0;
  x[k++] = guidance ? 1.0 : 0.0;
  return x;
}

HeadOutput TinyHead::MonocularDepth(const FeaturePoint2D& point, const Camera&) const {
  const Eigen::VectorXd y = mono_.Forward(MonoInput(point));
  return HeadOutput{std::exp(y[0]), std::exp(y[1]), y[2]};
}

HeadOutput TinyHead::UpdateHead(const ScenePoint&,
                                const std::vector<UpdateCandidate>& candidates,
                                std::optional<double> guidance, const Camera&) const {
  const Eigen::VectorXd y = update_.Forward(UpdateInput(candidates, guidance));
  return HeadOutput{std::clamp(y[0], -kOffsetClamp, kOffsetClamp), std::exp(y[1]),
                    y[2]};
}

HeadOutput TinyHead::DepthHead(const FeaturePoint2D&,
                               const std::vector<DepthCandidate>& candidates,
                               const HeadOutput& mono, std::optional<double> guidance,
                               const Camera&) const {
  const Eigen::VectorXd y = depth_.Forward(DepthInput(candidates, mono, guidance));
  return HeadOutput{std::exp(y[0]), std::exp(y[1]), y[2]};
}

namespace {

double Residual(HeadKind kind, double y0, double target) {
  return kind == HeadKind::kUpdate ? y0 - target : y0 - std::log(target);
}

}  // namespace

double TinyHead::Loss(HeadKind kind, const std::vector<TrainExample>& batch) const {
  STREAMRECON_CHECK_INPUT(!batch.empty(), "empty training batch");
  const Mlp& m = net(kind);
  double loss = 0.0;
  for (const auto& ex : batch) {
    STREAMRECON_CHECK_INPUT(std::isfinite(ex.target) &&
                                (kind == HeadKind::kUpdate || ex.target > 0.0),
                            "bad training target ", ex.target);
    loss += std::abs(Residual(kind, m.Forward(ex.input)[0], ex.target));
  }
  return loss / static_cast<double>(batch.size());
}

Eigen::VectorXd TinyHead::LossGradient(HeadKind kind,
                                       const std::vector<TrainExample>& batch) const {
  const Mlp& m = net(kind);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(m.ParameterCount());
  Eigen::VectorXd dy = Eigen::VectorXd::Zero(m.outputs);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const double r = Residual(kind, m.Forward(ex.input)[0], ex.target);
    dy[0] = (r > 0.0 ? 1.0 : r < 0.0 ? -1.0 : 0.0) * inv;
    grad += m.Backward(ex.input, dy);
  }
  return grad;
}

TrainResult TinyHead::TrainStep(HeadKind kind, const std::vector<TrainExample>& batch,
                                double learning_rate) {
  TrainResult result;
  result.loss = Loss(kind, batch);
  const Eigen::VectorXd grad = LossGradient(kind, batch);
  if (!std::isfinite(result.loss) || !grad.allFinite()) {
    result.error = "non-finite loss or gradient; step skipped";
    return result;
  }
  Mlp& m = net(kind);
  m.SetParameters(m.Parameters() - learning_rate * grad);
  result.applied = true;
  return result;
}

namespace {

constexpr char kMagic[4] = {'S', 'R', 'T', 'H'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t ReadU32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  STREAMRECON_CHECK_INPUT(in.gcount() == 4, "truncated head file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float ReadF32(std::istream& in) {
  const std::uint32_t bits = ReadU32(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void WriteU32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void WriteF32(std::ostream& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  WriteU32(out, bits);
}

}  // namespace

void TinyHead::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  out.write(kMagic, 4);
  WriteU32(out, kVersion);
  WriteU32(out, static_cast<std::uint32_t>(candidates_));
  WriteU32(out, static_cast<std::uint32_t>(channels_));
  for (const Mlp* m : {&mono_, &update_, &depth_}) {
    WriteU32(out, m->inputs);
    WriteU32(out, m->hidden);
    WriteU32(out, m->outputs);
    const Eigen::VectorXd flat = m->Parameters();
    for (Eigen::Index i = 0; i < flat.size(); ++i) WriteF32(out, flat[i]);
  }
  STREAMRECON_CHECK_INPUT(out.good(), "failed writing ", path);
}

TinyHead TinyHead::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(in.good(), "cannot open ", path);
  char magic[4];
  in.read(magic, 4);
  STREAMRECON_CHECK_INPUT(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
                          path, " is not a head weight file");
  const std::uint32_t version = ReadU32(in);
  STREAMRECON_CHECK_INPUT(version == kVersion, "unsupported head file version ",
                          version);
  const std::uint32_t candidates = ReadU32(in);
  const std::uint32_t channels = ReadU32(in);
  STREAMRECON_CHECK_INPUT(candidates > 0 && candidates < 100000 && channels > 0 &&
                              channels < 100000,
                          "bad head dimensions in ", path);
  MatchConfig match;
  match.samples = static_cast<int>(candidates);
  match.neighbors = 1;
  TinyHead head(match, static_cast<int>(channels));
  for (Mlp* m : {&head.mono_, &head.update_, &head.depth_}) {
    const std::uint32_t in_dim = ReadU32(in);
    const std::uint32_t hid = ReadU32(in);
    const std::uint32_t out_dim = ReadU32(in);
    STREAMRECON_CHECK_INPUT(static_cast<int>(in_dim) == m->inputs &&
                                static_cast<int>(hid) == m->hidden &&
                                static_cast<int>(out_dim) == m->outputs,
                            "head layer dims in ", path, " do not match");
    Eigen::VectorXd flat(m->ParameterCount());
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = ReadF32(in);
    m->SetParameters(flat);
  }
  return head;
}

// ---------------------------------------------------------------------------
// Guidance interpolation

template <int Dim>
IdwInterpolator<Dim>::IdwInterpolator(std::vector<Vec> positions,
                                      std::vector<double> values)
    : values_(std::move(values)) {
  STREAMRECON_CHECK_INPUT(positions.size() == values_.size(),
                          "positions and values differ in count");
  index_.Build(std::move(positions));
}

template <int Dim>
void IdwInterpolator<Dim>::Weights(
    const Vec& query, int n, std::vector<std::pair<std::size_t, double>>* out) const {
  STREAMRECON_CHECK_INPUT(!values_.empty(), "no coarse values to interpolate");
  thread_local std::vector<GridNeighbor> found;
  index_.Knn(query, n, &found);
  out->clear();
  if (found.front().distance < 1e-9) {
    out->emplace_back(found.front().index, 1.0);
    return;
  }
  double total = 0.0;
  for (const auto& f : found) total += 1.0 / f.distance;
  for (const auto& f : found) out->emplace_back(f.index, (1.0 / f.distance) / total);
}

template <int Dim>
double IdwInterpolator<Dim>::Interpolate(const Vec& query, int n) const {
  thread_local std::vector<std::pair<std::size_t, double>> w;
  Weights(query, n, &w);
  double v = 0.0;
  for (const auto& [i, weight] : w) v += weight * values_[i];
  return v;
}

template class IdwInterpolator<2>;
template class IdwInterpolator<3>;

double InterpolateGuidance(const Eigen::Vector3d& query,
                           const std::vector<std::pair<Eigen::Vector3d, double>>& coarse,
                           int n) {
  STREAMRECON_CHECK_INPUT(!coarse.empty(), "no coarse values to interpolate");
  std::vector<std::pair<double, std::size_t>> by_distance;
  by_distance.reserve(coarse.size());
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    by_distance.emplace_back((coarse[i].first - query).norm(), i);
  }
  const std::size_t take = std::min<std::size_t>(std::max(n, 1), coarse.size());
  std::partial_sort(by_distance.begin(), by_distance.begin() + take, by_distance.end());
  if (by_distance.front().first < 1e-9) return coarse[by_distance.front().second].second;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < take; ++k) {
    const double w = 1.0 / by_distance[k].first;
    num += w * coarse[by_distance[k].second].second;
    den += w;
  }
  return num / den;
}

}  // namespace streamrecon
