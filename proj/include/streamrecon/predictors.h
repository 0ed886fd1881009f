#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/features.h"
#include "streamrecon/matcher.h"
#include "streamrecon/spatial_grid.h"

namespace streamrecon {

// value is a depth (mono and depth heads) or an offset along the ray
// (update head). sigma > 0; conf is a logit.
struct HeadOutput {
  double value = 1.0;
  double sigma = 1.0;
  double conf = 0.0;
};

// Largest offset the update head may apply, meters.
constexpr double kOffsetClamp = 5.0;

class Predictor {
 public:
  virtual ~Predictor() = default;

  // Rough camera-frame depth for one 2D point. `cam` is full resolution.
  virtual HeadOutput MonocularDepth(const FeaturePoint2D& point,
                                    const Camera& cam) const = 0;
  // Offset along q's ray; |value| <= kOffsetClamp.
  virtual HeadOutput UpdateHead(const ScenePoint& q,
                                const std::vector<UpdateCandidate>& candidates,
                                std::optional<double> guidance,
                                const Camera& cam) const = 0;
  // Camera-frame depth for one 2D point; value > 0.
  virtual HeadOutput DepthHead(const FeaturePoint2D& point,
                               const std::vector<DepthCandidate>& candidates,
                               const HeadOutput& mono,
                               std::optional<double> guidance,
                               const Camera& cam) const = 0;
};

// Reads answers off the scene geometry. For tests only.
class GroundTruthOracle : public Predictor {
 public:
  explicit GroundTruthOracle(SurfaceOracle oracle, double miss_depth = 2.0);

  HeadOutput MonocularDepth(const FeaturePoint2D& point,
                            const Camera& cam) const override;
  HeadOutput UpdateHead(const ScenePoint& q,
                        const std::vector<UpdateCandidate>& candidates,
                        std::optional<double> guidance,
                        const Camera& cam) const override;
  HeadOutput DepthHead(const FeaturePoint2D& point,
                       const std::vector<DepthCandidate>& candidates,
                       const HeadOutput& mono, std::optional<double> guidance,
                       const Camera& cam) const override;

  static constexpr double kSigma = 0.05;

 private:
  SurfaceOracle oracle_;
  double miss_depth_;
};

// Training-free heads that trust the best feature match.
//
// Update: offset = signed crossing distance of the best-dot candidate.
// Depth: crossing depth of the best-dot candidate if its ray gap is under
// gap_threshold, else the monocular value. Ties go to the lowest sample
// index. conf = best dot - mean dot, sigma = best gap + sample spacing.
class ArgmaxGeometric : public Predictor {
 public:
  ArgmaxGeometric(const MatchConfig& match, double prior_depth = 2.0,
                  double gap_threshold = 0.1);

  HeadOutput MonocularDepth(const FeaturePoint2D& point,
                            const Camera& cam) const override;
  HeadOutput UpdateHead(const ScenePoint& q,
                        const std::vector<UpdateCandidate>& candidates,
                        std::optional<double> guidance,
                        const Camera& cam) const override;
  HeadOutput DepthHead(const FeaturePoint2D& point,
                       const std::vector<DepthCandidate>& candidates,
                       const HeadOutput& mono, std::optional<double> guidance,
                       const Camera& cam) const override;

  double spacing() const { return spacing_; }

 private:
  double prior_depth_;
  double gap_threshold_;
  double spacing_;
};

// Two-layer tanh perceptron y = W2 tanh(W1 x + b1) + b2.
struct Mlp {
  int inputs = 0;
  int hidden = 0;
  int outputs = 0;
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;

  Mlp() = default;
  Mlp(int inputs, int hidden, int outputs);  // zero weights

  Eigen::VectorXd Forward(const Eigen::VectorXd& x) const;
  std::size_t ParameterCount() const;
  // Flat parameter view in the order w1, b1, w2, b2 (row-major matrices).
  Eigen::VectorXd Parameters() const;
  void SetParameters(const Eigen::VectorXd& flat);
  // Gradient of sum_o dy[o] * y[o] w.r.t. the flat parameters.
  Eigen::VectorXd Backward(const Eigen::VectorXd& x, const Eigen::VectorXd& dy) const;
};

enum class HeadKind { kMono, kUpdate, kDepth };

struct TrainExample {
  Eigen::VectorXd input;
  double target = 1.0;  // depth for mono/depth heads, offset for update
};

struct TrainResult {
  double loss = 0.0;  // before the step
  bool applied = false;
  std::string error;
};

// Trainable heads over flattened [dot, metadata] candidate tensors.
//
// Mono and depth heads output value = exp(y0), the update head
// value = clamp(y0, +-5); sigma = exp(y1), conf = y2 throughout. Training
// uses the L1 log-depth loss mean |y0 - log target| (mono/depth) or the L1
// offset loss mean |y0 - target| (update).
class TinyHead : public Predictor {
 public:
  static constexpr int kHidden = 16;

  explicit TinyHead(const MatchConfig& match, int feature_channels = kDefaultChannels);
  static TinyHead Random(const MatchConfig& match, std::uint64_t seed,
                         double scale = 0.1);

  HeadOutput MonocularDepth(const FeaturePoint2D& point,
                            const Camera& cam) const override;
  HeadOutput UpdateHead(const ScenePoint& q,
                        const std::vector<UpdateCandidate>& candidates,
                        std::optional<double> guidance,
                        const Camera& cam) const override;
  HeadOutput DepthHead(const FeaturePoint2D& point,
                       const std::vector<DepthCandidate>& candidates,
                       const HeadOutput& mono, std::optional<double> guidance,
                       const Camera& cam) const override;

  Eigen::VectorXd MonoInput(const FeaturePoint2D& point) const;
  Eigen::VectorXd UpdateInput(const std::vector<UpdateCandidate>& candidates,
                              std::optional<double> guidance) const;
  Eigen::VectorXd DepthInput(const std::vector<DepthCandidate>& candidates,
                             const HeadOutput& mono,
                             std::optional<double> guidance) const;

  Mlp& net(HeadKind kind);
  const Mlp& net(HeadKind kind) const;

  double Loss(HeadKind kind, const std::vector<TrainExample>& batch) const;
  Eigen::VectorXd LossGradient(HeadKind kind,
                               const std::vector<TrainExample>& batch) const;
  // One SGD step. A non-finite loss or gradient leaves the head untouched.
  TrainResult TrainStep(HeadKind kind, const std::vector<TrainExample>& batch,
                        double learning_rate);

  // "SRTH" magic, uint32 version, uint32 K*M, uint32 feature channels, then
  // per head (mono, update, depth): uint32 inputs, hidden, outputs followed
  // by w1, b1, w2, b2 as row-major little-endian float32.
  void Save(const std::string& path) const;
  static TinyHead Load(const std::string& path);

  int candidate_count() const { return candidates_; }

 private:
  int candidates_;
  int channels_;
  Mlp mono_, update_, depth_;
};

// Inverse-distance (power 1) interpolation over the n nearest samples;
// a sample within 1e-9 of the query returns its value.
template <int Dim>
class IdwInterpolator {
 public:
  using Vec = Eigen::Matrix<double, Dim, 1>;

  IdwInterpolator() = default;
  IdwInterpolator(std::vector<Vec> positions, std::vector<double> values);

  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }

  // (index, normalized weight) of the contributing samples.
  void Weights(const Vec& query, int n,
               std::vector<std::pair<std::size_t, double>>* out) const;
  double Interpolate(const Vec& query, int n = 4) const;

 private:
  GridIndex<Dim> index_;
  std::vector<double> values_;
};

// Brute-force form of the same rule over explicit (position, value) pairs.
double InterpolateGuidance(const Eigen::Vector3d& query,
                           const std::vector<std::pair<Eigen::Vector3d, double>>& coarse,
                           int n = 4);

extern template class IdwInterpolator<2>;
extern template class IdwInterpolator<3>;

}  // namespace streamrecon
