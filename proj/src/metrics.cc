#include "streamrecon/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace streamrecon {

DepthMetrics ComputeDepthMetrics(const DepthMap& pred, const DepthMap& gt) {
  STREAMRECON_CHECK_INPUT(pred.width() == gt.width() && pred.height() == gt.height(),
                          "prediction ", pred.width(), "x", pred.height(),
                          " and ground truth ", gt.width(), "x", gt.height(),
                          " differ in size");
  DepthMetrics m;
  double abs_diff = 0.0, abs_rel = 0.0, sq_rel = 0.0;
  std::size_t d105 = 0, d125 = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt.values()[i];
    if (!(g > 0.0)) continue;
    ++m.gt_pixels;
    const double d = pred.values()[i];
    if (!(d > 0.0) || !std::isfinite(d)) continue;
    ++m.valid_pixels;
    const double e = std::abs(d - g);
    abs_diff += e;
    abs_rel += e / g;
    sq_rel += e * e / g;
    const double ratio = std::max(d / g, g / d);
    d105 += ratio < 1.05 ? 1 : 0;
    d125 += ratio < 1.25 ? 1 : 0;
  }
  if (m.valid_pixels == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.abs_diff = m.abs_rel = m.sq_rel = m.delta_1_05 = m.delta_1_25 = nan;
    m.completeness = 0.0;
    return m;
  }
  const double n = static_cast<double>(m.valid_pixels);
  m.valid = true;
  m.abs_diff = abs_diff / n;
  m.abs_rel = abs_rel / n;
  m.sq_rel = sq_rel / n;
  m.delta_1_05 = d105 / n;
  m.delta_1_25 = d125 / n;
  m.completeness = n / static_cast<double>(m.gt_pixels);
  return m;
}

DepthMetrics AggregateDepthMetrics(const std::vector<DepthMetrics>& frames) {
  DepthMetrics out;
  for (const auto& f : frames) {
    out.gt_pixels += f.gt_pixels;
    if (!f.valid) continue;
    const double w = static_cast<double>(f.valid_pixels);
    out.valid_pixels += f.valid_pixels;
    out.abs_diff += w * f.abs_diff;
    out.abs_rel += w * f.abs_rel;
    out.sq_rel += w * f.sq_rel;
    out.delta_1_05 += w * f.delta_1_05;
    out.delta_1_25 += w * f.delta_1_25;
  }
  if (out.valid_pixels == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.abs_diff = out.abs_rel = out.sq_rel = out.delta_1_05 = out.delta_1_25 = nan;
    return out;
  }
  const double n = static_cast<double>(out.valid_pixels);
  out.valid = true;
  out.abs_diff /= n;
  out.abs_rel /= n;
  out.sq_rel /= n;
  out.delta_1_05 /= n;
  out.delta_1_25 /= n;
  out.completeness = n / static_cast<double>(out.gt_pixels);
  return out;
}

MeshMetrics ComputeMeshMetrics(const TriMesh& pred, const TriMesh& gt,
                               const MeshMetricsOptions& options) {
  STREAMRECON_CHECK_INPUT(!pred.empty(), "predicted mesh is empty");
  STREAMRECON_CHECK_INPUT(!gt.empty(), "ground-truth mesh is empty");
  STREAMRECON_CHECK_INPUT(options.samples > 0, "need at least one sample");
  const MeshBvh pred_bvh(pred);
  const MeshBvh gt_bvh(gt);

  MeshMetrics m;
  m.threshold = options.threshold;
  const auto pred_samples = SampleSurface(pred, options.samples, options.seed);
  double acc = 0.0;
  std::size_t precise = 0;
  for (const auto& p : pred_samples) {
    const double d = gt_bvh.Distance(p);
    acc += d;
    precise += d < options.threshold ? 1 : 0;
  }
  m.accuracy = acc / pred_samples.size();
  m.precision = static_cast<double>(precise) / pred_samples.size();

  const auto gt_samples = SampleSurface(gt, options.samples, options.seed + 1);
  double comp = 0.0;
  std::size_t recalled = 0, counted = 0;
  for (const auto& p : gt_samples) {
    if (options.gt_filter && !options.gt_filter(p)) continue;
    const double d = pred_bvh.Distance(p);
    comp += d;
    recalled += d < options.threshold ? 1 : 0;
    ++counted;
  }
  STREAMRECON_CHECK_INPUT(counted > 0, "no ground-truth sample passed the filter");
  m.completeness = comp / counted;
  m.recall = static_cast<double>(recalled) / counted;
  m.chamfer = 0.5 * (m.accuracy + m.completeness);
  m.f_score = m.precision + m.recall > 0.0
                  ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                  : 0.0;
  return m;
}

nlohmann::json ToJson(const DepthMetrics& m) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {{"abs_diff", num(m.abs_diff)},       {"abs_rel", num(m.abs_rel)},
          {"sq_rel", num(m.sq_rel)},           {"delta_1_05", num(m.delta_1_05)},
          {"delta_1_25", num(m.delta_1_25)},   {"completeness", m.completeness},
          {"valid_pixels", m.valid_pixels},    {"gt_pixels", m.gt_pixels}};
}

nlohmann::json ToJson(const MeshMetrics& m) {
  return {{"accuracy", m.accuracy},   {"completeness", m.completeness},
          {"chamfer", m.chamfer},     {"precision", m.precision},
          {"recall", m.recall},       {"f_score", m.f_score},
          {"threshold", m.threshold}};
}

}  // namespace streamrecon
