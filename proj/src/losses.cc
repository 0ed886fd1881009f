#include "streamrecon/losses.h"

#include <cmath>
#include <limits>

#include "streamrecon/predictors.h"

namespace streamrecon {
namespace {

double Sign(double v) { return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0; }

void CheckSameSize(const DepthMap& a, const DepthMap& b) {
  STREAMRECON_CHECK_INPUT(a.width() == b.width() && a.height() == b.height(),
                          "depth maps differ in size: ", a.width(), "x", a.height(),
                          " vs ", b.width(), "x", b.height());
}

std::size_t CountValid(const DepthMap& gt) { return gt.CountValid(); }

// One scale of the gradient-loss pyramid.
struct Scale {
  int w = 0, h = 0;
  std::vector<double> pred, gt;
  std::vector<int> count;  // valid children (or 1 at full resolution)
};

Scale Downsample(const Scale& s) {
  Scale out;
  out.w = s.w / 2;
  out.h = s.h / 2;
  const std::size_t n = static_cast<std::size_t>(out.w) * out.h;
  out.pred.assign(n, 0.0);
  out.gt.assign(n, 0.0);
  out.count.assign(n, 0);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      const std::size_t o = static_cast<std::size_t>(y) * out.w + x;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t i = static_cast<std::size_t>(2 * y + dy) * s.w + 2 * x + dx;
          if (s.count[i] == 0) continue;
          out.pred[o] += s.pred[i];
          out.gt[o] += s.gt[i];
          ++out.count[o];
        }
      }
      if (out.count[o] > 0) {
        out.pred[o] /= out.count[o];
        out.gt[o] /= out.count[o];
      }
    }
  }
  return out;
}

Eigen::Vector3d PixelDirection(const Intrinsics& k, int x, int y) {
  return Eigen::Vector3d((x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0);
}

}  // namespace

double DepthLoss(const std::array<DepthMap, kNumLevels>& pred, const DepthMap& gt,
                 std::array<DepthMap, kNumLevels>* grad) {
  const std::size_t hw = CountValid(gt);
  if (grad != nullptr) {
    for (int l = 0; l < kNumLevels; ++l) *(grad->begin() + l) = DepthMap(gt.width(), gt.height());
  }
  if (hw == 0) return 0.0;
  double total = 0.0;
  for (int l = 1; l <= kNumLevels; ++l) {
    const DepthMap& p = pred[l - 1];
    CheckSameSize(p, gt);
    const double weight = 1.0 / (static_cast<double>(l) * l * hw);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const double g = gt.values()[i];
      if (!(g > 0.0)) continue;
      const double d = p.values()[i];
      STREAMRECON_CHECK_INPUT(d > 0.0, "non-positive predicted depth at level ", l);
      const double r = std::log(d) - std::log(g);
      total += weight * std::abs(r);
      if (grad != nullptr) (*grad)[l - 1].values()[i] = weight * Sign(r) / d;
    }
  }
  return total;
}

double GradLoss(const DepthMap& pred, const DepthMap& gt, DepthMap* grad) {
  CheckSameSize(pred, gt);
  const std::size_t hw = CountValid(gt);
  if (grad != nullptr) *grad = DepthMap(gt.width(), gt.height());
  if (hw == 0) return 0.0;

  std::vector<Scale> scales(1);
  Scale& s0 = scales[0];
  s0.w = gt.width();
  s0.h = gt.height();
  s0.pred.resize(gt.size());
  s0.gt.resize(gt.size());
  s0.count.resize(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool valid = gt.values()[i] > 0.0;
    if (valid) {
      STREAMRECON_CHECK_INPUT(pred.values()[i] > 0.0, "non-positive predicted depth");
    }
    s0.count[i] = valid ? 1 : 0;
    s0.pred[i] = valid ? pred.values()[i] : 0.0;
    s0.gt[i] = valid ? gt.values()[i] : 0.0;
  }
  for (int r = 1; r < 4; ++r) scales.push_back(Downsample(scales.back()));

  const double inv = 1.0 / static_cast<double>(hw);
  double total = 0.0;
  std::vector<std::vector<double>> dvalue(scales.size());
  for (std::size_t r = 0; r < scales.size(); ++r) {
    const Scale& s = scales[r];
    dvalue[r].assign(s.pred.size(), 0.0);
    auto term = [&](std::size_t a, std::size_t b) {
      if (s.count[a] == 0 || s.count[b] == 0) return;
      const double diff = (s.pred[b] - s.pred[a]) - (s.gt[b] - s.gt[a]);
      total += inv * std::abs(diff);
      dvalue[r][b] += inv * Sign(diff);
      dvalue[r][a] -= inv * Sign(diff);
    };
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
        if (x + 1 < s.w) term(i, i + 1);
        if (y + 1 < s.h) term(i, i + s.w);
      }
    }
  }
  if (grad != nullptr) {
    // Push coarse gradients down through the valid-average pooling.
    for (std::size_t r = scales.size() - 1; r > 0; --r) {
      const Scale& fine = scales[r - 1];
      const Scale& coarse = scales[r];
      for (int y = 0; y < coarse.h; ++y) {
        for (int x = 0; x < coarse.w; ++x) {
          const std::size_t o = static_cast<std::size_t>(y) * coarse.w + x;
          if (coarse.count[o] == 0) continue;
          const double share = dvalue[r][o] / coarse.count[o];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i =
                  static_cast<std::size_t>(2 * y + dy) * fine.w + 2 * x + dx;
              if (fine.count[i] > 0) dvalue[r - 1][i] += share;
            }
        }
      }
    }
    grad->values() = dvalue[0];
  }
  return total;
}

std::vector<Eigen::Vector3d> DepthNormals(const DepthMap& depth, const Camera& cam) {
  STREAMRECON_CHECK_INPUT(cam.width() == depth.width() && cam.height() == depth.height(),
                          "camera does not match depth map size");
  const Intrinsics& k = cam.intrinsics();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<Eigen::Vector3d> normals(depth.size(), Eigen::Vector3d::Constant(nan));
  for (int y = 0; y + 1 < depth.height(); ++y) {
    for (int x = 0; x + 1 < depth.width(); ++x) {
      if (!depth.Valid(x, y) || !depth.Valid(x + 1, y) || !depth.Valid(x, y + 1)) continue;
      const Eigen::Vector3d p0 = depth.at(x, y) * PixelDirection(k, x, y);
      const Eigen::Vector3d tx = depth.at(x + 1, y) * PixelDirection(k, x + 1, y) - p0;
      const Eigen::Vector3d ty = depth.at(x, y + 1) * PixelDirection(k, x, y + 1) - p0;
      const Eigen::Vector3d c = tx.cross(ty);
      const double n = c.norm();
      if (n < 1e-12) continue;
      normals[static_cast<std::size_t>(y) * depth.width() + x] = c / n;
    }
  }
  return normals;
}

double NormalLoss(const DepthMap& pred, const DepthMap& gt, const Camera& cam,
                  DepthMap* grad) {
  CheckSameSize(pred, gt);
  const auto pn = DepthNormals(pred, cam);
  const auto gn = DepthNormals(gt, cam);
  if (grad != nullptr) *grad = DepthMap(gt.width(), gt.height());
  std::size_t count = 0;
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < pn.size(); ++i) {
    // Predicted normals only count where gt is valid for all three taps.
    if (!std::isnan(pn[i].x()) && !std::isnan(gn[i].x())) {
      ++count;
      used.push_back(i);
    }
  }
  if (count == 0) return 0.0;
  const double scale = 1.0 / (2.0 * count);
  const Intrinsics& k = cam.intrinsics();
  const int w = gt.width();
  double total = 0.0;
  for (std::size_t i : used) {
    const double dot = pn[i].dot(gn[i]);
    total += scale * (1.0 - dot);
    if (grad == nullptr) continue;
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    const Eigen::Vector3d a0 = PixelDirection(k, x, y);
    const Eigen::Vector3d a1 = PixelDirection(k, x + 1, y);
    const Eigen::Vector3d a2 = PixelDirection(k, x, y + 1);
    const Eigen::Vector3d p0 = pred.at(x, y) * a0;
    const Eigen::Vector3d tx = pred.at(x + 1, y) * a1 - p0;
    const Eigen::Vector3d ty = pred.at(x, y + 1) * a2 - p0;
    const Eigen::Vector3d c = tx.cross(ty);
    const double cn = c.norm();
    // d(1 - n.g)/dc = -(g - (n.g) n) / |c|
    const Eigen::Vector3d g_c = -scale * (gn[i] - dot * pn[i]) / cn;
    const Eigen::Vector3d g_tx = ty.cross(g_c);
    const Eigen::Vector3d g_ty = g_c.cross(tx);
    grad->at(x + 1, y) += a1.dot(g_tx);
    grad->at(x, y + 1) += a2.dot(g_ty);
    grad->at(x, y) -= a0.dot(g_tx + g_ty);
  }
  return total;
}

double UpdateLoss(const std::vector<double>& z,
                  const std::vector<std::optional<double>>& z_gt,
                  std::vector<double>* grad) {
  STREAMRECON_CHECK_INPUT(z.size() == z_gt.size(), "point and gt counts differ");
  std::size_t n = 0;
  for (const auto& g : z_gt) n += g.has_value() ? 1 : 0;
  if (grad != nullptr) grad->assign(z.size(), 0.0);
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!z_gt[i]) continue;
    const double r = z[i] - *z_gt[i];
    total += std::abs(r);
    if (grad != nullptr) (*grad)[i] = Sign(r) / static_cast<double>(n);
  }
  return total / static_cast<double>(n);
}

LossReport ComputeLosses(const std::array<DepthMap, kNumLevels>& pred,
                         const DepthMap& gt, const Camera& finest_cam,
                         const std::vector<double>& z,
                         const std::vector<std::optional<double>>& z_gt) {
  LossReport r;
  r.depth = DepthLoss(pred, gt);
  r.grad = GradLoss(pred[kNumLevels - 1], gt);
  r.normal = NormalLoss(pred[kNumLevels - 1], gt, finest_cam);
  r.update = UpdateLoss(z, z_gt);
  r.total = r.depth + r.grad + r.normal + r.update;
  return r;
}

DepthMap UpsampleIdw(const DepthMap& coarse, int factor) {
  STREAMRECON_CHECK_INPUT(factor >= 1, "bad upsampling factor");
  DepthMap out(coarse.width() * factor, coarse.height() * factor, coarse.camera());
  std::vector<Eigen::Vector2d> centers;
  std::vector<double> values;
  for (int y = 0; y < coarse.height(); ++y)
    for (int x = 0; x < coarse.width(); ++x)
      if (coarse.Valid(x, y)) {
        centers.emplace_back(x + 0.5, y + 0.5);
        values.push_back(coarse.at(x, y));
      }
  if (centers.empty()) return out;
  const IdwInterpolator<2> idw(std::move(centers), std::move(values));
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out.at(x, y) = idw.Interpolate(
          Eigen::Vector2d((x + 0.5) / factor, (y + 0.5) / factor), 4);
  return out;
}

}  // namespace streamrecon
