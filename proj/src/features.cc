#include "streamrecon/features.h"

#include <cmath>
#include <random>

namespace streamrecon {
namespace {

constexpr int kPatchTaps = 4;

// Log-spaced wavelengths in meters.
std::vector<double> Wavelengths(int count, double shortest, double longest) {
  std::vector<double> out(count);
  for (int k = 0; k < count; ++k) {
    const double a = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    out[k] = shortest * std::pow(longest / shortest, a);
  }
  return out;
}

const std::vector<double>& FullWavelengths() {
  static const std::vector<double> w = Wavelengths(10, 0.4, 24.0);
  return w;
}

const std::vector<double>& ReducedWavelengths() {
  static const std::vector<double> w = Wavelengths(5, 0.6, 24.0);
  return w;
}

void Standardize(std::vector<float>* v) {
  double mean = 0.0;
  for (float x : *v) mean += x;
  mean /= static_cast<double>(v->size());
  double var = 0.0;
  for (float x : *v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v->size());
  if (var < 1e-12) {
    std::fill(v->begin(), v->end(), 0.f);
    return;
  }
  const double inv = 1.0 / std::sqrt(var);
  for (float& x : *v) x = static_cast<float>((x - mean) * inv);
}

}  // namespace

void CheckPyramidDims(int width, int height) {
  STREAMRECON_CHECK_INPUT(width > 0 && height > 0 && width % 32 == 0 &&
                              height % 32 == 0,
                          "image ", width, "x", height,
                          " must have dims divisible by 32");
}

std::vector<Eigen::Vector2d> LevelPixelCenters(int level, int width, int height) {
  const int factor = 1 << (6 - level);
  const int w = width / factor;
  const int h = height / factor;
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.emplace_back((x + 0.5) * factor, (y + 0.5) * factor);
  return out;
}

float Dot(const std::vector<float>& a, const std::vector<float>& b) {
  STREAMRECON_CHECK_INPUT(a.size() == b.size(), "feature sizes differ: ", a.size(),
                          " vs ", b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return static_cast<float>(s);
}

PatchExtractor::PatchExtractor(std::uint64_t seed)
    : projection_(kReducedChannels, kDefaultChannels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.f, 1.f);
  const float scale = 1.f / std::sqrt(static_cast<float>(kDefaultChannels));
  for (int r = 0; r < projection_.rows(); ++r)
    for (int c = 0; c < projection_.cols(); ++c)
      projection_(r, c) = normal(rng) * scale;
}

std::vector<float> PatchExtractor::Reduce(const std::vector<float>& feature) const {
  STREAMRECON_CHECK_INPUT(static_cast<int>(feature.size()) == kDefaultChannels,
                          "expected ", kDefaultChannels, " channels");
  const Eigen::Map<const Eigen::VectorXf> f(feature.data(), kDefaultChannels);
  const Eigen::VectorXf r = projection_ * f;
  std::vector<float> out(r.data(), r.data() + r.size());
  const float n = r.norm();
  if (n > 1e-12f) {
    for (float& x : out) x /= n;
  }
  return out;
}

LevelFeatures PatchExtractor::Extract(const Image& image, const Camera& cam) const {
  CheckPyramidDims(image.width(), image.height());
  STREAMRECON_CHECK_INPUT(image.channels() == 3, "expected an RGB image");
  STREAMRECON_CHECK_INPUT(cam.width() == image.width() && cam.height() == image.height(),
                          "camera and image sizes differ");
  LevelFeatures out;
  for (int level = 1; level <= kNumLevels; ++level) {
    const int factor = 1 << (6 - level);
    const Image pooled = image.Downsample(factor);
    Image grad(pooled.width(), pooled.height(), 1);
    for (int y = 0; y < pooled.height(); ++y) {
      for (int x = 0; x < pooled.width(); ++x) {
        double gx = 0.0, gy = 0.0;
        for (int c = 0; c < 3; ++c) {
          gx += pooled.AtClamped(x + 1, y, c) - pooled.AtClamped(x - 1, y, c);
          gy += pooled.AtClamped(x, y + 1, c) - pooled.AtClamped(x, y - 1, c);
        }
        grad.at(x, y) = static_cast<float>(std::hypot(gx, gy) / 6.0);
      }
    }
    std::vector<FeaturePoint2D> points;
    points.reserve(static_cast<std::size_t>(pooled.width()) * pooled.height());
    std::vector<float> f(kDefaultChannels);
    for (int y = 0; y < pooled.height(); ++y) {
      for (int x = 0; x < pooled.width(); ++x) {
        int ch = 0;
        for (int ty = 0; ty < kPatchTaps; ++ty) {
          for (int tx = 0; tx < kPatchTaps; ++tx) {
            const double sx = x + 0.5 + (tx - 1.5) * 0.5;
            const double sy = y + 0.5 + (ty - 1.5) * 0.5;
            for (int c = 0; c < 3; ++c) f[ch++] = pooled.Bilinear(sx, sy, c);
          }
        }
        for (int ty = 0; ty < kPatchTaps; ++ty)
          for (int tx = 0; tx < kPatchTaps; ++tx)
            f[ch++] = grad.Bilinear(x + 0.5 + (tx - 1.5) * 0.5,
                                    y + 0.5 + (ty - 1.5) * 0.5, 0);
        Standardize(&f);
        FeaturePoint2D p;
        p.pixel = Eigen::Vector2d((x + 0.5) * factor, (y + 0.5) * factor);
        p.feature = f;
        p.reduced = Reduce(f);
        p.level = level;
        points.push_back(std::move(p));
      }
    }
    out[level - 1] = FeatureMap(level, std::move(points));
  }
  return out;
}

std::vector<float> PositionalEncoding(const Eigen::Vector3d& point,
                                      const std::vector<double>& wavelengths,
                                      int channels) {
  const int used = static_cast<int>(wavelengths.size()) * 6;
  STREAMRECON_CHECK_INPUT(used <= channels, "encoding needs ", used, " channels");
  std::vector<float> out(channels, 0.f);
  const double norm = 1.0 / std::sqrt(3.0 * wavelengths.size());
  int ch = 0;
  for (double lambda : wavelengths) {
    const double omega = 2.0 * M_PI / lambda;
    for (int d = 0; d < 3; ++d) {
      out[ch++] = static_cast<float>(std::sin(omega * point[d]) * norm);
      out[ch++] = static_cast<float>(std::cos(omega * point[d]) * norm);
    }
  }
  return out;
}

OracleExtractor::OracleExtractor(SurfaceOracle oracle) : oracle_(std::move(oracle)) {
  STREAMRECON_CHECK_INPUT(static_cast<bool>(oracle_), "empty surface oracle");
}

std::vector<float> OracleExtractor::Encode(const Eigen::Vector3d& point) const {
  return PositionalEncoding(point, FullWavelengths(), kDefaultChannels);
}

std::vector<float> OracleExtractor::EncodeReduced(const Eigen::Vector3d& point) const {
  return PositionalEncoding(point, ReducedWavelengths(), kReducedChannels);
}

LevelFeatures OracleExtractor::Extract(const Image& image, const Camera& cam) const {
  CheckPyramidDims(image.width(), image.height());
  LevelFeatures out;
  for (int level = 1; level <= kNumLevels; ++level) {
    std::vector<FeaturePoint2D> points;
    for (const auto& pixel : LevelPixelCenters(level, image.width(), image.height())) {
      FeaturePoint2D p;
      p.pixel = pixel;
      p.level = level;
      const auto hit = oracle_(RayThroughPixel(cam, pixel));
      if (hit) {
        p.feature = Encode(*hit);
        p.reduced = EncodeReduced(*hit);
      } else {
        p.feature.assign(kDefaultChannels, 0.f);
        p.reduced.assign(kReducedChannels, 0.f);
      }
      points.push_back(std::move(p));
    }
    out[level - 1] = FeatureMap(level, std::move(points));
  }
  return out;
}

}  // namespace streamrecon
