#pragma once

#include <string>
#include <vector>

#include "streamrecon/common.h"

namespace streamrecon {

// Interleaved float image, row-major. Color images hold RGB in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.f)
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c = 0) { return data_[Index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[Index(x, y, c)]; }
  // Coordinates clamped to the image.
  float AtClamped(int x, int y, int c = 0) const;
  // Bilinear sample at continuous pixel coordinates (pixel centers at +0.5),
  // clamped at the border.
  float Bilinear(double x, double y, int c) const;

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  // Box-filter average pooling by an integer factor that divides both dims.
  Image Downsample(int factor) const;

 private:
  std::size_t Index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Per-pixel depth (camera-frame z, meters); 0 marks an invalid pixel.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, CameraId camera = 0)
      : width_(width),
        height_(height),
        camera_(camera),
        depth_(static_cast<std::size_t>(width) * height, 0.0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  CameraId camera() const { return camera_; }
  void set_camera(CameraId id) { camera_ = id; }
  std::size_t size() const { return depth_.size(); }

  double& at(int x, int y) { return depth_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const {
    return depth_[static_cast<std::size_t>(y) * width_ + x];
  }
  bool Valid(int x, int y) const { return at(x, y) > 0.0; }
  std::size_t CountValid() const;

  const std::vector<double>& values() const { return depth_; }
  std::vector<double>& values() { return depth_; }

 private:
  int width_ = 0;
  int height_ = 0;
  CameraId camera_ = 0;
  std::vector<double> depth_;
};

// 8- or 16-bit PNG of any color type, returned as RGB in [0, 1].
Image ReadPng(const std::string& path);
// 8-bit RGB; values are clamped to [0, 1].
void WritePng(const std::string& path, const Image& image);

// 16-bit single-channel PNG of depth in millimeters (0 = invalid).
DepthMap ReadDepthPng(const std::string& path, double units_per_meter = 1000.0);
void WriteDepthPng(const std::string& path, const DepthMap& depth,
                   double units_per_meter = 1000.0);

// Single-channel little-endian float32 PFM; non-positive or non-finite
// values read back as invalid.
DepthMap ReadPfm(const std::string& path);
void WritePfm(const std::string& path, const DepthMap& depth);

}  // namespace streamrecon
