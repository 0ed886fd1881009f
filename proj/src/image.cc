#include "streamrecon/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace streamrecon {

float Image::AtClamped(int x, int y, int c) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y, c);
}

float Image::Bilinear(double x, double y, int c) const {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0;
  const double ay = fy - y0;
  const double top = (1 - ax) * AtClamped(x0, y0, c) + ax * AtClamped(x0 + 1, y0, c);
  const double bottom =
      (1 - ax) * AtClamped(x0, y0 + 1, c) + ax * AtClamped(x0 + 1, y0 + 1, c);
  return static_cast<float>((1 - ay) * top + ay * bottom);
}

Image Image::Downsample(int factor) const {
  STREAMRECON_CHECK_INPUT(factor >= 1 && width_ % factor == 0 &&
                              height_ % factor == 0,
                          "cannot pool ", width_, "x", height_, " by ", factor);
  if (factor == 1) return *this;
  Image out(width_ / factor, height_ / factor, channels_);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int c = 0; c < channels_; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            sum += at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = static_cast<float>(sum * inv);
      }
    }
  }
  return out;
}

std::size_t DepthMap::CountValid() const {
  return static_cast<std::size_t>(
      std::count_if(depth_.begin(), depth_.end(), [](double d) { return d > 0.0; }));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void PngError(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text != nullptr) *text = msg;
  png_longjmp(png, 1);
}

void PngWarning(png_structp, png_const_charp) {}

// Decodes to 8- or 16-bit rows with the requested channel count (1 or 3).
std::vector<std::uint16_t> DecodePng(const std::string& path, int want_channels,
                                     int* width, int* height) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  STREAMRECON_CHECK_INPUT(file != nullptr, "cannot open ", path);
  std::string error;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, PngError, PngWarning);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint16_t> out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("failed to decode " + path + ": " + error);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  const bool is_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (want_channels == 3 && is_gray) png_set_gray_to_rgb(png);
  if (want_channels == 1 && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (bit_depth == 16) png_set_swap(png);  // host order on little-endian hosts
  png_read_update_info(png, info);

  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * *height);
  rows.resize(*height);
  for (int y = 0; y < *height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  STREAMRECON_CHECK_INPUT(channels == want_channels, path, " decoded to ", channels,
                          " channels, expected ", want_channels);
  out.resize(static_cast<std::size_t>(*width) * *height * channels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (depth == 16) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      out[i] = v;
    } else {
      out[i] = static_cast<std::uint16_t>(buffer[i] * 257);  // rescale to 16 bit
    }
  }
  return out;
}

void EncodePng(const std::string& path, int width, int height, int channels,
               int bit_depth, const std::vector<png_byte>& bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  STREAMRECON_CHECK_INPUT(file != nullptr, "cannot write ", path);
  std::string error;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, PngError, PngWarning);
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed to encode " + path + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_bytes =
      static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(bytes.data() + y * row_bytes);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image ReadPng(const std::string& path) {
  int w = 0, h = 0;
  const auto raw = DecodePng(path, 3, &w, &h);
  Image image(w, h, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    image.data()[i] = static_cast<float>(raw[i] / 65535.0);
  }
  return image;
}

void WritePng(const std::string& path, const Image& image) {
  STREAMRECON_CHECK_INPUT(image.channels() == 3 || image.channels() == 1,
                          "PNG export needs 1 or 3 channels");
  std::vector<png_byte> bytes(image.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.f, 1.f);
    bytes[i] = static_cast<png_byte>(std::lround(v * 255.f));
  }
  EncodePng(path, image.width(), image.height(), image.channels(), 8, bytes);
}

DepthMap ReadDepthPng(const std::string& path, double units_per_meter) {
  int w = 0, h = 0;
  const auto raw = DecodePng(path, 1, &w, &h);
  DepthMap depth(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    depth.values()[i] = raw[i] / units_per_meter;
  }
  return depth;
}

void WriteDepthPng(const std::string& path, const DepthMap& depth,
                   double units_per_meter) {
  std::vector<png_byte> bytes(depth.size() * 2);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double d = depth.values()[i];
    const double units = d > 0.0 && std::isfinite(d) ? std::round(d * units_per_meter) : 0.0;
    const auto v = static_cast<std::uint16_t>(std::clamp(units, 0.0, 65535.0));
    bytes[2 * i] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
    bytes[2 * i + 1] = static_cast<png_byte>(v & 0xff);
  }
  EncodePng(path, depth.width(), depth.height(), 1, 16, bytes);
}

DepthMap ReadPfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(in.good(), "cannot open ", path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  STREAMRECON_CHECK_INPUT(magic == "Pf", path, " is not a single-channel PFM");
  STREAMRECON_CHECK_INPUT(w > 0 && h > 0 && scale != 0.0, "bad PFM header in ", path);
  in.get();
  const bool little = scale < 0.0;
  DepthMap depth(w, h);
  std::vector<char> row(static_cast<std::size_t>(w) * 4);
  // PFM stores rows bottom to top.
  for (int y = h - 1; y >= 0; --y) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    STREAMRECON_CHECK_INPUT(in.gcount() == static_cast<std::streamsize>(row.size()),
                            "truncated PFM ", path);
    for (int x = 0; x < w; ++x) {
      char b[4];
      std::memcpy(b, row.data() + 4 * x, 4);
      if (!little) std::reverse(b, b + 4);
      float v;
      std::memcpy(&v, b, 4);
      depth.at(x, y) = std::isfinite(v) && v > 0.f ? v : 0.0;
    }
  }
  return depth;
}

void WritePfm(const std::string& path, const DepthMap& depth) {
  std::ofstream out(path, std::ios::binary);
  STREAMRECON_CHECK_INPUT(out.good(), "cannot write ", path);
  out << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1.0\n";
  for (int y = depth.height() - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width(); ++x) {
      const float v = static_cast<float>(depth.at(x, y));
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  STREAMRECON_CHECK_INPUT(out.good(), "failed writing ", path);
}

}  // namespace streamrecon
