#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ulcerflow {

/// Side length of the square model input.
inline constexpr int kModelInputSize = 512;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Axis-aligned detection in full-frame pixel coordinates.
struct BBoxDetection {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double confidence = 0.0;

  double area() const { return w * h; }
  friend bool operator==(const BBoxDetection&, const BBoxDetection&) = default;
};

/// Intersection-over-union of two boxes; 0 when the union is empty.
double box_iou(const BBoxDetection& a, const BBoxDetection& b);

/// Interleaved 8-bit RGB raster, row-major.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage(int width, int height, std::uint8_t fill = 0);
  RasterImage(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  std::uint8_t at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  void set_pixel(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

/// Single-channel {0,1} mask, row-major; 1 marks wound pixels.
class BinaryMask {
 public:
  BinaryMask(int width, int height);
  /// Any nonzero input byte is stored as 1.
  BinaryMask(int width, int height, std::span<const std::uint8_t> values);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const std::uint8_t> data() const { return data_; }

  bool get(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool on) {
    data_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
  }

  std::size_t count() const;
  bool empty_foreground() const { return count() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

/// Per-pixel wound probability in [0,1], row-major.
class ProbMap {
 public:
  ProbMap(int width, int height, float fill = 0.0f);
  /// Values are clamped into [0,1]; NaN becomes 0.
  ProbMap(int width, int height, std::vector<float> values);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const float> data() const { return data_; }

  float at(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int x, int y, float v);

  friend bool operator==(const ProbMap&, const ProbMap&) = default;

 private:
  int width_;
  int height_;
  std::vector<float> data_;
};

enum class ResizePolicy { letterbox, stretch };

ResizePolicy parse_resize_policy(const std::string& name);
std::string to_string(ResizePolicy policy);

/// Mapping between a full-frame crop rectangle and the 512x512 model frame.
///
/// A crop pixel column `cx` lands at `pad_left + cx * scaled_width / crop_width`
/// in the model frame. `scale` is the nominal ratio and `scaled_*` the rounded
/// content size actually used, so inverting the mapping is exact.
struct RoiTransform {
  PixelRect crop;  // full-frame origin and size
  double scale = 1.0;
  int scaled_width = kModelInputSize;
  int scaled_height = kModelInputSize;
  int pad_left = 0;
  int pad_top = 0;

  double scale_x() const { return static_cast<double>(scaled_width) / crop.width; }
  double scale_y() const { return static_cast<double>(scaled_height) / crop.height; }

  /// Throws InvalidTransform when the fields are inconsistent.
  void validate() const;

  friend bool operator==(const RoiTransform&, const RoiTransform&) = default;
};

struct Crop {
  RasterImage image;
  PixelRect rect;
};

inline constexpr double kDefaultCropMargin = 0.10;
inline constexpr std::uint8_t kPadFill = 114;

/// Rectangle of `box` dilated by margin*max(w,h) per side, clamped to the frame.
PixelRect margin_rect(const BBoxDetection& box, double margin, int frame_width,
                      int frame_height);

/// Crops `box` plus margin out of `img`. Throws InvalidBox when the box does
/// not intersect the frame or is degenerate.
Crop crop_with_margin(const RasterImage& img, const BBoxDetection& box,
                      double margin = kDefaultCropMargin);

/// Geometry of resizing a `width`x`height` crop into the model frame.
RoiTransform plan_resize(PixelRect crop, ResizePolicy policy = ResizePolicy::letterbox);

struct Letterboxed {
  RasterImage image;
  RoiTransform transform;
};

/// Bilinear resize into the model frame; padding uses kPadFill gray.
/// `crop_origin` is recorded into the transform.
Letterboxed letterbox_to_512(const RasterImage& crop, int crop_x = 0, int crop_y = 0,
                             ResizePolicy policy = ResizePolicy::letterbox);

/// Nearest-neighbor forward mapping of a crop-sized mask into the model frame.
BinaryMask letterbox_mask(const BinaryMask& crop_mask, const RoiTransform& t);

/// Inverse of crop + letterbox for masks (nearest neighbor). Pixels outside
/// the crop rectangle are background.
BinaryMask project_mask_to_full(const BinaryMask& mask512, const RoiTransform& t,
                                int full_width, int full_height);

/// Sub-mask of `mask` inside `rect`.
BinaryMask crop_mask(const BinaryMask& mask, const PixelRect& rect);

RasterImage resize_bilinear(const RasterImage& img, int width, int height);

// File I/O (PNG/JPEG through OpenCV). Images are RGB in memory.
RasterImage read_image(const std::filesystem::path& path);
void write_image(const RasterImage& img, const std::filesystem::path& path);
/// Any nonzero pixel of the first channel is foreground.
BinaryMask read_mask(const std::filesystem::path& path);
/// Single-channel PNG with values {0,255}.
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);
/// 16-bit grayscale PNG, value = round(p * 65535).
void write_probmap(const ProbMap& map, const std::filesystem::path& path);

}  // namespace ulcerflow
