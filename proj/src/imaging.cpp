#include "ulcerflow/imaging.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ulcerflow/errors.hpp"

namespace ulcerflow {

namespace {

void check_dims(int width, int height, const char* what) {
  if (width < 1 || height < 1) {
    throw ShapeError(std::string(what) + ": width and height must be >= 1, got " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
}

std::size_t pixel_count(int width, int height) {
  return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

// Index of the source sample whose footprint contains the center of
// destination sample `dst` under a `ratio` = dst_len / src_len mapping.
int nearest_source(int dst, double ratio, int src_len) {
  int s = static_cast<int>(std::floor((dst + 0.5) / ratio));
  return std::clamp(s, 0, src_len - 1);
}

}  // namespace

double box_iou(const BBoxDetection& a, const BBoxDetection& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// ---------------------------------------------------------------------------
// Raster types

RasterImage::RasterImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  check_dims(width, height, "RasterImage");
  data_.assign(pixel_count(width, height) * kChannels, fill);
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height, "RasterImage");
  if (data_.size() != pixel_count(width, height) * kChannels) {
    throw ShapeError("RasterImage: data length does not match width*height*3");
  }
}

void RasterImage::set_pixel(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  at(x, y, 0) = r;
  at(x, y, 1) = g;
  at(x, y, 2) = b;
}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  check_dims(width, height, "BinaryMask");
  data_.assign(pixel_count(width, height), 0);
}

BinaryMask::BinaryMask(int width, int height, std::span<const std::uint8_t> values)
    : BinaryMask(width, height) {
  if (values.size() != data_.size()) {
    throw ShapeError("BinaryMask: data length does not match width*height");
  }
  std::transform(values.begin(), values.end(), data_.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

ProbMap::ProbMap(int width, int height, float fill) : width_(width), height_(height) {
  check_dims(width, height, "ProbMap");
  data_.assign(pixel_count(width, height), std::clamp(fill, 0.0f, 1.0f));
}

ProbMap::ProbMap(int width, int height, std::vector<float> values)
    : width_(width), height_(height), data_(std::move(values)) {
  check_dims(width, height, "ProbMap");
  if (data_.size() != pixel_count(width, height)) {
    throw ShapeError("ProbMap: data length does not match width*height");
  }
  for (float& v : data_) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
}

void ProbMap::set(int x, int y, float v) {
  data_[static_cast<std::size_t>(y) * width_ + x] =
      std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
}

ResizePolicy parse_resize_policy(const std::string& name) {
  if (name == "letterbox") return ResizePolicy::letterbox;
  if (name == "stretch") return ResizePolicy::stretch;
  throw ConfigError("unknown resize policy '" + name + "' (expected letterbox|stretch)");
}

std::string to_string(ResizePolicy policy) {
  return policy == ResizePolicy::letterbox ? "letterbox" : "stretch";
}

// ---------------------------------------------------------------------------
// Geometry

void RoiTransform::validate() const {
  if (crop.width < 1 || crop.height < 1) throw InvalidTransform("empty crop rectangle");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidTransform("scale must be > 0");
  if (pad_left < 0 || pad_top < 0) throw InvalidTransform("negative padding");
  if (scaled_width < 1 || scaled_height < 1 ||
      pad_left + scaled_width > kModelInputSize ||
      pad_top + scaled_height > kModelInputSize) {
    throw InvalidTransform("scaled content does not fit the model frame");
  }
}

PixelRect margin_rect(const BBoxDetection& box, double margin, int frame_width,
                      int frame_height) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw InvalidBox("box width and height must be > 0");
  }
  if (!(margin >= 0.0 && margin <= 1.0)) {
    throw InvalidArgument("margin must lie in [0,1]");
  }
  const double d = margin * std::max(box.w, box.h);
  const double x0 = std::floor(box.x - d);
  const double y0 = std::floor(box.y - d);
  const double x1 = std::ceil(box.x + box.w + d);
  const double y1 = std::ceil(box.y + box.h + d);
  const double cx0 = std::max(0.0, x0);
  const double cy0 = std::max(0.0, y0);
  const double cx1 = std::min(static_cast<double>(frame_width), x1);
  const double cy1 = std::min(static_cast<double>(frame_height), y1);
  if (cx1 <= cx0 || cy1 <= cy0) {
    throw InvalidBox("box does not intersect the image");
  }
  return {static_cast<int>(cx0), static_cast<int>(cy0), static_cast<int>(cx1 - cx0),
          static_cast<int>(cy1 - cy0)};
}

BinaryMask crop_mask(const BinaryMask& mask, const PixelRect& rect) {
  if (rect.x < 0 || rect.y < 0 || rect.width < 1 || rect.height < 1 ||
      rect.x + rect.width > mask.width() || rect.y + rect.height > mask.height()) {
    throw InvalidBox("crop rectangle outside the mask");
  }
  BinaryMask out(rect.width, rect.height);
  for (int y = 0; y < rect.height; ++y) {
    for (int x = 0; x < rect.width; ++x) out.set(x, y, mask.get(rect.x + x, rect.y + y));
  }
  return out;
}

Crop crop_with_margin(const RasterImage& img, const BBoxDetection& box, double margin) {
  const PixelRect r = margin_rect(box, margin, img.width(), img.height());
  RasterImage out(r.width, r.height);
  const std::size_t row_bytes = static_cast<std::size_t>(r.width) * RasterImage::kChannels;
  for (int y = 0; y < r.height; ++y) {
    const auto src = img.data().subspan(
        (static_cast<std::size_t>(r.y + y) * img.width() + r.x) * RasterImage::kChannels,
        row_bytes);
    std::copy(src.begin(), src.end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(y * row_bytes));
  }
  return {std::move(out), r};
}

RoiTransform plan_resize(PixelRect crop, ResizePolicy policy) {
  if (crop.width < 1 || crop.height < 1) throw InvalidArgument("crop must be nonempty");
  RoiTransform t;
  t.crop = crop;
  if (policy == ResizePolicy::stretch) {
    t.scale = static_cast<double>(kModelInputSize) / crop.width;
    t.scaled_width = kModelInputSize;
    t.scaled_height = kModelInputSize;
    return t;
  }
  t.scale = std::min(static_cast<double>(kModelInputSize) / crop.width,
                     static_cast<double>(kModelInputSize) / crop.height);
  // std::lround rounds halves away from zero.
  t.scaled_width = std::clamp(static_cast<int>(std::lround(crop.width * t.scale)), 1,
                              kModelInputSize);
  t.scaled_height = std::clamp(static_cast<int>(std::lround(crop.height * t.scale)), 1,
                               kModelInputSize);
  t.pad_left = (kModelInputSize - t.scaled_width) / 2;
  t.pad_top = (kModelInputSize - t.scaled_height) / 2;
  return t;
}

RasterImage resize_bilinear(const RasterImage& img, int width, int height) {
  check_dims(width, height, "resize_bilinear");
  if (width == img.width() && height == img.height()) return img;
  // cv::Mat wraps without copying; the const_cast never leads to a write.
  const cv::Mat src(img.height(), img.width(), CV_8UC3,
                    const_cast<std::uint8_t*>(img.data().data()));
  RasterImage out(width, height);
  cv::Mat dst(height, width, CV_8UC3, out.data().data());
  cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  return out;
}

Letterboxed letterbox_to_512(const RasterImage& crop, int crop_x, int crop_y,
                             ResizePolicy policy) {
  RoiTransform t = plan_resize({crop_x, crop_y, crop.width(), crop.height()}, policy);
  const RasterImage content = resize_bilinear(crop, t.scaled_width, t.scaled_height);
  RasterImage out(kModelInputSize, kModelInputSize, kPadFill);
  const std::size_t row_bytes =
      static_cast<std::size_t>(t.scaled_width) * RasterImage::kChannels;
  for (int y = 0; y < t.scaled_height; ++y) {
    const auto src = content.data().subspan(y * row_bytes, row_bytes);
    const std::size_t dst_off =
        (static_cast<std::size_t>(t.pad_top + y) * kModelInputSize + t.pad_left) *
        RasterImage::kChannels;
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(dst_off));
  }
  return {std::move(out), t};
}

BinaryMask letterbox_mask(const BinaryMask& crop_mask, const RoiTransform& t) {
  t.validate();
  if (crop_mask.width() != t.crop.width || crop_mask.height() != t.crop.height) {
    throw InvalidTransform("mask size does not match the transform crop size");
  }
  const double sx = t.scale_x();
  const double sy = t.scale_y();
  BinaryMask out(kModelInputSize, kModelInputSize);
  for (int v = 0; v < t.scaled_height; ++v) {
    const int sy_idx = nearest_source(v, sy, t.crop.height);
    for (int u = 0; u < t.scaled_width; ++u) {
      const int sx_idx = nearest_source(u, sx, t.crop.width);
      if (crop_mask.get(sx_idx, sy_idx)) out.set(t.pad_left + u, t.pad_top + v, true);
    }
  }
  return out;
}

BinaryMask project_mask_to_full(const BinaryMask& mask512, const RoiTransform& t,
                                int full_width, int full_height) {
  if (mask512.width() != kModelInputSize || mask512.height() != kModelInputSize) {
    throw InputShapeError("project_mask_to_full expects a 512x512 mask");
  }
  t.validate();
  const PixelRect& c = t.crop;
  if (c.x < 0 || c.y < 0 || c.x + c.width > full_width || c.y + c.height > full_height) {
    throw InvalidTransform("crop rectangle lies outside the full frame");
  }
  const double sx = t.scale_x();
  const double sy = t.scale_y();
  BinaryMask out(full_width, full_height);
  for (int y = 0; y < c.height; ++y) {
    const int v = std::min(static_cast<int>(std::floor((y + 0.5) * sy)), t.scaled_height - 1);
    for (int x = 0; x < c.width; ++x) {
      const int u = std::min(static_cast<int>(std::floor((x + 0.5) * sx)), t.scaled_width - 1);
      if (mask512.get(t.pad_left + u, t.pad_top + v)) out.set(c.x + x, c.y + y, true);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File I/O

RasterImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DecodeError("cannot decode " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw DecodeError("cannot decode " + path.string());
  RasterImage img(bgr.cols, bgr.rows);
  cv::Mat rgb(bgr.rows, bgr.cols, CV_8UC3, img.data().data());
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return img;
}

namespace {

void write_mat(const cv::Mat& mat, const std::filesystem::path& path) {
  bool ok = false;
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    ok = cv::imwrite(path.string(), mat);
  } catch (const std::exception& e) {
    throw WriteError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw WriteError("cannot write " + path.string());
}

}  // namespace

void write_image(const RasterImage& img, const std::filesystem::path& path) {
  const cv::Mat rgb(img.height(), img.width(), CV_8UC3,
                    const_cast<std::uint8_t*>(img.data().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  write_mat(bgr, path);
}

BinaryMask read_mask(const std::filesystem::path& path) {
  cv::Mat gray;
  try {
    gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception& e) {
    throw DecodeError("cannot decode mask " + path.string() + ": " + e.what());
  }
  if (gray.empty()) throw DecodeError("cannot decode mask " + path.string());
  if (!gray.isContinuous()) gray = gray.clone();
  return BinaryMask(gray.cols, gray.rows,
                    std::span<const std::uint8_t>(gray.data, gray.total()));
}

void write_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  cv::Mat out(mask.height(), mask.width(), CV_8UC1);
  const auto src = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) out.data[i] = src[i] ? 255 : 0;
  write_mat(out, path);
}

void write_probmap(const ProbMap& map, const std::filesystem::path& path) {
  cv::Mat out(map.height(), map.width(), CV_16UC1);
  const auto src = map.data();
  auto* dst = reinterpret_cast<std::uint16_t*>(out.data);
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint16_t>(std::lround(src[i] * 65535.0));
  }
  write_mat(out, path);
}

}  // namespace ulcerflow
