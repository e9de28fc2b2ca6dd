#include "ulcerflow/detection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <opencv2/dnn.hpp>

#include "ulcerflow/errors.hpp"

namespace ulcerflow {

bool detection_precedes(const BBoxDetection& a, const BBoxDetection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.area() != b.area()) return a.area() > b.area();
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  // Total order so permutations of equal-key inputs still sort identically.
  if (a.w != b.w) return a.w < b.w;
  return a.h < b.h;
}

std::vector<BBoxDetection> nms(std::vector<BBoxDetection> dets, double iou_thresh) {
  std::sort(dets.begin(), dets.end(), detection_precedes);
  std::vector<BBoxDetection> kept;
  kept.reserve(dets.size());
  for (const auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const BBoxDetection& k) {
      return box_iou(d, k) > iou_thresh;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<BBoxDetection> run_detector(const DetectorBackend& backend,
                                        const RasterImage& img, std::string_view image_id,
                                        double conf_thresh, double iou_thresh) {
  if (!(conf_thresh >= 0.0 && conf_thresh <= 1.0) || !(iou_thresh >= 0.0 && iou_thresh <= 1.0)) {
    throw InvalidArgument("detector thresholds must lie in [0,1]");
  }
  std::vector<BBoxDetection> raw = backend.detect(img, image_id);
  std::erase_if(raw, [&](const BBoxDetection& d) {
    return !(d.confidence >= conf_thresh) || !(d.w > 0.0) || !(d.h > 0.0);
  });
  return nms(std::move(raw), iou_thresh);
}

std::optional<BBoxDetection> select_primary_roi(const std::vector<BBoxDetection>& dets) {
  if (dets.empty()) return std::nullopt;
  return *std::min_element(dets.begin(), dets.end(), detection_precedes);
}

// ---------------------------------------------------------------------------
// MockDetector

MockDetector::MockDetector(Script script, bool full_frame_default,
                           double full_frame_confidence)
    : script_(std::move(script)),
      full_frame_default_(full_frame_default),
      full_frame_confidence_(full_frame_confidence) {}

MockDetector MockDetector::from_json_file(const std::filesystem::path& path,
                                          bool full_frame_default) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock detector script " + path.string());
  Script script;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& [id, boxes] : doc.items()) {
      auto& out = script[id];
      for (const auto& b : boxes) {
        out.push_back({b.at("x").get<double>(), b.at("y").get<double>(),
                       b.at("w").get<double>(), b.at("h").get<double>(),
                       b.value("confidence", 1.0)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed mock detector script " + path.string() + ": " + e.what());
  }
  return MockDetector(std::move(script), full_frame_default);
}

ModelInfo MockDetector::info() const { return {"mock-detector", kModelInputSize, ""}; }

std::vector<BBoxDetection> MockDetector::detect(const RasterImage& img,
                                                std::string_view image_id) const {
  if (auto it = script_.find(image_id); it != script_.end()) return it->second;
  if (!full_frame_default_) return {};
  return {{0.0, 0.0, static_cast<double>(img.width()), static_cast<double>(img.height()),
           full_frame_confidence_}};
}

// ---------------------------------------------------------------------------
// ONNX backend

std::vector<BBoxDetection> decode_yolo_output(std::span<const float> values,
                                              std::span<const int> dims,
                                              const RoiTransform& letterbox,
                                              double min_confidence) {
  if (dims.size() != 3 || dims[0] != 1) {
    throw BackendError("detector output must have shape (1, A, B)");
  }
  // Anchors outnumber attributes, which tells the layout apart.
  const bool channels_first = dims[1] < dims[2];
  const int attrs = channels_first ? dims[1] : dims[2];
  const int anchors = channels_first ? dims[2] : dims[1];
  if (attrs < 5) throw BackendError("detector output has fewer than 5 attributes per box");
  if (values.size() != static_cast<std::size_t>(attrs) * anchors) {
    throw BackendError("detector output size does not match its shape");
  }
  auto value = [&](int anchor, int attr) -> float {
    return channels_first ? values[static_cast<std::size_t>(attr) * anchors + anchor]
                          : values[static_cast<std::size_t>(anchor) * attrs + attr];
  };
  const double sx = letterbox.scale_x();
  const double sy = letterbox.scale_y();
  std::vector<BBoxDetection> out;
  for (int a = 0; a < anchors; ++a) {
    float best = 0.0f;
    for (int c = 4; c < attrs; ++c) best = std::max(best, value(a, c));
    if (!(best >= min_confidence)) continue;
    const double cx = value(a, 0), cy = value(a, 1), w = value(a, 2), h = value(a, 3);
    if (!(w > 0.0) || !(h > 0.0)) continue;
    BBoxDetection d;
    d.x = (cx - w / 2.0 - letterbox.pad_left) / sx + letterbox.crop.x;
    d.y = (cy - h / 2.0 - letterbox.pad_top) / sy + letterbox.crop.y;
    d.w = w / sx;
    d.h = h / sy;
    d.confidence = std::clamp(static_cast<double>(best), 0.0, 1.0);
    // Clip to the frame so downstream cropping sees in-bounds boxes.
    const double x1 = std::min(d.x + d.w, static_cast<double>(letterbox.crop.x + letterbox.crop.width));
    const double y1 = std::min(d.y + d.h, static_cast<double>(letterbox.crop.y + letterbox.crop.height));
    d.x = std::max(d.x, static_cast<double>(letterbox.crop.x));
    d.y = std::max(d.y, static_cast<double>(letterbox.crop.y));
    d.w = x1 - d.x;
    d.h = y1 - d.y;
    if (d.w > 0.0 && d.h > 0.0) out.push_back(d);
  }
  return out;
}

struct OnnxDetector::Impl {
  cv::dnn::Net net;
};

OnnxDetector::OnnxDetector(const std::filesystem::path& model_path)
    : impl_(std::make_unique<Impl>()) {
  try {
    impl_->net = cv::dnn::readNetFromONNX(model_path.string());
  } catch (const cv::Exception& e) {
    throw BackendError("cannot load detector model " + model_path.string() + ": " + e.what());
  }
  if (impl_->net.empty()) throw BackendError("empty detector model " + model_path.string());
  info_ = {model_path.filename().string(), kModelInputSize, sha256_file(model_path)};
}

OnnxDetector::~OnnxDetector() = default;

std::vector<BBoxDetection> OnnxDetector::detect(const RasterImage& img,
                                                std::string_view /*image_id*/) const {
  const Letterboxed lb = letterbox_to_512(img);
  const cv::Mat rgb(kModelInputSize, kModelInputSize, CV_8UC3,
                    const_cast<std::uint8_t*>(lb.image.data().data()));
  const cv::Mat blob = cv::dnn::blobFromImage(rgb, 1.0 / 255.0, {}, {}, false, false, CV_32F);
  cv::Mat out;
  try {
    impl_->net.setInput(blob);
    out = impl_->net.forward();
  } catch (const cv::Exception& e) {
    throw BackendError(std::string("detector inference failed: ") + e.what());
  }
  if (out.type() != CV_32F || !out.isContinuous()) {
    throw BackendError("detector output must be a contiguous float tensor");
  }
  const std::vector<int> dims(out.size.p, out.size.p + out.dims);
  return decode_yolo_output({out.ptr<float>(), out.total()}, dims, lb.transform, 0.0);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in.read(buf.data(), buf.size()) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

}  // namespace ulcerflow
