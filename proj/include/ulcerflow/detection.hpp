#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ulcerflow/imaging.hpp"

namespace ulcerflow {

inline constexpr double kDefaultConfThresh = 0.25;
inline constexpr double kDefaultNmsIou = 0.45;

/// Identity of a loaded inference model, logged once per run.
struct ModelInfo {
  std::string name;
  int input_size = kModelInputSize;
  std::string checksum;  // sha256 of the model file, hex; empty for in-process models
};

/// Wound ROI detector. Implementations own their pre/post-processing and
/// return boxes in full-frame pixel coordinates. Must be deterministic.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;

  virtual ModelInfo info() const = 0;

  /// True when concurrent calls to detect() on one instance are unsafe; the
  /// pipeline then creates one instance per worker.
  virtual bool exclusive() const { return false; }

  /// Raw (pre-NMS) detections. Throws BackendError on model failure.
  virtual std::vector<BBoxDetection> detect(const RasterImage& img,
                                            std::string_view image_id) const = 0;
};

/// Scripted detector for tests and model-free runs. Images without a script
/// entry get `default_boxes`, or a single full-frame box when
/// `full_frame_default` is set.
class MockDetector final : public DetectorBackend {
 public:
  using Script = std::map<std::string, std::vector<BBoxDetection>, std::less<>>;

  explicit MockDetector(Script script = {}, bool full_frame_default = true,
                        double full_frame_confidence = 0.9);

  /// Reads `{"<image_id>": [{"x":..,"y":..,"w":..,"h":..,"confidence":..}, ...]}`.
  static MockDetector from_json_file(const std::filesystem::path& path,
                                     bool full_frame_default = true);

  ModelInfo info() const override;
  std::vector<BBoxDetection> detect(const RasterImage& img,
                                    std::string_view image_id) const override;

 private:
  Script script_;
  bool full_frame_default_;
  double full_frame_confidence_;
};

/// YOLO-family ONNX detector run through OpenCV's DNN module.
///
/// Expects a single float output of shape (1, 4+C, N) or (1, N, 4+C) with
/// rows (cx, cy, w, h, class scores...) in 512x512 letterboxed input pixels.
/// The input is RGB scaled to [0,1], letterboxed with gray 114.
class OnnxDetector final : public DetectorBackend {
 public:
  explicit OnnxDetector(const std::filesystem::path& model_path);
  ~OnnxDetector() override;

  ModelInfo info() const override { return info_; }
  bool exclusive() const override { return true; }
  std::vector<BBoxDetection> detect(const RasterImage& img,
                                    std::string_view image_id) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ModelInfo info_;
};

/// Decodes a raw YOLO output tensor (already letterbox-space) into
/// full-frame boxes. `dims` is the tensor shape, batch first.
std::vector<BBoxDetection> decode_yolo_output(std::span<const float> values,
                                              std::span<const int> dims,
                                              const RoiTransform& letterbox,
                                              double min_confidence);

/// Greedy NMS. Output is sorted by descending confidence (ties: larger area,
/// then smaller x, then smaller y) and no two kept boxes overlap above
/// `iou_thresh`.
std::vector<BBoxDetection> nms(std::vector<BBoxDetection> dets,
                               double iou_thresh = kDefaultNmsIou);

/// Detector call followed by confidence filtering and NMS.
std::vector<BBoxDetection> run_detector(const DetectorBackend& backend,
                                        const RasterImage& img,
                                        std::string_view image_id = {},
                                        double conf_thresh = kDefaultConfThresh,
                                        double iou_thresh = kDefaultNmsIou);

/// Highest-confidence box; ties go to the larger area, then smaller (x,y).
/// An empty list yields no ROI, which the pipeline records as a detection failure.
std::optional<BBoxDetection> select_primary_roi(const std::vector<BBoxDetection>& dets);

/// Canonical detection order used by nms() and select_primary_roi().
bool detection_precedes(const BBoxDetection& a, const BBoxDetection& b);

/// Hex sha256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace ulcerflow
