#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ulcerflow/designr.hpp"
#include "ulcerflow/detection.hpp"
#include "ulcerflow/imaging.hpp"
#include "ulcerflow/metrics.hpp"
#include "ulcerflow/segmentation.hpp"

namespace ulcerflow {

// ---------------------------------------------------------------------------
// Configuration

struct Rgb {
  std::uint8_t r = 255, g = 0, b = 0;
};

struct PipelineConfig {
  /// ONNX path, or "mock" for the scripted detector.
  std::string detector_model = "mock";
  /// Optional JSON script for the mock detector; unscripted images get a full-frame box.
  std::string mock_script;
  /// ONNX path, or "fallback" for the non-clinical redness segmenter.
  std::string segmenter_model = "fallback";
  OutputActivation segmenter_activation = OutputActivation::none;
  InputNormalization segmenter_normalization = InputNormalization::imagenet;
  FallbackParams fallback;

  double conf_thresh = kDefaultConfThresh;
  double nms_iou = kDefaultNmsIou;
  double margin = kDefaultCropMargin;
  double binarize_thresh = kDefaultBinarizeThresh;
  RefineOptions refine;
  bool tta = false;
  std::vector<Flip> tta_flips{Flip::horizontal};
  ResizePolicy resize = ResizePolicy::letterbox;

  std::string grade_scale = "designr2020";
  /// Overrides grade_scale when set (see SizeGradeScale::from_json).
  std::optional<nlohmann::json> custom_grade_scale;
  TissueProxyParams tissue;

  int workers = 1;
  std::string output_dir;
  bool write_overlays = true;
  bool dump_probmaps = false;
  double overlay_alpha = 0.4;
  Rgb overlay_color;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  SizeGradeScale scale() const;

  /// Unknown keys are rejected so typos do not silently fall back to defaults.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Manifest

enum class Site { foot, sacrum, trochanter, other };

Site parse_site(const std::string& name);
std::string to_string(Site site);
inline constexpr Site kAllSites[] = {Site::foot, Site::sacrum, Site::trochanter, Site::other};

struct ManifestRow {
  std::string image_id;
  std::filesystem::path path;
  Site site = Site::other;
  std::optional<double> pixels_per_cm;
  std::optional<RulerAnnotation> ruler;
  std::optional<std::filesystem::path> gt_mask_path;

  /// Manifest value first, then the ruler; throws InvalidCalibration on bad values.
  std::optional<Calibration> calibration() const;
};

inline constexpr const char* kManifestHeader =
    "image_id,path,site,pixels_per_cm,ruler_points,gt_mask_path";

struct Manifest {
  std::vector<ManifestRow> rows;

  /// CSV with the exact kManifestHeader. Relative paths resolve against the
  /// manifest's directory. `ruler_points` is "x1 y1 x2 y2 known_cm".
  /// Throws ConfigError on malformed rows, duplicate ids, or missing files.
  static Manifest load(const std::filesystem::path& csv_path, bool check_paths = true);
  void save(const std::filesystem::path& csv_path) const;
};

// ---------------------------------------------------------------------------
// Records

enum class RecordStatus { success, detection_failure, decode_error, backend_error };

std::string to_string(RecordStatus s);
RecordStatus parse_record_status(const std::string& s);

/// Canonical reasons used to bucket ROI detection failures in audits.
const std::vector<std::string>& detection_failure_vocabulary();

struct PipelineRecord {
  std::string image_id;
  Site site = Site::other;
  RecordStatus status = RecordStatus::backend_error;
  int image_width = 0;
  int image_height = 0;
  std::optional<BBoxDetection> detection;
  std::vector<BBoxDetection> all_detections;  // post-NMS, kept for audit
  std::optional<RoiTransform> transform;
  std::optional<std::string> mask_path;  // relative to the output directory
  std::optional<PixelMeasurements> pixel_measurements;
  std::optional<Calibration> calibration;
  std::optional<WoundMeasurements> measurements;  // requires a calibration
  std::optional<std::string> grade;
  std::optional<nlohmann::json> designr;
  std::string failure_note;
  std::map<std::string, double> timings_ms;

  bool succeeded() const { return status == RecordStatus::success; }

  /// Keys are emitted in sorted order. `with_timings=false` drops timings_ms.
  nlohmann::json to_json(bool with_timings = true) const;
  static PipelineRecord from_json(const nlohmann::json& j);
};

SuccessRate success_rate(std::span<const PipelineRecord> records);

// ---------------------------------------------------------------------------
// Execution

/// Backend instances for one worker.
struct BackendSet {
  std::function<std::unique_ptr<DetectorBackend>()> make_detector;
  std::function<std::unique_ptr<SegmenterBackend>()> make_segmenter;
};

/// Factories honoring cfg.detector_model / cfg.segmenter_model.
BackendSet make_backends(const PipelineConfig& cfg);

struct PipelineOutcome {
  PipelineRecord record;
  std::optional<BinaryMask> mask;     // full-frame, present on success
  std::optional<RasterImage> image;   // decoded input, kept for overlays
  std::optional<ProbMap> probmap;     // 512x512, present when segmentation ran
};

/// Runs every stage on an already decoded image. Never throws for per-image
/// problems; they become record statuses.
PipelineOutcome run_single_image(const RasterImage& img, const ManifestRow& row,
                                 const PipelineConfig& cfg, const DetectorBackend& detector,
                                 const SegmenterBackend& segmenter);

/// Decodes row.path, then run_single_image.
PipelineOutcome run_single(const ManifestRow& row, const PipelineConfig& cfg,
                           const DetectorBackend& detector, const SegmenterBackend& segmenter);

struct BatchSummary {
  SuccessRate success;
  std::map<std::string, std::size_t> status_counts;
  std::map<std::string, std::size_t> failure_notes;
  std::vector<ModelInfo> models;

  bool has_process_errors() const;
  nlohmann::json to_json() const;
};

BatchSummary summarize(std::span<const PipelineRecord> records,
                       std::vector<ModelInfo> models = {});

struct BatchResult {
  std::vector<PipelineRecord> records;  // manifest order
  BatchSummary summary;
};

/// Runs every manifest row on cfg.workers threads. When cfg.output_dir is set,
/// writes masks/, overlays/, records.jsonl and summary.json there.
/// Throws EmptyInput for an empty manifest.
BatchResult run_batch(const Manifest& manifest, const PipelineConfig& cfg,
                      const BackendSet& backends);

/// (1-alpha)*image + alpha*color inside the mask, rounded; untouched elsewhere.
RasterImage blend_overlay(const RasterImage& img, const BinaryMask& mask, double alpha,
                          Rgb color = {});

/// blend_overlay written as PNG. Throws WriteError on I/O failure.
void emit_overlay(const RasterImage& img, const BinaryMask& mask, double alpha,
                  const std::filesystem::path& out_path, Rgb color = {});

std::vector<PipelineRecord> read_records_jsonl(const std::filesystem::path& path);
void write_records_jsonl(std::span<const PipelineRecord> records,
                         const std::filesystem::path& path, bool with_timings = true);

}  // namespace ulcerflow
