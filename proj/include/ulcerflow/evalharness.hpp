#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ulcerflow/designr.hpp"
#include "ulcerflow/metrics.hpp"
#include "ulcerflow/pipeline.hpp"

namespace ulcerflow {

/// One image to score: pipeline outcome plus ground truth.
struct EvalSample {
  std::string image_id;
  Site site = Site::other;
  bool succeeded = false;
  std::optional<BinaryMask> prediction;  // full frame; required when succeeded
  std::optional<BinaryMask> ground_truth;
  std::optional<Calibration> calibration;
};

/// Per-image scores, the unit of aggregation.
struct ImageScore {
  std::string image_id;
  Site site = Site::other;
  bool succeeded = false;
  std::optional<OverlapScores> overlap;
  std::optional<double> area_abs_error_cm2;
  std::optional<bool> grade_match;
};

/// Scores one sample. Prediction and ground truth are graded with the same
/// scale and calibration. Throws MissingGroundTruth for a successful sample
/// without ground truth.
ImageScore score_sample(const EvalSample& sample, const SizeGradeScale& scale);

struct SiteStats {
  Site site = Site::other;
  std::size_t total = 0;       // images of this site
  std::size_t evaluated = 0;   // successes with overlap scores
  std::size_t both_empty = 0;  // evaluated images where prediction and gt are empty
  std::optional<SummaryStat> iou;
  std::optional<SummaryStat> dice;

  double coverage() const {
    return total == 0 ? 0.0 : static_cast<double>(evaluated) / static_cast<double>(total);
  }
};

struct SiteDelta {
  Site site = Site::other;
  double iou_pp = 0.0;   // (B - A) * 100
  double dice_pp = 0.0;
};

struct EvalReport {
  std::vector<SiteStats> sites;  // foot, sacrum, trochanter, other; only sites present
  SuccessRate pipeline;
  std::optional<double> area_mae_cm2;
  std::size_t area_n = 0;
  std::optional<double> grade_accuracy;
  std::size_t grade_n = 0;
  std::string scale_id;
  std::string sd_kind = "sample";
  std::optional<std::vector<SiteDelta>> deltas_vs_baseline;

  const SiteStats* site(Site s) const;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// Aligned plain-text table: one column per site, rows IoU / Dice / coverage.
  std::string to_text() const;
};

/// Sequential fold of per-image scores into a report.
EvalReport aggregate(const std::vector<ImageScore>& scores, const std::string& scale_id,
                     SdKind sd_kind = SdKind::sample);

/// score_sample on each sample, then aggregate.
EvalReport evaluate(const std::vector<EvalSample>& samples, const SizeGradeScale& scale,
                    SdKind sd_kind = SdKind::sample);

/// Joins records with manifest rows by image id and loads predicted masks
/// (relative to `records_dir`) and ground-truth masks. Throws
/// MissingGroundTruth when a success has no gt_mask_path.
std::vector<EvalSample> load_eval_samples(const std::vector<PipelineRecord>& records,
                                          const Manifest& manifest,
                                          const std::filesystem::path& records_dir);

/// Per-site IoU/Dice mean differences B - A in percentage points. Throws
/// SiteMismatch unless both reports score the same sites.
std::vector<SiteDelta> compare(const EvalReport& a, const EvalReport& b);

/// Box covering a uniform random 25%..75% of the frame, fully inside it.
/// Deterministic for a given seed. Confidence is 1.
BBoxDetection random_roi_baseline(int frame_width, int frame_height, std::uint64_t seed);

/// Detector that ignores image content and returns random_roi_baseline()
/// seeded by `seed` mixed with the image id.
class RandomRoiDetector final : public DetectorBackend {
 public:
  explicit RandomRoiDetector(std::uint64_t seed) : seed_(seed) {}
  ModelInfo info() const override { return {"random-roi-baseline", kModelInputSize, ""}; }
  std::vector<BBoxDetection> detect(const RasterImage& img,
                                    std::string_view image_id) const override;

 private:
  std::uint64_t seed_;
};

using AnnotatedMask = std::pair<std::string, BinaryMask>;

/// Mean/SD of per-image Dice between two annotators. Pairs are matched by id;
/// throws ShapeError for unmatched ids or mismatched sizes.
SummaryStat annotation_agreement(const std::vector<AnnotatedMask>& rater_a,
                                 const std::vector<AnnotatedMask>& rater_b);

}  // namespace ulcerflow
