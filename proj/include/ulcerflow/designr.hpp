#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ulcerflow/imaging.hpp"

namespace ulcerflow {

enum class CalibrationSource { manifest, ruler };

struct Calibration {
  double pixels_per_cm = 0.0;
  CalibrationSource source = CalibrationSource::manifest;
};

/// Throws InvalidCalibration unless pixels_per_cm is finite and > 0.
Calibration calibration_from_manifest(double pixels_per_cm);

/// pixels_per_cm = |p2 - p1| / known_cm. Throws InvalidCalibration for
/// coincident points or known_cm <= 0.
Calibration calibration_from_ruler(Point p1, Point p2, double known_cm);

/// Manifest value wins over a ruler annotation; neither yields nullopt.
struct RulerAnnotation {
  Point p1;
  Point p2;
  double known_cm = 0.0;
};
std::optional<Calibration> resolve_calibration(std::optional<double> pixels_per_cm,
                                               const std::optional<RulerAnnotation>& ruler);

/// Pixel-space extent of a mask: foreground count and bounding box.
struct PixelMeasurements {
  std::size_t area_px = 0;
  int bbox_width_px = 0;
  int bbox_height_px = 0;
};

PixelMeasurements measure_pixels(const BinaryMask& mask);

struct WoundMeasurements {
  double area_cm2 = 0.0;
  double major_axis_cm = 0.0;  // longer side of the axis-aligned bounding box
  double minor_axis_cm = 0.0;
};

WoundMeasurements to_physical(const PixelMeasurements& px, const Calibration& cal);
WoundMeasurements measure(const BinaryMask& mask, const Calibration& cal);

enum class SizeMeasure { area, major_x_minor };

struct SizeGrade {
  std::string label;
  double upper_bound = std::numeric_limits<double>::infinity();  // exclusive
};

/// Half-open bins [previous bound, upper_bound), ordered ascending.
class SizeGradeScale {
 public:
  /// Throws ConfigError unless bounds strictly increase and the last is +inf.
  SizeGradeScale(std::string id, SizeMeasure measure, std::vector<SizeGrade> grades);

  /// DESIGN-R 2020 size item on major x minor (cm^2): s3 <4, s6 <16, s8 <36,
  /// s9 <64, s12 <100, S15 otherwise.
  static SizeGradeScale designr2020();
  /// Five area bins of equal log width: S1 <4, S2 <16, S3 <64, S4 <256, S5.
  static SizeGradeScale s1_s5();
  /// Built-in scale by id ("designr2020" or "s1-s5"). Throws ConfigError.
  static SizeGradeScale by_id(const std::string& id);
  /// {"id":..., "measure":"area"|"major_x_minor", "grades":[{"label":..,"upper_bound":..|null}]}
  static SizeGradeScale from_json(const nlohmann::json& j);

  const std::string& id() const { return id_; }
  SizeMeasure measure() const { return measure_; }
  const std::vector<SizeGrade>& grades() const { return grades_; }

  double measured_value(const WoundMeasurements& m) const;
  const std::string& grade_for(double value) const;

 private:
  std::string id_;
  SizeMeasure measure_;
  std::vector<SizeGrade> grades_;
};

/// Label of the first bin whose upper bound exceeds the selected measure.
std::string grade_size(const WoundMeasurements& m, const SizeGradeScale& scale);

enum class DimensionStatus { computable, partial, not_computable };
std::string to_string(DimensionStatus s);

struct DimensionEntry {
  std::string dimension;  // "D", "E", "S", "I", "G", "N", "P"
  DimensionStatus status = DimensionStatus::not_computable;
  std::optional<nlohmann::json> value;
  std::string note;
};

struct DesignRReport {
  std::vector<DimensionEntry> entries;  // always D, E, S, I, G, N, P

  const DimensionEntry& at(const std::string& dimension) const;
};

/// Color rules for the within-mask tissue proxies. Non-clinical.
struct TissueProxyParams {
  double necrosis_max_luma = 60.0;      // Rec.601 luma below this counts as dark
  double granulation_min_red_margin = 40.0;  // R exceeds both G and B by this
  double exudate_min_yellow = 50.0;     // min(R,G) - B at least this
  double exudate_min_rg = 120.0;        // and both R and G at least this
};

struct TissueProxies {
  double necrosis = 0.0;
  double granulation = 0.0;
  double exudate = 0.0;
};

/// Fractions of mask pixels meeting each rule; all zero for an empty mask.
TissueProxies tissue_proxies(const BinaryMask& mask, const RasterImage& image,
                             const TissueProxyParams& params = {});

/// Per-dimension computability report. Without a calibration the Size entry
/// is not computable with note "uncalibrated".
DesignRReport designr_report(const BinaryMask& mask, const RasterImage& image,
                             const std::optional<Calibration>& cal,
                             const SizeGradeScale& scale,
                             const TissueProxyParams& params = {});

nlohmann::json to_json(const DesignRReport& report);
nlohmann::json to_json(const WoundMeasurements& m);

}  // namespace ulcerflow
