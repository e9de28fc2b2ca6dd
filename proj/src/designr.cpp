#include "ulcerflow/designr.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "ulcerflow/errors.hpp"

namespace ulcerflow {

Calibration calibration_from_manifest(double pixels_per_cm) {
  if (!std::isfinite(pixels_per_cm) || !(pixels_per_cm > 0.0)) {
    throw InvalidCalibration("pixels_per_cm must be a positive number");
  }
  return {pixels_per_cm, CalibrationSource::manifest};
}

Calibration calibration_from_ruler(Point p1, Point p2, double known_cm) {
  if (!std::isfinite(known_cm) || !(known_cm > 0.0)) {
    throw InvalidCalibration("ruler length must be > 0 cm");
  }
  const double d = std::hypot(p2.x - p1.x, p2.y - p1.y);
  if (!std::isfinite(d) || !(d > 0.0)) {
    throw InvalidCalibration("ruler end points coincide");
  }
  return {d / known_cm, CalibrationSource::ruler};
}

std::optional<Calibration> resolve_calibration(std::optional<double> pixels_per_cm,
                                               const std::optional<RulerAnnotation>& ruler) {
  if (pixels_per_cm) return calibration_from_manifest(*pixels_per_cm);
  if (ruler) return calibration_from_ruler(ruler->p1, ruler->p2, ruler->known_cm);
  return std::nullopt;
}

PixelMeasurements measure_pixels(const BinaryMask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  std::size_t count = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      ++count;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (count == 0) return {};
  return {count, x1 - x0 + 1, y1 - y0 + 1};
}

WoundMeasurements to_physical(const PixelMeasurements& px, const Calibration& cal) {
  if (!(cal.pixels_per_cm > 0.0)) throw InvalidCalibration("pixels_per_cm must be > 0");
  const double ppc = cal.pixels_per_cm;
  const double a = px.bbox_width_px / ppc;
  const double b = px.bbox_height_px / ppc;
  return {static_cast<double>(px.area_px) / (ppc * ppc), std::max(a, b), std::min(a, b)};
}

WoundMeasurements measure(const BinaryMask& mask, const Calibration& cal) {
  return to_physical(measure_pixels(mask), cal);
}

// ---------------------------------------------------------------------------
// Grading

SizeGradeScale::SizeGradeScale(std::string id, SizeMeasure measure,
                               std::vector<SizeGrade> grades)
    : id_(std::move(id)), measure_(measure), grades_(std::move(grades)) {
  if (grades_.empty()) throw ConfigError("grade scale '" + id_ + "' has no grades");
  for (std::size_t i = 1; i < grades_.size(); ++i) {
    if (!(grades_[i].upper_bound > grades_[i - 1].upper_bound)) {
      throw ConfigError("grade scale '" + id_ + "' bounds must strictly increase");
    }
  }
  if (!std::isinf(grades_.back().upper_bound) || grades_.back().upper_bound < 0) {
    throw ConfigError("grade scale '" + id_ + "' must end with an unbounded grade");
  }
}

SizeGradeScale SizeGradeScale::designr2020() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return SizeGradeScale("designr2020", SizeMeasure::major_x_minor,
                        {{"s3", 4}, {"s6", 16}, {"s8", 36}, {"s9", 64}, {"s12", 100},
                         {"S15", inf}});
}

SizeGradeScale SizeGradeScale::s1_s5() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return SizeGradeScale("s1-s5", SizeMeasure::area,
                        {{"S1", 4}, {"S2", 16}, {"S3", 64}, {"S4", 256}, {"S5", inf}});
}

SizeGradeScale SizeGradeScale::by_id(const std::string& id) {
  if (id == "designr2020") return designr2020();
  if (id == "s1-s5") return s1_s5();
  throw ConfigError("unknown grade scale '" + id + "' (expected designr2020|s1-s5)");
}

SizeGradeScale SizeGradeScale::from_json(const nlohmann::json& j) {
  try {
    const std::string m = j.at("measure").get<std::string>();
    SizeMeasure measure;
    if (m == "area") {
      measure = SizeMeasure::area;
    } else if (m == "major_x_minor") {
      measure = SizeMeasure::major_x_minor;
    } else {
      throw ConfigError("unknown size measure '" + m + "'");
    }
    std::vector<SizeGrade> grades;
    for (const auto& g : j.at("grades")) {
      SizeGrade grade{g.at("label").get<std::string>()};
      if (g.contains("upper_bound") && !g.at("upper_bound").is_null()) {
        grade.upper_bound = g.at("upper_bound").get<double>();
      }
      grades.push_back(std::move(grade));
    }
    return SizeGradeScale(j.value("id", std::string("custom")), measure, std::move(grades));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed grade scale: ") + e.what());
  }
}

double SizeGradeScale::measured_value(const WoundMeasurements& m) const {
  return measure_ == SizeMeasure::area ? m.area_cm2 : m.major_axis_cm * m.minor_axis_cm;
}

const std::string& SizeGradeScale::grade_for(double value) const {
  for (const auto& g : grades_) {
    if (value < g.upper_bound) return g.label;
  }
  return grades_.back().label;
}

std::string grade_size(const WoundMeasurements& m, const SizeGradeScale& scale) {
  return scale.grade_for(scale.measured_value(m));
}

// ---------------------------------------------------------------------------
// Report

std::string to_string(DimensionStatus s) {
  switch (s) {
    case DimensionStatus::computable: return "computable";
    case DimensionStatus::partial: return "partial";
    case DimensionStatus::not_computable: return "not_computable";
  }
  return "not_computable";
}

const DimensionEntry& DesignRReport::at(const std::string& dimension) const {
  for (const auto& e : entries) {
    if (e.dimension == dimension) return e;
  }
  throw InvalidArgument("no DESIGN-R dimension '" + dimension + "'");
}

TissueProxies tissue_proxies(const BinaryMask& mask, const RasterImage& image,
                             const TissueProxyParams& params) {
  if (mask.width() != image.width() || mask.height() != image.height()) {
    throw ShapeError("mask and image must share one frame");
  }
  std::size_t n = 0, dark = 0, red = 0, yellow = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      ++n;
      const double r = image.at(x, y, 0), g = image.at(x, y, 1), b = image.at(x, y, 2);
      const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      if (luma < params.necrosis_max_luma) ++dark;
      if (r - g >= params.granulation_min_red_margin &&
          r - b >= params.granulation_min_red_margin) {
        ++red;
      }
      if (std::min(r, g) - b >= params.exudate_min_yellow && r >= params.exudate_min_rg &&
          g >= params.exudate_min_rg) {
        ++yellow;
      }
    }
  }
  if (n == 0) return {};
  const double dn = static_cast<double>(n);
  return {dark / dn, red / dn, yellow / dn};
}

DesignRReport designr_report(const BinaryMask& mask, const RasterImage& image,
                             const std::optional<Calibration>& cal,
                             const SizeGradeScale& scale, const TissueProxyParams& params) {
  const TissueProxies proxies = tissue_proxies(mask, image, params);
  constexpr const char* kProxyNote = "partial (proxy): color-rule fraction of mask pixels, non-clinical";

  DimensionEntry size{"S", DimensionStatus::not_computable, std::nullopt, ""};
  if (cal) {
    const WoundMeasurements m = measure(mask, *cal);
    size.status = DimensionStatus::computable;
    nlohmann::json v = to_json(m);
    v["grade"] = grade_size(m, scale);
    v["scale"] = scale.id();
    size.value = std::move(v);
    size.note = "area from mask pixel count and calibration";
  } else {
    size.status = DimensionStatus::not_computable;
    size.note = "uncalibrated";
  }

  DesignRReport r;
  r.entries.push_back({"D", DimensionStatus::not_computable, std::nullopt,
                       "depth needs 3D information; a 2D mask carries none"});
  r.entries.push_back({"E", DimensionStatus::partial, nlohmann::json(proxies.exudate),
                       kProxyNote});
  r.entries.push_back(std::move(size));
  r.entries.push_back({"I", DimensionStatus::not_computable, std::nullopt,
                       "inflammation/infection is judged on periwound skin outside the mask"});
  r.entries.push_back({"G", DimensionStatus::partial, nlohmann::json(proxies.granulation),
                       kProxyNote});
  r.entries.push_back({"N", DimensionStatus::partial, nlohmann::json(proxies.necrosis),
                       kProxyNote});
  r.entries.push_back({"P", DimensionStatus::not_computable, std::nullopt,
                       "pockets need 3D evaluation or probing"});
  return r;
}

nlohmann::json to_json(const WoundMeasurements& m) {
  return {{"area_cm2", m.area_cm2},
          {"major_axis_cm", m.major_axis_cm},
          {"minor_axis_cm", m.minor_axis_cm}};
}

nlohmann::json to_json(const DesignRReport& report) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : report.entries) {
    nlohmann::json o = {{"dimension", e.dimension}, {"status", to_string(e.status)}};
    if (e.value) o["value"] = *e.value;
    o["note"] = e.note;
    arr.push_back(std::move(o));
  }
  return arr;
}

}  // namespace ulcerflow
