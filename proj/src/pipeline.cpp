#include "ulcerflow/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "ulcerflow/errors.hpp"

namespace ulcerflow {

namespace {

using json = nlohmann::json;

void check_unit_interval(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0,1], got " + std::to_string(v));
  }
}

std::string safe_file_stem(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

json box_json(const BBoxDetection& b) {
  return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"confidence", b.confidence}};
}

BBoxDetection box_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
          j.at("h").get<double>(), j.at("confidence").get<double>()};
}

std::string to_string(CalibrationSource s) {
  return s == CalibrationSource::manifest ? "manifest" : "ruler";
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}

  template <typename F>
  auto operator()(const std::string& stage, F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Record {
      std::map<std::string, double>& sink;
      const std::string& stage;
      std::chrono::steady_clock::time_point t0;
      ~Record() {
        sink[stage] = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      }
    } record{sink_, stage, t0};
    return fn();
  }

 private:
  std::map<std::string, double>& sink_;
};

}  // namespace

// ---------------------------------------------------------------------------
// PipelineConfig

void PipelineConfig::validate() const {
  check_unit_interval(conf_thresh, "conf_thresh");
  check_unit_interval(nms_iou, "nms_iou");
  check_unit_interval(margin, "margin");
  check_unit_interval(binarize_thresh, "binarize_thresh");
  check_unit_interval(overlay_alpha, "overlay_alpha");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (refine.min_area_px < 0) throw ConfigError("refine.min_area_px must be >= 0");
  if (detector_model.empty()) throw ConfigError("detector_model must be set");
  if (segmenter_model.empty()) throw ConfigError("segmenter_model must be set");
  (void)scale();
}

SizeGradeScale PipelineConfig::scale() const {
  if (custom_grade_scale) return SizeGradeScale::from_json(*custom_grade_scale);
  return SizeGradeScale::by_id(grade_scale);
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  static const std::set<std::string> kKeys = {
      "detector_model", "mock_script",   "segmenter_model",  "segmenter_activation",
      "segmenter_normalization", "fallback", "conf_thresh", "nms_iou",
      "margin",         "binarize_thresh", "refine",         "tta",
      "tta_flips",      "resize",        "grade_scale",      "tissue",
      "workers",        "output_dir",    "write_overlays",   "dump_probmaps",
      "overlay_alpha",  "overlay_color"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.contains(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  PipelineConfig c;
  try {
    c.detector_model = j.value("detector_model", c.detector_model);
    c.mock_script = j.value("mock_script", c.mock_script);
    c.segmenter_model = j.value("segmenter_model", c.segmenter_model);
    if (j.contains("segmenter_activation")) {
      const auto a = j.at("segmenter_activation").get<std::string>();
      if (a == "none") {
        c.segmenter_activation = OutputActivation::none;
      } else if (a == "sigmoid") {
        c.segmenter_activation = OutputActivation::sigmoid;
      } else {
        throw ConfigError("segmenter_activation must be none|sigmoid");
      }
    }
    if (j.contains("segmenter_normalization")) {
      const auto n = j.at("segmenter_normalization").get<std::string>();
      if (n == "unit") {
        c.segmenter_normalization = InputNormalization::unit;
      } else if (n == "imagenet") {
        c.segmenter_normalization = InputNormalization::imagenet;
      } else {
        throw ConfigError("segmenter_normalization must be unit|imagenet");
      }
    }
    if (j.contains("fallback")) {
      const auto& f = j.at("fallback");
      c.fallback.gain = f.value("gain", c.fallback.gain);
      c.fallback.center = f.value("center", c.fallback.center);
    }
    c.conf_thresh = j.value("conf_thresh", c.conf_thresh);
    c.nms_iou = j.value("nms_iou", c.nms_iou);
    c.margin = j.value("margin", c.margin);
    c.binarize_thresh = j.value("binarize_thresh", c.binarize_thresh);
    if (j.contains("refine")) {
      const auto& r = j.at("refine");
      c.refine.keep_largest = r.value("keep_largest", c.refine.keep_largest);
      c.refine.fill_holes = r.value("fill_holes", c.refine.fill_holes);
      c.refine.min_area_px = r.value("min_area_px", c.refine.min_area_px);
    }
    c.tta = j.value("tta", c.tta);
    if (j.contains("tta_flips")) {
      c.tta_flips.clear();
      for (const auto& f : j.at("tta_flips")) c.tta_flips.push_back(parse_flip(f.get<std::string>()));
    }
    if (j.contains("resize")) c.resize = parse_resize_policy(j.at("resize").get<std::string>());
    if (j.contains("grade_scale")) {
      const auto& g = j.at("grade_scale");
      if (g.is_string()) {
        c.grade_scale = g.get<std::string>();
      } else {
        c.custom_grade_scale = g;
        c.grade_scale = g.value("id", std::string("custom"));
      }
    }
    if (j.contains("tissue")) {
      const auto& t = j.at("tissue");
      c.tissue.necrosis_max_luma = t.value("necrosis_max_luma", c.tissue.necrosis_max_luma);
      c.tissue.granulation_min_red_margin =
          t.value("granulation_min_red_margin", c.tissue.granulation_min_red_margin);
      c.tissue.exudate_min_yellow = t.value("exudate_min_yellow", c.tissue.exudate_min_yellow);
      c.tissue.exudate_min_rg = t.value("exudate_min_rg", c.tissue.exudate_min_rg);
    }
    c.workers = j.value("workers", c.workers);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.write_overlays = j.value("write_overlays", c.write_overlays);
    c.dump_probmaps = j.value("dump_probmaps", c.dump_probmaps);
    c.overlay_alpha = j.value("overlay_alpha", c.overlay_alpha);
    if (j.contains("overlay_color")) {
      const auto rgb = j.at("overlay_color").get<std::vector<int>>();
      if (rgb.size() != 3) throw ConfigError("overlay_color must be [r,g,b]");
      for (int v : rgb) {
        if (v < 0 || v > 255) throw ConfigError("overlay_color components must be 0..255");
      }
      c.overlay_color = {static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                         static_cast<std::uint8_t>(rgb[2])};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json PipelineConfig::to_json() const {
  json flips = json::array();
  for (Flip f : tta_flips) flips.push_back(f == Flip::horizontal ? "horizontal" : "vertical");
  json j = {
      {"detector_model", detector_model},
      {"mock_script", mock_script},
      {"segmenter_model", segmenter_model},
      {"segmenter_activation",
       segmenter_activation == OutputActivation::sigmoid ? "sigmoid" : "none"},
      {"segmenter_normalization",
       segmenter_normalization == InputNormalization::unit ? "unit" : "imagenet"},
      {"fallback", {{"gain", fallback.gain}, {"center", fallback.center}}},
      {"conf_thresh", conf_thresh},
      {"nms_iou", nms_iou},
      {"margin", margin},
      {"binarize_thresh", binarize_thresh},
      {"refine",
       {{"keep_largest", refine.keep_largest},
        {"fill_holes", refine.fill_holes},
        {"min_area_px", refine.min_area_px}}},
      {"tta", tta},
      {"tta_flips", flips},
      {"resize", to_string(resize)},
      {"tissue",
       {{"necrosis_max_luma", tissue.necrosis_max_luma},
        {"granulation_min_red_margin", tissue.granulation_min_red_margin},
        {"exudate_min_yellow", tissue.exudate_min_yellow},
        {"exudate_min_rg", tissue.exudate_min_rg}}},
      {"workers", workers},
      {"output_dir", output_dir},
      {"write_overlays", write_overlays},
      {"dump_probmaps", dump_probmaps},
      {"overlay_alpha", overlay_alpha},
      {"overlay_color", {overlay_color.r, overlay_color.g, overlay_color.b}},
  };
  if (custom_grade_scale) {
    j["grade_scale"] = *custom_grade_scale;
  } else {
    j["grade_scale"] = grade_scale;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Manifest

Site parse_site(const std::string& name) {
  if (name == "foot") return Site::foot;
  if (name == "sacrum") return Site::sacrum;
  if (name == "trochanter") return Site::trochanter;
  if (name == "other") return Site::other;
  throw ConfigError("unknown site '" + name + "' (expected foot|sacrum|trochanter|other)");
}

std::string to_string(Site site) {
  switch (site) {
    case Site::foot: return "foot";
    case Site::sacrum: return "sacrum";
    case Site::trochanter: return "trochanter";
    case Site::other: return "other";
  }
  return "other";
}

std::optional<Calibration> ManifestRow::calibration() const {
  return resolve_calibration(pixels_per_cm, ruler);
}

Manifest Manifest::load(const std::filesystem::path& csv_path, bool check_paths) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open manifest " + csv_path.string());
  const std::filesystem::path base = csv_path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  std::string line;
  if (!std::getline(in, line)) throw ConfigError("manifest " + csv_path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw ConfigError("manifest header must be exactly '" + std::string(kManifestHeader) + "'");
  }

  Manifest m;
  std::set<std::string> ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = csv_path.string() + ":" + std::to_string(line_no);
    if (f.size() != 6) throw ConfigError(where + ": expected 6 fields");
    ManifestRow row;
    row.image_id = f[0];
    if (row.image_id.empty()) throw ConfigError(where + ": empty image_id");
    if (!ids.insert(row.image_id).second) {
      throw ConfigError(where + ": duplicate image_id '" + row.image_id + "'");
    }
    row.path = resolve(f[1]);
    row.site = parse_site(f[2]);
    try {
      if (!f[3].empty()) row.pixels_per_cm = calibration_from_manifest(std::stod(f[3])).pixels_per_cm;
      if (!f[4].empty()) {
        std::istringstream rs(f[4]);
        RulerAnnotation r;
        if (!(rs >> r.p1.x >> r.p1.y >> r.p2.x >> r.p2.y >> r.known_cm)) {
          throw ConfigError(where + ": ruler_points must be 'x1 y1 x2 y2 known_cm'");
        }
        (void)calibration_from_ruler(r.p1, r.p2, r.known_cm);
        row.ruler = r;
      }
    } catch (const std::logic_error&) {
      throw ConfigError(where + ": malformed number");
    } catch (const InvalidCalibration& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!f[5].empty()) row.gt_mask_path = resolve(f[5]);
    if (check_paths) {
      if (!std::filesystem::exists(row.path)) {
        throw ConfigError(where + ": image not found: " + row.path.string());
      }
      if (row.gt_mask_path && !std::filesystem::exists(*row.gt_mask_path)) {
        throw ConfigError(where + ": ground-truth mask not found: " + row.gt_mask_path->string());
      }
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void Manifest::save(const std::filesystem::path& csv_path) const {
  std::ofstream out(csv_path);
  if (!out) throw WriteError("cannot write manifest " + csv_path.string());
  out.precision(17);
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    out << detail::quote_csv_field(r.image_id) << ',' << detail::quote_csv_field(r.path.string())
        << ',' << to_string(r.site) << ',';
    if (r.pixels_per_cm) out << *r.pixels_per_cm;
    out << ',';
    if (r.ruler) {
      out << r.ruler->p1.x << ' ' << r.ruler->p1.y << ' ' << r.ruler->p2.x << ' '
          << r.ruler->p2.y << ' ' << r.ruler->known_cm;
    }
    out << ',';
    if (r.gt_mask_path) out << detail::quote_csv_field(r.gt_mask_path->string());
    out << '\n';
  }
  if (!out) throw WriteError("cannot write manifest " + csv_path.string());
}

// ---------------------------------------------------------------------------
// Records

std::string to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::success: return "success";
    case RecordStatus::detection_failure: return "detection_failure";
    case RecordStatus::decode_error: return "decode_error";
    case RecordStatus::backend_error: return "backend_error";
  }
  return "backend_error";
}

RecordStatus parse_record_status(const std::string& s) {
  if (s == "success") return RecordStatus::success;
  if (s == "detection_failure") return RecordStatus::detection_failure;
  if (s == "decode_error") return RecordStatus::decode_error;
  if (s == "backend_error") return RecordStatus::backend_error;
  throw ConfigError("unknown record status '" + s + "'");
}

const std::vector<std::string>& detection_failure_vocabulary() {
  static const std::vector<std::string> kVocabulary = {
      "Lack of clear wound feature", "Blurred boundary", "Unrecognizable structure",
      "No prominent characteristics", "No visual distinction"};
  return kVocabulary;
}

json PipelineRecord::to_json(bool with_timings) const {
  json j = {{"image_id", image_id},
            {"site", to_string(site)},
            {"status", to_string(status)},
            {"image_size", {image_width, image_height}},
            {"failure_note", failure_note}};
  if (detection) j["detection"] = box_json(*detection);
  json dets = json::array();
  for (const auto& d : all_detections) dets.push_back(box_json(d));
  j["detections"] = std::move(dets);
  if (transform) {
    const auto& t = *transform;
    j["transform"] = {{"crop", {t.crop.x, t.crop.y, t.crop.width, t.crop.height}},
                      {"scale", t.scale},
                      {"scaled_size", {t.scaled_width, t.scaled_height}},
                      {"pad", {t.pad_left, t.pad_top}}};
  }
  if (mask_path) j["mask_path"] = *mask_path;
  if (pixel_measurements) {
    j["pixel_measurements"] = {{"area_px", pixel_measurements->area_px},
                               {"bbox_width_px", pixel_measurements->bbox_width_px},
                               {"bbox_height_px", pixel_measurements->bbox_height_px}};
  }
  if (calibration) {
    j["calibration"] = {{"pixels_per_cm", calibration->pixels_per_cm},
                        {"source", to_string(calibration->source)}};
  }
  if (measurements) j["measurements"] = ulcerflow::to_json(*measurements);
  if (grade) j["grade"] = *grade;
  if (designr) j["designr"] = *designr;
  if (with_timings) j["timings_ms"] = timings_ms;
  return j;
}

PipelineRecord PipelineRecord::from_json(const json& j) {
  PipelineRecord r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.site = parse_site(j.at("site").get<std::string>());
    r.status = parse_record_status(j.at("status").get<std::string>());
    if (j.contains("image_size")) {
      r.image_width = j.at("image_size").at(0).get<int>();
      r.image_height = j.at("image_size").at(1).get<int>();
    }
    r.failure_note = j.value("failure_note", std::string());
    if (j.contains("detection")) r.detection = box_from_json(j.at("detection"));
    if (j.contains("detections")) {
      for (const auto& d : j.at("detections")) r.all_detections.push_back(box_from_json(d));
    }
    if (j.contains("transform")) {
      const auto& t = j.at("transform");
      RoiTransform rt;
      rt.crop = {t.at("crop").at(0).get<int>(), t.at("crop").at(1).get<int>(),
                 t.at("crop").at(2).get<int>(), t.at("crop").at(3).get<int>()};
      rt.scale = t.at("scale").get<double>();
      rt.scaled_width = t.at("scaled_size").at(0).get<int>();
      rt.scaled_height = t.at("scaled_size").at(1).get<int>();
      rt.pad_left = t.at("pad").at(0).get<int>();
      rt.pad_top = t.at("pad").at(1).get<int>();
      r.transform = rt;
    }
    if (j.contains("mask_path")) r.mask_path = j.at("mask_path").get<std::string>();
    if (j.contains("pixel_measurements")) {
      const auto& p = j.at("pixel_measurements");
      r.pixel_measurements = PixelMeasurements{p.at("area_px").get<std::size_t>(),
                                               p.at("bbox_width_px").get<int>(),
                                               p.at("bbox_height_px").get<int>()};
    }
    if (j.contains("calibration")) {
      const auto& c = j.at("calibration");
      r.calibration = Calibration{c.at("pixels_per_cm").get<double>(),
                                  c.at("source").get<std::string>() == "ruler"
                                      ? CalibrationSource::ruler
                                      : CalibrationSource::manifest};
    }
    if (j.contains("measurements")) {
      const auto& m = j.at("measurements");
      r.measurements = WoundMeasurements{m.at("area_cm2").get<double>(),
                                         m.at("major_axis_cm").get<double>(),
                                         m.at("minor_axis_cm").get<double>()};
    }
    if (j.contains("grade")) r.grade = j.at("grade").get<std::string>();
    if (j.contains("designr")) r.designr = j.at("designr");
    if (j.contains("timings_ms")) r.timings_ms = j.at("timings_ms").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed record: ") + e.what());
  }
  return r;
}

SuccessRate success_rate(std::span<const PipelineRecord> records) {
  const auto flags = std::make_unique<bool[]>(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) flags[i] = records[i].succeeded();
  return success_rate(std::span<const bool>(flags.get(), records.size()));
}

std::vector<PipelineRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open records " + path.string());
  std::vector<PipelineRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(PipelineRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError("malformed line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_records_jsonl(std::span<const PipelineRecord> records,
                         const std::filesystem::path& path, bool with_timings) {
  std::ofstream out(path);
  if (!out) throw WriteError("cannot write " + path.string());
  for (const auto& r : records) out << r.to_json(with_timings).dump() << '\n';
  if (!out) throw WriteError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Execution

BackendSet make_backends(const PipelineConfig& cfg) {
  BackendSet set;
  if (cfg.detector_model == "mock") {
    const std::string script = cfg.mock_script;
    set.make_detector = [script]() -> std::unique_ptr<DetectorBackend> {
      if (script.empty()) return std::make_unique<MockDetector>();
      return std::make_unique<MockDetector>(MockDetector::from_json_file(script));
    };
  } else {
    const std::filesystem::path path = cfg.detector_model;
    set.make_detector = [path]() -> std::unique_ptr<DetectorBackend> {
      return std::make_unique<OnnxDetector>(path);
    };
  }
  if (cfg.segmenter_model == "fallback") {
    const FallbackParams params = cfg.fallback;
    set.make_segmenter = [params]() -> std::unique_ptr<SegmenterBackend> {
      return std::make_unique<FallbackSegmenter>(params);
    };
  } else {
    const std::filesystem::path path = cfg.segmenter_model;
    const auto act = cfg.segmenter_activation;
    const auto norm = cfg.segmenter_normalization;
    set.make_segmenter = [path, act, norm]() -> std::unique_ptr<SegmenterBackend> {
      return std::make_unique<OnnxSegmenter>(path, act, norm);
    };
  }
  return set;
}

PipelineOutcome run_single_image(const RasterImage& img, const ManifestRow& row,
                                 const PipelineConfig& cfg, const DetectorBackend& detector,
                                 const SegmenterBackend& segmenter) {
  PipelineOutcome out;
  PipelineRecord& rec = out.record;
  rec.image_id = row.image_id;
  rec.site = row.site;
  rec.image_width = img.width();
  rec.image_height = img.height();
  StageTimer timed(rec.timings_ms);

  auto fail = [&](RecordStatus status, std::string note) {
    rec.status = status;
    rec.failure_note = std::move(note);
    out.mask.reset();
    return std::move(out);
  };

  try {
    rec.all_detections = timed("detect", [&] {
      return run_detector(detector, img, row.image_id, cfg.conf_thresh, cfg.nms_iou);
    });
  } catch (const std::exception& e) {
    return fail(RecordStatus::backend_error, std::string("detector: ") + e.what());
  }
  rec.detection = select_primary_roi(rec.all_detections);
  if (!rec.detection) {
    return fail(RecordStatus::detection_failure, detection_failure_vocabulary().front());
  }

  Letterboxed roi{RasterImage(1, 1), {}};
  try {
    roi = timed("crop_resize", [&] {
      const Crop crop = crop_with_margin(img, *rec.detection, cfg.margin);
      return letterbox_to_512(crop.image, crop.rect.x, crop.rect.y, cfg.resize);
    });
  } catch (const std::exception& e) {
    return fail(RecordStatus::backend_error, std::string("roi: ") + e.what());
  }
  rec.transform = roi.transform;

  try {
    out.probmap = timed("segment", [&] {
      return cfg.tta ? tta_segment(segmenter, roi.image, cfg.tta_flips)
                     : run_segmenter(segmenter, roi.image);
    });
  } catch (const std::exception& e) {
    return fail(RecordStatus::backend_error, std::string("segmenter: ") + e.what());
  }

  const BinaryMask mask512 = timed("refine", [&] {
    return refine_mask(binarize(*out.probmap, cfg.binarize_thresh), cfg.refine);
  });
  out.mask = timed("project", [&] {
    return project_mask_to_full(mask512, roi.transform, img.width(), img.height());
  });

  try {
    timed("measure", [&] {
      rec.pixel_measurements = measure_pixels(*out.mask);
      rec.calibration = row.calibration();
      const SizeGradeScale scale = cfg.scale();
      if (rec.calibration) {
        rec.measurements = to_physical(*rec.pixel_measurements, *rec.calibration);
        rec.grade = grade_size(*rec.measurements, scale);
      }
      rec.designr = to_json(designr_report(*out.mask, img, rec.calibration, scale, cfg.tissue));
    });
  } catch (const std::exception& e) {
    return fail(RecordStatus::backend_error, std::string("measure: ") + e.what());
  }
  rec.status = RecordStatus::success;
  if (!rec.calibration) rec.failure_note = "uncalibrated: size not graded";
  return out;
}

PipelineOutcome run_single(const ManifestRow& row, const PipelineConfig& cfg,
                           const DetectorBackend& detector, const SegmenterBackend& segmenter) {
  std::map<std::string, double> decode_time;
  std::optional<RasterImage> img;
  try {
    img = StageTimer(decode_time)("decode", [&] { return read_image(row.path); });
  } catch (const std::exception& e) {
    PipelineOutcome out;
    out.record.image_id = row.image_id;
    out.record.site = row.site;
    out.record.status = RecordStatus::decode_error;
    out.record.failure_note = e.what();
    out.record.timings_ms = decode_time;
    return out;
  }
  PipelineOutcome out = run_single_image(*img, row, cfg, detector, segmenter);
  out.record.timings_ms.merge(decode_time);
  out.image = std::move(img);
  return out;
}

bool BatchSummary::has_process_errors() const {
  auto count = [&](RecordStatus s) {
    const auto it = status_counts.find(to_string(s));
    return it == status_counts.end() ? 0 : it->second;
  };
  return count(RecordStatus::decode_error) + count(RecordStatus::backend_error) > 0;
}

json BatchSummary::to_json() const {
  json models_json = json::array();
  for (const auto& m : models) {
    models_json.push_back({{"name", m.name}, {"input_size", m.input_size}, {"checksum", m.checksum}});
  }
  return {{"total", success.total()},
          {"successes", success.successes},
          {"failures", success.failures},
          {"rate", success.rate},
          {"success_rate", success.text()},
          {"status_counts", status_counts},
          {"failure_notes", failure_notes},
          {"models", models_json}};
}

BatchSummary summarize(std::span<const PipelineRecord> records, std::vector<ModelInfo> models) {
  BatchSummary s;
  s.success = success_rate(records);
  for (RecordStatus st : {RecordStatus::success, RecordStatus::detection_failure,
                          RecordStatus::decode_error, RecordStatus::backend_error}) {
    s.status_counts[to_string(st)] = 0;
  }
  for (const auto& r : records) {
    ++s.status_counts[to_string(r.status)];
    if (!r.succeeded()) ++s.failure_notes[r.failure_note];
  }
  s.models = std::move(models);
  return s;
}

RasterImage blend_overlay(const RasterImage& img, const BinaryMask& mask, double alpha, Rgb color) {
  if (img.width() != mask.width() || img.height() != mask.height()) {
    throw ShapeError("overlay: image and mask sizes differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("overlay alpha must lie in [0,1]");
  RasterImage out = img;
  const std::uint8_t col[3] = {color.r, color.g, color.b};
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!mask.get(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        const double v = (1.0 - alpha) * img.at(x, y, c) + alpha * col[c];
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

void emit_overlay(const RasterImage& img, const BinaryMask& mask, double alpha,
                  const std::filesystem::path& out_path, Rgb color) {
  write_image(blend_overlay(img, mask, alpha, color), out_path);
}

namespace {

void persist_outputs(PipelineOutcome& o, const PipelineConfig& cfg) {
  const std::filesystem::path out_dir = cfg.output_dir;
  const std::string stem = safe_file_stem(o.record.image_id);
  if (o.mask) {
    const std::string rel = "masks/" + stem + ".png";
    write_mask(*o.mask, out_dir / rel);
    o.record.mask_path = rel;
    if (cfg.write_overlays && o.image) {
      emit_overlay(*o.image, *o.mask, cfg.overlay_alpha, out_dir / "overlays" / (stem + ".png"),
                   cfg.overlay_color);
    }
  }
  if (cfg.dump_probmaps && o.probmap) {
    write_probmap(*o.probmap, out_dir / "probmaps" / (stem + ".png"));
  }
}

}  // namespace

BatchResult run_batch(const Manifest& manifest, const PipelineConfig& cfg,
                      const BackendSet& backends) {
  cfg.validate();
  if (manifest.rows.empty()) throw EmptyInput("manifest has no rows");
  const std::size_t n = manifest.rows.size();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), n);

  std::unique_ptr<DetectorBackend> shared_det = backends.make_detector();
  std::unique_ptr<SegmenterBackend> shared_seg = backends.make_segmenter();
  std::vector<ModelInfo> models = {shared_det->info(), shared_seg->info()};

  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);

  std::vector<PipelineRecord> records(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&](std::size_t worker) {
    try {
      std::unique_ptr<DetectorBackend> own_det;
      std::unique_ptr<SegmenterBackend> own_seg;
      if (worker > 0 && shared_det->exclusive()) own_det = backends.make_detector();
      if (worker > 0 && shared_seg->exclusive()) own_seg = backends.make_segmenter();
      const DetectorBackend& det = own_det ? *own_det : *shared_det;
      const SegmenterBackend& seg = own_seg ? *own_seg : *shared_seg;
      for (std::size_t i = next++; i < n; i = next++) {
        PipelineOutcome o = run_single(manifest.rows[i], cfg, det, seg);
        if (!cfg.output_dir.empty()) persist_outputs(o, cfg);
        records[i] = std::move(o.record);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = n;
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  if (error) std::rethrow_exception(error);

  BatchResult result{std::move(records), {}};
  result.summary = summarize(result.records, std::move(models));
  if (!cfg.output_dir.empty()) {
    const std::filesystem::path out_dir = cfg.output_dir;
    write_records_jsonl(result.records, out_dir / "records.jsonl");
    std::ofstream s(out_dir / "summary.json");
    json sj = result.summary.to_json();
    sj["config"] = cfg.to_json();
    s << sj.dump(2) << '\n';
    if (!s) throw WriteError("cannot write " + (out_dir / "summary.json").string());
  }
  return result;
}

}  // namespace ulcerflow
