#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <fstream>

#include "ulcerflow/errors.hpp"
#include "ulcerflow/evalharness.hpp"
#include "ulcerflow/pipeline.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace ulcerflow;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

RasterImage to_image(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("image must be an (H, W, 3) uint8 array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return RasterImage(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

py::array_t<std::uint8_t> from_image(const RasterImage& img) {
  py::array_t<std::uint8_t> out({img.height(), img.width(), 3});
  std::memcpy(out.mutable_data(), img.data().data(), img.data().size());
  return out;
}

BinaryMask to_mask(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be a 2-D array");
  return BinaryMask(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                    {a.data(), static_cast<std::size_t>(a.size())});
}

py::array_t<bool> from_mask(const BinaryMask& m) {
  py::array_t<bool> out({m.height(), m.width()});
  auto* dst = out.mutable_data();
  for (std::size_t i = 0; i < m.data().size(); ++i) dst[i] = m.data()[i] != 0;
  return out;
}

ProbMap to_probmap(const F32Array& a) {
  if (a.ndim() != 2) throw ShapeError("probability map must be a 2-D array");
  return ProbMap(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                 std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> from_probmap(const ProbMap& p) {
  py::array_t<float> out({p.height(), p.width()});
  std::memcpy(out.mutable_data(), p.data().data(), p.data().size() * sizeof(float));
  return out;
}

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_py(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict overlap_dict(const OverlapScores& s) {
  py::dict d;
  d["iou"] = s.iou;
  d["dice"] = s.dice;
  d["intersection_px"] = s.intersection_px;
  d["union_px"] = s.union_px;
  d["a_px"] = s.a_px;
  d["b_px"] = s.b_px;
  d["both_empty"] = s.both_empty;
  return d;
}

PipelineConfig config_from(const py::object& config) {
  if (config.is_none()) return PipelineConfig{};
  if (py::isinstance<py::dict>(config)) return PipelineConfig::from_json(from_py(config));
  return PipelineConfig::load(config.cast<fs::path>());
}

}  // namespace

PYBIND11_MODULE(_ulcerflow, m) {
  m.doc() = "Wound ROI detection, segmentation, DESIGN-R size scoring and evaluation";

  auto base = py::register_exception<Error>(m, "UlcerflowError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());
  py::register_exception<DecodeError>(m, "DecodeError", base.ptr());
  py::register_exception<InvalidCalibration>(m, "InvalidCalibration", base.ptr());
  py::register_exception<SiteMismatch>(m, "SiteMismatch", base.ptr());

  m.attr("MODEL_INPUT_SIZE") = kModelInputSize;

  py::class_<BBoxDetection>(m, "Box")
      .def(py::init([](double x, double y, double w, double h, double conf) {
             return BBoxDetection{x, y, w, h, conf};
           }),
           py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"), py::arg("confidence") = 1.0)
      .def_readwrite("x", &BBoxDetection::x)
      .def_readwrite("y", &BBoxDetection::y)
      .def_readwrite("w", &BBoxDetection::w)
      .def_readwrite("h", &BBoxDetection::h)
      .def_readwrite("confidence", &BBoxDetection::confidence)
      .def_property_readonly("area", &BBoxDetection::area)
      .def("__repr__", [](const BBoxDetection& b) {
        return "Box(x=" + std::to_string(b.x) + ", y=" + std::to_string(b.y) + ", w=" +
               std::to_string(b.w) + ", h=" + std::to_string(b.h) +
               ", confidence=" + std::to_string(b.confidence) + ")";
      });

  py::class_<RoiTransform>(m, "RoiTransform")
      .def_property_readonly("crop", [](const RoiTransform& t) {
        return py::make_tuple(t.crop.x, t.crop.y, t.crop.width, t.crop.height);
      })
      .def_readonly("scale", &RoiTransform::scale)
      .def_readonly("scaled_width", &RoiTransform::scaled_width)
      .def_readonly("scaled_height", &RoiTransform::scaled_height)
      .def_readonly("pad_left", &RoiTransform::pad_left)
      .def_readonly("pad_top", &RoiTransform::pad_top);

  // Imaging
  m.def("read_image", [](const fs::path& p) { return from_image(read_image(p)); }, py::arg("path"));
  m.def("write_image", [](const U8Array& img, const fs::path& p) { write_image(to_image(img), p); },
        py::arg("image"), py::arg("path"));
  m.def("read_mask", [](const fs::path& p) { return from_mask(read_mask(p)); }, py::arg("path"));
  m.def("write_mask", [](const U8Array& mask, const fs::path& p) { write_mask(to_mask(mask), p); },
        py::arg("mask"), py::arg("path"));
  m.def(
      "crop_with_margin",
      [](const U8Array& img, const BBoxDetection& box, double margin) {
        const Crop c = crop_with_margin(to_image(img), box, margin);
        return py::make_tuple(from_image(c.image),
                              py::make_tuple(c.rect.x, c.rect.y, c.rect.width, c.rect.height));
      },
      py::arg("image"), py::arg("box"), py::arg("margin") = kDefaultCropMargin);
  m.def(
      "letterbox",
      [](const U8Array& crop, int crop_x, int crop_y, const std::string& policy) {
        const Letterboxed lb = letterbox_to_512(to_image(crop), crop_x, crop_y, parse_resize_policy(policy));
        return py::make_tuple(from_image(lb.image), lb.transform);
      },
      py::arg("crop"), py::arg("crop_x") = 0, py::arg("crop_y") = 0, py::arg("policy") = "letterbox");
  m.def(
      "project_mask",
      [](const U8Array& mask512, const RoiTransform& t, int w, int h) {
        return from_mask(project_mask_to_full(to_mask(mask512), t, w, h));
      },
      py::arg("mask512"), py::arg("transform"), py::arg("full_width"), py::arg("full_height"));
  m.def(
      "blend_overlay",
      [](const U8Array& img, const U8Array& mask, double alpha, std::array<std::uint8_t, 3> color) {
        return from_image(blend_overlay(to_image(img), to_mask(mask), alpha, {color[0], color[1], color[2]}));
      },
      py::arg("image"), py::arg("mask"), py::arg("alpha") = 0.4,
      py::arg("color") = std::array<std::uint8_t, 3>{255, 0, 0});

  // Detection
  m.def("nms", &nms, py::arg("boxes"), py::arg("iou_thresh") = kDefaultNmsIou);
  m.def("box_iou", &box_iou, py::arg("a"), py::arg("b"));
  m.def("random_roi_baseline", &random_roi_baseline, py::arg("width"), py::arg("height"),
        py::arg("seed"));
  m.def(
      "model_info",
      [](const fs::path& path, const std::string& kind) {
        ModelInfo info;
        if (kind == "detector") {
          info = OnnxDetector(path).info();
        } else if (kind == "segmenter") {
          info = OnnxSegmenter(path).info();
        } else {
          throw ConfigError("kind must be 'detector' or 'segmenter'");
        }
        py::dict d;
        d["name"] = info.name;
        d["input_size"] = info.input_size;
        d["checksum"] = info.checksum;
        return d;
      },
      py::arg("path"), py::arg("kind") = "detector");

  // Segmentation
  m.def(
      "fallback_probability",
      [](const U8Array& roi512, double gain, double center) {
        return from_probmap(run_segmenter(FallbackSegmenter(FallbackParams{gain, center}), to_image(roi512)));
      },
      py::arg("roi512"), py::arg("gain") = FallbackParams{}.gain,
      py::arg("center") = FallbackParams{}.center);
  m.def(
      "binarize", [](const F32Array& p, double t) { return from_mask(binarize(to_probmap(p), t)); },
      py::arg("prob"), py::arg("thresh") = kDefaultBinarizeThresh);
  m.def(
      "refine_mask",
      [](const U8Array& mask, bool keep_largest, bool fill_holes, int min_area) {
        return from_mask(refine_mask(to_mask(mask), RefineOptions{keep_largest, fill_holes, min_area}));
      },
      py::arg("mask"), py::arg("keep_largest") = true, py::arg("fill_holes") = true,
      py::arg("min_area_px") = RefineOptions{}.min_area_px);

  // Metrics
  m.def(
      "overlap", [](const U8Array& a, const U8Array& b) { return overlap_dict(overlap(to_mask(a), to_mask(b))); },
      py::arg("a"), py::arg("b"));
  m.def(
      "mean_sd",
      [](const std::vector<double>& v, bool population) {
        const SummaryStat s = mean_sd(v, population ? SdKind::population : SdKind::sample);
        return py::make_tuple(s.mean, s.sd, s.n);
      },
      py::arg("values"), py::arg("population") = false);
  m.def(
      "success_rate_text",
      [](const std::vector<bool>& outcomes) {
        const auto flags = std::make_unique<bool[]>(outcomes.size());
        std::copy(outcomes.begin(), outcomes.end(), flags.get());
        return success_rate(std::span<const bool>(flags.get(), outcomes.size())).text();
      },
      py::arg("outcomes"));
  m.def(
      "percent_agreement",
      [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        return percent_agreement(a, b);
      },
      py::arg("a"), py::arg("b"));
  m.def("format_percent", &format_percent, py::arg("fraction"));

  // DESIGN-R
  m.def(
      "measure",
      [](const U8Array& mask, double ppc) {
        return to_py(to_json(measure(to_mask(mask), calibration_from_manifest(ppc))));
      },
      py::arg("mask"), py::arg("pixels_per_cm"));
  m.def(
      "grade_size",
      [](double area, double major, double minor, const std::string& scale) {
        return grade_size(WoundMeasurements{area, major, minor}, SizeGradeScale::by_id(scale));
      },
      py::arg("area_cm2"), py::arg("major_axis_cm"), py::arg("minor_axis_cm"),
      py::arg("scale") = "designr2020");
  m.def(
      "designr_report",
      [](const U8Array& mask, const U8Array& image, std::optional<double> ppc, const std::string& scale) {
        std::optional<Calibration> cal;
        if (ppc) cal = calibration_from_manifest(*ppc);
        return to_py(to_json(designr_report(to_mask(mask), to_image(image), cal, SizeGradeScale::by_id(scale))));
      },
      py::arg("mask"), py::arg("image"), py::arg("pixels_per_cm") = py::none(),
      py::arg("scale") = "designr2020");

  // Pipeline and evaluation
  m.def(
      "run_pipeline",
      [](const fs::path& manifest, const fs::path& out_dir, const py::object& config,
         std::optional<int> workers) {
        PipelineConfig cfg = config_from(config);
        cfg.output_dir = out_dir.string();
        if (workers) cfg.workers = *workers;
        cfg.validate();
        const Manifest man = Manifest::load(manifest);
        BatchResult r;
        {
          py::gil_scoped_release release;
          r = run_batch(man, cfg, make_backends(cfg));
        }
        return to_py(r.summary.to_json());
      },
      py::arg("manifest"), py::arg("out_dir"), py::arg("config") = py::none(),
      py::arg("workers") = py::none());
  m.def(
      "evaluate",
      [](const fs::path& records, const fs::path& manifest, const std::string& scale,
         std::optional<fs::path> baseline, bool population_sd) {
        const auto recs = read_records_jsonl(records);
        EvalReport report = evaluate(load_eval_samples(recs, Manifest::load(manifest), records.parent_path()),
                                     SizeGradeScale::by_id(scale),
                                     population_sd ? SdKind::population : SdKind::sample);
        if (baseline) {
          std::ifstream in(*baseline);
          if (!in) throw ConfigError("cannot open baseline " + baseline->string());
          report.deltas_vs_baseline = compare(EvalReport::from_json(nlohmann::json::parse(in)), report);
        }
        return to_py(report.to_json());
      },
      py::arg("records"), py::arg("manifest"), py::arg("scale") = "designr2020",
      py::arg("baseline") = py::none(), py::arg("population_sd") = false);
  m.def(
      "compare_reports",
      [](const py::object& a, const py::object& b) {
        py::list out;
        for (const SiteDelta& d : compare(EvalReport::from_json(from_py(a)), EvalReport::from_json(from_py(b)))) {
          py::dict e;
          e["site"] = to_string(d.site);
          e["iou_pp"] = d.iou_pp;
          e["dice_pp"] = d.dice_pp;
          out.append(e);
        }
        return out;
      },
      py::arg("a"), py::arg("b"));
}
