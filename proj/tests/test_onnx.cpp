#include <doctest.h>

#include "fixture.hpp"
#include "ulcerflow/errors.hpp"
#include "ulcerflow/pipeline.hpp"

using namespace ulcerflow;
using namespace ulcerflow::testing;

namespace {

const std::filesystem::path kData = ULCERFLOW_TEST_DATA;

}  // namespace

TEST_CASE("OnnxDetector loads and reports model metadata") {
  const OnnxDetector det(kData / "redness_detector.onnx");
  const ModelInfo info = det.info();
  CHECK(info.name == "redness_detector.onnx");
  CHECK(info.input_size == 512);
  CHECK(info.checksum == sha256_file(kData / "redness_detector.onnx"));
  CHECK(info.checksum.size() == 64);
  CHECK(det.exclusive());
  CHECK_THROWS_AS(OnnxDetector(kData / "missing.onnx"), BackendError);
}

TEST_CASE("OnnxDetector: zero image smoke inference") {
  const OnnxDetector det(kData / "redness_detector.onnx");
  const auto raw = det.detect(RasterImage(512, 512), "zero");
  CHECK(raw.size() == 16);
  for (const auto& b : raw) CHECK(b.confidence < 0.25);
  CHECK(run_detector(det, RasterImage(512, 512), "zero").empty());
}

TEST_CASE("OnnxDetector: boxes map back to the source frame") {
  // 1024x1024 frame, red square filling the top-right 256x256 cell (128 px cells after letterbox).
  RasterImage img(1024, 1024);
  for (int y = 0; y < 1024; ++y)
    for (int x = 0; x < 1024; ++x) {
      const bool red = x >= 768 && y < 256;
      img.set_pixel(x, y, red ? 200 : 128, red ? 20 : 128, red ? 20 : 128);
    }
  const OnnxDetector det(kData / "redness_detector.onnx");
  const auto kept = run_detector(det, img, "corner");
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].x == doctest::Approx(768));
  CHECK(kept[0].y == doctest::Approx(0));
  CHECK(kept[0].w == doctest::Approx(256));
  CHECK(kept[0].h == doctest::Approx(256));
  CHECK(kept[0].confidence > 0.99);
}

TEST_CASE("OnnxSegmenter matches the equivalent fallback rule") {
  const OnnxSegmenter seg(kData / "redness_segmenter.onnx", OutputActivation::sigmoid,
                          InputNormalization::unit);
  CHECK(seg.info().checksum == sha256_file(kData / "redness_segmenter.onnx"));
  const FallbackSegmenter ref(FallbackParams{20.0, 0.10});
  const RasterImage roi = letterbox_to_512(disc_image(300, 200, {150, 100, 60})).image;
  const ProbMap a = run_segmenter(seg, roi);
  const ProbMap b = run_segmenter(ref, roi);
  double worst = 0;
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x) worst = std::max(worst, std::abs(double(a.at(x, y)) - b.at(x, y)));
  CHECK(worst < 1e-4);

  const ProbMap zero = run_segmenter(seg, RasterImage(512, 512));
  CHECK(zero.at(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-4));
  CHECK_THROWS_AS(run_segmenter(seg, RasterImage(256, 256)), InputShapeError);
}

TEST_CASE("run_batch with ONNX backends from config") {
  TempDir tmp("uf_onnx_batch");
  const Manifest m = write_disc_dataset(tmp.path() / "data", random_disc_cases(31, 4));
  PipelineConfig cfg = PipelineConfig::from_json(
      {{"detector_model", (kData / "redness_detector.onnx").string()},
       {"segmenter_model", (kData / "redness_segmenter.onnx").string()},
       {"segmenter_activation", "sigmoid"},
       {"segmenter_normalization", "unit"},
       {"workers", 2}});
  cfg.output_dir = (tmp.path() / "out").string();
  const BatchResult r = run_batch(m, cfg, make_backends(cfg));
  CHECK_FALSE(r.summary.has_process_errors());
  REQUIRE(r.summary.models.size() == 2);
  CHECK(r.summary.models[0].name == "redness_detector.onnx");
  CHECK(r.summary.models[1].checksum == sha256_file(kData / "redness_segmenter.onnx"));
  CHECK(r.summary.to_json().at("models")[0].at("checksum").get<std::string>().size() == 64);
}
