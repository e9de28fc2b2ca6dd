#include <doctest.h>

#include <cmath>
#include <random>

#include "synthetic.hpp"
#include "ulcerflow/designr.hpp"
#include "ulcerflow/errors.hpp"

using namespace ulcerflow;
using namespace ulcerflow::testing;

TEST_CASE("calibration_from_ruler") {
  CHECK(calibration_from_ruler({0, 0}, {100, 0}, 5).pixels_per_cm == 20.0);
  CHECK(calibration_from_ruler({0, 0}, {30, 40}, 5).pixels_per_cm == 10.0);  // 3-4-5
  CHECK(calibration_from_ruler({0, 0}, {30, 40}, 5).source == CalibrationSource::ruler);
  CHECK_THROWS_AS(calibration_from_ruler({0, 0}, {0, 0}, 5), InvalidCalibration);
  CHECK_THROWS_AS(calibration_from_ruler({0, 0}, {1, 0}, 0), InvalidCalibration);
  CHECK_THROWS_AS(calibration_from_ruler({0, 0}, {1, 0}, -2), InvalidCalibration);
  CHECK_THROWS_AS(calibration_from_manifest(0.0), InvalidCalibration);
}

TEST_CASE("resolve_calibration prefers the manifest value") {
  const RulerAnnotation ruler{{0, 0}, {100, 0}, 5};
  CHECK(resolve_calibration(12.5, ruler)->pixels_per_cm == 12.5);
  CHECK(resolve_calibration(12.5, ruler)->source == CalibrationSource::manifest);
  CHECK(resolve_calibration(std::nullopt, ruler)->pixels_per_cm == 20.0);
  CHECK_FALSE(resolve_calibration(std::nullopt, std::nullopt).has_value());
}

TEST_CASE("measure examples") {
  const Calibration c10{10.0};
  const WoundMeasurements empty = measure(BinaryMask(50, 50), c10);
  CHECK(empty.area_cm2 == 0.0);
  CHECK(empty.major_axis_cm == 0.0);
  CHECK(empty.minor_axis_cm == 0.0);

  const WoundMeasurements sq = measure(rect_mask(150, 150, 20, 30, 100, 100), c10);
  CHECK(sq.area_cm2 == 100.0);
  CHECK(sq.major_axis_cm == 10.0);
  CHECK(sq.minor_axis_cm == 10.0);

  // 10000 pixels in an irregular shape at 20 px/cm: 10000 / 400 = 25 cm^2
  BinaryMask blob(300, 300);
  std::mt19937_64 rng(4);
  std::size_t n = 0;
  for (int y = 10; y < 290 && n < 10000; ++y)
    for (int x = 10 + static_cast<int>(rng() % 7); x < 150 + static_cast<int>(rng() % 40) && n < 10000; ++x) {
      blob.set(x, y, true);
      ++n;
    }
  REQUIRE(blob.count() == 10000);
  CHECK(measure(blob, Calibration{20.0}).area_cm2 == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("measure invariants") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const int w = 5 + static_cast<int>(rng() % 20), h = 5 + static_cast<int>(rng() % 20);
    const BinaryMask m = random_mask(rng, w, h, 0.3);
    const WoundMeasurements a = measure(m, Calibration{4.0});
    const WoundMeasurements b = measure(m, Calibration{8.0});
    CHECK(b.area_cm2 == doctest::Approx(a.area_cm2 / 4.0));
    CHECK(a.major_axis_cm >= a.minor_axis_cm);
    CHECK(a.area_cm2 <= a.major_axis_cm * a.minor_axis_cm + 1e-12);

    // translation inside a bigger frame leaves the measurements unchanged
    BinaryMask shifted(w + 10, h + 10);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) shifted.set(x + 7, y + 3, m.get(x, y));
    const WoundMeasurements s = measure(shifted, Calibration{4.0});
    CHECK(s.area_cm2 == a.area_cm2);
    CHECK(s.major_axis_cm == a.major_axis_cm);
    CHECK(s.minor_axis_cm == a.minor_axis_cm);
  }
}

TEST_CASE("grade_size with the DESIGN-R 2020 scale") {
  const SizeGradeScale scale = SizeGradeScale::designr2020();
  auto grade_of = [&](double product) {
    // square wound with side sqrt(product) cm gives major x minor = product
    const double side = std::sqrt(product);
    return grade_size({product, side, side}, scale);
  };
  CHECK(grade_of(0.0) == "s3");
  CHECK(grade_size({0, 2, 2}, scale) == "s6");  // 4.0 belongs to [4, 16)
  CHECK(grade_size({0, 2, 1.9999999}, scale) == "s3");
  CHECK(grade_size({0, 4, 4}, scale) == "s8");
  CHECK(grade_size({0, 6, 6}, scale) == "s9");
  CHECK(grade_size({0, 8, 8}, scale) == "s12");
  CHECK(grade_size({0, 10, 10}, scale) == "S15");
  CHECK(grade_size({250, 25, 10}, scale) == "S15");
}

TEST_CASE("grade_size with the five-bin area scale") {
  const SizeGradeScale scale = SizeGradeScale::s1_s5();
  CHECK(grade_size({0, 0, 0}, scale) == "S1");
  CHECK(grade_size({4, 0, 0}, scale) == "S2");
  CHECK(grade_size({63.9, 0, 0}, scale) == "S3");
  CHECK(grade_size({250, 0, 0}, scale) == "S4");
  CHECK(grade_size({256, 0, 0}, scale) == "S5");
}

TEST_CASE("grade_size is monotone") {
  const SizeGradeScale scale = SizeGradeScale::designr2020();
  auto rank = [&](const std::string& label) {
    for (std::size_t i = 0; i < scale.grades().size(); ++i)
      if (scale.grades()[i].label == label) return i;
    return scale.grades().size();
  };
  std::size_t prev = 0;
  for (double v = 0.0; v < 200.0; v += 0.37) {
    const std::size_t r = rank(scale.grade_for(v));
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("SizeGradeScale validation and JSON") {
  CHECK_THROWS_AS(SizeGradeScale("bad", SizeMeasure::area, {{"a", 4}, {"b", 4}}), ConfigError);
  CHECK_THROWS_AS(SizeGradeScale("bad", SizeMeasure::area, {{"a", 4}, {"b", 9}}), ConfigError);
  CHECK_THROWS_AS(SizeGradeScale::by_id("nope"), ConfigError);
  const auto j = nlohmann::json::parse(
      R"({"id":"two","measure":"area","grades":[{"label":"small","upper_bound":10},{"label":"big"}]})");
  const SizeGradeScale s = SizeGradeScale::from_json(j);
  CHECK(s.grade_for(9.99) == "small");
  CHECK(s.grade_for(10) == "big");
}

TEST_CASE("designr_report: always seven entries with fixed computability") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> order = {"D", "E", "S", "I", "G", "N", "P"};
  for (int i = 0; i < 20; ++i) {
    const BinaryMask m = random_mask(rng, 16, 16, 0.5);
    RasterImage img(16, 16);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng());
    const std::optional<Calibration> cal =
        i % 2 ? std::optional<Calibration>(Calibration{5.0}) : std::nullopt;
    const DesignRReport r = designr_report(m, img, cal, SizeGradeScale::designr2020());
    REQUIRE(r.entries.size() == 7);
    for (std::size_t k = 0; k < 7; ++k) CHECK(r.entries[k].dimension == order[k]);
    for (const char* d : {"D", "I", "P"}) {
      CHECK(r.at(d).status == DimensionStatus::not_computable);
      CHECK_FALSE(r.at(d).value.has_value());
    }
    for (const char* d : {"E", "G", "N"}) {
      CHECK(r.at(d).status == DimensionStatus::partial);
      const double v = r.at(d).value->get<double>();
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (cal) {
      CHECK(r.at("S").status == DimensionStatus::computable);
    } else {
      CHECK(r.at("S").status == DimensionStatus::not_computable);
      CHECK(r.at("S").note == "uncalibrated");
    }
  }
}

TEST_CASE("designr_report: empty mask") {
  const DesignRReport r =
      designr_report(BinaryMask(10, 10), RasterImage(10, 10), Calibration{10.0},
                     SizeGradeScale::designr2020());
  CHECK(r.at("S").status == DimensionStatus::computable);
  CHECK(r.at("S").value->at("area_cm2").get<double>() == 0.0);
  for (const char* d : {"E", "G", "N"}) CHECK(r.at(d).value->get<double>() == 0.0);
}

TEST_CASE("designr_report: red wound bed reads as granulation, not necrosis") {
  RasterImage img(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) img.set_pixel(x, y, 200, 30, 40);
  // luma = 0.299*200 + 0.587*30 + 0.114*40 = 82.0 (>= 60, not dark); R-G = 170, R-B = 160
  const BinaryMask m = rect_mask(10, 10, 0, 0, 10, 10);
  const DesignRReport r = designr_report(m, img, Calibration{10}, SizeGradeScale::designr2020());
  CHECK(r.at("G").value->get<double>() == 1.0);
  CHECK(r.at("N").value->get<double>() == 0.0);
  CHECK(r.at("G").value->get<double>() > r.at("N").value->get<double>());

  // Black eschar reads as necrosis, yellow slough as exudate.
  for (int x = 0; x < 10; ++x) {
    img.set_pixel(x, 0, 20, 15, 10);
    img.set_pixel(x, 1, 220, 200, 60);
  }
  const TissueProxies p = tissue_proxies(m, img);
  CHECK(p.necrosis == doctest::Approx(0.1));
  CHECK(p.exudate == doctest::Approx(0.1));
  CHECK(p.granulation == doctest::Approx(0.8));
}

TEST_CASE("designr report JSON shape") {
  const DesignRReport r = designr_report(rect_mask(4, 4, 0, 0, 2, 2), RasterImage(4, 4),
                                         std::nullopt, SizeGradeScale::designr2020());
  const auto j = to_json(r);
  REQUIRE(j.size() == 7);
  for (const auto& e : j) {
    CHECK(e.contains("dimension"));
    CHECK(e.contains("status"));
    CHECK(e.contains("note"));
  }
  CHECK(j[0]["status"] == "not_computable");
  CHECK_FALSE(j[0].contains("value"));
  CHECK(j[1]["status"] == "partial");
  CHECK(j[1].contains("value"));
}
