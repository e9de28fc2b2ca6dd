#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "synthetic.hpp"
#include "ulcerflow/errors.hpp"
#include "ulcerflow/metrics.hpp"

using namespace ulcerflow;
using namespace ulcerflow::testing;

TEST_CASE("overlap: identical and disjoint masks") {
  const BinaryMask a = rect_mask(10, 10, 2, 2, 4, 4);
  const OverlapScores same = overlap(a, a);
  CHECK(same.iou == 1.0);
  CHECK(same.dice == 1.0);
  CHECK_FALSE(same.both_empty);

  const OverlapScores disj = overlap(a, rect_mask(10, 10, 7, 7, 2, 2));
  CHECK(disj.iou == 0.0);
  CHECK(disj.dice == 0.0);
}

TEST_CASE("overlap: left half vs top half of a 4x4 grid") {
  // intersection 4 (top-left quadrant), union 12
  const OverlapScores s = overlap(rect_mask(4, 4, 0, 0, 2, 4), rect_mask(4, 4, 0, 0, 4, 2));
  CHECK(s.intersection_px == 4);
  CHECK(s.union_px == 12);
  CHECK(s.a_px == 8);
  CHECK(s.b_px == 8);
  CHECK(s.iou == doctest::Approx(1.0 / 3.0));
  CHECK(s.dice == 0.5);
}

TEST_CASE("overlap: both empty is flagged and scores 1") {
  const OverlapScores s = overlap(BinaryMask(5, 5), BinaryMask(5, 5));
  CHECK(s.both_empty);
  CHECK(s.iou == 1.0);
  CHECK(s.dice == 1.0);
}

TEST_CASE("overlap: dimension mismatch") {
  CHECK_THROWS_AS(overlap(BinaryMask(4, 4), BinaryMask(4, 5)), ShapeError);
}

TEST_CASE("overlap properties: symmetry, Dice-IoU identity, monotonicity") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 300; ++i) {
    const int w = 1 + static_cast<int>(rng() % 24), h = 1 + static_cast<int>(rng() % 24);
    BinaryMask a = random_mask(rng, w, h, 0.4);
    const BinaryMask b = random_mask(rng, w, h, 0.4);
    const OverlapScores ab = overlap(a, b), ba = overlap(b, a);
    CHECK(ab.iou == ba.iou);
    CHECK(ab.dice == ba.dice);
    if (ab.union_px > 0) {
      // 2I/(A+B) and 2(I/U)/(1+I/U) = 2I/(U+I) share a denominator since A+B = U+I.
      CHECK(ab.a_px + ab.b_px == ab.union_px + ab.intersection_px);
      CHECK(ab.dice == doctest::Approx(2.0 * ab.iou / (1.0 + ab.iou)).epsilon(1e-15));
    }
    if (a.count() > 0) CHECK(overlap(a, a).iou == 1.0);
    // Adding a pixel of b to a never lowers IoU.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (b.get(x, y) && !a.get(x, y)) {
          const double before = overlap(a, b).iou;
          a.set(x, y, true);
          CHECK(overlap(a, b).iou >= before);
          goto next;
        }
  next:;
  }
}

TEST_CASE("mean_sd examples") {
  const double one[] = {0.5};
  CHECK(mean_sd(one).mean == 0.5);
  CHECK(mean_sd(one).sd == 0.0);
  CHECK(mean_sd(one).n == 1);

  // Two points 0 and 1: sample sd = sqrt(0.5) = 0.70711
  const double two[] = {0.0, 1.0};
  CHECK(mean_sd(two).mean == 0.5);
  CHECK(mean_sd(two).sd == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(mean_sd(two, SdKind::population).sd == doctest::Approx(0.5));

  CHECK_THROWS_AS(mean_sd(std::span<const double>{}), EmptyInput);
}

TEST_CASE("mean_sd matches a two-pass long double reference") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-3.0, 5.0);
  std::vector<double> xs(100);
  for (double& x : xs) x = u(rng);
  long double sum = 0;
  for (double x : xs) sum += x;
  const long double mean = sum / xs.size();
  long double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = static_cast<double>(std::sqrt(ss / (xs.size() - 1)));
  const SummaryStat s = mean_sd(xs);
  CHECK(std::abs(s.mean - static_cast<double>(mean)) <= 1e-12);
  CHECK(std::abs(s.sd - sd) <= 1e-12);

  auto shuffled = xs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(std::abs(mean_sd(shuffled).mean - s.mean) <= 1e-12);
  CHECK(std::abs(mean_sd(shuffled).sd - s.sd) <= 1e-12);

  // Merged partial accumulators agree with the direct computation.
  RunningStat left, right;
  for (std::size_t i = 0; i < xs.size(); ++i) (i < 37 ? left : right).add(xs[i]);
  left.merge(right);
  CHECK(std::abs(left.summary().mean - s.mean) <= 1e-12);
  CHECK(std::abs(left.summary().sd - s.sd) <= 1e-12);
  CHECK_THROWS_AS(RunningStat{}.summary(), EmptyInput);
}

TEST_CASE("success_rate") {
  std::vector<char> raw(526, 1);
  for (int i : {207, 223, 241, 276, 360}) raw[i] = 0;
  auto flags = std::make_unique<bool[]>(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) flags[i] = raw[i];
  const SuccessRate r = success_rate(std::span<const bool>(flags.get(), raw.size()));
  CHECK(r.successes == 521);
  CHECK(r.failures == 5);
  CHECK(r.text() == "521 / 526 (99.0%)");

  const bool all[] = {true, true};
  CHECK(success_rate(all).text() == "2 / 2 (100.0%)");
  const bool three_of_four[] = {true, false, true, true};
  CHECK(success_rate(three_of_four).text() == "3 / 4 (75.0%)");
  CHECK(success_rate(three_of_four).successes + success_rate(three_of_four).failures == 4);
  CHECK_THROWS_AS(success_rate(std::span<const bool>{}), EmptyInput);
}

TEST_CASE("percent_agreement") {
  const std::vector<std::string> a = {"ok", "partial", "ok"};
  CHECK(percent_agreement(a, a) == 1.0);
  const std::vector<std::string> x = {"x", "y"}, z = {"x", "z"};
  CHECK(percent_agreement(x, z) == 0.5);
  CHECK_THROWS_AS(percent_agreement(a, x), ShapeError);
  CHECK_THROWS_AS(percent_agreement({}, {}), EmptyInput);

  // 28 disagreements over 521 ratings: 493/521 = 0.94626
  std::vector<std::string> r1(521, "success"), r2 = r1;
  for (int i = 0; i < 28; ++i) r2[i * 18] = "partial";
  const double agree = percent_agreement(r1, r2);
  CHECK(agree == doctest::Approx(493.0 / 521.0));
  CHECK(format_percent(agree) == "94.6");
}
