#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulcerflow/imaging.hpp"

namespace ulcerflow {

struct OverlapScores {
  double iou = 0.0;
  double dice = 0.0;
  std::uint64_t intersection_px = 0;
  std::uint64_t union_px = 0;
  std::uint64_t a_px = 0;
  std::uint64_t b_px = 0;
  /// Both masks empty; iou and dice are set to 1 by convention.
  bool both_empty = false;
};

/// Pixel overlap of two equally sized masks. Throws ShapeError otherwise.
OverlapScores overlap(const BinaryMask& a, const BinaryMask& b);

enum class SdKind { sample, population };

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

/// Mean and standard deviation (n-1 denominator by default; 0 when n == 1).
/// Throws EmptyInput for an empty list.
SummaryStat mean_sd(std::span<const double> xs, SdKind kind = SdKind::sample);

/// Mergeable running moments (Chan et al. parallel update), so per-image
/// scores can be reduced in any grouping.
class RunningStat {
 public:
  void add(double x);
  void merge(const RunningStat& other);
  std::size_t count() const { return n_; }
  /// Throws EmptyInput when nothing was added.
  SummaryStat summary(SdKind kind = SdKind::sample) const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct SuccessRate {
  std::size_t successes = 0;
  std::size_t failures = 0;
  double rate = 0.0;  // successes / total

  std::size_t total() const { return successes + failures; }
  /// "<successes> / <total> (<percent with one decimal>%)".
  std::string text() const;
};

/// Success accounting over per-image success flags. Throws EmptyInput.
SuccessRate success_rate(std::span<const bool> succeeded);

/// Percentage with one decimal, e.g. 0.99049 -> "99.0".
std::string format_percent(double fraction);

/// Fraction of positions with equal labels. Throws ShapeError on length
/// mismatch and EmptyInput on empty lists.
double percent_agreement(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace ulcerflow
