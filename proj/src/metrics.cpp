#include "ulcerflow/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "ulcerflow/errors.hpp"

namespace ulcerflow {

OverlapScores overlap(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ShapeError("overlap: mask sizes differ (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
  }
  OverlapScores s;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    s.a_px += da[i];
    s.b_px += db[i];
    s.intersection_px += da[i] & db[i];
  }
  s.union_px = s.a_px + s.b_px - s.intersection_px;
  if (s.union_px == 0) {
    s.both_empty = true;
    s.iou = 1.0;
    s.dice = 1.0;
  } else {
    s.iou = static_cast<double>(s.intersection_px) / static_cast<double>(s.union_px);
    s.dice = 2.0 * static_cast<double>(s.intersection_px) /
             static_cast<double>(s.a_px + s.b_px);
  }
  return s;
}

SummaryStat mean_sd(std::span<const double> xs, SdKind kind) {
  if (xs.empty()) throw EmptyInput("mean_sd of an empty list");
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  SummaryStat s{mean, 0.0, xs.size()};
  if (kind == SdKind::population) {
    s.sd = std::sqrt(ss / static_cast<double>(xs.size()));
  } else if (xs.size() > 1) {
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

void RunningStat::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void RunningStat::merge(const RunningStat& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double n = static_cast<double>(n_ + other.n_);
  const double delta = other.mean_ - mean_;
  mean_ += delta * static_cast<double>(other.n_) / n;
  m2_ += other.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(other.n_) / n;
  n_ += other.n_;
}

SummaryStat RunningStat::summary(SdKind kind) const {
  if (n_ == 0) throw EmptyInput("summary of an empty accumulator");
  SummaryStat s{mean_, 0.0, n_};
  const double m2 = std::max(m2_, 0.0);
  if (kind == SdKind::population) {
    s.sd = std::sqrt(m2 / static_cast<double>(n_));
  } else if (n_ > 1) {
    s.sd = std::sqrt(m2 / static_cast<double>(n_ - 1));
  }
  return s;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

std::string SuccessRate::text() const {
  return std::to_string(successes) + " / " + std::to_string(total()) + " (" +
         format_percent(rate) + "%)";
}

SuccessRate success_rate(std::span<const bool> succeeded) {
  if (succeeded.empty()) throw EmptyInput("success_rate over zero records");
  SuccessRate r;
  for (bool ok : succeeded) (ok ? r.successes : r.failures) += 1;
  r.rate = static_cast<double>(r.successes) / static_cast<double>(r.total());
  return r;
}

double percent_agreement(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() != b.size()) throw ShapeError("percent_agreement: label lists differ in length");
  if (a.empty()) throw EmptyInput("percent_agreement of empty label lists");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += (a[i] == b[i]);
  return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace ulcerflow
