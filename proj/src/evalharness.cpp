#include "ulcerflow/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ulcerflow/errors.hpp"

namespace ulcerflow {

namespace {

using json = nlohmann::json;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

json stat_json(const std::optional<SummaryStat>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"sd", s->sd}, {"n", s->n}};
}

std::optional<SummaryStat> stat_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return SummaryStat{j.at("mean").get<double>(), j.at("sd").get<double>(),
                     j.at("n").get<std::size_t>()};
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

ImageScore score_sample(const EvalSample& sample, const SizeGradeScale& scale) {
  ImageScore s{sample.image_id, sample.site, sample.succeeded, {}, {}, {}};
  if (!sample.succeeded) return s;
  if (!sample.ground_truth) {
    throw MissingGroundTruth("no ground-truth mask for successful image '" + sample.image_id + "'");
  }
  if (!sample.prediction) {
    throw InvalidArgument("successful image '" + sample.image_id + "' has no predicted mask");
  }
  s.overlap = overlap(*sample.prediction, *sample.ground_truth);
  if (sample.calibration) {
    const WoundMeasurements pred = measure(*sample.prediction, *sample.calibration);
    const WoundMeasurements gt = measure(*sample.ground_truth, *sample.calibration);
    s.area_abs_error_cm2 = std::abs(pred.area_cm2 - gt.area_cm2);
    s.grade_match = grade_size(pred, scale) == grade_size(gt, scale);
  }
  return s;
}

const SiteStats* EvalReport::site(Site s) const {
  for (const auto& st : sites) {
    if (st.site == s) return &st;
  }
  return nullptr;
}

EvalReport aggregate(const std::vector<ImageScore>& scores, const std::string& scale_id,
                     SdKind sd_kind) {
  if (scores.empty()) throw EmptyInput("evaluation over zero images");
  struct Acc {
    std::size_t total = 0, evaluated = 0, both_empty = 0;
    std::vector<double> iou, dice;
  };
  std::map<Site, Acc> per_site;
  std::vector<double> area;
  std::size_t grade_hits = 0, grade_n = 0;
  const auto flags = std::make_unique<bool[]>(scores.size());

  for (std::size_t i = 0; i < scores.size(); ++i) {
    const ImageScore& s = scores[i];
    flags[i] = s.succeeded;
    Acc& acc = per_site[s.site];
    ++acc.total;
    if (!s.succeeded || !s.overlap) continue;
    ++acc.evaluated;
    acc.both_empty += s.overlap->both_empty;
    acc.iou.push_back(s.overlap->iou);
    acc.dice.push_back(s.overlap->dice);
    if (s.area_abs_error_cm2) area.push_back(*s.area_abs_error_cm2);
    if (s.grade_match) {
      ++grade_n;
      grade_hits += *s.grade_match;
    }
  }

  EvalReport r;
  r.scale_id = scale_id;
  r.sd_kind = sd_kind == SdKind::sample ? "sample" : "population";
  r.pipeline = success_rate(std::span<const bool>(flags.get(), scores.size()));
  for (Site site : kAllSites) {
    const auto it = per_site.find(site);
    if (it == per_site.end()) continue;
    const Acc& acc = it->second;
    SiteStats st{site, acc.total, acc.evaluated, acc.both_empty, {}, {}};
    if (acc.evaluated > 0) {
      st.iou = mean_sd(acc.iou, sd_kind);
      st.dice = mean_sd(acc.dice, sd_kind);
    }
    r.sites.push_back(st);
  }
  r.area_n = area.size();
  if (r.area_n > 0) r.area_mae_cm2 = mean_sd(area).mean;
  r.grade_n = grade_n;
  if (grade_n > 0) r.grade_accuracy = static_cast<double>(grade_hits) / static_cast<double>(grade_n);
  return r;
}

EvalReport evaluate(const std::vector<EvalSample>& samples, const SizeGradeScale& scale,
                    SdKind sd_kind) {
  std::vector<ImageScore> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) scores.push_back(score_sample(s, scale));
  return aggregate(scores, scale.id(), sd_kind);
}

std::vector<EvalSample> load_eval_samples(const std::vector<PipelineRecord>& records,
                                          const Manifest& manifest,
                                          const std::filesystem::path& records_dir) {
  std::map<std::string, const ManifestRow*> rows;
  for (const auto& r : manifest.rows) rows[r.image_id] = &r;
  std::vector<EvalSample> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    const auto it = rows.find(rec.image_id);
    if (it == rows.end()) {
      throw InvalidArgument("record '" + rec.image_id + "' is not in the manifest");
    }
    const ManifestRow& row = *it->second;
    EvalSample s;
    s.image_id = rec.image_id;
    s.site = row.site;
    s.succeeded = rec.succeeded();
    s.calibration = row.calibration();
    if (s.succeeded) {
      if (!row.gt_mask_path) {
        throw MissingGroundTruth("no gt_mask_path for successful image '" + rec.image_id + "'");
      }
      if (!rec.mask_path) {
        throw InvalidArgument("successful record '" + rec.image_id + "' has no mask_path");
      }
      s.ground_truth = read_mask(*row.gt_mask_path);
      s.prediction = read_mask(records_dir / *rec.mask_path);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SiteDelta> compare(const EvalReport& a, const EvalReport& b) {
  auto scored_sites = [](const EvalReport& r) {
    std::set<Site> s;
    for (const auto& st : r.sites) {
      if (st.iou) s.insert(st.site);
    }
    return s;
  };
  if (scored_sites(a) != scored_sites(b)) {
    throw SiteMismatch("reports score different site sets");
  }
  std::vector<SiteDelta> deltas;
  for (const auto& sa : a.sites) {
    if (!sa.iou) continue;
    const SiteStats* sb = b.site(sa.site);
    deltas.push_back({sa.site, (sb->iou->mean - sa.iou->mean) * 100.0,
                      (sb->dice->mean - sa.dice->mean) * 100.0});
  }
  return deltas;
}

json EvalReport::to_json() const {
  json sites_json = json::array();
  for (const auto& s : sites) {
    sites_json.push_back({{"site", to_string(s.site)},
                          {"total", s.total},
                          {"evaluated", s.evaluated},
                          {"coverage", s.coverage()},
                          {"both_empty", s.both_empty},
                          {"iou", stat_json(s.iou)},
                          {"dice", stat_json(s.dice)}});
  }
  json j = {
      {"sites", sites_json},
      {"pipeline",
       {{"successes", pipeline.successes},
        {"failures", pipeline.failures},
        {"total", pipeline.total()},
        {"rate", pipeline.rate},
        {"success_rate", pipeline.text()}}},
      {"area_mae_cm2", area_mae_cm2 ? json(*area_mae_cm2) : json(nullptr)},
      {"area_n", area_n},
      {"grade_accuracy", grade_accuracy ? json(*grade_accuracy) : json(nullptr)},
      {"grade_n", grade_n},
      {"scale", scale_id},
      {"protocol",
       {{"sd", sd_kind},
        {"failures", "detection failures excluded from IoU/Dice means, reported as coverage"},
        {"masks", "full-frame masks after projection"},
        {"area_error", "mean absolute error in cm2"},
        {"empty_pairs", "prediction and ground truth both empty score IoU = Dice = 1"}}},
  };
  if (deltas_vs_baseline) {
    json d = json::array();
    for (const auto& x : *deltas_vs_baseline) {
      d.push_back({{"site", to_string(x.site)}, {"iou_pp", x.iou_pp}, {"dice_pp", x.dice_pp}});
    }
    j["deltas_vs_baseline"] = std::move(d);
  }
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  try {
    for (const auto& s : j.at("sites")) {
      SiteStats st;
      st.site = parse_site(s.at("site").get<std::string>());
      st.total = s.at("total").get<std::size_t>();
      st.evaluated = s.at("evaluated").get<std::size_t>();
      st.both_empty = s.value("both_empty", std::size_t{0});
      st.iou = stat_from_json(s.at("iou"));
      st.dice = stat_from_json(s.at("dice"));
      r.sites.push_back(st);
    }
    const auto& p = j.at("pipeline");
    r.pipeline.successes = p.at("successes").get<std::size_t>();
    r.pipeline.failures = p.at("failures").get<std::size_t>();
    r.pipeline.rate = p.at("rate").get<double>();
    if (!j.at("area_mae_cm2").is_null()) r.area_mae_cm2 = j.at("area_mae_cm2").get<double>();
    r.area_n = j.value("area_n", std::size_t{0});
    if (!j.at("grade_accuracy").is_null()) r.grade_accuracy = j.at("grade_accuracy").get<double>();
    r.grade_n = j.value("grade_n", std::size_t{0});
    r.scale_id = j.value("scale", std::string());
    if (j.contains("protocol")) r.sd_kind = j.at("protocol").value("sd", std::string("sample"));
    if (j.contains("deltas_vs_baseline")) {
      std::vector<SiteDelta> deltas;
      for (const auto& d : j.at("deltas_vs_baseline")) {
        deltas.push_back({parse_site(d.at("site").get<std::string>()), d.at("iou_pp").get<double>(),
                          d.at("dice_pp").get<double>()});
      }
      r.deltas_vs_baseline = std::move(deltas);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string EvalReport::to_text() const {
  constexpr int kLabel = 12;
  constexpr int kCol = 18;
  auto pad = [](std::string s, int width) {
    if (static_cast<int>(s.size()) < width) s.append(width - s.size(), ' ');
    return s;
  };
  auto stat_cell = [](const std::optional<SummaryStat>& s) {
    return s ? fixed(s->mean, 2) + " +/- " + fixed(s->sd, 2) : std::string("n/a");
  };

  std::ostringstream out;
  out << pad("", kLabel);
  for (const auto& s : sites) out << pad(to_string(s.site), kCol);
  out << '\n' << pad("IoU", kLabel);
  for (const auto& s : sites) out << pad(stat_cell(s.iou), kCol);
  out << '\n' << pad("Dice", kLabel);
  for (const auto& s : sites) out << pad(stat_cell(s.dice), kCol);
  out << '\n' << pad("Coverage", kLabel);
  for (const auto& s : sites) {
    out << pad(std::to_string(s.evaluated) + "/" + std::to_string(s.total), kCol);
  }
  if (deltas_vs_baseline) {
    out << '\n' << pad("dIoU (pp)", kLabel);
    for (const auto& s : sites) {
      std::string cell = "n/a";
      for (const auto& d : *deltas_vs_baseline) {
        if (d.site == s.site) cell = (d.iou_pp >= 0 ? "+" : "") + fixed(d.iou_pp, 1);
      }
      out << pad(cell, kCol);
    }
    out << '\n' << pad("dDice (pp)", kLabel);
    for (const auto& s : sites) {
      std::string cell = "n/a";
      for (const auto& d : *deltas_vs_baseline) {
        if (d.site == s.site) cell = (d.dice_pp >= 0 ? "+" : "") + fixed(d.dice_pp, 1);
      }
      out << pad(cell, kCol);
    }
  }
  out << "\n\nPipeline success rate: " << pipeline.text() << '\n';
  out << "Area MAE (cm2): "
      << (area_mae_cm2 ? fixed(*area_mae_cm2, 3) + " over " + std::to_string(area_n) + " images"
                       : std::string("n/a (uncalibrated)"))
      << '\n';
  out << "Size grade accuracy [" << scale_id << "]: "
      << (grade_accuracy ? format_percent(*grade_accuracy) + "% over " + std::to_string(grade_n) +
                               " images"
                         : std::string("n/a"))
      << '\n';
  return out.str();
}

BBoxDetection random_roi_baseline(int frame_width, int frame_height, std::uint64_t seed) {
  if (frame_width < 1 || frame_height < 1) throw InvalidArgument("frame must be nonempty");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double W = frame_width, H = frame_height;
  const double f = 0.25 + 0.5 * unit(rng);
  // Aspect ratio range for which a box of area f*W*H fits the frame.
  const double log_lo = std::log(f * W / H);
  const double log_hi = std::log(W / (f * H));
  const double aspect = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
  double w = std::min(W, std::sqrt(f * W * H * aspect));
  double h = std::min(H, f * W * H / w);
  w = std::min(W, f * W * H / h);
  const double x = (W - w) * unit(rng);
  const double y = (H - h) * unit(rng);
  return {x, y, w, h, 1.0};
}

std::vector<BBoxDetection> RandomRoiDetector::detect(const RasterImage& img,
                                                     std::string_view image_id) const {
  return {random_roi_baseline(img.width(), img.height(), seed_ ^ fnv1a(image_id))};
}

SummaryStat annotation_agreement(const std::vector<AnnotatedMask>& rater_a,
                                 const std::vector<AnnotatedMask>& rater_b) {
  std::map<std::string, const BinaryMask*> b_by_id;
  for (const auto& [id, m] : rater_b) {
    if (!b_by_id.emplace(id, &m).second) throw ShapeError("duplicate id '" + id + "'");
  }
  if (rater_a.size() != rater_b.size()) throw ShapeError("annotation sets differ in size");
  std::vector<double> dice;
  dice.reserve(rater_a.size());
  for (const auto& [id, m] : rater_a) {
    const auto it = b_by_id.find(id);
    if (it == b_by_id.end()) throw ShapeError("id '" + id + "' has no paired annotation");
    dice.push_back(overlap(m, *it->second).dice);
  }
  return mean_sd(dice);
}

}  // namespace ulcerflow
