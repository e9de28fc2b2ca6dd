// ulcerflow: batch wound segmentation, overlays and evaluation reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulcerflow/errors.hpp"
#include "ulcerflow/evalharness.hpp"
#include "ulcerflow/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ulcerflow;

namespace {

constexpr int kExitProcessErrors = 1;
constexpr int kExitUsage = 2;

int cmd_run(const fs::path& manifest_path, const std::optional<fs::path>& config_path,
            const fs::path& out_dir, std::optional<int> workers, bool tta, bool fallback) {
  PipelineConfig cfg = config_path ? PipelineConfig::load(*config_path) : PipelineConfig{};
  cfg.output_dir = out_dir.string();
  if (workers) cfg.workers = *workers;
  if (tta) cfg.tta = true;
  if (fallback) cfg.segmenter_model = "fallback";
  cfg.validate();

  const Manifest manifest = Manifest::load(manifest_path);
  const BatchResult result = run_batch(manifest, cfg, make_backends(cfg));
  for (const auto& m : result.summary.models) {
    std::cerr << "model: " << m.name << " input=" << m.input_size
              << (m.checksum.empty() ? "" : " sha256=" + m.checksum) << '\n';
  }
  std::cout << "Pipeline success rate: " << result.summary.success.text() << '\n';
  for (const auto& [status, count] : result.summary.status_counts) {
    std::cout << "  " << status << ": " << count << '\n';
  }
  return result.summary.has_process_errors() ? kExitProcessErrors : 0;
}

int cmd_overlay(const fs::path& image, const fs::path& mask, const fs::path& out, double alpha,
                const std::vector<int>& color) {
  if (color.size() != 3) throw ConfigError("--color takes three values r g b");
  const Rgb rgb{static_cast<std::uint8_t>(color[0]), static_cast<std::uint8_t>(color[1]),
                static_cast<std::uint8_t>(color[2])};
  emit_overlay(read_image(image), read_mask(mask), alpha, out, rgb);
  return 0;
}

int cmd_report(const fs::path& records_path, const fs::path& manifest_path,
               const std::optional<fs::path>& baseline_path, std::optional<fs::path> out_dir,
               const std::string& scale_id, const std::optional<fs::path>& config_path,
               bool population_sd) {
  const auto records = read_records_jsonl(records_path);
  const Manifest manifest = Manifest::load(manifest_path);
  const fs::path records_dir = records_path.parent_path();
  const SizeGradeScale scale =
      config_path ? PipelineConfig::load(*config_path).scale() : SizeGradeScale::by_id(scale_id);

  EvalReport report = evaluate(load_eval_samples(records, manifest, records_dir), scale,
                               population_sd ? SdKind::population : SdKind::sample);
  if (baseline_path) {
    std::ifstream in(*baseline_path);
    if (!in) throw ConfigError("cannot open baseline " + baseline_path->string());
    const EvalReport baseline = EvalReport::from_json(nlohmann::json::parse(in));
    report.deltas_vs_baseline = compare(baseline, report);
  }

  const fs::path dir = out_dir.value_or(records_dir);
  fs::create_directories(dir);
  {
    std::ofstream j(dir / "report.json");
    j << report.to_json().dump(2) << '\n';
    if (!j) throw WriteError("cannot write " + (dir / "report.json").string());
  }
  const std::string text = report.to_text();
  {
    std::ofstream t(dir / "report.txt");
    t << text;
    if (!t) throw WriteError("cannot write " + (dir / "report.txt").string());
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ulcerflow: wound ROI detection, segmentation and DESIGN-R size scoring"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the pipeline over a manifest");
  fs::path run_manifest, run_out;
  std::optional<fs::path> run_config;
  std::optional<int> run_workers;
  bool run_tta = false, run_fallback = false;
  run->add_option("--manifest", run_manifest, "Manifest CSV")->required();
  run->add_option("--config", run_config, "Pipeline config JSON");
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--workers", run_workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--tta", run_tta, "Enable flip test-time augmentation");
  run->add_flag("--fallback-segmenter", run_fallback,
                "Use the non-clinical redness segmenter instead of a model");

  auto* overlay = app.add_subcommand("overlay", "Blend a mask over an image");
  fs::path ov_image, ov_mask, ov_out;
  double ov_alpha = 0.4;
  std::vector<int> ov_color{255, 0, 0};
  overlay->add_option("--image", ov_image)->required();
  overlay->add_option("--mask", ov_mask)->required();
  overlay->add_option("--out", ov_out)->required();
  overlay->add_option("--alpha", ov_alpha)->check(CLI::Range(0.0, 1.0));
  overlay->add_option("--color", ov_color, "r g b")->expected(3)->check(CLI::Range(0, 255));

  auto* report = app.add_subcommand("report", "Evaluate records against ground truth");
  fs::path rep_records, rep_manifest;
  std::optional<fs::path> rep_baseline, rep_out, rep_config;
  std::string rep_scale = "designr2020";
  bool rep_population = false;
  report->add_option("--records", rep_records, "records.jsonl")->required();
  report->add_option("--manifest", rep_manifest, "Manifest CSV with gt_mask_path")->required();
  report->add_option("--baseline", rep_baseline, "Baseline report.json for deltas");
  report->add_option("--out", rep_out, "Output directory (default: next to records)");
  report->add_option("--scale", rep_scale, "Grade scale id (designr2020|s1-s5)");
  report->add_option("--config", rep_config, "Take the grade scale from a pipeline config");
  report->add_flag("--population-sd", rep_population, "Population instead of sample SD");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_manifest, run_config, run_out, run_workers, run_tta, run_fallback);
    if (*overlay) return cmd_overlay(ov_image, ov_mask, ov_out, ov_alpha, ov_color);
    if (*report) {
      return cmd_report(rep_records, rep_manifest, rep_baseline, rep_out, rep_scale, rep_config,
                        rep_population);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitProcessErrors;
  }
  return 0;
}
