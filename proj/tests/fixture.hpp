#pragma once

// On-disk synthetic datasets for pipeline and evaluation tests.

#include <filesystem>
#include <random>
#include <string>

#include "synthetic.hpp"
#include "ulcerflow/pipeline.hpp"

namespace ulcerflow::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (name + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct DiscCase {
  std::string id;
  int width = 0;
  int height = 0;
  Disc disc;
  double pixels_per_cm = 0.0;
  Site site = Site::other;
};

/// Writes image and ground-truth PNGs for each case and returns the manifest
/// (also saved as manifest.csv in `dir`).
inline Manifest write_disc_dataset(const std::filesystem::path& dir,
                                   const std::vector<DiscCase>& cases) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "gt");
  Manifest m;
  for (const auto& c : cases) {
    const auto img_path = dir / "images" / (c.id + ".png");
    const auto gt_path = dir / "gt" / (c.id + ".png");
    write_image(disc_image(c.width, c.height, c.disc), img_path);
    write_mask(disc_mask(c.width, c.height, c.disc), gt_path);
    ManifestRow row;
    row.image_id = c.id;
    row.path = img_path;
    row.site = c.site;
    if (c.pixels_per_cm > 0) row.pixels_per_cm = c.pixels_per_cm;
    row.gt_mask_path = gt_path;
    m.rows.push_back(std::move(row));
  }
  m.save(dir / "manifest.csv");
  return m;
}

inline std::vector<DiscCase> random_disc_cases(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(120, 400);
  std::vector<DiscCase> out;
  for (int i = 0; i < n; ++i) {
    DiscCase c;
    c.id = "img" + std::to_string(i);
    c.width = dim(rng);
    c.height = dim(rng);
    const double rmax = std::min(c.width, c.height) / 2.0 - 8.0;
    std::uniform_real_distribution<double> rr(10.0, rmax);
    c.disc.r = rr(rng);
    std::uniform_real_distribution<double> cx(c.disc.r + 4, c.width - c.disc.r - 4);
    std::uniform_real_distribution<double> cy(c.disc.r + 4, c.height - c.disc.r - 4);
    c.disc.cx = cx(rng);
    c.disc.cy = cy(rng);
    c.pixels_per_cm = 5.0 + static_cast<double>(rng() % 20);
    c.site = kAllSites[i % 3];
    out.push_back(c);
  }
  return out;
}

/// Mock detector box around the disc (tight, confidence 0.9).
inline BBoxDetection disc_box(const Disc& d) {
  return {d.cx - d.r, d.cy - d.r, 2 * d.r, 2 * d.r, 0.9};
}

}  // namespace ulcerflow::testing
