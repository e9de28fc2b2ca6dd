#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ulcerflow/detection.hpp"
#include "ulcerflow/imaging.hpp"

namespace ulcerflow {

inline constexpr double kDefaultBinarizeThresh = 0.5;

/// Frozen segmentation model: 512x512 RGB in, 512x512 probability map out.
class SegmenterBackend {
 public:
  virtual ~SegmenterBackend() = default;

  virtual ModelInfo info() const = 0;
  /// Same meaning as DetectorBackend::exclusive().
  virtual bool exclusive() const { return false; }
  /// Called with a validated 512x512 input. Throws BackendError on failure.
  virtual ProbMap predict(const RasterImage& roi512) const = 0;
};

/// Parameters of the non-clinical redness segmenter.
struct FallbackParams {
  double gain = 12.0;
  /// Redness at which the probability crosses 0.5. Neutral gray sits below it.
  double center = 0.10;
};

/// Deterministic color-rule segmenter used as a test double when no model
/// weights are available. Not a clinical method.
///
/// p = logistic(gain * (redness - center)), redness = (R - (G+B)/2) / 255.
class FallbackSegmenter final : public SegmenterBackend {
 public:
  explicit FallbackSegmenter(FallbackParams params = {}) : params_(params) {}

  ModelInfo info() const override { return {"fallback-redness (non-clinical)", kModelInputSize, ""}; }
  ProbMap predict(const RasterImage& roi512) const override;

  /// Probability assigned to a single RGB value.
  double probability(std::uint8_t r, std::uint8_t g, std::uint8_t b) const;

 private:
  FallbackParams params_;
};

enum class OutputActivation { none, sigmoid };
enum class InputNormalization { unit, imagenet };

/// ONNX segmentation model through OpenCV's DNN module. Input is NCHW float
/// RGB; the single output is (1,1,512,512) or (1,512,512).
class OnnxSegmenter final : public SegmenterBackend {
 public:
  OnnxSegmenter(const std::filesystem::path& model_path,
                OutputActivation activation = OutputActivation::none,
                InputNormalization normalization = InputNormalization::imagenet);
  ~OnnxSegmenter() override;

  ModelInfo info() const override { return info_; }
  bool exclusive() const override { return true; }
  ProbMap predict(const RasterImage& roi512) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ModelInfo info_;
  OutputActivation activation_;
  InputNormalization normalization_;
};

/// Validates the input shape and runs the backend.
/// Throws InputShapeError for non-512x512 inputs.
ProbMap run_segmenter(const SegmenterBackend& backend, const RasterImage& roi512);

ProbMap fallback_threshold_segmenter(const RasterImage& roi512);

/// mask = 1 where p >= thresh.
BinaryMask binarize(const ProbMap& p, double thresh = kDefaultBinarizeThresh);

struct RefineOptions {
  bool keep_largest = true;
  bool fill_holes = true;
  int min_area_px = 16;
};

/// Connected-component cleanup (4-connectivity). Order: drop components
/// smaller than min_area_px, keep the largest, fill holes.
BinaryMask refine_mask(const BinaryMask& m, const RefineOptions& opts = {});

enum class Flip { horizontal, vertical };

Flip parse_flip(const std::string& name);

RasterImage flip_image(const RasterImage& img, Flip flip);
ProbMap flip_probmap(const ProbMap& p, Flip flip);

/// Mean of un-flipped predictions over the identity and each flip.
ProbMap tta_segment(const SegmenterBackend& backend, const RasterImage& roi512,
                    const std::vector<Flip>& flips);

}  // namespace ulcerflow
