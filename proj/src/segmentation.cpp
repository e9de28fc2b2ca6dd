#include "ulcerflow/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/dnn.hpp>

#include "ulcerflow/errors.hpp"

namespace ulcerflow {

namespace {

// 4-connected component labels of pixels whose value equals `value`.
// Label 0 marks pixels of the other value; components are numbered from 1 in
// raster order of their first pixel.
struct Components {
  std::vector<int> labels;
  std::vector<std::size_t> sizes;  // sizes[k] is the size of label k+1
  std::vector<bool> touches_border;
};

Components label_components(const BinaryMask& m, bool value) {
  const int w = m.width(), h = m.height();
  Components c;
  c.labels.assign(static_cast<std::size_t>(w) * h, 0);
  std::vector<int> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t i0 = static_cast<std::size_t>(y0) * w + x0;
      if (m.get(x0, y0) != value || c.labels[i0] != 0) continue;
      const int label = static_cast<int>(c.sizes.size()) + 1;
      std::size_t size = 0;
      bool border = false;
      c.labels[i0] = label;
      stack.assign(1, static_cast<int>(i0));
      while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        ++size;
        const int x = i % w, y = i / w;
        if (x == 0 || y == 0 || x == w - 1 || y == h - 1) border = true;
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
          const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
          if (c.labels[j] == 0 && m.get(nx[k], ny[k]) == value) {
            c.labels[j] = label;
            stack.push_back(static_cast<int>(j));
          }
        }
      }
      c.sizes.push_back(size);
      c.touches_border.push_back(border);
    }
  }
  return c;
}

BinaryMask keep_labels(const BinaryMask& m, const Components& c,
                       const std::vector<bool>& keep) {
  BinaryMask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      const int l = c.labels[static_cast<std::size_t>(y) * m.width() + x];
      if (l > 0 && keep[l - 1]) out.set(x, y, true);
    }
  }
  return out;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

// ---------------------------------------------------------------------------
// Backends

double FallbackSegmenter::probability(std::uint8_t r, std::uint8_t g, std::uint8_t b) const {
  const double redness = (r - (g + b) / 2.0) / 255.0;
  return logistic(params_.gain * (redness - params_.center));
}

ProbMap FallbackSegmenter::predict(const RasterImage& roi512) const {
  std::vector<float> values(static_cast<std::size_t>(roi512.width()) * roi512.height());
  const auto px = roi512.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<float>(probability(px[3 * i], px[3 * i + 1], px[3 * i + 2]));
  }
  return ProbMap(roi512.width(), roi512.height(), std::move(values));
}

struct OnnxSegmenter::Impl {
  cv::dnn::Net net;
};

OnnxSegmenter::OnnxSegmenter(const std::filesystem::path& model_path,
                             OutputActivation activation,
                             InputNormalization normalization)
    : impl_(std::make_unique<Impl>()), activation_(activation), normalization_(normalization) {
  try {
    impl_->net = cv::dnn::readNetFromONNX(model_path.string());
  } catch (const cv::Exception& e) {
    throw BackendError("cannot load segmentation model " + model_path.string() + ": " +
                       e.what());
  }
  if (impl_->net.empty()) throw BackendError("empty segmentation model " + model_path.string());
  info_ = {model_path.filename().string(), kModelInputSize, sha256_file(model_path)};
}

OnnxSegmenter::~OnnxSegmenter() = default;

ProbMap OnnxSegmenter::predict(const RasterImage& roi512) const {
  const cv::Mat rgb(roi512.height(), roi512.width(), CV_8UC3,
                    const_cast<std::uint8_t*>(roi512.data().data()));
  cv::Mat blob;
  if (normalization_ == InputNormalization::imagenet) {
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    cv::subtract(f, cv::Scalar(0.485, 0.456, 0.406), f);
    cv::divide(f, cv::Scalar(0.229, 0.224, 0.225), f);
    blob = cv::dnn::blobFromImage(f, 1.0, {}, {}, false, false, CV_32F);
  } else {
    blob = cv::dnn::blobFromImage(rgb, 1.0 / 255.0, {}, {}, false, false, CV_32F);
  }
  cv::Mat out;
  try {
    impl_->net.setInput(blob);
    out = impl_->net.forward();
  } catch (const cv::Exception& e) {
    throw BackendError(std::string("segmentation inference failed: ") + e.what());
  }
  const std::size_t expected = static_cast<std::size_t>(kModelInputSize) * kModelInputSize;
  if (out.type() != CV_32F || out.total() != expected) {
    throw BackendError("segmentation output must be a single 512x512 float map");
  }
  if (!out.isContinuous()) out = out.clone();
  const float* p = out.ptr<float>();
  std::vector<float> values(p, p + expected);
  if (activation_ == OutputActivation::sigmoid) {
    for (float& v : values) v = static_cast<float>(logistic(v));
  }
  return ProbMap(kModelInputSize, kModelInputSize, std::move(values));
}

ProbMap run_segmenter(const SegmenterBackend& backend, const RasterImage& roi512) {
  if (roi512.width() != kModelInputSize || roi512.height() != kModelInputSize) {
    throw InputShapeError("segmenter input must be 512x512, got " +
                          std::to_string(roi512.width()) + "x" +
                          std::to_string(roi512.height()));
  }
  ProbMap p = backend.predict(roi512);
  if (p.width() != kModelInputSize || p.height() != kModelInputSize) {
    throw BackendError("segmenter returned a " + std::to_string(p.width()) + "x" +
                       std::to_string(p.height()) + " map");
  }
  return p;
}

ProbMap fallback_threshold_segmenter(const RasterImage& roi512) {
  return run_segmenter(FallbackSegmenter{}, roi512);
}

// ---------------------------------------------------------------------------
// Post-processing

BinaryMask binarize(const ProbMap& p, double thresh) {
  BinaryMask m(p.width(), p.height());
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      if (p.at(x, y) >= thresh) m.set(x, y, true);
    }
  }
  return m;
}

BinaryMask refine_mask(const BinaryMask& m, const RefineOptions& opts) {
  BinaryMask out = m;
  if (opts.min_area_px > 1 || opts.keep_largest) {
    const Components fg = label_components(out, true);
    std::vector<bool> keep(fg.sizes.size());
    for (std::size_t k = 0; k < fg.sizes.size(); ++k) {
      keep[k] = fg.sizes[k] >= static_cast<std::size_t>(std::max(opts.min_area_px, 0));
    }
    if (opts.keep_largest) {
      std::size_t best = fg.sizes.size();
      for (std::size_t k = 0; k < fg.sizes.size(); ++k) {
        // Strict comparison: the first component in raster order wins ties.
        if (keep[k] && (best == fg.sizes.size() || fg.sizes[k] > fg.sizes[best])) best = k;
      }
      for (std::size_t k = 0; k < keep.size(); ++k) keep[k] = (k == best);
    }
    out = keep_labels(out, fg, keep);
  }
  if (opts.fill_holes) {
    const Components bg = label_components(out, false);
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        const int l = bg.labels[static_cast<std::size_t>(y) * out.width() + x];
        if (l > 0 && !bg.touches_border[l - 1]) out.set(x, y, true);
      }
    }
  }
  return out;
}

Flip parse_flip(const std::string& name) {
  if (name == "horizontal" || name == "h") return Flip::horizontal;
  if (name == "vertical" || name == "v") return Flip::vertical;
  throw ConfigError("unknown flip '" + name + "' (expected horizontal|vertical)");
}

RasterImage flip_image(const RasterImage& img, Flip flip) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int sx = flip == Flip::horizontal ? img.width() - 1 - x : x;
      const int sy = flip == Flip::vertical ? img.height() - 1 - y : y;
      for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

ProbMap flip_probmap(const ProbMap& p, Flip flip) {
  ProbMap out(p.width(), p.height());
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      const int sx = flip == Flip::horizontal ? p.width() - 1 - x : x;
      const int sy = flip == Flip::vertical ? p.height() - 1 - y : y;
      out.set(x, y, p.at(sx, sy));
    }
  }
  return out;
}

ProbMap tta_segment(const SegmenterBackend& backend, const RasterImage& roi512,
                    const std::vector<Flip>& flips) {
  std::vector<Flip> unique = flips;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  const ProbMap base = run_segmenter(backend, roi512);
  if (unique.empty()) return base;

  std::vector<double> sum(base.data().begin(), base.data().end());
  for (Flip f : unique) {
    const ProbMap p = flip_probmap(run_segmenter(backend, flip_image(roi512, f)), f);
    const auto d = p.data();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += d[i];
  }
  const double n = static_cast<double>(unique.size() + 1);
  std::vector<float> mean(sum.size());
  std::transform(sum.begin(), sum.end(), mean.begin(),
                 [n](double s) { return static_cast<float>(s / n); });
  return ProbMap(base.width(), base.height(), std::move(mean));
}

}  // namespace ulcerflow
