#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "actreg/error.hpp"
#include "actreg/rng.hpp"
#include "actreg/tensor.hpp"

namespace actreg {

/// A labelled set of samples stored as one [n x features] block, plus the
/// per-sample shape (e.g. {1, 28, 28}) used to present image batches.
struct Split {
  Tensor features;
  std::vector<int> labels;
  Shape sample_shape;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_dim() const noexcept { return features.empty() ? 0 : features.dim(1); }
};

struct DatasetHandle {
  std::string name;
  Split train;
  Split test;
  std::size_t classes = 0;

  std::size_t feature_dim() const noexcept { return train.feature_dim(); }
};

inline void validate_split(const Split& s, std::size_t classes, const char* which) {
  if (s.features.rank() != 2 || s.features.dim(0) != s.labels.size()) {
    throw ValidationError(std::string(which) + ": feature rows disagree with label count");
  }
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    if (s.labels[i] < 0 || static_cast<std::size_t>(s.labels[i]) >= classes) {
      throw ValidationError(std::string(which) + ": label " + std::to_string(s.labels[i]) + " at index " +
                            std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

/// Rows `indices` of `split` as a [b x features] tensor and their labels.
inline std::pair<Tensor, std::vector<int>> gather(const Split& split, std::span<const std::size_t> indices) {
  const std::size_t d = split.feature_dim();
  Tensor x(Shape{indices.size(), d});
  std::vector<int> y(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = split.features.data().subspan(indices[r] * d, d);
    std::copy(src.begin(), src.end(), x.data().begin() + static_cast<std::ptrdiff_t>(r * d));
    y[r] = split.labels[indices[r]];
  }
  return {std::move(x), std::move(y)};
}

inline Split subset(const Split& split, std::span<const std::size_t> indices) {
  auto [x, y] = gather(split, indices);
  return Split{std::move(x), std::move(y), split.sample_shape};
}

// ---------------------------------------------------------------------------
// IDX (MNIST distribution format)

namespace idx {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX file " + path.string());
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::uint32_t u32() {
    need(4, "32-bit header field");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes_[offset_ + static_cast<std::size_t>(i)]);
    offset_ += 4;
    return v;
  }

  std::span<const std::uint8_t> payload(std::size_t n) {
    need(n, "payload");
    auto p = std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes_.data()) + offset_, n);
    offset_ += n;
    return p;
  }

  std::size_t offset() const noexcept { return offset_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - offset_ < n) {
      throw ParseError(path_.string() + ": truncated " + what + " at byte offset " + std::to_string(offset_) +
                       " (need " + std::to_string(n) + " bytes, have " + std::to_string(bytes_.size() - offset_) +
                       ")");
    }
  }

  std::filesystem::path path_;
  std::vector<char> bytes_;
  std::size_t offset_ = 0;
};

inline void expect_magic(Reader& r, std::uint32_t want) {
  const std::size_t at = r.offset();
  const std::uint32_t got = r.u32();
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08X (expected 0x%08X)", got, want);
    throw ParseError(r.path().string() + ": " + buf + " at byte offset " + std::to_string(at));
  }
}

}  // namespace idx

/// Reads an IDX image/label file pair. Pixels are scaled to [0, 1]; samples are
/// stored flattened with sample_shape {1, rows, cols}.
inline Split load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                      std::size_t limit = 0) {
  idx::Reader images(images_path);
  idx::expect_magic(images, idx::kImageMagic);
  std::size_t count = images.u32();
  const std::size_t rows = images.u32();
  const std::size_t cols = images.u32();
  if (rows == 0 || cols == 0) throw ParseError(images_path.string() + ": zero image extent");

  idx::Reader labels(labels_path);
  idx::expect_magic(labels, idx::kLabelMagic);
  const std::size_t label_count = labels.u32();
  if (label_count != count) {
    throw ValidationError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                          std::to_string(label_count) + " labels");
  }
  const auto pix = images.payload(count * rows * cols);
  const auto label_bytes = labels.payload(count);

  if (limit != 0) count = std::min(count, limit);
  if (count == 0) throw ValidationError("IDX files contain no samples");
  Split s{Tensor(Shape{count, rows * cols}), std::vector<int>(count), Shape{1, rows, cols}};
  for (std::size_t i = 0; i < count * rows * cols; ++i) s.features[i] = static_cast<double>(pix[i]) / 255.0;
  for (std::size_t i = 0; i < count; ++i) s.labels[i] = label_bytes[i];
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian blobs

struct BlobOptions {
  std::size_t classes = 4;
  std::size_t dim = 32;
  std::size_t n_per_class = 500;
  double separation = 4.0;
  std::uint64_t seed = 0;
};

/// Unit-variance isotropic Gaussian clusters. Centers are drawn at random and
/// rescaled so that the closest pair of centers is exactly `separation` apart.
/// Samples are shuffled and split 80/20 into train/test.
inline DatasetHandle synth_blobs(const BlobOptions& o) {
  if (o.classes < 2) throw ValidationError("synth_blobs: need at least 2 classes");
  if (o.dim == 0 || o.n_per_class == 0) throw ValidationError("synth_blobs: dim and n_per_class must be positive");
  if (!(o.separation >= 0.0) || !std::isfinite(o.separation)) {
    throw ValidationError("synth_blobs: separation must be finite and >= 0");
  }
  Rng rng(o.seed);
  std::vector<double> centers(o.classes * o.dim);
  for (double& c : centers) c = rng.normal();
  double closest = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < o.classes; ++a)
    for (std::size_t b = a + 1; b < o.classes; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < o.dim; ++j) {
        const double d = centers[a * o.dim + j] - centers[b * o.dim + j];
        d2 += d * d;
      }
      closest = std::min(closest, std::sqrt(d2));
    }
  const double factor = closest > 0.0 ? o.separation / closest : 0.0;
  for (double& c : centers) c *= factor;

  const std::size_t n = o.classes * o.n_per_class;
  if (n < 5) throw ValidationError("synth_blobs: need at least 5 samples for an 80/20 split");
  std::vector<double> x(n * o.dim);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i / o.n_per_class;
    y[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < o.dim; ++j) x[i * o.dim + j] = centers[k * o.dim + j] + rng.normal();
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t n_train = n - n / 5;
  Split all{Tensor(Shape{n, o.dim}, std::move(x)), std::move(y), Shape{o.dim}};
  DatasetHandle d;
  d.name = "synth";
  d.classes = o.classes;
  d.train = subset(all, std::span(order).first(n_train));
  d.test = subset(all, std::span(order).subspan(n_train));
  return d;
}

/// Seeded partition of `split` into (fit, holdout) with `fraction` in the holdout
/// (at least one sample on each side when possible).
inline std::pair<Split, Split> holdout_split(const Split& split, double fraction, std::uint64_t seed) {
  const std::size_t n = split.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t n_hold = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  if (n >= 2) n_hold = std::clamp<std::size_t>(n_hold, 1, n - 1);
  else n_hold = 0;
  const auto hold = std::span(order).first(n_hold);
  const auto fit = std::span(order).subspan(n_hold);
  return {subset(split, fit), n_hold ? subset(split, hold) : Split{}};
}

}  // namespace actreg
