#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/random.hpp"

namespace pprs {

using Label = std::uint32_t;

/// Partition of an H x W pixel grid into p non-empty groups. Labels are
/// compacted in raster order of first appearance, so two segmentations
/// describe the same partition exactly when their label vectors are equal.
/// All channels of a pixel share its label.
class Segmentation {
 public:
  Segmentation() = default;

  /// Compacts arbitrary integer labels.
  static Segmentation from_labels(std::size_t height, std::size_t width, std::span<const Label> raw) {
    if (raw.size() != height * width) throw ShapeError("segmentation label count does not match grid");
    Segmentation s;
    s.height_ = height;
    s.width_ = width;
    s.labels_.resize(raw.size());
    std::vector<Label> remap;
    constexpr Label kUnset = std::numeric_limits<Label>::max();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const Label r = raw[i];
      if (r >= remap.size()) remap.resize(static_cast<std::size_t>(r) + 1, kUnset);
      if (remap[r] == kUnset) {
        remap[r] = static_cast<Label>(s.sizes_.size());
        s.sizes_.push_back(0);
      }
      s.labels_[i] = remap[r];
      ++s.sizes_[remap[r]];
    }
    return s;
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return labels_.size(); }
  std::size_t partition_count() const noexcept { return sizes_.size(); }
  std::span<const Label> labels() const noexcept { return labels_; }
  std::span<const std::size_t> sizes() const noexcept { return sizes_; }
  Label operator()(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }

  bool same_grid(const Segmentation& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }
  bool matches(const Image& image) const noexcept { return height_ == image.height() && width_ == image.width(); }

  friend bool operator==(const Segmentation&, const Segmentation&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<Label> labels_;
  std::vector<std::size_t> sizes_;
};

/// Every pixel in its own partition.
inline Segmentation identity_partition(std::size_t height, std::size_t width) {
  std::vector<Label> raw(height * width);
  std::iota(raw.begin(), raw.end(), Label{0});
  return Segmentation::from_labels(height, width, raw);
}

/// Rectangular tiling with cell_h x cell_w cells; cells on the bottom and
/// right edges may be smaller. Partitions are numbered in row-major cell order.
inline Segmentation grid_partition(std::size_t height, std::size_t width, std::size_t cell_h, std::size_t cell_w) {
  if (cell_h == 0 || cell_w == 0) throw DomainError("grid_partition: cell dimensions must be >= 1");
  if (height == 0 || width == 0) throw DomainError("grid_partition: zero image dimension");
  const std::size_t cols = (width + cell_w - 1) / cell_w;
  std::vector<Label> raw(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) raw[y * width + x] = static_cast<Label>((y / cell_h) * cols + x / cell_w);
  }
  return Segmentation::from_labels(height, width, raw);
}

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }

  /// Joins the sets of a and b; returns the surviving root.
  std::size_t unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }

  std::size_t size_of(std::size_t a) { return size_[find(a)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

/// Labels each 4-connected run of equal raw labels with its own id.
inline std::vector<Label> four_connected_components(std::size_t height, std::size_t width, std::span<const Label> raw) {
  DisjointSets sets(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      if (x + 1 < width && raw[i] == raw[i + 1]) sets.unite(i, i + 1);
      if (y + 1 < height && raw[i] == raw[i + width]) sets.unite(i, i + width);
    }
  }
  std::vector<Label> comp(height * width);
  for (std::size_t i = 0; i < comp.size(); ++i) comp[i] = static_cast<Label>(sets.find(i));
  return comp;
}

}  // namespace detail

/// Splits every partition into its 4-connected pieces.
inline Segmentation split_four_connected(std::size_t height, std::size_t width, std::span<const Label> raw) {
  const auto comp = detail::four_connected_components(height, width, raw);
  return Segmentation::from_labels(height, width, comp);
}

inline bool is_four_connected(const Segmentation& seg) {
  const auto comp = detail::four_connected_components(seg.height(), seg.width(), seg.labels());
  return Segmentation::from_labels(seg.height(), seg.width(), comp).partition_count() == seg.partition_count();
}

/// Checks compaction, non-empty partitions and size bookkeeping.
inline bool is_well_formed(const Segmentation& seg) {
  if (seg.labels().size() != seg.height() * seg.width()) return false;
  std::vector<std::size_t> counts(seg.partition_count(), 0);
  Label next = 0;
  for (Label l : seg.labels()) {
    if (l >= seg.partition_count()) return false;
    if (l > next) return false;  // first appearances must be in raster order
    if (l == next) ++next;
    ++counts[l];
  }
  std::size_t total = 0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0 || counts[j] != seg.sizes()[j]) return false;
    total += counts[j];
  }
  return total == seg.pixel_count();
}

namespace detail {

/// A_S applied to one channel plane with stride `stride` starting at `offset`.
inline void average_plane(const Segmentation& seg, std::span<const double> in, std::span<double> out, std::size_t stride,
                          std::size_t offset, std::vector<double>& sums) {
  sums.assign(seg.partition_count(), 0.0);
  const auto labels = seg.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) sums[labels[i]] += in[i * stride + offset];
  const auto sizes = seg.sizes();
  for (std::size_t j = 0; j < sums.size(); ++j) sums[j] /= static_cast<double>(sizes[j]);
  for (std::size_t i = 0; i < labels.size(); ++i) out[i * stride + offset] = sums[labels[i]];
}

}  // namespace detail

/// A_S x: each pixel receives, per channel, the mean of its partition.
inline Image partition_average(const Image& x, const Segmentation& seg) {
  if (!seg.matches(x)) throw ShapeError("partition_average: segmentation grid does not match image");
  Image out(x.height(), x.width(), x.channels());
  std::vector<double> sums;
  for (std::size_t c = 0; c < x.channels(); ++c) {
    detail::average_plane(seg, x.data(), out.values(), x.channels(), c, sums);
  }
  return out;
}

/// Power-iteration estimate of the spectral norm ||A_a - A_b||_2. Both
/// operators act identically on every channel plane, so one plane suffices.
/// Returns exactly 0 when the partitions coincide.
inline double operator_norm_diff(const Segmentation& a, const Segmentation& b, std::size_t iters, Rng& rng) {
  if (!a.same_grid(b)) throw ShapeError("operator_norm_diff: segmentations cover different grids");
  if (a.labels().size() == b.labels().size() && std::equal(a.labels().begin(), a.labels().end(), b.labels().begin())) {
    return 0.0;
  }
  const std::size_t n = a.pixel_count();
  std::vector<double> v(n), av(n), bv(n), w(n), sums;
  for (double& e : v) e = rng.normal();

  auto apply_diff = [&](std::span<const double> in, std::span<double> out) {
    detail::average_plane(a, in, av, 1, 0, sums);
    detail::average_plane(b, in, bv, 1, 0, sums);
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
  };
  auto normalize = [](std::vector<double>& x) {
    const double nrm = l2_norm(x);
    if (nrm > 0.0) {
      for (double& e : x) e /= nrm;
    }
    return nrm;
  };

  if (normalize(v) == 0.0) v.assign(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double best = 0.0;
  for (std::size_t it = 0; it < std::max<std::size_t>(iters, 1); ++it) {
    apply_diff(v, w);
    const double dv = l2_norm(w);
    best = std::max(best, dv);
    if (dv == 0.0) break;
    // D is symmetric, so D(Dv) is one step of power iteration on D^2.
    apply_diff(w, v);
    if (normalize(v) == 0.0) break;
  }
  return best;
}

/// Text label map: "width height partition_count" then one row of labels per line.
inline std::string encode_label_map(const Segmentation& seg) {
  std::ostringstream out;
  out << seg.width() << ' ' << seg.height() << ' ' << seg.partition_count() << '\n';
  for (std::size_t y = 0; y < seg.height(); ++y) {
    for (std::size_t x = 0; x < seg.width(); ++x) {
      if (x) out << ' ';
      out << seg(y, x);
    }
    out << '\n';
  }
  return out.str();
}

inline void save_label_map(const Segmentation& seg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << encode_label_map(seg);
  if (!out) throw IoError("write failed for " + path.string());
}

inline Segmentation decode_label_map(const std::string& text) {
  std::istringstream in(text);
  std::size_t w = 0, h = 0, p = 0;
  if (!(in >> w >> h >> p) || w == 0 || h == 0) {
    throw ParseError(ParseError::Kind::kMalformedHeader, 0, "label map header must be 'width height partition_count'");
  }
  std::vector<Label> raw(w * h);
  for (auto& l : raw) {
    if (!(in >> l)) {
      throw ParseError(ParseError::Kind::kTruncatedPayload, static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())),
                       "label map truncated");
    }
  }
  auto seg = Segmentation::from_labels(h, w, raw);
  if (seg.partition_count() != p) {
    throw ParseError(ParseError::Kind::kLengthMismatch, 0, "label map declares " + std::to_string(p) + " partitions, found " +
                                                             std::to_string(seg.partition_count()));
  }
  return seg;
}

inline Segmentation load_label_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_label_map(ss.str());
}

}  // namespace pprs
