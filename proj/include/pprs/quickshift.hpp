#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/segmentation.hpp"

namespace pprs {

/// Distances are in pixel units; colours enter the feature vector as
/// ratio * intensity with intensities in [0, 1].
struct QuickshiftParams {
  double kernel_size = 1.0;
  double max_dist = 4.0;
  double ratio = 1.0;
};

namespace detail {

inline double quickshift_feature_dist2(std::span<const double> pix, std::size_t C, double ratio, std::size_t W,
                                       std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double d = ratio * (pix[i * C + c] - pix[j * C + c]);
    s += d * d;
  }
  const double dy = static_cast<double>(i / W) - static_cast<double>(j / W);
  const double dx = static_cast<double>(i % W) - static_cast<double>(j % W);
  return s + dy * dy + dx * dx;
}

}  // namespace detail

/// Parzen density of every pixel in (ratio * colour, y, x) space, Gaussian
/// kernel of bandwidth kernel_size over a square window of radius
/// ceil(3 * kernel_size). Exposed for inspection and tests.
inline std::vector<double> quickshift_density(const Image& image, double kernel_size, double ratio) {
  const std::size_t H = image.height();
  const std::size_t W = image.width();
  const std::size_t C = image.channels();
  const auto pix = image.data();
  const long R = static_cast<long>(std::ceil(3.0 * kernel_size));
  const double inv = 1.0 / (2.0 * kernel_size * kernel_size);
  std::vector<double> density(H * W, 0.0);
  for (long y = 0; y < static_cast<long>(H); ++y) {
    for (long x = 0; x < static_cast<long>(W); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
      double e = 0.0;
      for (long yy = std::max(0L, y - R); yy <= std::min(static_cast<long>(H) - 1, y + R); ++yy) {
        for (long xx = std::max(0L, x - R); xx <= std::min(static_cast<long>(W) - 1, x + R); ++xx) {
          const std::size_t j = static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx);
          e += std::exp(-detail::quickshift_feature_dist2(pix, C, ratio, W, i, j) * inv);
        }
      }
      density[i] = e;
    }
  }
  return density;
}

/// Quickshift mode seeking: each pixel links to the nearest pixel (feature
/// distance at most max_dist) of strictly higher density; pixels without such
/// a neighbour are roots and every tree becomes one segment. Densities are
/// compared after rounding to 1e-9 of the maximum, with equal values ordered
/// by pixel index, so symmetric images yield a single deterministic root.
/// Trees may reach across other segments, so each one is finally split into
/// its 4-connected pieces.
inline Segmentation quickshift(const Image& image, const QuickshiftParams& params) {
  if (!(params.kernel_size > 0.0)) throw DomainError("quickshift: kernel_size must be > 0");
  if (!(params.max_dist > 0.0)) throw DomainError("quickshift: max_dist must be > 0");
  if (!(params.ratio > 0.0 && params.ratio <= 1.0)) throw DomainError("quickshift: ratio must lie in (0, 1]");
  const std::size_t H = image.height();
  const std::size_t W = image.width();
  const std::size_t C = image.channels();
  if (H * W == 0) throw DomainError("quickshift: empty image");
  const auto pix = image.data();

  const auto density = quickshift_density(image, params.kernel_size, params.ratio);
  const double top = *std::max_element(density.begin(), density.end());
  std::vector<std::int64_t> rank(density.size());
  for (std::size_t i = 0; i < density.size(); ++i) rank[i] = std::llround(density[i] / top * 1e9);
  auto higher = [&](std::size_t j, std::size_t i) { return rank[j] > rank[i] || (rank[j] == rank[i] && j < i); };

  const long L = static_cast<long>(std::ceil(params.max_dist));
  const double max_d2 = params.max_dist * params.max_dist;
  detail::DisjointSets trees(H * W);
  for (long y = 0; y < static_cast<long>(H); ++y) {
    for (long x = 0; x < static_cast<long>(W); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
      std::size_t parent = i;
      double best = std::numeric_limits<double>::infinity();
      for (long yy = std::max(0L, y - L); yy <= std::min(static_cast<long>(H) - 1, y + L); ++yy) {
        for (long xx = std::max(0L, x - L); xx <= std::min(static_cast<long>(W) - 1, x + L); ++xx) {
          const std::size_t j = static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx);
          if (!higher(j, i)) continue;
          const double d2 = detail::quickshift_feature_dist2(pix, C, params.ratio, W, i, j);
          if (d2 <= max_d2 && d2 < best) {
            best = d2;
            parent = j;
          }
        }
      }
      if (parent != i) trees.unite(i, parent);
    }
  }

  std::vector<Label> raw(H * W);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<Label>(trees.find(i));
  return split_four_connected(H, W, raw);
}

inline Segmentation quickshift(const Image& image, double kernel_size, double max_dist, double ratio) {
  return quickshift(image, QuickshiftParams{kernel_size, max_dist, ratio});
}

}  // namespace pprs
