#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <tuple>
#include <vector>

#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/segmentation.hpp"

namespace pprs {

struct SlicParams {
  std::size_t target_partitions = 100;
  double compactness = 10.0;
  std::size_t max_iters = 10;
};

namespace detail {

/// Relabels every 4-connected fragment that is not the largest piece of its
/// label into the largest 4-adjacent segment. Fragments are absorbed from the
/// smallest up, so a fragment may grow before it is itself absorbed.
inline Segmentation enforce_connectivity(std::size_t height, std::size_t width, std::span<const Label> raw) {
  const std::size_t n = height * width;
  const auto comp = four_connected_components(height, width, raw);

  // Component bookkeeping keyed by the root pixel.
  struct Piece {
    std::size_t root;
    std::size_t size = 0;
    std::size_t first;
  };
  std::vector<std::size_t> piece_of(n, std::numeric_limits<std::size_t>::max());
  std::vector<Piece> pieces;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = comp[i];
    if (piece_of[r] == std::numeric_limits<std::size_t>::max()) {
      piece_of[r] = pieces.size();
      pieces.push_back({r, 0, i});
      members.emplace_back();
    }
    auto& p = pieces[piece_of[r]];
    ++p.size;
    members[piece_of[r]].push_back(i);
  }

  // Largest piece per raw label survives; ties go to the earliest piece.
  std::vector<std::size_t> main_piece(n == 0 ? 0 : *std::max_element(raw.begin(), raw.end()) + 1,
                                      std::numeric_limits<std::size_t>::max());
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    auto& best = main_piece[raw[pieces[k].first]];
    if (best == std::numeric_limits<std::size_t>::max() || pieces[k].size > pieces[best].size) best = k;
  }

  std::vector<std::size_t> fragments;
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    if (main_piece[raw[pieces[k].first]] != k) fragments.push_back(k);
  }
  std::sort(fragments.begin(), fragments.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(pieces[a].size, pieces[a].first) < std::tie(pieces[b].size, pieces[b].first);
  });

  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i) sets.unite(i, comp[i]);

  for (std::size_t k : fragments) {
    const std::size_t self = sets.find(pieces[k].root);
    std::size_t best_root = self;
    std::size_t best_size = 0;
    for (std::size_t i : members[k]) {
      const std::size_t y = i / width;
      const std::size_t x = i % width;
      const std::size_t nbrs[4] = {x > 0 ? i - 1 : i, x + 1 < width ? i + 1 : i, y > 0 ? i - width : i,
                                   y + 1 < height ? i + width : i};
      for (std::size_t j : nbrs) {
        const std::size_t r = sets.find(j);
        if (r == self) continue;
        const std::size_t s = sets.size_of(r);
        if (s > best_size || (s == best_size && r < best_root)) {
          best_size = s;
          best_root = r;
        }
      }
    }
    if (best_root != self) sets.unite(self, best_root);
  }

  std::vector<Label> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<Label>(sets.find(i));
  return Segmentation::from_labels(height, width, out);
}

}  // namespace detail

/// SLIC superpixels: k-means over (colour, position) with centres seeded on a
/// regular grid of spacing S = sqrt(HW / k) and a 2S x 2S search window per
/// centre. Distance is sqrt(d_color^2 + (d_xy / S)^2 m^2) in raw [0, 1]
/// colour space. Ties go to the lower centre index; the 3x3 low-gradient
/// seed perturbation is not applied. Output segments are 4-connected.
inline Segmentation slic(const Image& image, const SlicParams& params) {
  const std::size_t H = image.height();
  const std::size_t W = image.width();
  const std::size_t C = image.channels();
  const std::size_t n = H * W;
  if (n == 0) throw DomainError("slic: empty image");
  if (params.target_partitions < 1 || params.target_partitions > n) {
    throw DomainError("slic: target_partitions must lie in [1, pixel count]");
  }
  if (!(params.compactness > 0.0)) throw DomainError("slic: compactness must be > 0");

  const double S = std::sqrt(static_cast<double>(n) / static_cast<double>(params.target_partitions));
  auto grid_count = [&](std::size_t extent) {
    const auto r = static_cast<std::size_t>(std::lround(static_cast<double>(extent) / S));
    return std::clamp<std::size_t>(r, 1, extent);
  };
  std::size_t ny = grid_count(H);
  std::size_t nx = grid_count(W);
  while (ny * nx > params.target_partitions) {
    if (ny >= nx && ny > 1) {
      --ny;
    } else {
      --nx;
    }
  }
  const std::size_t K = ny * nx;
  const std::size_t F = C + 2;  // colour..., y, x
  std::vector<double> centers(K * F);
  for (std::size_t i = 0; i < ny; ++i) {
    for (std::size_t j = 0; j < nx; ++j) {
      double* c = &centers[(i * nx + j) * F];
      const double cy = (static_cast<double>(i) + 0.5) * static_cast<double>(H) / static_cast<double>(ny) - 0.5;
      const double cx = (static_cast<double>(j) + 0.5) * static_cast<double>(W) / static_cast<double>(nx) - 0.5;
      const auto py = std::clamp<long>(std::lround(cy), 0, static_cast<long>(H) - 1);
      const auto px = std::clamp<long>(std::lround(cx), 0, static_cast<long>(W) - 1);
      for (std::size_t ch = 0; ch < C; ++ch) c[ch] = image(py, px, ch);
      c[C] = cy;
      c[C + 1] = cx;
    }
  }

  std::vector<Label> labels(n);
  for (std::size_t y = 0; y < H; ++y) {
    const std::size_t gy = std::min(ny - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) * ny / H));
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t gx = std::min(nx - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) * nx / W));
      labels[y * W + x] = static_cast<Label>(gy * nx + gx);
    }
  }

  const double spatial_weight = (params.compactness * params.compactness) / (S * S);
  const auto pix = image.data();
  std::vector<double> dist(n);
  std::vector<double> acc(K * F);
  std::vector<std::size_t> count(K);

  for (std::size_t iter = 0; iter < params.max_iters; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::vector<Label> next = labels;
    for (std::size_t k = 0; k < K; ++k) {
      const double* c = &centers[k * F];
      const long y0 = std::max<long>(0, static_cast<long>(std::ceil(c[C] - S)));
      const long y1 = std::min<long>(static_cast<long>(H) - 1, static_cast<long>(std::floor(c[C] + S)));
      const long x0 = std::max<long>(0, static_cast<long>(std::ceil(c[C + 1] - S)));
      const long x1 = std::min<long>(static_cast<long>(W) - 1, static_cast<long>(std::floor(c[C + 1] + S)));
      for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
          double dc = 0.0;
          for (std::size_t ch = 0; ch < C; ++ch) {
            const double d = pix[i * C + ch] - c[ch];
            dc += d * d;
          }
          const double dy = static_cast<double>(y) - c[C];
          const double dx = static_cast<double>(x) - c[C + 1];
          const double D = dc + (dy * dy + dx * dx) * spatial_weight;
          if (D < dist[i]) {
            dist[i] = D;
            next[i] = static_cast<Label>(k);
          }
        }
      }
    }
    const bool changed = next != labels;
    labels.swap(next);

    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      double* a = &acc[labels[i] * F];
      for (std::size_t ch = 0; ch < C; ++ch) a[ch] += pix[i * C + ch];
      a[C] += static_cast<double>(i / W);
      a[C + 1] += static_cast<double>(i % W);
      ++count[labels[i]];
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (count[k] == 0) continue;
      for (std::size_t f = 0; f < F; ++f) centers[k * F + f] = acc[k * F + f] / static_cast<double>(count[k]);
    }
    if (!changed && iter > 0) break;
  }

  return detail::enforce_connectivity(H, W, labels);
}

inline Segmentation slic(const Image& image, std::size_t target_partitions, double compactness, std::size_t max_iters) {
  return slic(image, SlicParams{target_partitions, compactness, max_iters});
}

}  // namespace pprs
