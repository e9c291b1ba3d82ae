#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/segmentation.hpp"

namespace pprs {

struct FelzenszwalbParams {
  double scale = 1.0;
  std::size_t min_size = 1;
};

/// Graph-based segmentation (Felzenszwalb & Huttenlocher) on the 4-neighbour
/// pixel grid with Euclidean colour distance as edge weight. Components C1, C2
/// joined by an edge of weight w merge when
///   w <= min(Int(C1) + scale / |C1|, Int(C2) + scale / |C2|),
/// Int(C) being the largest merge-edge weight inside C. A second pass over the
/// same edge order absorbs components smaller than min_size.
inline Segmentation felzenszwalb(const Image& image, const FelzenszwalbParams& params) {
  if (!(params.scale > 0.0)) throw DomainError("felzenszwalb: scale must be > 0");
  if (params.min_size < 1) throw DomainError("felzenszwalb: min_size must be >= 1");
  const std::size_t H = image.height();
  const std::size_t W = image.width();
  const std::size_t C = image.channels();
  if (H * W == 0) throw DomainError("felzenszwalb: empty image");
  const auto pix = image.data();

  struct Edge {
    std::size_t a;
    std::size_t b;
    double w;
  };
  std::vector<Edge> edges;
  edges.reserve(2 * H * W);
  auto weight = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = pix[a * C + c] - pix[b * C + c];
      s += d * d;
    }
    return std::sqrt(s);
  };
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x;
      if (x + 1 < W) edges.push_back({i, i + 1, weight(i, i + 1)});
      if (y + 1 < H) edges.push_back({i, i + W, weight(i, i + W)});
    }
  }
  // Stable sort: equal weights keep generation (lexicographic) order.
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) { return l.w < r.w; });

  detail::DisjointSets sets(H * W);
  std::vector<double> threshold(H * W, params.scale);
  for (const Edge& e : edges) {
    const std::size_t ra = sets.find(e.a);
    const std::size_t rb = sets.find(e.b);
    if (ra == rb) continue;
    if (e.w <= threshold[ra] && e.w <= threshold[rb]) {
      const std::size_t r = sets.unite(ra, rb);
      threshold[r] = e.w + params.scale / static_cast<double>(sets.size_of(r));
    }
  }
  if (params.min_size > 1) {
    for (const Edge& e : edges) {
      const std::size_t ra = sets.find(e.a);
      const std::size_t rb = sets.find(e.b);
      if (ra != rb && (sets.size_of(ra) < params.min_size || sets.size_of(rb) < params.min_size)) sets.unite(ra, rb);
    }
  }

  std::vector<Label> raw(H * W);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<Label>(sets.find(i));
  return Segmentation::from_labels(H, W, raw);
}

inline Segmentation felzenszwalb(const Image& image, double scale, std::size_t min_size) {
  return felzenszwalb(image, FelzenszwalbParams{scale, min_size});
}

}  // namespace pprs
