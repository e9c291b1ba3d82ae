#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "pprs/errors.hpp"
#include "pprs/felzenszwalb.hpp"
#include "pprs/image.hpp"
#include "pprs/numerics.hpp"
#include "pprs/quickshift.hpp"
#include "pprs/segmentation.hpp"
#include "pprs/slic.hpp"

namespace pprs {

struct GridParams {
  std::size_t cell_h = 2;
  std::size_t cell_w = 2;
};

/// A partitioning scheme S(x) together with its parameters.
using SchemeParams = std::variant<GridParams, SlicParams, FelzenszwalbParams, QuickshiftParams>;

inline Segmentation segment(const Image& image, const SchemeParams& scheme) {
  return std::visit(
      [&](const auto& p) -> Segmentation {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GridParams>) {
          return grid_partition(image.height(), image.width(), p.cell_h, p.cell_w);
        } else if constexpr (std::is_same_v<P, SlicParams>) {
          return slic(image, p);
        } else if constexpr (std::is_same_v<P, FelzenszwalbParams>) {
          return felzenszwalb(image, p);
        } else {
          return quickshift(image, p);
        }
      },
      scheme);
}

inline std::string scheme_name(const SchemeParams& scheme) {
  static constexpr const char* names[] = {"grid", "slic", "felzenszwalb", "quickshift"};
  return names[scheme.index()];
}

/// True when S(x) ignores x.
inline bool input_independent(const SchemeParams& scheme) { return std::holds_alternative<GridParams>(scheme); }

inline nlohmann::json to_json(const SchemeParams& scheme) {
  nlohmann::json j;
  j["scheme"] = scheme_name(scheme);
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GridParams>) {
          j["cell_h"] = p.cell_h;
          j["cell_w"] = p.cell_w;
        } else if constexpr (std::is_same_v<P, SlicParams>) {
          j["target_partitions"] = p.target_partitions;
          j["compactness"] = p.compactness;
          j["max_iters"] = p.max_iters;
        } else if constexpr (std::is_same_v<P, FelzenszwalbParams>) {
          j["scale"] = p.scale;
          j["min_size"] = p.min_size;
        } else {
          j["kernel_size"] = p.kernel_size;
          j["max_dist"] = p.max_dist;
          j["ratio"] = p.ratio;
        }
      },
      scheme);
  return j;
}

inline SchemeParams scheme_from_json(const nlohmann::json& j) {
  const std::string name = j.at("scheme").get<std::string>();
  if (name == "grid") return GridParams{j.at("cell_h").get<std::size_t>(), j.at("cell_w").get<std::size_t>()};
  if (name == "slic") {
    return SlicParams{j.at("target_partitions").get<std::size_t>(), j.at("compactness").get<double>(),
                      j.at("max_iters").get<std::size_t>()};
  }
  if (name == "felzenszwalb") return FelzenszwalbParams{j.at("scale").get<double>(), j.at("min_size").get<std::size_t>()};
  if (name == "quickshift") {
    return QuickshiftParams{j.at("kernel_size").get<double>(), j.at("max_dist").get<double>(), j.at("ratio").get<double>()};
  }
  throw DomainError("unknown segmentation scheme '" + name + "'");
}

/// Empirical probe of the Lipschitz constant of x -> A_S(x):
/// max over sampled pairs (x, x + perturb_scale * Z) of
/// ||A_S(x) - A_S(x')||_2 / ||x - x'||_2.
///
/// This is a lower bound on the true constant and certifies nothing:
/// superpixel maps jump between partitions, so a finite global constant
/// generally does not exist. Pair p uses image p mod N.
inline double estimate_rho(const SchemeParams& scheme, std::span<const Image> images, std::size_t pairs,
                           double perturb_scale, Rng& rng, std::size_t norm_iters = 100) {
  if (images.empty()) throw DomainError("estimate_rho: empty dataset");
  if (pairs < 1) throw DomainError("estimate_rho: pairs must be >= 1");
  if (!(perturb_scale >= 0.0)) throw DomainError("estimate_rho: perturb_scale must be >= 0");
  if (perturb_scale == 0.0) return 0.0;
  double rho = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const Image& x = images[p % images.size()];
    const Image xp = add(x, sample_gaussian_image(x, perturb_scale, rng));
    const double dist = l2_distance(x, xp);
    if (dist == 0.0) continue;
    const double diff = operator_norm_diff(segment(x, scheme), segment(xp, scheme), norm_iters, rng);
    rho = std::max(rho, diff / dist);
  }
  return rho;
}

}  // namespace pprs
