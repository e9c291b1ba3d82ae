#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pprs/classifiers.hpp"
#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/numerics.hpp"
#include "pprs/random.hpp"
#include "pprs/scheme.hpp"
#include "pprs/segmentation.hpp"

namespace pprs {

inline constexpr int kAbstain = -1;

struct SmoothingConfig {
  double sigma = 0.25;
  std::size_t n0 = 100;      // selection samples
  std::size_t n = 10000;     // estimation samples
  double alpha = 0.001;
  std::size_t batch = 256;   // samples per work unit
  std::size_t workers = 1;

  /// 100 selection / 1000 estimation samples.
  static SmoothingConfig small_preset(double sigma) { return {sigma, 100, 1000, 0.001, 256, 1}; }

  void validate() const {
    if (!(sigma > 0.0)) throw DomainError("smoothing: sigma must be > 0");
    if (n0 < 1) throw DomainError("smoothing: n0 must be >= 1");
    if (n < n0) throw DomainError("smoothing: n must be >= n0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("smoothing: alpha must lie in (0, 1)");
  }
};

enum class TransformMode {
  kNone,          // vanilla randomized smoothing
  kStatic,        // fixed segmentation
  kDynamic,       // scheme rerun on every noisy sample
  kFixedOnInput,  // scheme run once on the received input
};

inline const char* to_string(TransformMode m) {
  switch (m) {
    case TransformMode::kNone: return "none";
    case TransformMode::kStatic: return "static";
    case TransformMode::kDynamic: return "dynamic";
    case TransformMode::kFixedOnInput: return "fixed_on_input";
  }
  return "?";
}

struct TransformSpec {
  TransformMode mode = TransformMode::kNone;
  std::optional<Segmentation> segmentation;  // kStatic
  std::optional<SchemeParams> scheme;        // kDynamic, kFixedOnInput

  static TransformSpec none() { return {}; }
  static TransformSpec fixed(Segmentation seg) { return {TransformMode::kStatic, std::move(seg), std::nullopt}; }
  static TransformSpec dynamic(SchemeParams s) { return {TransformMode::kDynamic, std::nullopt, std::move(s)}; }
  static TransformSpec fixed_on_input(SchemeParams s) { return {TransformMode::kFixedOnInput, std::nullopt, std::move(s)}; }

  void validate(const Image& x) const {
    switch (mode) {
      case TransformMode::kNone: return;
      case TransformMode::kStatic:
        if (!segmentation) throw DomainError("static transform needs a segmentation");
        if (!segmentation->matches(x)) throw ShapeError("static segmentation does not match the image grid");
        return;
      case TransformMode::kDynamic:
      case TransformMode::kFixedOnInput:
        if (!scheme) throw DomainError("dynamic transform needs a segmentation scheme");
        return;
    }
  }
};

/// Per-class tallies of f(T(x + Z)) plus the summed partition counts of the
/// segmentations applied (0 in vanilla mode).
struct SampleCounts {
  std::vector<std::uint64_t> counts;
  std::uint64_t partitions = 0;

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

/// Sampling failure, tagged with the lowest failing sample index.
class SamplingError : public Error {
 public:
  SamplingError(std::size_t sample, const std::string& what)
      : Error("sample " + std::to_string(sample) + ": " + what), sample_(sample) {}
  std::size_t sample() const noexcept { return sample_; }

 private:
  std::size_t sample_;
};

/// Draws n noise fields, sample i from Rng(split_seed(stream_seed, i)),
/// applies the transform, classifies and tallies. The result depends only on
/// (inputs, stream_seed), never on `workers`.
inline SampleCounts smoothed_sample_counts(const Classifier& f, const Image& x, const TransformSpec& t, double sigma,
                                           std::size_t n, std::uint64_t stream_seed, std::size_t workers = 1,
                                           std::size_t batch = 256) {
  if (!(sigma >= 0.0)) throw DomainError("smoothed_sample_counts: sigma must be >= 0");
  t.validate(x);
  std::optional<Segmentation> fixed_seg;
  if (t.mode == TransformMode::kStatic) fixed_seg = t.segmentation;
  if (t.mode == TransformMode::kFixedOnInput) fixed_seg = segment(x, *t.scheme);
  const auto k = static_cast<std::size_t>(f.class_count());

  auto run_one = [&](std::size_t i, SampleCounts& local) {
    Rng rng(split_seed(stream_seed, i));
    Image noisy = add(x, sample_gaussian_image(x, sigma, rng));
    int label;
    switch (t.mode) {
      case TransformMode::kNone:
        label = f.predict(noisy);
        break;
      case TransformMode::kStatic:
      case TransformMode::kFixedOnInput:
        label = f.predict(partition_average(noisy, *fixed_seg));
        local.partitions += fixed_seg->partition_count();
        break;
      case TransformMode::kDynamic: {
        const Segmentation s = segment(noisy, *t.scheme);
        label = f.predict(partition_average(noisy, s));
        local.partitions += s.partition_count();
        break;
      }
    }
    if (label < 0 || static_cast<std::size_t>(label) >= k) throw DomainError("classifier returned label outside its class range");
    ++local.counts[label];
  };

  SampleCounts total{std::vector<std::uint64_t>(k, 0), 0};
  batch = std::max<std::size_t>(batch, 1);
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, (n + batch - 1) / batch));

  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        run_one(i, total);
      } catch (const std::exception& e) {
        throw SamplingError(i, e.what());
      }
    }
    return total;
  }

  std::atomic<std::size_t> next_chunk{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::size_t fail_index = std::numeric_limits<std::size_t>::max();
  std::string fail_what;
  auto worker = [&]() {
    SampleCounts local{std::vector<std::uint64_t>(k, 0), 0};
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t start = next_chunk.fetch_add(1) * batch;
      if (start >= n) break;
      const std::size_t stop = std::min(n, start + batch);
      for (std::size_t i = start; i < stop; ++i) {
        try {
          run_one(i, local);
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          if (i < fail_index) {
            fail_index = i;
            fail_what = e.what();
          }
          failed = true;
          return;
        }
      }
    }
    std::lock_guard lock(mu);
    for (std::size_t c = 0; c < k; ++c) total.counts[c] += local.counts[c];
    total.partitions += local.partitions;
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failed) throw SamplingError(fail_index, fail_what);
  return total;
}

/// Classes ordered by count (descending), ties by class index.
inline std::vector<int> rank_classes(const std::vector<std::uint64_t>& counts) {
  std::vector<int> order(counts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return counts[a] > counts[b]; });
  return order;
}

// Noise streams derived from the caller's seed.
inline constexpr std::uint64_t kSelectionStream = 0;
inline constexpr std::uint64_t kEstimationStream = 1;
inline constexpr std::uint64_t kPredictionStream = 2;

/// Smoothed prediction with abstention: the top class is returned only when
/// the two-sided binomial test of its count against the runner-up rejects
/// p = 1/2 at level alpha.
inline int predict(const Classifier& f, const Image& x, const TransformSpec& t, const SmoothingConfig& cfg,
                   std::uint64_t seed) {
  cfg.validate();
  const auto s = smoothed_sample_counts(f, x, t, cfg.sigma, cfg.n, split_seed(seed, kPredictionStream), cfg.workers, cfg.batch);
  const auto order = rank_classes(s.counts);
  const std::uint64_t na = s.counts[order[0]];
  const std::uint64_t nb = order.size() > 1 ? s.counts[order[1]] : 0;
  return binom_two_sided_p(na, na + nb) <= cfg.alpha ? order[0] : kAbstain;
}

/// C(x) = (Phi^-1(pA) - Phi^-1(pB)) / 2.
inline double confidence_score(double pa, double pb) {
  if (!(pb > 0.0 && pb <= pa && pa < 1.0)) throw DomainError("confidence_score: need 0 < pB <= pA < 1");
  return 0.5 * (std_normal_inv_cdf(pa) - std_normal_inv_cdf(pb));
}

inline void check_radius_args(double sigma, double confidence) {
  if (!(sigma > 0.0)) throw DomainError("radius: sigma must be > 0");
  if (!(confidence >= 0.0)) throw DomainError("radius: confidence must be >= 0");
}

inline void check_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("radius: rho must lie in [0, 1)");
}

/// sigma * C. Used for vanilla smoothing and for input-independent partitions.
inline double radius_static(double sigma, double confidence) {
  check_radius_args(sigma, confidence);
  return sigma * confidence;
}

/// (1 - rho) sigma C for a partition map that is rho-Lipschitz in operator norm.
/// Bounds the projected perturbation ||A_S(x) delta||, not ||delta||.
inline double radius_dynamic(double sigma, double confidence, double rho) {
  check_radius_args(sigma, confidence);
  check_rho(rho);
  return (1.0 - rho) * sigma * confidence;
}

/// sigma C / (1 + 3 rho): the alternative condition (1 + 3 rho) ||delta|| <= sigma C
/// that follows from the triangle-inequality argument when ||x||, ||delta|| <= 1.
/// Kept next to radius_dynamic because the two forms disagree.
inline double radius_dynamic_appendix(double sigma, double confidence, double rho) {
  check_radius_args(sigma, confidence);
  check_rho(rho);
  return sigma * confidence / (1.0 + 3.0 * rho);
}

enum class RadiusVariant { kVanilla, kStatic, kDynamic, kDynamicCorrected, kDynamicAppendix };

inline const char* to_string(RadiusVariant v) {
  switch (v) {
    case RadiusVariant::kVanilla: return "vanilla";
    case RadiusVariant::kStatic: return "static";
    case RadiusVariant::kDynamic: return "dynamic";
    case RadiusVariant::kDynamicCorrected: return "dynamic_corrected";
    case RadiusVariant::kDynamicAppendix: return "dynamic_appendix";
  }
  return "?";
}

inline RadiusVariant radius_variant_from_string(const std::string& s) {
  for (auto v : {RadiusVariant::kVanilla, RadiusVariant::kStatic, RadiusVariant::kDynamic, RadiusVariant::kDynamicCorrected,
                 RadiusVariant::kDynamicAppendix}) {
    if (s == to_string(v)) return v;
  }
  throw DomainError("unknown radius variant '" + s + "'");
}

inline RadiusVariant default_variant(TransformMode mode) {
  switch (mode) {
    case TransformMode::kNone: return RadiusVariant::kVanilla;
    case TransformMode::kStatic: return RadiusVariant::kStatic;
    default: return RadiusVariant::kDynamic;
  }
}

struct Certificate {
  int prediction = kAbstain;
  double p_a_lower = 0.0;
  double confidence = 0.0;
  double radius = 0.0;
  RadiusVariant variant = RadiusVariant::kVanilla;
  double rho = 0.0;
  std::vector<std::uint64_t> counts;  // estimation-phase tallies
  std::uint64_t seed = 0;
  double sigma = 0.0;
  double mean_partitions = 0.0;  // average partition count of the applied segmentations

  bool abstained() const noexcept { return prediction == kAbstain; }
  friend bool operator==(const Certificate&, const Certificate&) = default;
};

struct CertifyOptions {
  std::optional<RadiusVariant> variant;  // default follows the transform mode
  double rho = 0.0;                      // for the corrected variants
};

/// Two-phase Monte-Carlo certification: n0 samples select the candidate
/// class, n fresh samples bound its probability from below with a one-sided
/// Clopper-Pearson bound p. Abstains when p <= 1/2; otherwise C = Phi^-1(p)
/// (runner-up bounded by 1 - p) and the radius follows the chosen variant.
/// The radius holds with probability at least 1 - alpha over the sampling.
inline Certificate certify(const Classifier& f, const Image& x, const TransformSpec& t, const SmoothingConfig& cfg,
                           std::uint64_t seed, const CertifyOptions& opts = {}) {
  cfg.validate();
  const RadiusVariant variant = opts.variant.value_or(default_variant(t.mode));
  if (variant == RadiusVariant::kDynamicCorrected || variant == RadiusVariant::kDynamicAppendix) check_rho(opts.rho);

  const auto selection =
      smoothed_sample_counts(f, x, t, cfg.sigma, cfg.n0, split_seed(seed, kSelectionStream), cfg.workers, cfg.batch);
  const int candidate = rank_classes(selection.counts).front();
  const auto estimation =
      smoothed_sample_counts(f, x, t, cfg.sigma, cfg.n, split_seed(seed, kEstimationStream), cfg.workers, cfg.batch);

  Certificate cert;
  cert.variant = variant;
  cert.rho = (variant == RadiusVariant::kDynamicCorrected || variant == RadiusVariant::kDynamicAppendix) ? opts.rho : 0.0;
  cert.counts = estimation.counts;
  cert.seed = seed;
  cert.sigma = cfg.sigma;
  cert.mean_partitions = t.mode == TransformMode::kNone
                             ? static_cast<double>(x.pixel_count())
                             : static_cast<double>(selection.partitions + estimation.partitions) /
                                   static_cast<double>(cfg.n0 + cfg.n);
  cert.p_a_lower = clopper_pearson_lower(estimation.counts[candidate], cfg.n, cfg.alpha);
  if (cert.p_a_lower <= 0.5) return cert;

  cert.prediction = candidate;
  cert.confidence = std_normal_inv_cdf(cert.p_a_lower);
  switch (variant) {
    case RadiusVariant::kVanilla:
    case RadiusVariant::kStatic:
    case RadiusVariant::kDynamic: cert.radius = radius_static(cfg.sigma, cert.confidence); break;
    case RadiusVariant::kDynamicCorrected: cert.radius = radius_dynamic(cfg.sigma, cert.confidence, opts.rho); break;
    case RadiusVariant::kDynamicAppendix: cert.radius = radius_dynamic_appendix(cfg.sigma, cert.confidence, opts.rho); break;
  }
  return cert;
}

inline nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j;
  j["prediction"] = c.prediction;
  j["abstain"] = c.abstained();
  j["p_a_lower"] = c.p_a_lower;
  j["confidence"] = c.confidence;
  j["radius"] = c.radius;
  j["variant"] = to_string(c.variant);
  j["rho"] = c.rho;
  j["counts"] = c.counts;
  j["seed"] = c.seed;
  j["sigma"] = c.sigma;
  j["mean_partitions"] = c.mean_partitions;
  return j;
}

inline Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate c;
  c.prediction = j.at("prediction").get<int>();
  c.p_a_lower = j.at("p_a_lower").get<double>();
  c.confidence = j.at("confidence").get<double>();
  c.radius = j.at("radius").get<double>();
  c.variant = radius_variant_from_string(j.at("variant").get<std::string>());
  c.rho = j.value("rho", 0.0);
  c.counts = j.at("counts").get<std::vector<std::uint64_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.sigma = j.at("sigma").get<double>();
  c.mean_partitions = j.value("mean_partitions", 0.0);
  return c;
}

}  // namespace pprs
