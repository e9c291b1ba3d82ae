#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pprs/certification.hpp"
#include "pprs/classifiers.hpp"
#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/random.hpp"

namespace pprs {

inline constexpr const char* kCodeVersion = "pprs 1.0.0";

/// 0/1 loss; abstaining counts as an error.
inline int zero_one_loss(int prediction, int label) { return prediction == label ? 0 : 1; }

struct CurvePoint {
  double radius = 0.0;
  double certified_accuracy = 0.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

inline void require_aligned(std::size_t certs, std::size_t labels) {
  if (certs != labels) {
    throw ShapeError("certificate count " + std::to_string(certs) + " differs from label count " + std::to_string(labels));
  }
}

/// Fraction of samples with prediction == label and radius >= r, per grid radius.
inline std::vector<CurvePoint> certified_accuracy_curve(std::span<const Certificate> certs, std::span<const int> labels,
                                                        std::span<const double> radius_grid) {
  require_aligned(certs.size(), labels.size());
  std::vector<CurvePoint> curve;
  curve.reserve(radius_grid.size());
  for (double r : radius_grid) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < certs.size(); ++i) {
      if (certs[i].prediction == labels[i] && certs[i].radius >= r) ++hit;
    }
    curve.push_back({r, certs.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(certs.size())});
  }
  return curve;
}

/// Certified accuracy at radius 0: correct and not abstained.
inline double certified_accuracy(std::span<const Certificate> certs, std::span<const int> labels) {
  const double zero = 0.0;
  return certified_accuracy_curve(certs, labels, std::span(&zero, 1)).front().certified_accuracy;
}

/// Macro-averaged F1 over classes at radius 0. Per class c:
///   precision = |pred = c, y = c| / |pred = c|,  recall = |pred = c, y = c| / |y = c|,
/// with an undefined ratio counted as 0. Abstentions count toward no class.
inline double certified_f_measure(std::span<const Certificate> certs, std::span<const int> labels, int class_count) {
  require_aligned(certs.size(), labels.size());
  if (class_count < 1) throw DomainError("certified_f_measure: class_count must be >= 1");
  std::vector<std::size_t> tp(class_count, 0), predicted(class_count, 0), actual(class_count, 0);
  for (std::size_t i = 0; i < certs.size(); ++i) {
    const int p = certs[i].prediction;
    if (labels[i] >= 0 && labels[i] < class_count) ++actual[labels[i]];
    if (p < 0 || p >= class_count) continue;
    ++predicted[p];
    if (p == labels[i]) ++tp[p];
  }
  double sum = 0.0;
  for (int c = 0; c < class_count; ++c) {
    const double prec = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    const double rec = actual[c] ? static_cast<double>(tp[c]) / static_cast<double>(actual[c]) : 0.0;
    sum += (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return sum / static_cast<double>(class_count);
}

/// Parses "start:stop:step". Points start + i * step are kept while below
/// stop + step / 2, so stop itself is included up to rounding.
inline std::vector<double> parse_radius_grid(const std::string& spec) {
  double start, stop, step;
  char c1, c2;
  std::size_t used = 0;
  if (std::sscanf(spec.c_str(), "%lf%c%lf%c%lf%zn", &start, &c1, &stop, &c2, &step, &used) != 5 || c1 != ':' || c2 != ':' ||
      used != spec.size()) {
    throw DomainError("radius grid must look like start:stop:step, got '" + spec + "'");
  }
  if (!(step > 0.0)) throw DomainError("radius grid step must be > 0");
  if (stop < start) throw DomainError("radius grid stop precedes start");
  std::vector<double> grid;
  for (std::size_t i = 0;; ++i) {
    const double r = start + static_cast<double>(i) * step;
    if (!(r < stop + step / 2.0)) break;
    grid.push_back(r);
  }
  return grid;
}

inline std::vector<double> default_radius_grid() { return parse_radius_grid("0:2:0.05"); }

/// Everything needed to rerun an experiment. The timestamp is informational
/// and excluded from the hash.
struct RunManifest {
  std::string dataset_id;
  std::string classifier_id;
  nlohmann::json transforms = nlohmann::json::array();
  SmoothingConfig smoothing;
  std::vector<double> sigmas;
  std::string radius_grid;  // start:stop:step, when the run produced curves
  std::uint64_t seed = 0;
  std::string timestamp;
  std::string code_version = kCodeVersion;

  nlohmann::json reproducible_json() const {
    nlohmann::json j;
    j["dataset"] = dataset_id;
    j["classifier"] = classifier_id;
    j["transforms"] = transforms;
    j["smoothing"] = {{"sigma", smoothing.sigma}, {"n0", smoothing.n0}, {"n", smoothing.n}, {"alpha", smoothing.alpha},
                      {"batch", smoothing.batch}};
    if (!sigmas.empty()) j["sigmas"] = sigmas;
    if (!radius_grid.empty()) j["radius_grid"] = radius_grid;
    j["seed"] = seed;
    j["code_version"] = code_version;
    return j;
  }

  nlohmann::json to_json() const {
    auto j = reproducible_json();
    j["timestamp"] = timestamp;
    j["manifest_hash"] = hash();
    return j;
  }

  /// FNV-1a over the canonical dump of the reproducible fields.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : reproducible_json().dump()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.dataset_id = j.at("dataset").get<std::string>();
    m.classifier_id = j.at("classifier").get<std::string>();
    m.transforms = j.at("transforms");
    const auto& s = j.at("smoothing");
    m.smoothing.sigma = s.at("sigma").get<double>();
    m.smoothing.n0 = s.at("n0").get<std::size_t>();
    m.smoothing.n = s.at("n").get<std::size_t>();
    m.smoothing.alpha = s.at("alpha").get<double>();
    m.smoothing.batch = s.value("batch", std::size_t{256});
    if (j.contains("sigmas")) m.sigmas = j.at("sigmas").get<std::vector<double>>();
    m.radius_grid = j.value("radius_grid", std::string{});
    m.seed = j.at("seed").get<std::uint64_t>();
    m.timestamp = j.value("timestamp", std::string{});
    m.code_version = j.value("code_version", std::string{kCodeVersion});
    return m;
  }
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// "radius,certified_accuracy" rows under a comment line carrying the manifest hash.
inline std::string curve_csv(std::span<const CurvePoint> curve, const std::string& manifest_hash) {
  std::string out = "# manifest_hash=" + manifest_hash + "\nradius,certified_accuracy\n";
  for (const auto& p : curve) out += format_number(p.radius) + "," + format_number(p.certified_accuracy) + "\n";
  return out;
}

struct SummaryRow {
  std::string method;
  double certified_accuracy = 0.0;
  double certified_f_measure = 0.0;
  double avg_superpixel_size = 0.0;
};

inline std::string summary_csv(std::span<const SummaryRow> rows, const std::string& manifest_hash) {
  std::string out = "# manifest_hash=" + manifest_hash + "\nmethod,certified_accuracy,certified_f_measure,avg_superpixel_size\n";
  for (const auto& r : rows) {
    out += r.method + "," + format_number(r.certified_accuracy) + "," + format_number(r.certified_f_measure) + "," +
           format_number(r.avg_superpixel_size) + "\n";
  }
  return out;
}

/// Pixel count divided by the mean number of partitions actually applied.
inline double avg_superpixel_size(std::span<const Certificate> certs, std::size_t pixel_count) {
  if (certs.empty()) return 0.0;
  double mean = 0.0;
  for (const auto& c : certs) mean += c.mean_partitions;
  mean /= static_cast<double>(certs.size());
  return mean > 0.0 ? static_cast<double>(pixel_count) / mean : 0.0;
}

struct NamedTransform {
  std::string name;
  TransformSpec spec;
  CertifyOptions options;
};

inline nlohmann::json to_json(const NamedTransform& t) {
  nlohmann::json j;
  j["name"] = t.name;
  j["mode"] = to_string(t.spec.mode);
  if (t.spec.scheme) j["scheme"] = to_json(*t.spec.scheme);
  if (t.spec.segmentation) j["segmentation_partitions"] = t.spec.segmentation->partition_count();
  if (t.options.variant) j["variant"] = to_string(*t.options.variant);
  if (t.options.rho != 0.0) j["rho"] = t.options.rho;
  return j;
}

struct TransformResult {
  std::string name;
  std::vector<Certificate> certificates;
  std::vector<CurvePoint> curve;
  SummaryRow summary;
};

struct EvaluationResult {
  std::vector<TransformResult> transforms;

  std::vector<SummaryRow> summary() const {
    std::vector<SummaryRow> rows;
    for (const auto& t : transforms) rows.push_back(t.summary);
    return rows;
  }
};

/// Per-sample seed shared by every transform, so transforms see identical noise.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return split_seed(seed, index); }

/// Certifies every sample under every transform and summarises each run as
/// a certified-accuracy curve plus scalar accuracy, macro F-measure and
/// average superpixel size.
inline EvaluationResult evaluate(const LabeledDataset& data, const Classifier& f, std::span<const NamedTransform> transforms,
                                 const SmoothingConfig& cfg, std::span<const double> radius_grid, std::uint64_t seed) {
  data.validate();
  cfg.validate();
  EvaluationResult result;
  const std::size_t pixels = data.images.empty() ? 0 : data.images.front().pixel_count();
  for (const auto& t : transforms) {
    TransformResult r;
    r.name = t.name;
    r.certificates.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      try {
        r.certificates.push_back(certify(f, data.images[i], t.spec, cfg, sample_seed(seed, i), t.options));
      } catch (const std::exception& e) {
        throw Error("evaluate[" + t.name + "] sample " + std::to_string(i) + ": " + e.what());
      }
    }
    r.curve = certified_accuracy_curve(r.certificates, data.labels, radius_grid);
    r.summary = {t.name, certified_accuracy(r.certificates, data.labels),
                 certified_f_measure(r.certificates, data.labels, data.class_count),
                 avg_superpixel_size(r.certificates, pixels)};
    result.transforms.push_back(std::move(r));
  }
  return result;
}

struct SweepPoint {
  double sigma = 0.0;
  TransformResult result;
};

inline std::vector<SweepPoint> sigma_sweep(const LabeledDataset& data, const Classifier& f, const NamedTransform& transform,
                                           std::span<const double> sigmas, const SmoothingConfig& cfg,
                                           std::span<const double> radius_grid, std::uint64_t seed) {
  if (sigmas.empty()) throw DomainError("sigma_sweep: empty sigma list");
  std::vector<SweepPoint> out;
  for (double s : sigmas) {
    SmoothingConfig c = cfg;
    c.sigma = s;
    auto r = evaluate(data, f, std::span(&transform, 1), c, radius_grid, seed);
    out.push_back({s, std::move(r.transforms.front())});
  }
  return out;
}

struct AttackReport {
  std::size_t probes = 0;
  std::size_t violations = 0;    // confident predictions that differ from the certificate
  std::size_t inconclusive = 0;  // abstentions
};

/// Empirical falsifier: evaluates the smoothed prediction at x + 0.99 R u for
/// `trials` random unit directions u, plus the exact worst direction when the
/// base classifier is a halfspace. A confident prediction other than the
/// certified class is a violation.
inline AttackReport attack_check(const Classifier& f, const TransformSpec& t, const SmoothingConfig& cfg, const Image& x,
                                 const Certificate& cert, std::size_t trials, std::uint64_t seed) {
  if (!(cert.radius > 0.0) || cert.abstained()) throw DomainError("attack_check: certificate must have a positive radius");
  const double step = 0.99 * cert.radius;
  std::vector<Image> directions;
  if (const auto* h = dynamic_cast<const HalfspaceClassifier*>(&f)) {
    // Move against the predicted side of the boundary.
    const double sign = cert.prediction == 1 ? -1.0 : 1.0;
    Image u = h->weights();
    for (double& v : u.values()) v *= sign / h->weight_norm();
    directions.push_back(std::move(u));
  }
  Rng rng(split_seed(seed, 0));
  for (std::size_t k = 0; k < trials; ++k) {
    Image u = sample_gaussian_image(x, 1.0, rng);
    const double nrm = l2_norm(u.data());
    for (double& v : u.values()) v /= nrm;
    directions.push_back(std::move(u));
  }

  AttackReport report;
  for (std::size_t k = 0; k < directions.size(); ++k) {
    Image probe = x;
    auto dst = probe.values();
    auto dir = directions[k].data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += step * dir[i];
    const int p = predict(f, probe, t, cfg, split_seed(seed, k + 1));
    ++report.probes;
    if (p == kAbstain) {
      ++report.inconclusive;
    } else if (p != cert.prediction) {
      ++report.violations;
    }
  }
  return report;
}

}  // namespace pprs
