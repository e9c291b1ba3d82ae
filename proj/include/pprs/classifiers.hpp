#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pprs/errors.hpp"
#include "pprs/image.hpp"
#include "pprs/numerics.hpp"
#include "pprs/random.hpp"
#include "pprs/segmentation.hpp"

namespace pprs {

/// Index of the largest score; ties resolve to the lower class index.
inline int argmax(std::span<const double> scores) {
  if (scores.empty()) throw DomainError("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<int>(best);
}

/// Base classifier f: image -> per-class scores. Implementations hold
/// read-only parameters and must tolerate concurrent calls to scores().
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<double> scores(const Image& x) const = 0;
  virtual int class_count() const = 0;
  virtual std::string id() const = 0;

  int predict(const Image& x) const { return argmax(scores(x)); }
};

/// Binary linear rule: class 1 iff <w, x> + b > 0.
class HalfspaceClassifier final : public Classifier {
 public:
  HalfspaceClassifier(Image weights, double bias) : w_(std::move(weights)), b_(bias), norm_(l2_norm(w_.data())) {
    if (!(norm_ > 0.0)) throw DomainError("halfspace: weight vector must have positive norm");
  }

  double margin(const Image& x) const {
    require_same_shape(w_, x, "halfspace");
    double s = b_;
    auto w = w_.data();
    auto v = x.data();
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * v[i];
    return s;
  }

  std::vector<double> scores(const Image& x) const override { return {0.0, margin(x)}; }
  int class_count() const override { return 2; }
  std::string id() const override { return "halfspace"; }

  const Image& weights() const noexcept { return w_; }
  double bias() const noexcept { return b_; }
  double weight_norm() const noexcept { return norm_; }

  /// L2 distance from x to the decision boundary.
  double boundary_distance(const Image& x) const { return std::abs(margin(x)) / norm_; }

 private:
  Image w_;
  double b_;
  double norm_;
};

/// Exact P(f(x + Z) = 1) for Z ~ N(0, sigma^2 I): Phi(margin / (sigma ||w||)).
inline double halfspace_smoothed_prob(const HalfspaceClassifier& h, const Image& x, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("halfspace_smoothed_prob: sigma must be > 0");
  return std_normal_cdf(h.margin(x) / (sigma * h.weight_norm()));
}

/// Scores are negative squared distances to per-class mean images.
class NearestCentroid final : public Classifier {
 public:
  explicit NearestCentroid(std::vector<Image> centroids) : centroids_(std::move(centroids)) {
    if (centroids_.empty()) throw DomainError("nearest centroid needs at least one class");
  }

  std::vector<double> scores(const Image& x) const override {
    std::vector<double> out(centroids_.size());
    for (std::size_t c = 0; c < centroids_.size(); ++c) {
      const double d = l2_distance(x, centroids_[c]);
      out[c] = -d * d;
    }
    return out;
  }
  int class_count() const override { return static_cast<int>(centroids_.size()); }
  std::string id() const override { return "centroid"; }

  const std::vector<Image>& centroids() const noexcept { return centroids_; }

 private:
  std::vector<Image> centroids_;
};

inline NearestCentroid nearest_centroid_train(const LabeledDataset& data) {
  data.validate();
  if (data.class_count < 1 || data.images.empty()) throw DomainError("nearest_centroid_train: empty dataset");
  const Image& shape = data.images.front();
  std::vector<Image> sums(data.class_count, Image(shape.height(), shape.width(), shape.channels()));
  std::vector<std::size_t> counts(data.class_count, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto dst = sums[data.labels[i]].values();
    auto src = data.images[i].data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    ++counts[data.labels[i]];
  }
  for (int c = 0; c < data.class_count; ++c) {
    if (counts[c] == 0) throw DomainError("nearest_centroid_train: class " + std::to_string(c) + " has no samples");
    for (double& v : sums[c].values()) v /= static_cast<double>(counts[c]);
  }
  return NearestCentroid(std::move(sums));
}

/// Fully connected network: ReLU on hidden layers, identity on the output.
/// Layer l maps dims[l] -> dims[l+1] with a row-major dims[l+1] x dims[l]
/// weight matrix.
struct TinyMlpWeights {
  std::vector<std::uint32_t> dims;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  std::size_t layer_count() const noexcept { return weights.size(); }

  void validate() const {
    if (dims.size() < 2) throw DomainError("mlp: need at least one layer");
    if (weights.size() != dims.size() - 1 || biases.size() != dims.size() - 1) {
      throw DomainError("mlp: layer count does not match dims");
    }
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      if (dims[l] == 0 || dims[l + 1] == 0) throw DomainError("mlp: zero layer width");
      if (weights[l].size() != std::size_t{dims[l]} * dims[l + 1]) throw DomainError("mlp: weight count mismatch in layer " + std::to_string(l));
      if (biases[l].size() != dims[l + 1]) throw DomainError("mlp: bias count mismatch in layer " + std::to_string(l));
    }
  }

  friend bool operator==(const TinyMlpWeights&, const TinyMlpWeights&) = default;
};

inline std::vector<double> mlp_forward(const TinyMlpWeights& net, std::span<const double> input) {
  net.validate();
  if (input.size() != net.dims.front()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(input.size()) + " values, network expects " +
                     std::to_string(net.dims.front()));
  }
  std::vector<double> act(input.begin(), input.end());
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const std::size_t in = net.dims[l];
    const std::size_t out = net.dims[l + 1];
    std::vector<double> next(net.biases[l]);
    for (std::size_t r = 0; r < out; ++r) {
      const double* row = &net.weights[l][r * in];
      double s = 0.0;
      for (std::size_t c = 0; c < in; ++c) s += row[c] * act[c];
      next[r] += s;
      if (l + 1 < net.layer_count() && next[r] < 0.0) next[r] = 0.0;
    }
    act = std::move(next);
  }
  return act;
}

inline std::vector<double> mlp_forward(const TinyMlpWeights& net, const Image& x) { return mlp_forward(net, x.data()); }

class TinyMlpClassifier final : public Classifier {
 public:
  explicit TinyMlpClassifier(TinyMlpWeights net) : net_(std::move(net)) { net_.validate(); }

  std::vector<double> scores(const Image& x) const override { return mlp_forward(net_, x); }
  int class_count() const override { return static_cast<int>(net_.dims.back()); }
  std::string id() const override { return "mlp"; }
  const TinyMlpWeights& weights() const noexcept { return net_; }

 private:
  TinyMlpWeights net_;
};

// TMLP weights file, all integers little-endian:
//   "TMLP" | version:u8 (=1) | layer_count:u32 | dims:u32 x (layer_count + 1)
//   | per layer: weights f64 x (out * in), row-major, then biases f64 x out.
inline constexpr std::uint8_t kTmlpVersion = 1;

inline std::vector<std::uint8_t> encode_mlp_weights(const TinyMlpWeights& net) {
  net.validate();
  std::vector<std::uint8_t> out = {'T', 'M', 'L', 'P', kTmlpVersion};
  auto put_u32 = [&](std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  auto put_f64 = [&](double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put_u32(static_cast<std::uint32_t>(net.layer_count()));
  for (auto d : net.dims) put_u32(d);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (double w : net.weights[l]) put_f64(w);
    for (double b : net.biases[l]) put_f64(b);
  }
  return out;
}

inline TinyMlpWeights decode_mlp_weights(std::span<const std::uint8_t> bytes) {
  using Kind = ParseError::Kind;
  if (bytes.size() < 4 || bytes[0] != 'T' || bytes[1] != 'M' || bytes[2] != 'L' || bytes[3] != 'P') {
    throw ParseError(Kind::kBadMagic, 0, "TMLP magic missing");
  }
  if (bytes.size() < 5 || bytes[4] != kTmlpVersion) throw ParseError(Kind::kMalformedHeader, 4, "unsupported TMLP version");
  std::size_t pos = 5;
  auto get_u32 = [&]() {
    if (bytes.size() - pos < 4) throw ParseError(Kind::kTruncatedPayload, pos, "TMLP header truncated");
    std::uint32_t v = 0;
    for (int s = 0; s < 4; ++s) v |= std::uint32_t{bytes[pos + s]} << (8 * s);
    pos += 4;
    return v;
  };
  TinyMlpWeights net;
  const std::uint32_t layers = get_u32();
  if (layers == 0 || layers > 1024) throw ParseError(Kind::kMalformedHeader, 5, "TMLP layer count out of range");
  for (std::uint32_t i = 0; i <= layers; ++i) net.dims.push_back(get_u32());

  std::uint64_t expected = 0;
  for (std::uint32_t l = 0; l < layers; ++l) expected += (std::uint64_t{net.dims[l]} + 1) * net.dims[l + 1];
  if (bytes.size() - pos != expected * 8) {
    throw ParseError(Kind::kLengthMismatch, pos,
                     "TMLP payload has " + std::to_string(bytes.size() - pos) + " bytes, dims require " +
                         std::to_string(expected * 8));
  }
  auto get_f64 = [&]() {
    std::uint64_t v = 0;
    for (int s = 0; s < 8; ++s) v |= std::uint64_t{bytes[pos + s]} << (8 * s);
    pos += 8;
    return std::bit_cast<double>(v);
  };
  for (std::uint32_t l = 0; l < layers; ++l) {
    std::vector<double> w(std::size_t{net.dims[l]} * net.dims[l + 1]);
    for (double& x : w) x = get_f64();
    std::vector<double> b(net.dims[l + 1]);
    for (double& x : b) x = get_f64();
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  net.validate();
  return net;
}

inline TinyMlpWeights load_mlp_weights(const std::filesystem::path& path) { return decode_mlp_weights(detail::read_file(path)); }

inline void save_mlp_weights(const TinyMlpWeights& net, const std::filesystem::path& path) {
  detail::write_file(path, encode_mlp_weights(net));
}

/// Random ReLU feature layer (He-scaled Gaussian weights, zero bias).
inline TinyMlpWeights random_hidden_layer(std::uint32_t inputs, std::uint32_t hidden, Rng& rng) {
  TinyMlpWeights net;
  net.dims = {inputs, hidden};
  std::vector<double> w(std::size_t{inputs} * hidden);
  const double scale = std::sqrt(2.0 / inputs);
  for (double& v : w) v = scale * rng.normal();
  net.weights.push_back(std::move(w));
  net.biases.emplace_back(hidden, 0.0);
  return net;
}

/// Appends a linear readout fitted by ridge regression onto one-hot targets.
/// The existing layers are kept fixed; this is the only training provided.
inline TinyMlpWeights fit_readout(const TinyMlpWeights& hidden, const LabeledDataset& data, double ridge = 1e-3) {
  data.validate();
  if (data.images.empty()) throw DomainError("fit_readout: empty dataset");
  hidden.validate();
  const std::size_t h = hidden.dims.back();
  const std::size_t k = static_cast<std::size_t>(data.class_count);
  // Hidden activations after ReLU; the feature net's last layer is linear in
  // mlp_forward, so rectify it here.
  Eigen::MatrixXd features(data.size(), h + 1);
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(data.size(), k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto a = mlp_forward(hidden, data.images[i]);
    for (std::size_t j = 0; j < h; ++j) features(i, j) = std::max(0.0, a[j]);
    features(i, h) = 1.0;
    targets(i, data.labels[i]) = 1.0;
  }
  Eigen::MatrixXd gram = features.transpose() * features;
  gram.diagonal().array() += ridge * static_cast<double>(data.size());
  const Eigen::MatrixXd coef = gram.ldlt().solve(features.transpose() * targets);  // (h+1) x k

  TinyMlpWeights net = hidden;
  net.dims.push_back(static_cast<std::uint32_t>(k));
  std::vector<double> w(k * h);
  std::vector<double> b(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < h; ++j) w[c * h + j] = coef(j, c);
    b[c] = coef(h, c);
  }
  net.weights.push_back(std::move(w));
  net.biases.push_back(std::move(b));
  return net;
}

/// g(x) = f(A_S x) for a fixed segmentation S.
class PartitionedClassifier final : public Classifier {
 public:
  PartitionedClassifier(std::shared_ptr<const Classifier> base, Segmentation seg)
      : base_(std::move(base)), seg_(std::move(seg)) {}

  std::vector<double> scores(const Image& x) const override { return base_->scores(partition_average(x, seg_)); }
  int class_count() const override { return base_->class_count(); }
  std::string id() const override { return base_->id() + "+partition"; }

 private:
  std::shared_ptr<const Classifier> base_;
  Segmentation seg_;
};

}  // namespace pprs
