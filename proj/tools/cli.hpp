#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pprs/pprs.hpp"

namespace pprs::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Spec strings

/// "a,b,key=value,..." split on commas.
inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::map<std::string, std::string> parse_kv(const std::vector<std::string>& items, const std::string& context) {
  std::map<std::string, std::string> kv;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw DomainError(context + ": expected key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

inline std::uint64_t to_u64(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || v.front() == '-') throw DomainError("'" + key + "' must be a non-negative integer, got '" + v + "'");
  return x;
}

inline std::uint64_t take_u64(std::map<std::string, std::string>& kv, const std::string& key, std::uint64_t fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const auto v = to_u64(it->second, key);
  kv.erase(it);
  return v;
}

inline void reject_leftovers(const std::map<std::string, std::string>& kv, const std::string& context) {
  if (!kv.empty()) throw DomainError(context + ": unknown key '" + kv.begin()->first + "'");
}

/// Dataset specs:
///   idx:IMAGES,LABELS[,offset=N][,limit=N][,classes=K]
///   blobs:n=N,h=H,w=W,regions=R,classes=K,seed=S
///   pgmdir:DIR[,classes=K]       files named <label>_<anything>.pgm / .ppm
inline LabeledDataset load_dataset(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw DomainError("dataset spec needs a kind prefix (idx:, blobs:, pgmdir:), got '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  auto parts = split(spec.substr(colon + 1), ',');

  if (kind == "blobs") {
    auto kv = parse_kv(parts, "blobs");
    const auto n = take_u64(kv, "n", 100);
    const auto h = take_u64(kv, "h", 16);
    const auto w = take_u64(kv, "w", 16);
    const auto regions = take_u64(kv, "regions", 4);
    const auto classes = take_u64(kv, "classes", 4);
    const auto seed = take_u64(kv, "seed", 0);
    reject_leftovers(kv, "blobs");
    return make_blobs_dataset(n, h, w, regions, static_cast<int>(classes), seed);
  }

  if (kind == "idx") {
    if (parts.size() < 2) throw DomainError("idx spec needs IMAGES,LABELS");
    auto kv = parse_kv({parts.begin() + 2, parts.end()}, "idx");
    const auto offset = take_u64(kv, "offset", 0);
    const auto limit = take_u64(kv, "limit", 0);
    const auto classes = take_u64(kv, "classes", 0);
    reject_leftovers(kv, "idx");
    auto ds = load_idx(parts[0], parts[1], static_cast<int>(classes));
    if (offset > ds.size()) throw DomainError("idx offset beyond dataset size");
    const std::size_t end = limit ? std::min<std::size_t>(ds.size(), offset + limit) : ds.size();
    ds.images = std::vector<Image>(ds.images.begin() + offset, ds.images.begin() + end);
    ds.labels = std::vector<int>(ds.labels.begin() + offset, ds.labels.begin() + end);
    return ds;
  }

  if (kind == "pgmdir") {
    if (parts.empty()) throw DomainError("pgmdir spec needs a directory");
    auto kv = parse_kv({parts.begin() + 1, parts.end()}, "pgmdir");
    const auto classes = take_u64(kv, "classes", 0);
    reject_leftovers(kv, "pgmdir");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(parts[0])) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DomainError("pgmdir: no images in " + parts[0]);
    LabeledDataset ds;
    int max_label = -1;
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const auto us = stem.find('_');
      const int label = static_cast<int>(to_u64(stem.substr(0, us), "label prefix of " + f.filename().string()));
      ds.images.push_back(load_pgm_ppm(f));
      ds.labels.push_back(label);
      max_label = std::max(max_label, label);
    }
    ds.class_count = classes ? static_cast<int>(classes) : max_label + 1;
    ds.validate();
    return ds;
  }
  throw DomainError("unknown dataset kind '" + kind + "'");
}

/// Classifier specs:
///   halfspace:FILE.json or halfspace:{"weights":[...],"bias":b}
///     (optional "height", "width", "channels"; default is the input shape)
///   centroid:<dataset spec>     trained on that dataset
///   mlp:FILE.tmlp
inline std::shared_ptr<const Classifier> load_classifier(const std::string& spec, const Image& shape) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw DomainError("classifier spec needs a kind prefix (halfspace:, centroid:, mlp:)");
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  if (kind == "halfspace") {
    json j;
    if (!arg.empty() && arg.front() == '{') {
      j = json::parse(arg);
    } else {
      std::ifstream in(arg);
      if (!in) throw IoError("cannot open " + arg);
      j = json::parse(in);
    }
    const auto w = j.at("weights").get<std::vector<double>>();
    const std::size_t h = j.value("height", shape.height());
    const std::size_t wd = j.value("width", shape.width());
    const std::size_t c = j.value("channels", shape.channels());
    return std::make_shared<HalfspaceClassifier>(Image(h, wd, c, w), j.at("bias").get<double>());
  }
  if (kind == "centroid") return std::make_shared<NearestCentroid>(nearest_centroid_train(load_dataset(arg)));
  if (kind == "mlp") return std::make_shared<TinyMlpClassifier>(load_mlp_weights(arg));
  throw DomainError("unknown classifier kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Shared flag groups

struct SchemeFlags {
  std::string scheme = "slic";
  std::size_t components = 100;
  double compactness = 10.0;
  std::size_t iters = 10;
  double scale = 1.0;
  std::size_t min_size = 1;
  double kernel_size = 1.0;
  double max_dist = 4.0;
  double ratio = 1.0;
  std::size_t cell_h = 2;
  std::size_t cell_w = 2;

  /// `scale_flag` names the Felzenszwalb scale option; subcommands that use
  /// --scale for something else rename it.
  void add_to(CLI::App* app, bool required = false, const std::string& scale_flag = "--scale") {
    auto* opt = app->add_option("--scheme", scheme, "segmentation scheme")
                    ->check(CLI::IsMember({"slic", "felzenszwalb", "quickshift", "grid"}));
    if (required) opt->required();
    app->add_option("--components", components, "SLIC target partition count")->capture_default_str();
    app->add_option("--compactness", compactness, "SLIC compactness m")->capture_default_str();
    app->add_option("--slic-iters", iters, "SLIC iterations")->capture_default_str();
    app->add_option(scale_flag, scale, "Felzenszwalb scale")->capture_default_str();
    app->add_option("--min-size", min_size, "Felzenszwalb minimum component size")->capture_default_str();
    app->add_option("--kernel-size", kernel_size, "Quickshift kernel bandwidth")->capture_default_str();
    app->add_option("--max-dist", max_dist, "Quickshift link distance")->capture_default_str();
    app->add_option("--ratio", ratio, "Quickshift colour weight")->capture_default_str();
    app->add_option("--cell-h", cell_h, "grid cell height")->capture_default_str();
    app->add_option("--cell-w", cell_w, "grid cell width")->capture_default_str();
  }

  SchemeParams params() const {
    if (scheme == "slic") return SlicParams{components, compactness, iters};
    if (scheme == "felzenszwalb") return FelzenszwalbParams{scale, min_size};
    if (scheme == "quickshift") return QuickshiftParams{kernel_size, max_dist, ratio};
    return GridParams{cell_h, cell_w};
  }
};

struct SmoothingFlags {
  double sigma = 0.25;
  std::size_t n0 = 100;
  std::size_t n = 10000;
  double alpha = 0.001;
  std::size_t batch = 256;
  std::size_t workers = 1;

  void add_to(CLI::App* app, bool with_sigma = true) {
    if (with_sigma) app->add_option("--sigma", sigma, "noise standard deviation")->capture_default_str();
    app->add_option("--n0", n0, "selection samples")->capture_default_str();
    app->add_option("--n", n, "estimation samples")->capture_default_str();
    app->add_option("--alpha", alpha, "failure probability")->capture_default_str();
    app->add_option("--batch", batch, "samples per work unit")->capture_default_str();
    app->add_option("--workers", workers, "sampling threads (results do not depend on this)")->capture_default_str();
  }

  SmoothingConfig config() const {
    SmoothingConfig c{sigma, n0, n, alpha, batch, workers};
    c.validate();
    return c;
  }
};

/// A --mode value plus the segmentation it needs.
struct ModeFlags {
  std::string mode = "rs";
  std::string segmentation_file;
  std::string variant;
  double rho = 0.0;

  void add_to(CLI::App* app) {
    app->add_option("--mode", mode, "transform mode")
        ->check(CLI::IsMember({"rs", "pprs-static", "pprs-dynamic", "pprs-fixed"}))
        ->capture_default_str();
    app->add_option("--segmentation", segmentation_file, "label map for pprs-static (default: grid scheme)");
    app->add_option("--variant", variant, "radius variant")
        ->check(CLI::IsMember({"vanilla", "static", "dynamic", "dynamic_corrected", "dynamic_appendix"}));
    app->add_option("--rho", rho, "Lipschitz constant for the corrected variants")->capture_default_str();
  }
};

/// Builds the transform for `mode`. Static mode uses a label map file when
/// given, otherwise the scheme, which must then be input-independent.
inline NamedTransform make_transform(const std::string& mode, const SchemeParams& scheme, const std::string& segmentation_file,
                                     const std::string& variant, double rho, const Image& shape) {
  NamedTransform t;
  t.name = mode;
  if (mode == "rs") {
    t.spec = TransformSpec::none();
  } else if (mode == "pprs-static") {
    if (!segmentation_file.empty()) {
      t.spec = TransformSpec::fixed(load_label_map(segmentation_file));
    } else if (input_independent(scheme)) {
      t.spec = TransformSpec::fixed(segment(shape, scheme));
    } else {
      throw DomainError("pprs-static needs --segmentation FILE or --scheme grid");
    }
  } else if (mode == "pprs-dynamic") {
    t.spec = TransformSpec::dynamic(scheme);
  } else if (mode == "pprs-fixed") {
    t.spec = TransformSpec::fixed_on_input(scheme);
  } else {
    throw DomainError("unknown mode '" + mode + "'");
  }
  if (!variant.empty()) t.options.variant = radius_variant_from_string(variant);
  t.options.rho = rho;
  return t;
}

inline json transform_json(const NamedTransform& t, const std::string& mode, const SchemeParams& scheme,
                           const std::string& segmentation_file) {
  json j = to_json(t);
  j["cli_mode"] = mode;
  if (mode != "rs") j["scheme"] = to_json(scheme);
  if (!segmentation_file.empty()) j["segmentation_file"] = segmentation_file;
  return j;
}

inline NamedTransform transform_from_json(const json& j, const Image& shape) {
  const std::string mode = j.at("cli_mode").get<std::string>();
  const SchemeParams scheme = j.contains("scheme") ? scheme_from_json(j.at("scheme")) : SchemeParams{GridParams{}};
  return make_transform(mode, scheme, j.value("segmentation_file", std::string{}), j.value("variant", std::string{}),
                        j.value("rho", 0.0), shape);
}

// ---------------------------------------------------------------------------
// Output handling

/// Removes every registered output unless commit() is reached.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

  const fs::path& add(const fs::path& p) {
    paths_.push_back(p);
    return paths_.back();
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline fs::path manifest_path_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

inline void write_manifest(OutputGuard& guard, const fs::path& output, RunManifest m) {
  m.timestamp = utc_timestamp();
  write_text_file(guard.add(manifest_path_for(output)), m.to_json().dump(2) + "\n");
}

struct CertRecord {
  std::size_t index = 0;
  int label = 0;
  std::size_t pixel_count = 0;
  Certificate cert;
};

inline std::string cert_line(const CertRecord& r) {
  json j = to_json(r.cert);
  j["index"] = r.index;
  j["label"] = r.label;
  j["pixel_count"] = r.pixel_count;
  return j.dump() + "\n";
}

inline std::vector<CertRecord> read_certs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<CertRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("index").get<std::size_t>(), j.at("label").get<int>(), j.value("pixel_count", std::size_t{0}),
                     certificate_from_json(j)});
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::optional<RunManifest> read_manifest_next_to(const fs::path& output) {
  const auto p = manifest_path_for(output);
  if (!fs::exists(p)) return std::nullopt;
  return RunManifest::from_json(json::parse(read_text_file(p)));
}

inline std::vector<double> parse_sigma_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !(v > 0.0)) throw DomainError("sigma list entries must be positive numbers, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw DomainError("empty sigma list");
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SegmentCmd {
  std::string in, out, averaged_out;
  SchemeFlags scheme;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("segment", "segment an image and write its label map");
    c->add_option("--in", in, "input PGM/PPM")->required();
    c->add_option("--out", out, "output label map")->required();
    c->add_option("--averaged-out", averaged_out, "optional partition-averaged image");
    scheme.add_to(c, true);
    c->callback([this] { run(); });
  }

  void run() {
    OutputGuard guard;
    const Image img = load_pgm_ppm(in);
    const auto params = scheme.params();
    const auto seg = segment(img, params);
    save_label_map(seg, guard.add(out));
    if (!averaged_out.empty()) save_pgm_ppm(partition_average(img, seg), guard.add(averaged_out));
    RunManifest m;
    m.dataset_id = "image:" + in;
    m.classifier_id = "none";
    m.transforms = json::array({to_json(params)});
    write_manifest(guard, out, m);
    guard.commit();
    std::cout << scheme_name(params) << ": " << seg.partition_count() << " partitions, avg size "
              << format_number(static_cast<double>(seg.pixel_count()) / static_cast<double>(seg.partition_count())) << "\n";
  }
};

struct CertifyCmd {
  std::string dataset, classifier, out;
  std::uint64_t seed = 0;
  SchemeFlags scheme;
  SmoothingFlags smoothing;
  ModeFlags mode;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("certify", "certify every sample of a dataset");
    c->add_option("--dataset", dataset, "dataset spec")->required();
    c->add_option("--classifier", classifier, "classifier spec")->required();
    c->add_option("--seed", seed, "random seed")->required();
    c->add_option("--out", out, "output certificates (JSON lines)")->required();
    mode.add_to(c);
    smoothing.add_to(c);
    scheme.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    OutputGuard guard;
    const auto data = load_dataset(dataset);
    if (data.images.empty()) throw DomainError("dataset is empty");
    const auto f = load_classifier(classifier, data.images.front());
    const auto cfg = smoothing.config();
    const auto params = scheme.params();
    const auto t = make_transform(mode.mode, params, mode.segmentation_file, mode.variant, mode.rho, data.images.front());

    std::ofstream stream(guard.add(out), std::ios::binary);
    if (!stream) throw IoError("cannot open " + out + " for writing");
    std::vector<Certificate> certs;
    for (std::size_t i = 0; i < data.size(); ++i) {
      Certificate c;
      try {
        c = certify(*f, data.images[i], t.spec, cfg, sample_seed(seed, i), t.options);
      } catch (const std::exception& e) {
        throw Error("sample " + std::to_string(i) + ": " + e.what());
      }
      stream << cert_line({i, data.labels[i], data.images[i].pixel_count(), c});
      certs.push_back(std::move(c));
    }
    stream.close();
    if (!stream) throw IoError("write failed for " + out);

    RunManifest m;
    m.dataset_id = dataset;
    m.classifier_id = classifier;
    m.transforms = json::array({transform_json(t, mode.mode, params, mode.segmentation_file)});
    m.smoothing = cfg;
    m.seed = seed;
    write_manifest(guard, out, m);
    guard.commit();
    std::cout << mode.mode << ": " << data.size() << " samples, certified accuracy "
              << format_number(certified_accuracy(certs, data.labels)) << "\n";
  }
};

struct EvaluateCmd {
  std::string certs, labels, grid = "0:2:0.05", out, summary;
  int classes = 0;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "certified-accuracy curve from a certificate file");
    c->add_option("--certs", certs, "certificates (JSON lines)")->required();
    c->add_option("--labels", labels, "dataset spec supplying labels (default: labels stored with the certificates)");
    c->add_option("--grid", grid, "radius grid start:stop:step")->capture_default_str();
    c->add_option("--out", out, "curve CSV")->required();
    c->add_option("--summary", summary, "optional summary CSV");
    c->add_option("--classes", classes, "class count for the F-measure (default: from the data)");
    c->callback([this] { run(); });
  }

  void run() {
    OutputGuard guard;
    const auto records = read_certs(certs);
    std::vector<Certificate> cs;
    std::vector<int> ys;
    for (const auto& r : records) {
      cs.push_back(r.cert);
      ys.push_back(r.label);
    }
    int k = classes;
    std::size_t pixels = records.empty() ? 0 : records.front().pixel_count;
    if (!labels.empty()) {
      const auto ds = load_dataset(labels);
      if (ds.size() < records.size()) throw ShapeError("label dataset is shorter than the certificate file");
      for (std::size_t i = 0; i < records.size(); ++i) ys[i] = ds.labels.at(records[i].index);
      if (!k) k = ds.class_count;
      if (!pixels && !ds.images.empty()) pixels = ds.images.front().pixel_count();
    }
    if (!k) {
      for (std::size_t i = 0; i < ys.size(); ++i) k = std::max({k, ys[i] + 1, cs[i].prediction + 1});
    }
    const auto radii = parse_radius_grid(grid);
    const auto curve = certified_accuracy_curve(cs, ys, radii);

    RunManifest m = read_manifest_next_to(certs).value_or(RunManifest{});
    if (m.dataset_id.empty()) m.dataset_id = "certs:" + certs;
    m.radius_grid = grid;
    const std::string hash = m.hash();
    write_text_file(guard.add(out), curve_csv(curve, hash));
    SummaryRow row;
    row.method = m.transforms.empty() ? fs::path(certs).stem().string() : m.transforms.front().value("name", std::string{"run"});
    row.certified_accuracy = certified_accuracy(cs, ys);
    row.certified_f_measure = certified_f_measure(cs, ys, std::max(k, 1));
    row.avg_superpixel_size = pixels ? avg_superpixel_size(cs, pixels) : 0.0;
    if (!summary.empty()) write_text_file(guard.add(summary), summary_csv(std::span(&row, 1), hash));
    write_manifest(guard, out, m);
    guard.commit();
    std::cout << row.method << ": certified accuracy " << format_number(row.certified_accuracy) << ", F-measure "
              << format_number(row.certified_f_measure) << ", manifest " << hash << "\n";
  }
};

struct SweepCmd {
  std::string dataset, classifier, sigmas, grid = "0:2:0.05", out_dir;
  std::uint64_t seed = 0;
  SchemeFlags scheme;
  SmoothingFlags smoothing;
  ModeFlags mode;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("sweep", "certified-accuracy curves over several noise levels");
    c->add_option("--dataset", dataset, "dataset spec")->required();
    c->add_option("--classifier", classifier, "classifier spec")->required();
    c->add_option("--sigmas", sigmas, "comma-separated noise levels")->required();
    c->add_option("--seed", seed, "random seed")->required();
    c->add_option("--grid", grid, "radius grid start:stop:step")->capture_default_str();
    c->add_option("--out-dir", out_dir, "output directory")->required();
    mode.add_to(c);
    smoothing.add_to(c, false);
    scheme.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    OutputGuard guard;
    const auto sig = parse_sigma_list(sigmas);
    const auto data = load_dataset(dataset);
    if (data.images.empty()) throw DomainError("dataset is empty");
    const auto f = load_classifier(classifier, data.images.front());
    auto flags = smoothing;
    flags.sigma = sig.front();
    const auto cfg = flags.config();
    const auto params = scheme.params();
    const auto t = make_transform(mode.mode, params, mode.segmentation_file, mode.variant, mode.rho, data.images.front());
    const auto radii = parse_radius_grid(grid);
    const auto points = sigma_sweep(data, *f, t, sig, cfg, radii, seed);

    RunManifest m;
    m.dataset_id = dataset;
    m.classifier_id = classifier;
    m.transforms = json::array({transform_json(t, mode.mode, params, mode.segmentation_file)});
    m.smoothing = cfg;
    m.sigmas = sig;
    m.radius_grid = grid;
    m.seed = seed;
    const std::string hash = m.hash();

    fs::create_directories(out_dir);
    std::vector<SummaryRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::string tag = "sigma_" + format_number(points[i].sigma);
      write_text_file(guard.add(fs::path(out_dir) / ("curve_" + std::to_string(i) + "_" + tag + ".csv")),
                      curve_csv(points[i].result.curve, hash));
      auto row = points[i].result.summary;
      row.method = mode.mode + "@" + tag;
      rows.push_back(row);
      std::cout << row.method << ": certified accuracy " << format_number(row.certified_accuracy) << "\n";
    }
    const auto summary_path = fs::path(out_dir) / "summary.csv";
    write_text_file(guard.add(summary_path), summary_csv(rows, hash));
    write_manifest(guard, summary_path, m);
    guard.commit();
  }
};

struct RhoCmd {
  std::string dataset, out;
  std::size_t pairs = 20;
  double scale = 0.05;
  std::size_t iters = 100;
  std::uint64_t seed = 0;
  SchemeFlags scheme;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("rho", "empirical (non-certified) Lipschitz probe of a partition scheme");
    c->add_option("--dataset", dataset, "dataset spec")->required();
    c->add_option("--pairs", pairs, "perturbation pairs")->capture_default_str();
    c->add_option("--scale", scale, "perturbation standard deviation")->capture_default_str();
    c->add_option("--norm-iters", iters, "power iterations")->capture_default_str();
    c->add_option("--seed", seed, "random seed")->capture_default_str();
    c->add_option("--out", out, "optional JSON report");
    scheme.add_to(c, true, "--fz-scale");
    c->callback([this] { run(); });
  }

  void run() {
    OutputGuard guard;
    const auto data = load_dataset(dataset);
    const auto params = scheme.params();
    Rng rng(seed);
    const double rho = estimate_rho(params, data.images, pairs, scale, rng, iters);
    if (!out.empty()) {
      json j = {{"scheme", to_json(params)}, {"pairs", pairs},   {"perturb_scale", scale},
                {"rho", rho},                {"seed", seed},     {"certified", false},
                {"dataset", dataset},        {"note", "empirical lower bound on the Lipschitz constant"}};
      write_text_file(guard.add(out), j.dump(2) + "\n");
    }
    guard.commit();
    std::cout << "rho (empirical, non-certified) = " << format_number(rho) << "\n";
  }
};

struct AttackCmd {
  std::string certs, dataset, classifier, out;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("attack", "probe certificates with perturbations at 0.99 of their radius");
    c->add_option("--certs", certs, "certificates (JSON lines) with their manifest alongside")->required();
    c->add_option("--trials", trials, "random directions per certificate")->capture_default_str();
    c->add_option("--seed", seed, "random seed")->capture_default_str();
    c->add_option("--dataset", dataset, "dataset spec (default: from the manifest)");
    c->add_option("--classifier", classifier, "classifier spec (default: from the manifest)");
    c->add_option("--workers", workers, "sampling threads")->capture_default_str();
    c->add_option("--out", out, "optional JSON report");
    c->callback([this] { run(); });
  }

  void run() {
    OutputGuard guard;
    const auto manifest = read_manifest_next_to(certs);
    if (!manifest) throw IoError("no manifest found next to " + certs);
    const auto data = load_dataset(dataset.empty() ? manifest->dataset_id : dataset);
    if (data.images.empty()) throw DomainError("dataset is empty");
    const auto f = load_classifier(classifier.empty() ? manifest->classifier_id : classifier, data.images.front());
    if (manifest->transforms.empty()) throw DomainError("manifest lists no transform");
    const auto t = transform_from_json(manifest->transforms.front(), data.images.front());
    SmoothingConfig cfg = manifest->smoothing;
    cfg.workers = workers;

    AttackReport total;
    std::size_t attacked = 0;
    for (const auto& r : read_certs(certs)) {
      if (r.cert.abstained() || !(r.cert.radius > 0.0)) continue;
      if (r.index >= data.size()) throw ShapeError("certificate index " + std::to_string(r.index) + " outside the dataset");
      const auto rep = attack_check(*f, t.spec, cfg, data.images[r.index], r.cert, trials, split_seed(seed, r.index));
      total.probes += rep.probes;
      total.violations += rep.violations;
      total.inconclusive += rep.inconclusive;
      ++attacked;
    }
    if (!out.empty()) {
      json j = {{"certificates_attacked", attacked}, {"probes", total.probes}, {"violations", total.violations},
                {"inconclusive", total.inconclusive}, {"trials", trials},     {"seed", seed}};
      write_text_file(guard.add(out), j.dump(2) + "\n");
    }
    guard.commit();
    std::cout << "attacked " << attacked << " certificates, " << total.probes << " probes, " << total.violations
              << " violations, " << total.inconclusive << " inconclusive\n";
  }
};

struct NoisyDemoCmd {
  std::string in, out_noisy, out_pprs;
  double sigma = 0.5;
  std::uint64_t seed = 0;
  SchemeFlags scheme;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("noisy-demo", "write a noisy image and its partition-averaged counterpart");
    c->add_option("--in", in, "input PGM/PPM")->required();
    c->add_option("--sigma", sigma, "noise standard deviation")->capture_default_str();
    c->add_option("--seed", seed, "random seed")->capture_default_str();
    c->add_option("--out-noisy", out_noisy, "noisy image output")->required();
    c->add_option("--out-pprs", out_pprs, "averaged image output")->required();
    scheme.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    if (!(sigma >= 0.0)) throw DomainError("sigma must be >= 0");
    OutputGuard guard;
    const Image img = load_pgm_ppm(in);
    Rng rng(seed);
    const Image noisy = add(img, sample_gaussian_image(img, sigma, rng));
    const auto params = scheme.params();
    const auto seg = segment(noisy, params);
    save_pgm_ppm(noisy, guard.add(out_noisy));
    save_pgm_ppm(partition_average(noisy, seg), guard.add(out_pprs));
    RunManifest m;
    m.dataset_id = "image:" + in;
    m.classifier_id = "none";
    m.transforms = json::array({to_json(params)});
    m.smoothing.sigma = sigma;
    m.seed = seed;
    write_manifest(guard, out_pprs, m);
    guard.commit();
    std::cout << "noise sigma " << format_number(sigma) << ", " << seg.partition_count() << " partitions\n";
  }
};

struct FitMlpCmd {
  std::string dataset, out;
  std::uint32_t hidden = 256;
  double ridge = 1e-3;
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("fit-mlp", "random ReLU features plus a ridge-fitted readout, saved as TMLP");
    c->add_option("--dataset", dataset, "training dataset spec")->required();
    c->add_option("--hidden", hidden, "hidden width")->capture_default_str();
    c->add_option("--ridge", ridge, "ridge penalty")->capture_default_str();
    c->add_option("--seed", seed, "random seed")->capture_default_str();
    c->add_option("--out", out, "weights file")->required();
    c->callback([this] { run(); });
  }

  void run() {
    OutputGuard guard;
    const auto data = load_dataset(dataset);
    if (data.images.empty()) throw DomainError("dataset is empty");
    Rng rng(seed);
    const auto net = fit_readout(random_hidden_layer(static_cast<std::uint32_t>(data.images.front().size()), hidden, rng), data, ridge);
    save_mlp_weights(net, guard.add(out));
    const TinyMlpClassifier mlp(net);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += mlp.predict(data.images[i]) == data.labels[i];
    RunManifest m;
    m.dataset_id = dataset;
    m.classifier_id = "mlp:fit";
    m.seed = seed;
    write_manifest(guard, out, m);
    guard.commit();
    std::cout << "training accuracy " << format_number(static_cast<double>(correct) / static_cast<double>(data.size())) << "\n";
  }
};

/// Parses argv and runs one subcommand. Exit codes: 0 on success, 1 on a
/// runtime failure, 2 on a usage error.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Randomized-smoothing certification with pixel-partition averaging", "pprs"};
  app.require_subcommand(1);
  SegmentCmd segment_cmd;
  CertifyCmd certify_cmd;
  EvaluateCmd evaluate_cmd;
  SweepCmd sweep_cmd;
  RhoCmd rho_cmd;
  AttackCmd attack_cmd;
  NoisyDemoCmd demo_cmd;
  FitMlpCmd fit_cmd;
  segment_cmd.attach(app);
  certify_cmd.attach(app);
  evaluate_cmd.attach(app);
  sweep_cmd.attach(app);
  rho_cmd.attach(app);
  attack_cmd.attach(app);
  demo_cmd.attach(app);
  fit_cmd.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pprs::cli
