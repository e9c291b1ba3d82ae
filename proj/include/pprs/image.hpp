#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pprs/errors.hpp"
#include "pprs/random.hpp"

namespace pprs {

/// Dense H x W x C grid of real intensities, row-major with interleaved
/// channels. Loaders produce values in [0, 1]; arithmetic on the grid is
/// unclamped.
class Image {
 public:
  Image() = default;

  Image(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {
    check_channels();
  }

  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_channels();
    if (data_.size() != height_ * width_ * channels_) {
      throw ShapeError("image data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  double operator()(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data_[(y * width_ + x) * channels_ + c];
  }
  double& operator()(std::size_t y, std::size_t x, std::size_t c = 0) {
    return data_[(y * width_ + x) * channels_ + c];
  }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  void check_channels() const {
    if (channels_ != 1 && channels_ != 3) {
      throw ShapeError("images carry 1 or 3 channels, got " + std::to_string(channels_));
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 1;
  std::vector<double> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* context) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(context) + ": image shapes differ");
  }
}

/// Element-wise a + b.
inline Image add(const Image& a, const Image& b) {
  require_same_shape(a, b, "add");
  Image out = a;
  auto dst = out.values();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double l2_distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "l2_distance");
  double s = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) s += (da[i] - db[i]) * (da[i] - db[i]);
  return std::sqrt(s);
}

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return images.size(); }

  /// Throws ShapeError / DomainError when the dataset invariants fail.
  void validate() const {
    if (images.size() != labels.size()) throw ShapeError("dataset images and labels differ in length");
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (!images[i].same_shape(images.front())) throw ShapeError("dataset image " + std::to_string(i) + " has a different shape");
      if (labels[i] < 0 || labels[i] >= class_count) {
        throw DomainError("dataset label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(class_count) + ")");
      }
    }
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Netpbm header tokenizer: whitespace separated decimal fields, '#' comments.
class PnmCursor {
 public:
  explicit PnmCursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ >= bytes_.size(); }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (is_space(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  /// Reads an unsigned decimal field. `truncation` selects the error raised
  /// when input ends before a field starts.
  std::uint64_t number(ParseError::Kind truncation, const char* field) {
    skip_space_and_comments();
    if (at_end()) throw ParseError(truncation, pos_, std::string("missing ") + field);
    const std::size_t start = pos_;
    std::uint64_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 0xffffffffULL) throw ParseError(ParseError::Kind::kMalformedHeader, start, std::string(field) + " too large");
      ++pos_;
    }
    if (pos_ == start || (pos_ < bytes_.size() && !is_space(bytes_[pos_]) && bytes_[pos_] != '#')) {
      throw ParseError(ParseError::Kind::kMalformedHeader, pos_, std::string("malformed ") + field);
    }
    return value;
  }

  /// Consumes the single whitespace byte separating a binary header from its payload.
  void single_space() {
    if (at_end() || !is_space(bytes_[pos_])) {
      throw ParseError(ParseError::Kind::kMalformedHeader, pos_, "expected whitespace after maxval");
    }
    ++pos_;
  }

 private:
  static bool is_space(std::uint8_t ch) { return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f'; }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint8_t quantize_u8(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

}  // namespace detail

/// Parses a PGM/PPM image (P2, P3, P5, P6) already held in memory.
inline Image decode_pnm(std::span<const std::uint8_t> bytes) {
  using Kind = ParseError::Kind;
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '3' && bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError(Kind::kBadMagic, 0, "unsupported magic; expected P2, P3, P5 or P6");
  }
  const char kind = static_cast<char>(bytes[1]);
  const bool ascii = kind == '2' || kind == '3';
  const std::size_t channels = (kind == '3' || kind == '6') ? 3 : 1;

  detail::PnmCursor c(bytes.subspan(2));
  const std::size_t base = 2;
  std::uint64_t width, height, maxval;
  try {
    width = c.number(Kind::kMalformedHeader, "width");
    height = c.number(Kind::kMalformedHeader, "height");
    maxval = c.number(Kind::kMalformedHeader, "maxval");
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), base + e.offset(), "PNM header: malformed or missing field");
  }
  if (width == 0 || height == 0) throw ParseError(Kind::kMalformedHeader, base + c.offset(), "zero image dimension");
  if (maxval == 0 || maxval > 65535) throw ParseError(Kind::kMalformedHeader, base + c.offset(), "maxval must be in [1, 65535]");

  const std::size_t count = static_cast<std::size_t>(width * height * channels);
  std::vector<double> data(count);
  const double scale = 1.0 / static_cast<double>(maxval);

  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t v;
      try {
        v = c.number(Kind::kTruncatedPayload, "sample");
      } catch (const ParseError& e) {
        throw ParseError(e.kind(), base + e.offset(),
                         "PNM payload: sample " + std::to_string(i) + " of " + std::to_string(count));
      }
      if (v > maxval) throw ParseError(Kind::kMalformedHeader, base + c.offset(), "sample exceeds maxval");
      data[i] = static_cast<double>(v) * scale;
    }
  } else {
    c.single_space();
    const std::size_t start = base + c.offset();
    const std::size_t bytes_per = maxval < 256 ? 1 : 2;
    const std::size_t need = count * bytes_per;
    if (bytes.size() - start < need) {
      throw ParseError(Kind::kTruncatedPayload, bytes.size(),
                       "PNM payload truncated: need " + std::to_string(need) + " bytes, have " + std::to_string(bytes.size() - start));
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t v = bytes_per == 1 ? bytes[start + i]
                                       : (std::uint32_t{bytes[start + 2 * i]} << 8) | bytes[start + 2 * i + 1];
      if (v > maxval) throw ParseError(Kind::kMalformedHeader, start + i * bytes_per, "sample exceeds maxval");
      data[i] = static_cast<double>(v) * scale;
    }
  }
  return Image(static_cast<std::size_t>(height), static_cast<std::size_t>(width), channels, std::move(data));
}

inline Image load_pgm_ppm(const std::filesystem::path& path) { return decode_pnm(detail::read_file(path)); }

/// Encodes as binary P5 (1 channel) or P6 (3 channels), maxval 255. Values are
/// clamped to [0, 1] here and only here.
inline std::vector<std::uint8_t> encode_pnm(const Image& image) {
  const std::string header = std::string(image.channels() == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width()) +
                             " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (double v : image.data()) out.push_back(detail::quantize_u8(v));
  return out;
}

inline void save_pgm_ppm(const Image& image, const std::filesystem::path& path) {
  if (image.empty()) throw ShapeError("cannot save an empty image");
  detail::write_file(path, encode_pnm(image));
}

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixel bytes are scaled by 1/255. `class_count` of 0 means max label + 1.
inline LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                               int class_count = 0) {
  using Kind = ParseError::Kind;
  const auto img = detail::read_file(images_path);
  const auto lbl = detail::read_file(labels_path);
  if (img.size() < 16) throw ParseError(Kind::kMalformedHeader, img.size(), "IDX image header truncated");
  if (lbl.size() < 8) throw ParseError(Kind::kMalformedHeader, lbl.size(), "IDX label header truncated");
  if (detail::read_be32(img, 0) != 0x00000803) throw ParseError(Kind::kBadMagic, 0, "IDX image magic is not 0x00000803");
  if (detail::read_be32(lbl, 0) != 0x00000801) throw ParseError(Kind::kBadMagic, 0, "IDX label magic is not 0x00000801");

  const std::size_t n = detail::read_be32(img, 4);
  const std::size_t rows = detail::read_be32(img, 8);
  const std::size_t cols = detail::read_be32(img, 12);
  const std::size_t n_labels = detail::read_be32(lbl, 4);
  if (n != n_labels) {
    throw ParseError(Kind::kCountMismatch, 4,
                     "IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels");
  }
  if (rows == 0 || cols == 0) throw ParseError(Kind::kMalformedHeader, 8, "IDX zero image dimension");
  const std::size_t per = rows * cols;
  if (img.size() - 16 < n * per) throw ParseError(Kind::kTruncatedPayload, img.size(), "IDX image payload truncated");
  if (lbl.size() - 8 < n) throw ParseError(Kind::kTruncatedPayload, lbl.size(), "IDX label payload truncated");

  LabeledDataset ds;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> px(per);
    for (std::size_t j = 0; j < per; ++j) px[j] = img[16 + i * per + j] / 255.0;
    ds.images.emplace_back(rows, cols, 1, std::move(px));
    ds.labels.push_back(lbl[8 + i]);
    max_label = std::max(max_label, static_cast<int>(lbl[8 + i]));
  }
  ds.class_count = class_count > 0 ? class_count : max_label + 1;
  ds.validate();
  return ds;
}

/// Writes a grayscale dataset as an IDX pair (pixels quantized to bytes).
inline void save_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  ds.validate();
  if (ds.images.empty()) throw ShapeError("cannot write an empty IDX dataset");
  if (ds.images.front().channels() != 1) throw ShapeError("IDX export supports grayscale images only");
  std::vector<std::uint8_t> img, lbl;
  detail::append_be32(img, 0x00000803);
  detail::append_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::append_be32(img, static_cast<std::uint32_t>(ds.images.front().height()));
  detail::append_be32(img, static_cast<std::uint32_t>(ds.images.front().width()));
  for (const auto& im : ds.images) {
    for (double v : im.data()) img.push_back(detail::quantize_u8(v));
  }
  detail::append_be32(lbl, 0x00000801);
  detail::append_be32(lbl, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lbl.push_back(static_cast<std::uint8_t>(y));
  detail::write_file(images_path, img);
  detail::write_file(labels_path, lbl);
}

/// Piecewise-constant test image together with its generating cell map.
struct BlobSample {
  Image image;
  int label = 0;
  std::vector<std::uint32_t> cells;  // per-pixel Voronoi cell index
};

/// Grayscale image that is constant on the Voronoi cells of `num_regions`
/// random sites. Cell intensities are drawn from distinct strata of [0, 1]
/// so neighbouring cells never share a value; the label is the intensity
/// bucket of the largest cell.
inline BlobSample generate_blobs(std::size_t height, std::size_t width, std::size_t num_regions, int num_classes,
                                 std::uint64_t seed) {
  if (height == 0 || width == 0) throw DomainError("generate_blobs: zero image dimension");
  if (num_regions == 0) throw DomainError("generate_blobs: num_regions must be >= 1");
  if (num_classes < 1) throw DomainError("generate_blobs: num_classes must be >= 1");

  Rng rng(seed);
  const double min_sep = 0.5 * std::sqrt(static_cast<double>(height * width) / static_cast<double>(num_regions));
  std::vector<std::pair<double, double>> sites;
  sites.reserve(num_regions);
  while (sites.size() < num_regions) {
    std::pair<double, double> s;
    for (int attempt = 0; attempt < 64; ++attempt) {
      s = {rng.uniform() * static_cast<double>(height) - 0.5, rng.uniform() * static_cast<double>(width) - 0.5};
      bool ok = true;
      for (const auto& t : sites) {
        if (std::hypot(s.first - t.first, s.second - t.second) < min_sep) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    sites.push_back(s);
  }

  std::vector<std::size_t> strata(num_regions);
  for (std::size_t i = 0; i < num_regions; ++i) strata[i] = i;
  for (std::size_t i = num_regions; i > 1; --i) std::swap(strata[i - 1], strata[rng.below(i)]);
  std::vector<double> intensity(num_regions);
  for (std::size_t j = 0; j < num_regions; ++j) {
    intensity[j] = (static_cast<double>(strata[j]) + 0.25 + 0.5 * rng.uniform()) / static_cast<double>(num_regions);
  }

  BlobSample out;
  out.cells.resize(height * width);
  std::vector<std::size_t> area(num_regions, 0);
  std::vector<double> px(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < num_regions; ++j) {
        const double dy = static_cast<double>(y) - sites[j].first;
        const double dx = static_cast<double>(x) - sites[j].second;
        const double d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      out.cells[y * width + x] = static_cast<std::uint32_t>(best);
      px[y * width + x] = intensity[best];
      ++area[best];
    }
  }
  const auto dominant = static_cast<std::size_t>(std::max_element(area.begin(), area.end()) - area.begin());
  out.label = std::min(num_classes - 1, static_cast<int>(intensity[dominant] * num_classes));
  out.image = Image(height, width, 1, std::move(px));
  return out;
}

/// `count` blob images; image i uses seed split_seed(seed, i).
inline LabeledDataset make_blobs_dataset(std::size_t count, std::size_t height, std::size_t width,
                                         std::size_t num_regions, int num_classes, std::uint64_t seed) {
  LabeledDataset ds;
  ds.class_count = num_classes;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto b = generate_blobs(height, width, num_regions, num_classes, split_seed(seed, i));
    ds.images.push_back(std::move(b.image));
    ds.labels.push_back(b.label);
  }
  return ds;
}

}  // namespace pprs
