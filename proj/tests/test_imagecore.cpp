#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "pprs/image.hpp"
#include "test_support.hpp"

using namespace pprs;
using testing_support::TempDir;
using testing_support::header_bytes;
using testing_support::write_bytes;

namespace {

ParseError::Kind parse_kind(const std::vector<unsigned char>& bytes) {
  try {
    decode_pnm(bytes);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a parse error";
  return ParseError::Kind::kBadMagic;
}

}  // namespace

TEST(Image, ShapeChecks) {
  EXPECT_THROW(Image(2, 2, 2), ShapeError);
  EXPECT_THROW(Image(2, 2, 1, std::vector<double>(3)), ShapeError);
  Image img(2, 3, 3, 0.5);
  EXPECT_EQ(img.size(), 18u);
  EXPECT_EQ(img.pixel_count(), 6u);
  img(1, 2, 2) = 0.75;
  EXPECT_DOUBLE_EQ(img.data()[(1 * 3 + 2) * 3 + 2], 0.75);
}

TEST(Image, ArithmeticIsUnclamped) {
  Image a(1, 2, 1, std::vector<double>{0.9, 0.1});
  Image b(1, 2, 1, std::vector<double>{0.5, -0.4});
  const Image s = add(a, b);
  EXPECT_DOUBLE_EQ(s.data()[0], 1.4);
  EXPECT_DOUBLE_EQ(s.data()[1], 0.1 - 0.4);
  EXPECT_THROW(add(a, Image(2, 1, 1)), ShapeError);
  EXPECT_DOUBLE_EQ(l2_distance(a, b), std::sqrt(0.16 + 0.25));
}

TEST(Pnm, P5Scaling) {
  const Image img = decode_pnm(header_bytes("P5\n2 2\n255\n", {0, 255, 128, 64}));
  ASSERT_EQ(img.channels(), 1u);
  ASSERT_EQ(img.height(), 2u);
  EXPECT_NEAR(img.data()[0], 0.0, 1e-12);
  EXPECT_NEAR(img.data()[1], 1.0, 1e-12);
  EXPECT_NEAR(img.data()[2], 0.50196, 1e-5);
  EXPECT_NEAR(img.data()[3], 0.25098, 1e-5);
}

TEST(Pnm, P6SinglePixel) {
  const Image img = decode_pnm(header_bytes("P6 1 1 255\n", {255, 0, 0}));
  ASSERT_EQ(img.channels(), 3u);
  EXPECT_EQ(std::vector<double>(img.data().begin(), img.data().end()), (std::vector<double>{1, 0, 0}));
}

TEST(Pnm, AsciiVariantsAndComments) {
  const Image g = decode_pnm(header_bytes("P2\n# comment\n3 1\n# another\n4\n0 2 4\n", {}));
  EXPECT_EQ(std::vector<double>(g.data().begin(), g.data().end()), (std::vector<double>{0, 0.5, 1}));
  const Image c = decode_pnm(header_bytes("P3 1 1 10 10 5 0", {}));
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{1, 0.5, 0}));
}

TEST(Pnm, SixteenBitBigEndian) {
  const Image img = decode_pnm(header_bytes("P5 2 1 65535\n", {0xff, 0xff, 0x80, 0x00}));
  EXPECT_DOUBLE_EQ(img.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(img.data()[1], 32768.0 / 65535.0);
}

TEST(Pnm, DistinctErrors) {
  using K = ParseError::Kind;
  EXPECT_EQ(parse_kind(header_bytes("P5\n2 2\n255\n", {0, 1, 2})), K::kTruncatedPayload);
  EXPECT_EQ(parse_kind(header_bytes("P4\n2 2\n", {0})), K::kBadMagic);
  EXPECT_EQ(parse_kind(header_bytes("P5\n2 x\n255\n", {0})), K::kMalformedHeader);
  EXPECT_EQ(parse_kind(header_bytes("P5\n2 2\n70000\n", {0})), K::kMalformedHeader);
  EXPECT_EQ(parse_kind(header_bytes("P5\n2 2\n", {})), K::kMalformedHeader);
}

TEST(Pnm, ErrorNamesByteOffset) {
  try {
    decode_pnm(header_bytes("P5\n2 2\n255\n", {0, 1, 2}));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
    EXPECT_GT(e.offset(), 0u);
  }
}

TEST(Pnm, RoundTripWithinHalfStep) {
  TempDir dir;
  Image img(1, 4, 1, std::vector<double>{0, 1, 0.5, 0.25});
  save_pgm_ppm(img, dir / "a.pgm");
  const Image back = load_pgm_ppm(dir / "a.pgm");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back.data()[i] - img.data()[i]), 1.0 / 510 + 1e-12);
}

TEST(Pnm, RoundTripPropertyOnRandomImages) {
  TempDir dir;
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const std::size_t h = 1 + rng.below(9), w = 1 + rng.below(9), c = rng.below(2) ? 3 : 1;
    Image img(h, w, c);
    for (double& v : img.values()) v = rng.uniform();
    save_pgm_ppm(img, dir / "r.pnm");
    const Image back = load_pgm_ppm(dir / "r.pnm");
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i) ASSERT_LE(std::abs(back.data()[i] - img.data()[i]), 1.0 / 510 + 1e-12);
  }
}

TEST(Pnm, ClampOnWrite) {
  Image img(1, 3, 1, std::vector<double>{1.7, -0.3, std::nan("")});
  const auto bytes = encode_pnm(img);
  ASSERT_GE(bytes.size(), 3u);
  EXPECT_EQ(bytes[bytes.size() - 3], 255);
  EXPECT_EQ(bytes[bytes.size() - 2], 0);
  EXPECT_EQ(bytes[bytes.size() - 1], 0);
}

TEST(Pnm, ColorWritesP6) {
  const auto bytes = encode_pnm(Image(2, 2, 3, 0.5));
  EXPECT_EQ(bytes[0], 'P');
  EXPECT_EQ(bytes[1], '6');
  EXPECT_EQ(encode_pnm(Image(2, 2, 1))[1], '5');
}

TEST(Pnm, UnwritablePath) {
  EXPECT_THROW(save_pgm_ppm(Image(1, 1, 1), "/nonexistent_dir_pprs/x.pgm"), IoError);
  EXPECT_THROW(load_pgm_ppm("/nonexistent_dir_pprs/x.pgm"), IoError);
}

namespace {

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
          static_cast<unsigned char>(v)};
}

void write_idx(const TempDir& dir, std::uint32_t n_img, std::uint32_t n_lbl, std::uint32_t img_magic = 0x803,
               std::uint32_t lbl_magic = 0x801) {
  std::vector<unsigned char> img, lbl;
  for (auto v : {img_magic, n_img, 2u, 2u}) {
    auto b = be32(v);
    img.insert(img.end(), b.begin(), b.end());
  }
  for (std::uint32_t i = 0; i < n_img * 4; ++i) img.push_back(static_cast<unsigned char>(i % 2 ? 255 : i % 256));
  for (auto v : {lbl_magic, n_lbl}) {
    auto b = be32(v);
    lbl.insert(lbl.end(), b.begin(), b.end());
  }
  for (std::uint32_t i = 0; i < n_lbl; ++i) lbl.push_back(static_cast<unsigned char>(i % 3));
  write_bytes(dir / "img.idx", img);
  write_bytes(dir / "lbl.idx", lbl);
}

}  // namespace

TEST(Idx, ParsesAndScales) {
  TempDir dir;
  write_idx(dir, 5, 5);
  const auto ds = load_idx(dir / "img.idx", dir / "lbl.idx");
  ASSERT_EQ(ds.size(), 5u);
  EXPECT_EQ(ds.class_count, 3);
  EXPECT_EQ(ds.images[0].height(), 2u);
  EXPECT_DOUBLE_EQ(ds.images[0].data()[1], 1.0);
  EXPECT_DOUBLE_EQ(ds.images[0].data()[2], 2.0 / 255.0);
  EXPECT_EQ(ds.labels[4], 1);
}

TEST(Idx, CountMismatch) {
  TempDir dir;
  write_idx(dir, 100, 99);
  try {
    load_idx(dir / "img.idx", dir / "lbl.idx");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::kCountMismatch);
  }
}

TEST(Idx, MagicMismatch) {
  TempDir dir;
  write_idx(dir, 2, 2, 0x801, 0x801);
  try {
    load_idx(dir / "img.idx", dir / "lbl.idx");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::kBadMagic);
  }
}

TEST(Idx, SaveLoadRoundTrip) {
  TempDir dir;
  const auto ds = make_blobs_dataset(6, 5, 7, 3, 3, 11);
  save_idx(ds, dir / "i", dir / "l");
  const auto back = load_idx(dir / "i", dir / "l", 3);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.labels, ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.images[i].size(); ++j) {
      EXPECT_LE(std::abs(back.images[i].data()[j] - ds.images[i].data()[j]), 1.0 / 510 + 1e-12);
    }
  }
}

TEST(Idx, MnistFixture) {
  const std::string root = PPRS_TEST_DATA_DIR "/mnist/";
  const auto ds = load_idx(root + "test200-images-idx3-ubyte", root + "test200-labels-idx1-ubyte");
  ASSERT_EQ(ds.size(), 200u);
  EXPECT_EQ(ds.class_count, 10);
  EXPECT_EQ(ds.images[0].height(), 28u);
  EXPECT_EQ(ds.images[0].width(), 28u);
  // IDX parsing is bit-exact: every intensity is a multiple of 1/255.
  for (const auto& im : ds.images) {
    for (double v : im.data()) {
      const double b = v * 255.0;
      ASSERT_NEAR(b, std::round(b), 1e-9);
    }
  }
}

TEST(Blobs, Deterministic) {
  const auto a = generate_blobs(12, 10, 5, 4, 0);
  const auto b = generate_blobs(12, 10, 5, 4, 0);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.label, b.label);
  EXPECT_NE(generate_blobs(12, 10, 5, 4, 1).image, a.image);
}

TEST(Blobs, SingleRegionIsConstant) {
  const auto b = generate_blobs(6, 6, 1, 3, 4);
  for (double v : b.image.data()) EXPECT_EQ(v, b.image.data()[0]);
}

TEST(Blobs, AtMostRegionCountValues) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = generate_blobs(8, 8, 4, 4, seed);
    std::set<double> values(b.image.data().begin(), b.image.data().end());
    EXPECT_LE(values.size(), 4u);
    for (double v : values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(b.label, 0);
    EXPECT_LT(b.label, 4);
  }
}

TEST(Blobs, InvalidArguments) {
  EXPECT_THROW(generate_blobs(0, 4, 2, 2, 0), DomainError);
  EXPECT_THROW(generate_blobs(4, 4, 0, 2, 0), DomainError);
}

TEST(Dataset, Validate) {
  LabeledDataset ds;
  ds.class_count = 2;
  ds.images = {Image(2, 2, 1), Image(2, 2, 1)};
  ds.labels = {0, 2};
  EXPECT_THROW(ds.validate(), DomainError);
  ds.labels = {0};
  EXPECT_THROW(ds.validate(), ShapeError);
  ds.labels = {0, 1};
  ds.images[1] = Image(2, 3, 1);
  EXPECT_THROW(ds.validate(), ShapeError);
}
