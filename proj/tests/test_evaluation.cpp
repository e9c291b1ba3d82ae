#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "pprs/evaluation.hpp"

using namespace pprs;

namespace {

Certificate cert_of(int prediction, double radius, double mean_partitions = 1.0) {
  Certificate c;
  c.prediction = prediction;
  c.radius = radius;
  c.mean_partitions = mean_partitions;
  return c;
}

SmoothingConfig small_config(double sigma) {
  SmoothingConfig c;
  c.sigma = sigma;
  c.n0 = 20;
  c.n = 200;
  return c;
}

}  // namespace

TEST(ZeroOneLoss, Convention) {
  EXPECT_EQ(zero_one_loss(3, 3), 0);
  EXPECT_EQ(zero_one_loss(2, 3), 1);
  EXPECT_EQ(zero_one_loss(kAbstain, 3), 1);
}

TEST(Curve, AllAbstainedIsZero) {
  const std::vector<Certificate> certs = {cert_of(kAbstain, 0), cert_of(kAbstain, 0)};
  const std::vector<int> labels = {0, 1};
  const std::vector<double> grid = {0.0, 0.5};
  for (const auto& p : certified_accuracy_curve(certs, labels, grid)) EXPECT_EQ(p.certified_accuracy, 0.0);
}

TEST(Curve, SingleSample) {
  const std::vector<Certificate> certs = {cert_of(1, 0.5)};
  const std::vector<int> labels = {1};
  const std::vector<double> grid = {0.4, 0.6};
  const auto curve = certified_accuracy_curve(certs, labels, grid);
  EXPECT_EQ(curve[0].certified_accuracy, 1.0);
  EXPECT_EQ(curve[1].certified_accuracy, 0.0);
}

TEST(Curve, LengthMismatch) {
  const std::vector<Certificate> certs = {cert_of(1, 0.5)};
  const std::vector<int> labels = {1, 0};
  EXPECT_THROW(certified_accuracy_curve(certs, labels, default_radius_grid()), ShapeError);
}

TEST(Curve, ScalarEqualsCurveAtZeroAndNonIncreasing) {
  Rng rng(4);
  std::vector<Certificate> certs;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int pred = static_cast<int>(rng.below(4)) - 1;
    certs.push_back(cert_of(pred, pred == kAbstain ? 0.0 : 2.5 * rng.uniform()));
    labels.push_back(static_cast<int>(rng.below(3)));
  }
  const auto grid = default_radius_grid();
  const auto curve = certified_accuracy_curve(certs, labels, grid);
  EXPECT_EQ(curve.front().certified_accuracy, certified_accuracy(certs, labels));
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i].certified_accuracy, curve[i - 1].certified_accuracy);
  for (const auto& p : curve) {
    EXPECT_GE(p.certified_accuracy, 0.0);
    EXPECT_LE(p.certified_accuracy, 1.0);
  }
}

TEST(FMeasure, HandComputed) {
  // Class 0: tp 1, predicted 2, actual 1 -> P 0.5, R 1, F 2/3.
  // Class 1: tp 1, predicted 1, actual 3 -> P 1, R 1/3, F 0.5. Abstention counts nowhere.
  const std::vector<Certificate> certs = {cert_of(0, 1), cert_of(0, 1), cert_of(1, 1), cert_of(kAbstain, 0)};
  const std::vector<int> labels = {0, 1, 1, 1};
  EXPECT_NEAR(certified_f_measure(certs, labels, 2), (2.0 / 3.0 + 0.5) / 2.0, 1e-15);
  EXPECT_EQ(certified_f_measure(std::vector<Certificate>{cert_of(kAbstain, 0)}, std::vector<int>{0}, 2), 0.0);
}

TEST(Grid, ParsingAndDefault) {
  const auto g = default_radius_grid();
  ASSERT_EQ(g.size(), 41u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_NEAR(g.back(), 2.0, 1e-12);
  EXPECT_EQ(parse_radius_grid("0:1:0.5"), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(parse_radius_grid("0:0.9:0.5"), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(parse_radius_grid("0:0.7:0.5"), (std::vector<double>{0.0, 0.5}));
  EXPECT_THROW(parse_radius_grid("0:1"), DomainError);
  EXPECT_THROW(parse_radius_grid("0:1:0"), DomainError);
  EXPECT_THROW(parse_radius_grid("0:1:0.1x"), DomainError);
  EXPECT_THROW(parse_radius_grid("1:0:0.1"), DomainError);
}

TEST(Manifest, HashIgnoresTimestamp) {
  RunManifest a;
  a.dataset_id = "blobs";
  a.classifier_id = "centroid";
  a.seed = 5;
  a.timestamp = "2020-01-01T00:00:00Z";
  RunManifest b = a;
  b.timestamp = "2030-01-01T00:00:00Z";
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 6;
  EXPECT_NE(a.hash(), b.hash());
  const auto back = RunManifest::from_json(a.to_json());
  EXPECT_EQ(back.hash(), a.hash());
  EXPECT_EQ(back.timestamp, a.timestamp);
}

TEST(Csv, Layout) {
  const std::vector<CurvePoint> curve = {{0.0, 1.0}, {0.05, 0.5}};
  EXPECT_EQ(curve_csv(curve, "abc"), "# manifest_hash=abc\nradius,certified_accuracy\n0,1\n0.05,0.5\n");
  const std::vector<SummaryRow> rows = {{"rs", 0.5, 0.25, 1.0}};
  EXPECT_EQ(summary_csv(rows, "abc"),
            "# manifest_hash=abc\nmethod,certified_accuracy,certified_f_measure,avg_superpixel_size\nrs,0.5,0.25,1\n");
}

TEST(Evaluate, IdentityPartitionEqualsVanilla) {
  const auto data = make_blobs_dataset(8, 8, 8, 4, 4, 1);
  const auto f = nearest_centroid_train(make_blobs_dataset(100, 8, 8, 4, 4, 2));
  const std::vector<NamedTransform> transforms = {{"rs", TransformSpec::none(), {}},
                                                  {"identity", TransformSpec::fixed(identity_partition(8, 8)), {}}};
  const auto r = evaluate(data, f, transforms, small_config(0.5), default_radius_grid(), 3);
  ASSERT_EQ(r.transforms.size(), 2u);
  EXPECT_EQ(r.transforms[0].curve, r.transforms[1].curve);
  EXPECT_EQ(r.transforms[0].summary.avg_superpixel_size, 1.0);
  EXPECT_EQ(r.transforms[1].summary.avg_superpixel_size, 1.0);
}

TEST(Evaluate, AvgSuperpixelSizeDefinition) {
  const auto data = make_blobs_dataset(3, 8, 8, 4, 4, 1);
  const auto f = nearest_centroid_train(make_blobs_dataset(50, 8, 8, 4, 4, 2));
  const std::vector<NamedTransform> transforms = {{"grid", TransformSpec::fixed(grid_partition(8, 8, 2, 4)), {}}};
  const auto r = evaluate(data, f, transforms, small_config(0.5), default_radius_grid(), 3);
  EXPECT_EQ(r.transforms[0].summary.avg_superpixel_size, 8.0);
}

TEST(Evaluate, PprsHelpsOnBlobs) {
  const auto data = make_blobs_dataset(40, 16, 16, 4, 4, 10);
  const auto f = nearest_centroid_train(make_blobs_dataset(400, 16, 16, 4, 4, 11));
  const std::vector<NamedTransform> transforms = {{"rs", TransformSpec::none(), {}},
                                                  {"pprs", TransformSpec::dynamic(SlicParams{16, 10.0, 10}), {}}};
  auto cfg = small_config(0.5);
  cfg.n = 500;
  const auto r = evaluate(data, f, transforms, cfg, default_radius_grid(), 7);
  EXPECT_GE(r.transforms[1].summary.certified_accuracy, r.transforms[0].summary.certified_accuracy);
}

TEST(Sweep, EchoAndDeterminism) {
  const auto data = make_blobs_dataset(4, 8, 8, 4, 4, 1);
  const auto f = nearest_centroid_train(make_blobs_dataset(60, 8, 8, 4, 4, 2));
  const NamedTransform t{"rs", TransformSpec::none(), {}};
  const std::vector<double> sigmas = {0.12, 0.2, 0.5, 0.2};
  const auto sweep = sigma_sweep(data, f, t, sigmas, small_config(0.25), default_radius_grid(), 5);
  ASSERT_EQ(sweep.size(), 4u);
  for (std::size_t i = 0; i < sigmas.size(); ++i) EXPECT_EQ(sweep[i].sigma, sigmas[i]);
  EXPECT_EQ(sweep[1].result.curve, sweep[3].result.curve);
  EXPECT_EQ(sweep[1].result.certificates, sweep[3].result.certificates);
  const std::vector<double> one = {0.2};
  const auto single = sigma_sweep(data, f, t, one, small_config(0.25), default_radius_grid(), 5);
  const auto direct = evaluate(data, f, std::span(&t, 1), small_config(0.2), default_radius_grid(), 5);
  EXPECT_EQ(single[0].result.curve, direct.transforms[0].curve);
  EXPECT_THROW(sigma_sweep(data, f, t, {}, small_config(0.25), default_radius_grid(), 5), DomainError);
}

TEST(Evaluate, ReproducibleCsv) {
  const auto data = make_blobs_dataset(5, 8, 8, 4, 4, 1);
  const auto f = nearest_centroid_train(make_blobs_dataset(60, 8, 8, 4, 4, 2));
  const std::vector<NamedTransform> transforms = {{"pprs", TransformSpec::dynamic(FelzenszwalbParams{0.5, 2}), {}}};
  const auto a = evaluate(data, f, transforms, small_config(0.3), default_radius_grid(), 1);
  const auto b = evaluate(data, f, transforms, small_config(0.3), default_radius_grid(), 1);
  EXPECT_EQ(curve_csv(a.transforms[0].curve, "h"), curve_csv(b.transforms[0].curve, "h"));
}

TEST(Attack, HalfspaceNoViolations) {
  Rng rng(8);
  auto cfg = small_config(0.5);
  cfg.n = 2000;
  for (int t = 0; t < 10; ++t) {
    Image w(3, 3, 1), x(3, 3, 1);
    for (double& v : w.values()) v = rng.normal();
    for (double& v : x.values()) v = rng.uniform();
    const HalfspaceClassifier h(w, 0.3 * rng.normal());
    const auto cert = certify(h, x, TransformSpec::none(), cfg, t);
    if (cert.radius <= 0.0) continue;
    const auto report = attack_check(h, TransformSpec::none(), cfg, x, cert, 5, 100 + t);
    EXPECT_EQ(report.violations, 0u);
    EXPECT_EQ(report.probes, 6u);
  }
}

TEST(Attack, Preconditions) {
  const auto f = nearest_centroid_train(make_blobs_dataset(20, 4, 4, 2, 2, 2));
  const Image x(4, 4, 1);
  EXPECT_THROW(attack_check(f, TransformSpec::none(), small_config(0.5), x, cert_of(0, 0.0), 3, 1), DomainError);
  const auto report = attack_check(f, TransformSpec::none(), small_config(0.5), x, cert_of(0, 0.3), 0, 1);
  EXPECT_EQ(report.probes, 0u);
  EXPECT_EQ(report.violations, 0u);
}
