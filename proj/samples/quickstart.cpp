// Certify one blob image with plain and partition-averaged smoothing.

#include <iostream>

#include "pprs/pprs.hpp"

int main() {
  using namespace pprs;

  const auto train = make_blobs_dataset(400, 16, 16, 4, 4, /*seed=*/1);
  const auto f = nearest_centroid_train(train);
  const auto sample = generate_blobs(16, 16, 4, 4, /*seed=*/42);

  SmoothingConfig cfg = SmoothingConfig::small_preset(0.5);
  cfg.workers = 2;

  const auto rs = certify(f, sample.image, TransformSpec::none(), cfg, 7);
  const auto pp = certify(f, sample.image, TransformSpec::dynamic(SlicParams{16, 10.0, 10}), cfg, 7);

  std::cout << "label " << sample.label << "\n";
  std::cout << "rs:   " << to_json(rs).dump() << "\n";
  std::cout << "pprs: " << to_json(pp).dump() << "\n";

  Rng rng(3);
  const auto seg = grid_partition(16, 16, 4, 4);
  const auto noisy = add(sample.image, sample_gaussian_image(sample.image, 0.5, rng));
  std::cout << "noise norm before averaging " << l2_distance(noisy, sample.image) << ", after "
            << l2_distance(partition_average(noisy, seg), partition_average(sample.image, seg)) << "\n";
}
