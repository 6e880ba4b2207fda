#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace trapwatch::dataset {

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

/// Bucket sizes for n items: largest-remainder apportionment, ties to train.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Shuffles with std::mt19937_64(seed) and a Fisher-Yates pass whose bounded
/// draws use rejection sampling, so results are identical on every platform,
/// then slices train/val/test in that order.
///
/// Errors: empty_dataset, invalid_argument (duplicate ids, bad ratios).
DatasetSplit split_dataset(std::vector<std::string> ids, const SplitRatios& ratios,
                           std::uint64_t seed);

}  // namespace trapwatch::dataset
