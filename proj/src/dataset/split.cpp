#include "trapwatch/dataset/split.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::dataset {
namespace {

// Unbiased draw in [0, bound) by rejecting the short final block of the
// 64-bit range.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  double sum = 0.0;
  for (double v : r) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(Errc::invalid_argument, "split ratios must be finite and non-negative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(Errc::invalid_argument, fmt::format("split ratios sum to {}, not 1", sum));
  }

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * r[i];
    // Absorb representation noise such as 0.1 * 30 = 3.0000000000000004.
    const double fl = std::floor(exact + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    remainder[i] = std::max(0.0, exact - fl);
    assigned += sizes[i];
  }
  // Largest remainder first; equal remainders favour the earlier bucket
  // (train, then val, then test).
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + 1e-12;
  });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
    ++sizes[order[k]];
    ++assigned;
  }
  return sizes;
}

DatasetSplit split_dataset(std::vector<std::string> ids, const SplitRatios& ratios,
                           std::uint64_t seed) {
  if (ids.empty()) throw Error(Errc::empty_dataset, "nothing to split");
  // Canonical order first, so the split depends on the id set and the seed
  // but not on directory listing order.
  std::sort(ids.begin(), ids.end());
  if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    throw Error(Errc::invalid_argument, fmt::format("duplicate id '{}'", *dup));
  }
  const auto sizes = split_sizes(ids.size(), ratios);

  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    auto j = static_cast<std::size_t>(bounded_draw(rng, i + 1));
    std::swap(ids[i], ids[j]);
  }

  DatasetSplit split;
  split.seed = seed;
  auto it = ids.begin();
  auto take = [&](std::vector<std::string>& dst, std::size_t count) {
    dst.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<long>(count)));
    it += static_cast<long>(count);
  };
  take(split.train, sizes[0]);
  take(split.val, sizes[1]);
  take(split.test, sizes[2]);
  return split;
}

}  // namespace trapwatch::dataset
