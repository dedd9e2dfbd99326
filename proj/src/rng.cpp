#include "narrshift/rng.hpp"

#include <numeric>
#include <stdexcept>

namespace narrshift {

AliasTable::AliasTable(std::span<const double> weights)
    : prob_(weights.size(), 0.0), alias_(weights.size(), 0) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(total > 0.0))
    throw std::invalid_argument("alias table needs positive total weight");
  const auto n = weights.size();
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = weights[i] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  // Process in index order so the table depends only on the weights.
  std::size_t si = 0, li = 0;
  while (si < small.size() && li < large.size()) {
    const auto s = small[si++];
    const auto l = large[li];
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      small.push_back(l);
      ++li;
    }
  }
  for (; li < large.size(); ++li) {
    prob_[large[li]] = 1.0;
    alias_[large[li]] = large[li];
  }
  // Rounding leftovers; zero-weight bins must stay unreachable.
  std::uint32_t positive = 0;
  while (!(weights[positive] > 0.0)) ++positive;
  for (; si < small.size(); ++si) {
    const auto s = small[si];
    prob_[s] = weights[s] > 0.0 ? 1.0 : 0.0;
    alias_[s] = weights[s] > 0.0 ? s : positive;
  }
}

}  // namespace narrshift
