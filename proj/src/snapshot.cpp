#include "quan/snapshot.hpp"

#include <algorithm>
#include <numeric>

#include "quan/tensor.hpp"

namespace quan {

Snapshot::Snapshot(Grid g, std::vector<std::uint8_t> b) : grid(g), bits(std::move(b)) {
  if (bits.size() != grid.size())
    throw Error("snapshot has " + std::to_string(bits.size()) + " bits for a " + std::to_string(grid.rows) +
                "x" + std::to_string(grid.cols) + " grid");
  for (auto v : bits)
    if (v > 1) throw Error("snapshot entries must be 0 or 1");
}

std::size_t Snapshot::popcount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<std::size_t> canonical_order(const SnapshotSet& set) {
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return set[a] < set[b]; });
  return idx;
}

}  // namespace quan
