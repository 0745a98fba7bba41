#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace quan {

struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// One binary measurement outcome laid out row-major on a grid.
struct Snapshot {
  Grid grid;
  std::vector<std::uint8_t> bits;

  Snapshot() = default;
  Snapshot(Grid g, std::vector<std::uint8_t> b);
  explicit Snapshot(Grid g) : grid(g), bits(g.size(), 0) {}

  std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * grid.cols + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return bits[r * grid.cols + c]; }
  std::size_t popcount() const;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
  friend bool operator<(const Snapshot& a, const Snapshot& b) { return a.bits < b.bits; }
};

/// Unordered collection of snapshots drawn from one state.
using SnapshotSet = std::vector<Snapshot>;

/// Indices of `set` sorted lexicographically by bit content. Models read a set
/// in this order, which fixes the summation order of every set-axis reduction.
std::vector<std::size_t> canonical_order(const SnapshotSet& set);

}  // namespace quan
