#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "quan/random.hpp"
#include "quan/snapshot.hpp"

// Toric code on an L_v x L_h periodic lattice of vertices. Qubits sit on
// edges: horizontal edge h(r, c) joins (r, c)-(r, c+1) and vertical edge
// v(r, c) joins (r, c)-(r+1, c). An edge snapshot is a 2 L_v x L_h grid whose
// first L_v rows hold h(r, c) and last L_v rows hold v(r, c).

namespace quan {

struct ToricParams {
  std::size_t lv = 12, lh = 12;
  double p_flip = 0;
  std::size_t window_rows = 6, window_cols = 6;
  std::size_t samples = 1000;  // torus samples; each yields (lv/wr)(lh/wc) windows
  std::uint64_t seed = 0;

  void validate() const;
};

/// Uniform samples of the closed-loop group: each star flipped with probability 1/2.
std::vector<Snapshot> sample_toric_ground(std::size_t lv, std::size_t lh, std::size_t count, Rng& rng);

/// Flips every bit independently with probability p_flip.
std::vector<Snapshot> apply_bitflip_channel(const std::vector<Snapshot>& snapshots, double p_flip, std::uint64_t seed);

/// Plaquette (r, c) holds the parity of h(r,c), h(r+1,c), v(r,c), v(r,c+1);
/// 1 encodes the eigenvalue -1. Output grid is L_v x L_h.
Snapshot plaquette_transform(const Snapshot& edges);

/// Non-overlapping w_r x w_c tiles in row-major order.
std::vector<Snapshot> window_slices(const Snapshot& grid, std::size_t wr, std::size_t wc);

/// Ground samples, bit-flip noise, plaquette transform and windowing.
std::vector<Snapshot> toric_window_snapshots(const ToricParams& params);

/// Mean over placements of the product (as +-1) of all plaquettes inside
/// axis-aligned L x L squares of one snapshot; the loop perimeter is 4L.
double closed_loop_expectation(const Snapshot& plaquettes, std::size_t side);

}  // namespace quan
