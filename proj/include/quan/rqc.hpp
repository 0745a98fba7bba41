#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "quan/snapshot.hpp"

// State-vector simulator for random circuits on a rows x cols qubit grid.
// Qubit q = r * cols + c is bit q of the basis index, and snapshot bit q.

namespace quan {

using Amplitude = std::complex<double>;
using StateVector = std::vector<Amplitude>;

/// Largest supported qubit count (2^24 amplitudes).
inline constexpr std::size_t kMaxQubits = 24;

struct RqcParams {
  std::size_t rows = 3, cols = 4;
  std::size_t depth = 0;
  std::uint64_t circuit_seed = 0;
  double theta = 0.5 * std::numbers::pi;
  double phi = 0.1 * std::numbers::pi;

  void validate() const;
  std::size_t qubits() const { return rows * cols; }
};

/// Single-qubit gates (I -/+ iU)/sqrt(2) for U in {X, Y, W, V}, with
/// W = (X + Y)/sqrt(2) and V = (X - Y)/sqrt(2); index 2u is the + root of U
/// and 2u + 1 its inverse.
using Gate1 = std::array<Amplitude, 4>;
Gate1 single_qubit_gate(std::size_t index);
inline constexpr std::size_t kSingleQubitGates = 8;

/// Two-qubit coupler pattern. A and B are horizontal edges with even and odd
/// left column, C and D vertical edges with even and odd top row. Cycle k
/// uses colour "ABCDCDAB"[k % 8].
std::vector<std::pair<std::size_t, std::size_t>> coupler_layer(std::size_t rows, std::size_t cols, char colour);

void apply_single_qubit(StateVector& psi, std::size_t qubit, const Gate1& u);
/// fSim(theta, phi): [[cos, -i sin], [-i sin, cos]] on {01, 10}, e^{-i phi} on |11>.
void apply_fsim(StateVector& psi, std::size_t a, std::size_t b, double theta, double phi);

/// |0...0> evolved through `depth` cycles of random single-qubit gates (never
/// repeating a qubit's previous gate) followed by a coupler layer.
StateVector rqc_simulate(const RqcParams& params);

/// I.i.d. Born-rule samples via the cumulative distribution.
std::vector<Snapshot> rqc_sample_bitstrings(const StateVector& psi, Grid grid, std::size_t count, std::uint64_t seed);

double state_norm(const StateVector& psi);

}  // namespace quan
