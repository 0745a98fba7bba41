#include "quan/rqc.hpp"

#include <algorithm>
#include <cmath>

#include "quan/random.hpp"
#include "quan/tensor.hpp"

namespace quan {

void RqcParams::validate() const {
  if (rows == 0 || cols == 0) throw ConfigError("rqc: grid extents must be positive");
  if (qubits() > kMaxQubits)
    throw ConfigError("rqc: " + std::to_string(qubits()) + " qubits exceed the state-vector cap of " +
                      std::to_string(kMaxQubits));
}

Gate1 single_qubit_gate(std::size_t index) {
  if (index >= kSingleQubitGates) throw Error("single-qubit gate index out of range");
  const double h = 1.0 / std::sqrt(2.0);
  // Pauli-like generator U = [[0, u01], [u10, 0]].
  Amplitude u01, u10;
  switch (index / 2) {
    case 0: u01 = 1; u10 = 1; break;                                                   // X
    case 1: u01 = Amplitude(0, -1); u10 = Amplitude(0, 1); break;                      // Y
    case 2: u01 = Amplitude(h, -h); u10 = Amplitude(h, h); break;                      // W
    default: u01 = Amplitude(h, h); u10 = Amplitude(h, -h); break;                     // V
  }
  const Amplitude s = index % 2 == 0 ? Amplitude(0, -1) : Amplitude(0, 1);
  return {Amplitude(h, 0), s * u01 * h, s * u10 * h, Amplitude(h, 0)};
}

std::vector<std::pair<std::size_t, std::size_t>> coupler_layer(std::size_t rows, std::size_t cols, char colour) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  switch (colour) {
    case 'A':
    case 'B':
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = (colour == 'A' ? 0 : 1); c + 1 < cols; c += 2) pairs.emplace_back(r * cols + c, r * cols + c + 1);
      break;
    case 'C':
    case 'D':
      for (std::size_t r = (colour == 'C' ? 0 : 1); r + 1 < rows; r += 2)
        for (std::size_t c = 0; c < cols; ++c) pairs.emplace_back(r * cols + c, (r + 1) * cols + c);
      break;
    default: throw Error(std::string("unknown coupler colour ") + colour);
  }
  return pairs;
}

void apply_single_qubit(StateVector& psi, std::size_t qubit, const Gate1& u) {
  const std::size_t bit = std::size_t{1} << qubit;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (i & bit) continue;
    const Amplitude a0 = psi[i], a1 = psi[i | bit];
    psi[i] = u[0] * a0 + u[1] * a1;
    psi[i | bit] = u[2] * a0 + u[3] * a1;
  }
}

void apply_fsim(StateVector& psi, std::size_t a, std::size_t b, double theta, double phi) {
  const std::size_t ba = std::size_t{1} << a, bb = std::size_t{1} << b;
  const double c = std::cos(theta);
  const Amplitude mis(0, -std::sin(theta));
  const Amplitude phase = std::exp(Amplitude(0, -phi));
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if ((i & ba) || (i & bb)) continue;
    const std::size_t i01 = i | ba, i10 = i | bb, i11 = i | ba | bb;
    const Amplitude x = psi[i01], y = psi[i10];
    psi[i01] = c * x + mis * y;
    psi[i10] = mis * x + c * y;
    psi[i11] *= phase;
  }
}

StateVector rqc_simulate(const RqcParams& params) {
  params.validate();
  const std::size_t n = params.qubits();
  StateVector psi(std::size_t{1} << n, Amplitude(0, 0));
  psi[0] = 1;
  Rng rng(params.circuit_seed);
  static constexpr char kPattern[] = "ABCDCDAB";
  std::vector<std::size_t> previous(n, kSingleQubitGates);
  for (std::size_t cycle = 0; cycle < params.depth; ++cycle) {
    for (std::size_t q = 0; q < n; ++q) {
      std::size_t g;
      if (previous[q] == kSingleQubitGates) {
        g = uniform_index(rng, kSingleQubitGates);
      } else {
        g = uniform_index(rng, kSingleQubitGates - 1);
        if (g >= previous[q]) ++g;
      }
      previous[q] = g;
      apply_single_qubit(psi, q, single_qubit_gate(g));
    }
    for (auto [a, b] : coupler_layer(params.rows, params.cols, kPattern[cycle % 8]))
      apply_fsim(psi, a, b, params.theta, params.phi);
  }
  return psi;
}

double state_norm(const StateVector& psi) {
  double s = 0;
  for (const auto& a : psi) s += std::norm(a);
  return std::sqrt(s);
}

std::vector<Snapshot> rqc_sample_bitstrings(const StateVector& psi, Grid grid, std::size_t count, std::uint64_t seed) {
  if (psi.size() != (std::size_t{1} << grid.size()))
    throw ConfigError("state vector length does not match a " + std::to_string(grid.size()) + "-qubit grid");
  std::vector<double> cdf(psi.size());
  double acc = 0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    acc += std::norm(psi[i]);
    cdf[i] = acc;
  }
  if (std::abs(acc - 1.0) > 1e-8) throw ConfigError("state is not normalised (norm^2 = " + std::to_string(acc) + ")");
  Rng rng(seed);
  std::vector<Snapshot> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = uniform01(rng) * acc;
    std::size_t idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    idx = std::min(idx, psi.size() - 1);
    std::vector<std::uint8_t> bits(grid.size());
    for (std::size_t q = 0; q < bits.size(); ++q) bits[q] = (idx >> q) & 1u;
    out.emplace_back(grid, std::move(bits));
  }
  return out;
}

}  // namespace quan
