#include "quan/toric.hpp"

#include "quan/tensor.hpp"

namespace quan {

void ToricParams::validate() const {
  if (lv == 0 || lh == 0) throw ConfigError("toric: torus extents must be positive");
  if (!(p_flip >= 0.0 && p_flip <= 0.5)) throw ConfigError("toric: p_flip must lie in [0, 0.5]");
  if (window_rows == 0 || window_cols == 0 || lv % window_rows != 0 || lh % window_cols != 0)
    throw ConfigError("toric: window " + std::to_string(window_rows) + "x" + std::to_string(window_cols) +
                      " does not tile the " + std::to_string(lv) + "x" + std::to_string(lh) + " plaquette grid");
}

std::vector<Snapshot> sample_toric_ground(std::size_t lv, std::size_t lh, std::size_t count, Rng& rng) {
  if (lv == 0 || lh == 0) throw ConfigError("toric: torus extents must be positive");
  const Grid g{2 * lv, lh};
  std::vector<Snapshot> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Snapshot s(g);
    for (std::size_t r = 0; r < lv; ++r)
      for (std::size_t c = 0; c < lh; ++c) {
        if (!bernoulli(rng, 0.5)) continue;
        s.at(r, c) ^= 1;
        s.at(r, (c + lh - 1) % lh) ^= 1;
        s.at(lv + r, c) ^= 1;
        s.at(lv + (r + lv - 1) % lv, c) ^= 1;
      }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Snapshot> apply_bitflip_channel(const std::vector<Snapshot>& snapshots, double p_flip, std::uint64_t seed) {
  if (!(p_flip >= 0.0 && p_flip <= 0.5)) throw ConfigError("bit-flip probability must lie in [0, 0.5]");
  std::vector<Snapshot> out = snapshots;
  if (p_flip == 0.0) return out;
  Rng rng(seed);
  for (auto& s : out)
    for (auto& b : s.bits)
      if (bernoulli(rng, p_flip)) b ^= 1;
  return out;
}

Snapshot plaquette_transform(const Snapshot& edges) {
  if (edges.grid.rows % 2 != 0 || edges.grid.rows == 0)
    throw ConfigError("plaquette transform expects a 2 L_v x L_h edge grid, got " + std::to_string(edges.grid.rows) +
                      "x" + std::to_string(edges.grid.cols));
  const std::size_t lv = edges.grid.rows / 2, lh = edges.grid.cols;
  Snapshot p(Grid{lv, lh});
  for (std::size_t r = 0; r < lv; ++r)
    for (std::size_t c = 0; c < lh; ++c)
      p.at(r, c) = edges.at(r, c) ^ edges.at((r + 1) % lv, c) ^ edges.at(lv + r, c) ^ edges.at(lv + r, (c + 1) % lh);
  return p;
}

std::vector<Snapshot> window_slices(const Snapshot& grid, std::size_t wr, std::size_t wc) {
  const std::size_t R = grid.grid.rows, C = grid.grid.cols;
  if (wr == 0 || wc == 0 || R % wr != 0 || C % wc != 0)
    throw ConfigError("window " + std::to_string(wr) + "x" + std::to_string(wc) + " does not tile a " +
                      std::to_string(R) + "x" + std::to_string(C) + " grid");
  std::vector<Snapshot> out;
  for (std::size_t br = 0; br < R / wr; ++br)
    for (std::size_t bc = 0; bc < C / wc; ++bc) {
      Snapshot w(Grid{wr, wc});
      for (std::size_t r = 0; r < wr; ++r)
        for (std::size_t c = 0; c < wc; ++c) w.at(r, c) = grid.at(br * wr + r, bc * wc + c);
      out.push_back(std::move(w));
    }
  return out;
}

std::vector<Snapshot> toric_window_snapshots(const ToricParams& params) {
  params.validate();
  Rng rng(derive_seed(params.seed, {0}));
  auto ground = sample_toric_ground(params.lv, params.lh, params.samples, rng);
  auto noisy = apply_bitflip_channel(ground, params.p_flip, derive_seed(params.seed, {1}));
  std::vector<Snapshot> out;
  out.reserve(params.samples * (params.lv / params.window_rows) * (params.lh / params.window_cols));
  for (const auto& s : noisy)
    for (auto& w : window_slices(plaquette_transform(s), params.window_rows, params.window_cols))
      out.push_back(std::move(w));
  return out;
}

double closed_loop_expectation(const Snapshot& plaquettes, std::size_t side) {
  const std::size_t R = plaquettes.grid.rows, C = plaquettes.grid.cols;
  if (side == 0 || side > R || side > C)
    throw ConfigError("loop side " + std::to_string(side) + " does not fit a " + std::to_string(R) + "x" +
                      std::to_string(C) + " window");
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r0 = 0; r0 + side <= R; ++r0)
    for (std::size_t c0 = 0; c0 + side <= C; ++c0) {
      unsigned parity = 0;
      for (std::size_t r = r0; r < r0 + side; ++r)
        for (std::size_t c = c0; c < c0 + side; ++c) parity ^= plaquettes.at(r, c);
      total += parity ? -1.0 : 1.0;
      ++count;
    }
  return total / double(count);
}

}  // namespace quan
