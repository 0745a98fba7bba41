#include "quan/blocks.hpp"

#include <algorithm>
#include <numeric>

namespace quan {

template <typename T>
Var activate(Tape<T>& tape, Var x, Activation act) {
  return act == Activation::relu ? tape.relu(x) : tape.sigmoid(x);
}

template <typename T>
DenseWeights add_dense_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                               std::size_t out) {
  DenseWeights w;
  w.weight = store.add(prefix + ".weight", Shape{out, in});
  w.bias = store.add(prefix + ".bias", Shape{out});
  return w;
}

template <typename T>
Var dense(Tape<T>& tape, ParameterStore<T>& store, const DenseWeights& w, Var x) {
  return tape.linear(x, tape.parameter(store[w.weight]), tape.parameter(store[w.bias]));
}

// ---------------------------------------------------------------- front end

template <typename T>
FrontendWeights add_frontend_weights(ParameterStore<T>& store, const ModelConfig& cfg) {
  FrontendWeights w;
  w.conv = cfg.use_conv;
  std::size_t width = cfg.n_qubits();
  if (cfg.use_conv) {
    w.filters = store.add("conv.filters", Shape{cfg.n_c, cfg.kernel * cfg.kernel});
    w.bn_gamma = store.add("conv.bn.gamma", Shape{cfg.n_c}, true, T(1));
    w.bn_beta = store.add("conv.bn.beta", Shape{cfg.n_c});
    w.bn_mean = store.add("conv.bn.running_mean", Shape{cfg.n_c}, false, T(0));
    w.bn_var = store.add("conv.bn.running_var", Shape{cfg.n_c}, false, T(1));
    width = cfg.conv_width();
  }
  for (std::size_t i = 0; i < cfg.mlp_widths.size(); ++i) {
    w.mlp.push_back(add_dense_weights(store, "mlp." + std::to_string(i), width, cfg.mlp_widths[i]));
    width = cfg.mlp_widths[i];
  }
  return w;
}

template <typename T>
Tensor<T> encode_sets(std::span<const SnapshotSet* const> batch, const std::vector<std::vector<std::size_t>>& orders,
                      const ModelConfig& cfg) {
  if (batch.empty()) throw Error("empty batch");
  const std::size_t n = cfg.set_size, q = cfg.n_qubits();
  const Grid grid{cfg.grid_rows, cfg.grid_cols};
  Tensor<T> x(Shape{batch.size() * n, q});
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const SnapshotSet& set = *batch[s];
    if (set.size() != n)
      throw ConfigError("set " + std::to_string(s) + " holds " + std::to_string(set.size()) +
                        " snapshots but the model expects " + std::to_string(n));
    for (std::size_t j = 0; j < n; ++j) {
      const Snapshot& snap = set[orders[s][j]];
      if (!(snap.grid == grid))
        throw ConfigError("snapshot geometry " + std::to_string(snap.grid.rows) + "x" +
                          std::to_string(snap.grid.cols) + " does not match the model grid " +
                          std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
      for (std::size_t b = 0; b < q; ++b) x[(s * n + j) * q + b] = T(snap.bits[b]);
    }
  }
  return x;
}

template <typename T>
Var conv_forward(Tape<T>& tape, ParameterStore<T>& store, const FrontendWeights& w, const ModelConfig& cfg,
                 const Tensor<T>& encoded, bool train) {
  const std::size_t k = cfg.kernel, R = cfg.grid_rows, C = cfg.grid_cols;
  if (k == 0 || k > std::min(R, C))
    throw ConfigError("kernel " + std::to_string(k) + " does not fit a " + std::to_string(R) + "x" +
                      std::to_string(C) + " grid");
  const std::size_t Ro = R - k + 1, Co = C - k + 1, P = Ro * Co, rows = encoded.rows();
  Tensor<T> patches(Shape{rows * P, k * k});
  for (std::size_t s = 0; s < rows; ++s) {
    const T* src = encoded.data() + s * R * C;
    for (std::size_t i = 0; i < Ro; ++i)
      for (std::size_t j = 0; j < Co; ++j) {
        T* dst = patches.data() + ((s * P) + i * Co + j) * k * k;
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) dst[a * k + b] = src[(i + a) * C + (j + b)];
      }
  }
  Var feat = tape.matmul(tape.constant(std::move(patches)), tape.parameter(store[w.filters]), false, true);
  feat = tape.batch_norm(feat, tape.parameter(store[w.bn_gamma]), tape.parameter(store[w.bn_beta]),
                         store[w.bn_mean], store[w.bn_var], train);
  const std::size_t nc = cfg.n_c;
  std::vector<std::size_t> index(rows * nc * P);
  for (std::size_t s = 0; s < rows; ++s)
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t p = 0; p < P; ++p) index[(s * nc + c) * P + p] = (s * P + p) * nc + c;
  return tape.gather(feat, std::move(index), Shape{rows, nc * P});
}

template <typename T>
Var frontend_forward(Tape<T>& tape, ParameterStore<T>& store, const FrontendWeights& w, const ModelConfig& cfg,
                     const Tensor<T>& encoded, bool train) {
  Var h = w.conv ? conv_forward(tape, store, w, cfg, encoded, train) : tape.constant(encoded);
  for (const auto& layer : w.mlp) h = tape.sigmoid(dense(tape, store, layer, h));
  return h;
}

// ---------------------------------------------------------------- attention

template <typename T>
AttentionWeights add_attention_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_in,
                                       std::size_t d_h) {
  AttentionWeights w;
  w.query = store.add(prefix + ".query", Shape{d_h, d_in});
  w.key = store.add(prefix + ".key", Shape{d_h, d_in});
  w.value = store.add(prefix + ".value", Shape{d_h, d_in});
  w.out = store.add(prefix + ".out", Shape{d_h, d_h});
  w.norm1_gain = store.add(prefix + ".norm1.gain", Shape{d_h}, true, T(1));
  w.norm1_bias = store.add(prefix + ".norm1.bias", Shape{d_h});
  w.norm2_gain = store.add(prefix + ".norm2.gain", Shape{d_h}, true, T(1));
  w.norm2_bias = store.add(prefix + ".norm2.bias", Shape{d_h});
  return w;
}

template <typename T>
Var attention_block(Tape<T>& tape, ParameterStore<T>& store, const AttentionWeights& w, Var query, Var key,
                    std::size_t sets, std::size_t heads, Activation act, Tensor<T>* probs) {
  const std::size_t d_in = store[w.query].value.dim(1);
  if (tape.value(query).cols() != d_in || tape.value(key).cols() != d_in)
    throw Error("attention block expects width " + std::to_string(d_in) + ", got query " +
                shape_string(tape.shape(query)) + " and key " + shape_string(tape.shape(key)));
  auto P = [&](std::size_t i) { return tape.parameter(store[i]); };
  Var q = tape.linear(query, P(w.query));
  Var k = tape.linear(key, P(w.key));
  Var v = tape.linear(key, P(w.value));
  Var h = tape.add(q, tape.attention(q, k, v, sets, heads, probs));
  Var h1 = tape.layer_norm(h, P(w.norm1_gain), P(w.norm1_bias));
  Var ff = activate(tape, tape.linear(h1, P(w.out)), act);
  return tape.sigmoid(tape.layer_norm(tape.add(h1, ff), P(w.norm2_gain), P(w.norm2_bias)));
}

// ---------------------------------------------------------------- mini-sets

void MiniSetPlan::validate() const {
  if (n_s == 0 || n % n_s != 0)
    throw ConfigError("set of " + std::to_string(n) + " elements cannot split into " + std::to_string(n_s) +
                      " mini-sets");
  auto is_perm = [](const std::vector<std::size_t>& v, std::size_t size) {
    if (v.size() != size) return false;
    std::vector<char> seen(size, 0);
    for (auto i : v) {
      if (i >= size || seen[i]) return false;
      seen[i] = 1;
    }
    return true;
  };
  if (!is_perm(order, n)) throw Error("mini-set plan shuffle is not a permutation");
  if (!is_perm(sigma, n_s)) throw Error("mini-set plan reduction order is not a permutation");
}

MiniSetPlan identity_plan(std::size_t n, std::size_t n_s) {
  MiniSetPlan p{n, n_s, std::vector<std::size_t>(n), std::vector<std::size_t>(n_s)};
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  std::iota(p.sigma.begin(), p.sigma.end(), std::size_t{0});
  p.validate();
  return p;
}

MiniSetPlan random_plan(std::size_t n, std::size_t n_s, Rng& rng) {
  MiniSetPlan p = identity_plan(n, n_s);
  if (n_s == 1) return p;
  shuffle_in_place(std::span<std::size_t>(p.order), rng);
  shuffle_in_place(std::span<std::size_t>(p.sigma), rng);
  return p;
}

MiniSetPlan fixed_plan(std::size_t n, std::size_t n_s, std::uint64_t seed) {
  MiniSetPlan p = identity_plan(n, n_s);
  if (n_s == 1) return p;
  Rng rng(seed);
  shuffle_in_place(std::span<std::size_t>(p.order), rng);
  return p;
}

template <typename T>
MssabWeights add_mssab_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_in,
                               std::size_t d_h, std::size_t n_s) {
  MssabWeights w;
  w.sab = add_attention_weights(store, prefix + ".sab", d_in, d_h);
  if (n_s > 1) w.mab = add_attention_weights(store, prefix + ".mab", d_h, d_h);
  return w;
}

template <typename T>
Var mssab_forward(Tape<T>& tape, ParameterStore<T>& store, const MssabWeights& w, Var x, std::size_t sets,
                  const MiniSetPlan& plan, std::size_t heads, Activation act) {
  plan.validate();
  const std::size_t n = plan.n, ns = plan.n_s, ms = plan.mini_size();
  if (tape.value(x).rows() != sets * n)
    throw Error("mssab: input has " + std::to_string(tape.value(x).rows()) + " rows, plan expects " +
                std::to_string(sets) + " sets of " + std::to_string(n));
  if (ns == 1) return sab_forward(tape, store, w.sab, x, sets, heads, act);

  // Mini-sets stacked as (mini-set m, set s, element j).
  std::vector<std::size_t> index(sets * n);
  for (std::size_t m = 0; m < ns; ++m)
    for (std::size_t s = 0; s < sets; ++s)
      for (std::size_t j = 0; j < ms; ++j) index[(m * sets + s) * ms + j] = s * n + plan.order[m * ms + j];
  Var y = sab_forward(tape, store, w.sab, tape.gather_rows(x, index), sets * ns, heads, act);

  // Recurrent stage: mini-set m attends in turn to m+1, m+2, ... (mod n_s).
  Var h = y;
  const std::size_t block = sets * ms;
  for (std::size_t t = 0; t + 1 < ns; ++t) {
    std::vector<std::size_t> rot(sets * n);
    for (std::size_t m = 0; m < ns; ++m)
      for (std::size_t r = 0; r < block; ++r) rot[m * block + r] = ((m + t + 1) % ns) * block + r;
    h = attention_block(tape, store, w.mab, tape.gather_rows(y, rot), h, sets * ns, heads, act);
  }

  // Reducing stage: fold the mini-sets in the order sigma with the same block.
  auto mini = [&](std::size_t m) {
    std::vector<std::size_t> rows(block);
    std::iota(rows.begin(), rows.end(), m * block);
    return tape.gather_rows(h, rows);
  };
  Var z = mini(plan.sigma[0]);
  for (std::size_t t = 0; t + 1 < ns; ++t)
    z = attention_block(tape, store, w.mab, mini(plan.sigma[t + 1]), z, sets, heads, act);
  return z;
}

// ---------------------------------------------------------------- decoder

template <typename T>
PoolingWeights add_pooling_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_in,
                                   std::size_t d_h) {
  PoolingWeights w;
  w.seed = store.add(prefix + ".seed", Shape{1, d_h});
  w.key = store.add(prefix + ".key", Shape{d_h, d_in});
  w.value = store.add(prefix + ".value", Shape{d_h, d_in});
  return w;
}

template <typename T>
PoolingOutput<T> pab_forward(Tape<T>& tape, ParameterStore<T>& store, const PoolingWeights& w, Var z,
                             std::size_t sets, std::size_t heads) {
  const std::size_t rows = tape.value(z).rows();
  if (sets == 0 || rows % sets != 0)
    throw Error("pab: " + std::to_string(rows) + " rows do not split into " + std::to_string(sets) + " sets");
  const std::size_t n = rows / sets;
  Var seed = tape.parameter(store[w.seed]);
  Var q = tape.gather_rows(seed, std::vector<std::size_t>(sets, 0));
  Var k = tape.linear(z, tape.parameter(store[w.key]));
  Var v = tape.linear(z, tape.parameter(store[w.value]));
  Tensor<T> probs;
  Var att = tape.attention(q, k, v, sets, heads, &probs);
  PoolingOutput<T> out;
  out.pooled = tape.add(q, att);
  out.scores = probs.reshaped(Shape{sets, heads, n});
  return out;
}

template <typename T>
HeadWeights add_head_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_h) {
  HeadWeights w;
  w.norm1_gain = store.add(prefix + ".norm1.gain", Shape{d_h}, true, T(1));
  w.norm1_bias = store.add(prefix + ".norm1.bias", Shape{d_h});
  w.out = store.add(prefix + ".out", Shape{d_h, d_h});
  w.norm2_gain = store.add(prefix + ".norm2.gain", Shape{d_h}, true, T(1));
  w.norm2_bias = store.add(prefix + ".norm2.bias", Shape{d_h});
  w.readout = add_dense_weights(store, prefix + ".readout", d_h, 1);
  return w;
}

template <typename T>
Var decoder_head(Tape<T>& tape, ParameterStore<T>& store, const HeadWeights& w, Var pooled, Activation act) {
  auto P = [&](std::size_t i) { return tape.parameter(store[i]); };
  Var p1 = tape.layer_norm(pooled, P(w.norm1_gain), P(w.norm1_bias));
  Var ff = activate(tape, tape.linear(p1, P(w.out)), act);
  Var p2 = tape.layer_norm(tape.add(p1, ff), P(w.norm2_gain), P(w.norm2_bias));
  Var y = tape.sigmoid(dense(tape, store, w.readout, p2));
  return tape.reshape(y, Shape{tape.value(y).rows()});
}

// ---------------------------------------------------------------- moments

std::uint64_t moment_order(std::uint64_t n_s, std::uint64_t layers) {
  if (n_s == 0) throw ConfigError("moment_order: N_s must be at least 1");
  const std::uint64_t base = 2 * n_s * n_s;
  std::uint64_t r = 1;
  for (std::uint64_t l = 0; l < layers; ++l) {
    if (r > std::numeric_limits<std::uint64_t>::max() / base) throw Error("moment_order overflows 64 bits");
    r *= base;
  }
  return r;
}

std::uint64_t layers_required(std::uint64_t theta, std::uint64_t n_s) {
  if (theta == 0) throw ConfigError("layers_required: theta must be at least 1");
  if (n_s == 0) throw ConfigError("layers_required: N_s must be at least 1");
  const std::uint64_t base = 2 * n_s * n_s;
  std::uint64_t layers = 0, reach = 1;
  while (reach < theta) {
    reach = reach > theta / base ? theta : reach * base;
    ++layers;
  }
  return layers;
}

#define QUAN_INSTANTIATE(T)                                                                                     \
  template Var activate(Tape<T>&, Var, Activation);                                                            \
  template DenseWeights add_dense_weights(ParameterStore<T>&, const std::string&, std::size_t, std::size_t);  \
  template Var dense(Tape<T>&, ParameterStore<T>&, const DenseWeights&, Var);                                  \
  template FrontendWeights add_frontend_weights(ParameterStore<T>&, const ModelConfig&);                       \
  template Tensor<T> encode_sets(std::span<const SnapshotSet* const>,                                          \
                                 const std::vector<std::vector<std::size_t>>&, const ModelConfig&);            \
  template Var conv_forward(Tape<T>&, ParameterStore<T>&, const FrontendWeights&, const ModelConfig&,          \
                            const Tensor<T>&, bool);                                                           \
  template Var frontend_forward(Tape<T>&, ParameterStore<T>&, const FrontendWeights&, const ModelConfig&,      \
                                const Tensor<T>&, bool);                                                       \
  template AttentionWeights add_attention_weights(ParameterStore<T>&, const std::string&, std::size_t,         \
                                                  std::size_t);                                                \
  template Var attention_block(Tape<T>&, ParameterStore<T>&, const AttentionWeights&, Var, Var, std::size_t,   \
                               std::size_t, Activation, Tensor<T>*);                                           \
  template MssabWeights add_mssab_weights(ParameterStore<T>&, const std::string&, std::size_t, std::size_t,    \
                                          std::size_t);                                                        \
  template Var mssab_forward(Tape<T>&, ParameterStore<T>&, const MssabWeights&, Var, std::size_t,              \
                             const MiniSetPlan&, std::size_t, Activation);                                     \
  template PoolingWeights add_pooling_weights(ParameterStore<T>&, const std::string&, std::size_t,             \
                                              std::size_t);                                                    \
  template PoolingOutput<T> pab_forward(Tape<T>&, ParameterStore<T>&, const PoolingWeights&, Var, std::size_t, \
                                        std::size_t);                                                          \
  template HeadWeights add_head_weights(ParameterStore<T>&, const std::string&, std::size_t);                  \
  template Var decoder_head(Tape<T>&, ParameterStore<T>&, const HeadWeights&, Var, Activation);

QUAN_INSTANTIATE(float)
QUAN_INSTANTIATE(double)

}  // namespace quan
