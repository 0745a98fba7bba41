#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quan/autodiff.hpp"
#include "quan/model_config.hpp"
#include "quan/random.hpp"
#include "quan/snapshot.hpp"

// Building blocks shared by QuAN and the baselines. Every block takes a batch
// of `sets` equally sized sets stacked set-major along the row axis, so a
// tensor [sets * n, d] holds element j of set s in row s * n + j.

namespace quan {

template <typename T>
Var activate(Tape<T>& tape, Var x, Activation act);

/// y = x W^T + b for W [out, in] and b [out].
struct DenseWeights {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

template <typename T>
DenseWeights add_dense_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                               std::size_t out);
template <typename T>
Var dense(Tape<T>& tape, ParameterStore<T>& store, const DenseWeights& w, Var x);

// ---------------------------------------------------------------- front end

struct FrontendWeights {
  bool conv = false;
  std::size_t filters = 0;  // [n_c, kernel * kernel]
  std::size_t bn_gamma = 0, bn_beta = 0, bn_mean = 0, bn_var = 0;
  std::vector<DenseWeights> mlp;
};

template <typename T>
FrontendWeights add_frontend_weights(ParameterStore<T>& store, const ModelConfig& cfg);

/// Stacks the sets of a batch into [sets * N, N_r * N_c] with 0/1 entries,
/// reading set s in the order orders[s].
template <typename T>
Tensor<T> encode_sets(std::span<const SnapshotSet* const> batch, const std::vector<std::vector<std::size_t>>& orders,
                      const ModelConfig& cfg);

/// Convolution (stride 1, no padding, no bias) and batch normalisation per
/// channel over all batch, set and spatial positions. Output [rows, d_x] is
/// flattened channel-major, then row, then column.
template <typename T>
Var conv_forward(Tape<T>& tape, ParameterStore<T>& store, const FrontendWeights& w, const ModelConfig& cfg,
                 const Tensor<T>& encoded, bool train);

/// Convolution when configured, then the sigmoid perceptron stack.
template <typename T>
Var frontend_forward(Tape<T>& tape, ParameterStore<T>& store, const FrontendWeights& w, const ModelConfig& cfg,
                     const Tensor<T>& encoded, bool train);

// ---------------------------------------------------------------- attention

/// Q, K, V [d_h, d_in], O [d_h, d_h] and two layer norms.
struct AttentionWeights {
  std::size_t query = 0, key = 0, value = 0, out = 0;
  std::size_t norm1_gain = 0, norm1_bias = 0, norm2_gain = 0, norm2_bias = 0;
};

template <typename T>
AttentionWeights add_attention_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_in,
                                       std::size_t d_h);

/// Cross attention of `query` [sets * nq, d_in] on `key` [sets * nk, d_in]:
///   h  = Q q + softmax(Q q . K k / sqrt(dk)) V k   (per head, concatenated)
///   h1 = LayerNorm(h)
///   y  = Sigmoid(LayerNorm(h1 + act(O h1)))
/// With query == key this is the self-attention block.
template <typename T>
Var attention_block(Tape<T>& tape, ParameterStore<T>& store, const AttentionWeights& w, Var query, Var key,
                    std::size_t sets, std::size_t heads, Activation act, Tensor<T>* probs = nullptr);

template <typename T>
Var sab_forward(Tape<T>& tape, ParameterStore<T>& store, const AttentionWeights& w, Var x, std::size_t sets,
                std::size_t heads, Activation act) {
  return attention_block(tape, store, w, x, x, sets, heads, act);
}

// ---------------------------------------------------------------- mini-sets

/// Shuffle and partition of one set into n_s contiguous mini-sets, plus the
/// order in which the reducing stage folds them.
struct MiniSetPlan {
  std::size_t n = 0;
  std::size_t n_s = 1;
  std::vector<std::size_t> order;  // position k of the shuffled set reads element order[k]
  std::vector<std::size_t> sigma;  // reduction order over mini-set labels

  std::size_t mini_size() const { return n / n_s; }
  /// Throws unless order and sigma are bijections and n_s divides n.
  void validate() const;
};

MiniSetPlan identity_plan(std::size_t n, std::size_t n_s);
/// Fresh shuffle and reduction order drawn from `rng`.
MiniSetPlan random_plan(std::size_t n, std::size_t n_s, Rng& rng);
/// Seeded shuffle with identity reduction order; used in evaluation mode.
MiniSetPlan fixed_plan(std::size_t n, std::size_t n_s, std::uint64_t seed);

struct MssabWeights {
  AttentionWeights sab;
  AttentionWeights mab;  // shared by the recurrent and reducing stages
};

template <typename T>
MssabWeights add_mssab_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_in,
                               std::size_t d_h, std::size_t n_s);

/// One MSSAB layer: x [sets * n, d_in] -> [sets * n / n_s, d_h].
/// For n_s == 1 this is exactly sab_forward on the whole set.
template <typename T>
Var mssab_forward(Tape<T>& tape, ParameterStore<T>& store, const MssabWeights& w, Var x, std::size_t sets,
                  const MiniSetPlan& plan, std::size_t heads, Activation act);

// ---------------------------------------------------------------- decoder

/// Seed S [1, d_h] and projections K'', V'' [d_h, d_in].
struct PoolingWeights {
  std::size_t seed = 0, key = 0, value = 0;
};

template <typename T>
PoolingWeights add_pooling_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_in,
                                   std::size_t d_h);

template <typename T>
struct PoolingOutput {
  Var pooled;        // [sets, d_h]
  Tensor<T> scores;  // [sets, heads, n]
};

/// pooled = S + sum_b softmax_b(S . K'' z_b / sqrt(dk)) V'' z_b per head.
template <typename T>
PoolingOutput<T> pab_forward(Tape<T>& tape, ParameterStore<T>& store, const PoolingWeights& w, Var z,
                             std::size_t sets, std::size_t heads);

/// Layer norms, residual feed-forward O'' [d_h, d_h] and the readout W [1, d_h], b [1].
struct HeadWeights {
  std::size_t norm1_gain = 0, norm1_bias = 0, out = 0, norm2_gain = 0, norm2_bias = 0;
  DenseWeights readout;
};

template <typename T>
HeadWeights add_head_weights(ParameterStore<T>& store, const std::string& prefix, std::size_t d_h);

/// y = Sigmoid(W LayerNorm(p1 + act(O'' p1)) + b) with p1 = LayerNorm(p); returns [sets].
template <typename T>
Var decoder_head(Tape<T>& tape, ParameterStore<T>& store, const HeadWeights& w, Var pooled, Activation act);

// ---------------------------------------------------------------- moments

/// Highest inter-snapshot moment reachable with L MSSAB layers: (2 N_s^2)^L.
std::uint64_t moment_order(std::uint64_t n_s, std::uint64_t layers);
/// Smallest L with (2 N_s^2)^L >= theta.
std::uint64_t layers_required(std::uint64_t theta, std::uint64_t n_s);

}  // namespace quan
