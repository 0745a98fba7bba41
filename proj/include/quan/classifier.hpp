#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "quan/autodiff.hpp"
#include "quan/blocks.hpp"
#include "quan/init.hpp"
#include "quan/model_config.hpp"
#include "quan/random.hpp"
#include "quan/snapshot.hpp"

namespace quan {

/// Per-set record of how the model read its input.
struct ForwardTrace {
  /// orders[s][j] is the index into set s of the j-th element fed to the model.
  std::vector<std::vector<std::size_t>> orders;
  /// Pooling attention scores per set, [heads, n] over the pooled elements;
  /// empty for models without a pooling block.
  std::vector<Tensor<double>> scores;
};

struct ForwardOptions {
  bool train = false;
  /// Source of fresh mini-set plans in training mode.
  Rng* plan_rng = nullptr;
  /// Explicit plans, one per MSSAB layer; overrides both modes when set.
  const std::vector<MiniSetPlan>* plans = nullptr;
  ForwardTrace* trace = nullptr;
};

/// A permutation-invariant binary classifier over snapshot sets.
template <typename T>
class Classifier {
 public:
  explicit Classifier(ModelConfig cfg);
  virtual ~Classifier() = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& parameters() { return params_; }
  const ParameterStore<T>& parameters() const { return params_; }

  /// Records the forward pass for a batch of sets and returns confidences [batch].
  virtual Var forward(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;

  /// Evaluation-mode confidences for each set.
  std::vector<T> predict(std::span<const SnapshotSet* const> batch, ForwardTrace* trace = nullptr);
  T predict(const SnapshotSet& set, ForwardTrace* trace = nullptr);

  void initialize(InitScheme scheme, std::uint64_t seed) { initialize_parameters(params_, scheme, seed); }

 protected:
  /// Canonical orders of each set and the stacked front-end input.
  Tensor<T> prepare(std::span<const SnapshotSet* const> batch, std::vector<std::vector<std::size_t>>& orders) const;

  ModelConfig config_;
  ParameterStore<T> params_;
};

/// Builds the architecture named in `cfg` with its parameters created but
/// not initialised.
template <typename T>
std::unique_ptr<Classifier<T>> make_classifier(const ModelConfig& cfg);

extern template class Classifier<float>;
extern template class Classifier<double>;

}  // namespace quan
