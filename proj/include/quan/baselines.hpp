#pragma once

#include "quan/classifier.hpp"

namespace quan {

/// Set multilayer perceptron: per-element perceptrons, a sum over the set
/// and a final sigmoid. No attention.
template <typename T>
class SmlpModel : public Classifier<T> {
 public:
  explicit SmlpModel(const ModelConfig& cfg);

  Var forward(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) override;
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<SmlpModel>(*this); }

  /// Pre-sigmoid set logits [batch].
  Var logits(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt);

  const FrontendWeights& frontend() const { return frontend_; }
  const std::vector<DenseWeights>& decoder() const { return decoder_; }

 private:
  FrontendWeights frontend_;
  std::vector<DenseWeights> decoder_;  // sigmoid hidden layers, then a linear map to one unit
};

/// Per-element perceptron encoder followed by the pooling attention decoder.
template <typename T>
class PabOnlyModel : public Classifier<T> {
 public:
  explicit PabOnlyModel(const ModelConfig& cfg);

  Var forward(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) override;
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<PabOnlyModel>(*this); }

  const FrontendWeights& frontend() const { return frontend_; }
  const PoolingWeights& pooling() const { return pooling_; }
  const HeadWeights& head() const { return head_; }

 private:
  FrontendWeights frontend_;
  PoolingWeights pooling_;
  HeadWeights head_;
};

extern template class SmlpModel<float>;
extern template class SmlpModel<double>;
extern template class PabOnlyModel<float>;
extern template class PabOnlyModel<double>;

}  // namespace quan
