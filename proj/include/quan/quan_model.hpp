#pragma once

#include "quan/classifier.hpp"

namespace quan {

/// Front end, L MSSAB layers, pooling attention and the decoder head.
template <typename T>
class QuanModel : public Classifier<T> {
 public:
  explicit QuanModel(const ModelConfig& cfg);

  Var forward(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) override;
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<QuanModel>(*this); }

  /// Plans used in evaluation mode, one per layer.
  std::vector<MiniSetPlan> eval_plans() const;

  const FrontendWeights& frontend() const { return frontend_; }
  const std::vector<MssabWeights>& layers() const { return layers_; }
  const PoolingWeights& pooling() const { return pooling_; }
  const HeadWeights& head() const { return head_; }

 private:
  FrontendWeights frontend_;
  std::vector<MssabWeights> layers_;
  PoolingWeights pooling_;
  HeadWeights head_;
};

extern template class QuanModel<float>;
extern template class QuanModel<double>;

}  // namespace quan
