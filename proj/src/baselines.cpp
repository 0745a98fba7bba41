#include "quan/baselines.hpp"

namespace quan {

template <typename T>
SmlpModel<T>::SmlpModel(const ModelConfig& cfg) : Classifier<T>(cfg) {
  if (cfg.architecture != Architecture::smlp) throw ConfigError("SmlpModel requires architecture smlp");
  auto& store = this->params_;
  frontend_ = add_frontend_weights(store, cfg);
  std::size_t width = cfg.frontend_width();
  for (std::size_t i = 0; i < cfg.smlp_decoder_widths.size(); ++i) {
    decoder_.push_back(add_dense_weights(store, "decoder." + std::to_string(i), width, cfg.smlp_decoder_widths[i]));
    width = cfg.smlp_decoder_widths[i];
  }
  decoder_.push_back(add_dense_weights(store, "decoder." + std::to_string(decoder_.size()), width, 1));
}

template <typename T>
Var SmlpModel<T>::logits(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) {
  const auto& cfg = this->config_;
  auto& store = this->params_;
  std::vector<std::vector<std::size_t>> orders;
  Tensor<T> x = this->prepare(batch, orders);
  if (opt.trace) {
    opt.trace->orders = orders;
    opt.trace->scores.clear();
  }
  Var h = frontend_forward(tape, store, frontend_, cfg, x, opt.train);
  for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) h = tape.sigmoid(dense(tape, store, decoder_[i], h));
  h = dense(tape, store, decoder_.back(), h);
  return tape.sum(tape.reshape(h, Shape{batch.size(), cfg.set_size}), 1);
}

template <typename T>
Var SmlpModel<T>::forward(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) {
  return tape.sigmoid(logits(tape, batch, opt));
}

template <typename T>
PabOnlyModel<T>::PabOnlyModel(const ModelConfig& cfg) : Classifier<T>(cfg) {
  if (cfg.architecture != Architecture::pab) throw ConfigError("PabOnlyModel requires architecture pab");
  auto& store = this->params_;
  frontend_ = add_frontend_weights(store, cfg);
  pooling_ = add_pooling_weights(store, "pab", cfg.frontend_width(), cfg.d_h);
  head_ = add_head_weights(store, "head", cfg.d_h);
}

template <typename T>
Var PabOnlyModel<T>::forward(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) {
  const auto& cfg = this->config_;
  auto& store = this->params_;
  std::vector<std::vector<std::size_t>> orders;
  Tensor<T> x = this->prepare(batch, orders);
  Var h = frontend_forward(tape, store, frontend_, cfg, x, opt.train);
  auto pooled = pab_forward(tape, store, pooling_, h, batch.size(), cfg.n_h);
  if (opt.trace) {
    opt.trace->orders = orders;
    opt.trace->scores.clear();
    const std::size_t heads = pooled.scores.dim(1), n = pooled.scores.dim(2);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor<double> t(Shape{heads, n});
      for (std::size_t i = 0; i < heads * n; ++i) t[i] = double(pooled.scores[s * heads * n + i]);
      opt.trace->scores.push_back(std::move(t));
    }
  }
  return decoder_head(tape, store, head_, pooled.pooled, cfg.residual_activation);
}

template class SmlpModel<float>;
template class SmlpModel<double>;
template class PabOnlyModel<float>;
template class PabOnlyModel<double>;

}  // namespace quan
