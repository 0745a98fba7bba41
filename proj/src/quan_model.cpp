#include "quan/quan_model.hpp"

namespace quan {

namespace {

template <typename T>
void record_scores(ForwardTrace* trace, const Tensor<T>& scores) {
  if (!trace) return;
  const std::size_t sets = scores.dim(0), heads = scores.dim(1), n = scores.dim(2);
  trace->scores.clear();
  for (std::size_t s = 0; s < sets; ++s) {
    Tensor<double> t(Shape{heads, n});
    for (std::size_t i = 0; i < heads * n; ++i) t[i] = double(scores[s * heads * n + i]);
    trace->scores.push_back(std::move(t));
  }
}

}  // namespace

template <typename T>
QuanModel<T>::QuanModel(const ModelConfig& cfg) : Classifier<T>(cfg) {
  if (cfg.architecture != Architecture::quan) throw ConfigError("QuanModel requires architecture quan");
  auto& store = this->params_;
  frontend_ = add_frontend_weights(store, cfg);
  std::size_t width = cfg.frontend_width();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    layers_.push_back(add_mssab_weights(store, "mssab." + std::to_string(l), width, cfg.d_h, cfg.n_s));
    width = cfg.d_h;
  }
  pooling_ = add_pooling_weights(store, "pab", width, cfg.d_h);
  head_ = add_head_weights(store, "head", cfg.d_h);
}

template <typename T>
std::vector<MiniSetPlan> QuanModel<T>::eval_plans() const {
  const auto& cfg = this->config_;
  std::vector<MiniSetPlan> plans;
  std::size_t n = cfg.set_size;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    plans.push_back(fixed_plan(n, cfg.n_s, derive_seed(cfg.eval_plan_seed, {l})));
    n /= cfg.n_s;
  }
  return plans;
}

template <typename T>
Var QuanModel<T>::forward(Tape<T>& tape, std::span<const SnapshotSet* const> batch, const ForwardOptions& opt) {
  const auto& cfg = this->config_;
  auto& store = this->params_;
  std::vector<std::vector<std::size_t>> orders;
  Tensor<T> x = this->prepare(batch, orders);
  const std::size_t sets = batch.size();

  std::vector<MiniSetPlan> plans;
  if (opt.plans) {
    plans = *opt.plans;
    if (plans.size() != cfg.layers)
      throw ConfigError("expected " + std::to_string(cfg.layers) + " mini-set plans, got " +
                        std::to_string(plans.size()));
  } else if (opt.train && cfg.n_s > 1) {
    if (!opt.plan_rng) throw ConfigError("training forward with N_s > 1 needs a seeded plan stream");
    std::size_t n = cfg.set_size;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      plans.push_back(random_plan(n, cfg.n_s, *opt.plan_rng));
      n /= cfg.n_s;
    }
  } else {
    plans = eval_plans();
  }

  Var h = frontend_forward(tape, store, frontend_, cfg, x, opt.train);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    h = mssab_forward(tape, store, layers_[l], h, sets, plans[l], cfg.n_h, cfg.residual_activation);
  auto pooled = pab_forward(tape, store, pooling_, h, sets, cfg.n_h);
  if (opt.trace) {
    opt.trace->orders = orders;
    record_scores(opt.trace, pooled.scores);
  }
  return decoder_head(tape, store, head_, pooled.pooled, cfg.residual_activation);
}

template class QuanModel<float>;
template class QuanModel<double>;

}  // namespace quan
