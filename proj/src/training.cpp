#include "quan/training.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <cmath>
#include <numeric>
#include <thread>

#include "quan/random.hpp"

namespace quan {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(lr > 0)) fail("lr must be positive");
  if (l2 < 0) fail("l2 must be non-negative");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) fail("Adam betas must lie in (0, 1)");
  if (!(adam_eps > 0)) fail("Adam epsilon must be positive");
  if (step_size == 0) fail("step_size must be at least 1");
  if (!(gamma > 0)) fail("gamma must be positive");
  if (shuffle_period == 0) fail("shuffle_period must be at least 1");
  if (batch_sets == 0) fail("batch_sets must be at least 1");
  if (threads == 0) fail("threads must be at least 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"l2", c.l2},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"step_size", c.step_size},
                     {"gamma", c.gamma},
                     {"epochs", c.epochs},
                     {"shuffle_period", c.shuffle_period},
                     {"batch_sets", c.batch_sets},
                     {"init", to_string(c.init)},
                     {"seed", c.seed},
                     {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c = d;
  try {
    c.lr = j.value("lr", d.lr);
    c.l2 = j.value("l2", d.l2);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.adam_eps = j.value("adam_eps", d.adam_eps);
    c.step_size = j.value("step_size", d.step_size);
    c.gamma = j.value("gamma", d.gamma);
    c.epochs = j.value("epochs", d.epochs);
    c.shuffle_period = j.value("shuffle_period", d.shuffle_period);
    c.batch_sets = j.value("batch_sets", d.batch_sets);
    if (j.contains("init")) c.init = parse_init_scheme(j.at("init").get<std::string>());
    c.seed = j.value("seed", d.seed);
    c.threads = j.value("threads", d.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

double bce_loss(double y, int label) {
  if (label != 0 && label != 1) throw ConfigError("bce_loss: label must be 0 or 1");
  const double c = std::clamp(y, 1e-7, 1.0 - 1e-7);
  return label == 1 ? -std::log(c) : -std::log(1.0 - c);
}

double steplr(double base_lr, std::size_t epoch, std::size_t step_size, double gamma) {
  if (step_size == 0) throw ConfigError("steplr: step_size must be at least 1");
  return base_lr * std::pow(gamma, double(epoch / step_size));
}

template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, const TrainConfig& cfg, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  }
  if (state.m.size() != params.size()) throw Error("adam: optimizer state does not match the parameter store");
  for (const auto& p : params)
    if (p.trainable && !p.grad.all_finite()) throw Error("adam: non-finite gradient in parameter " + p.name);
  ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.step));
  const double c2 = 1.0 - std::pow(b2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = double(p.grad[k]) + cfg.l2 * double(p.value[k]);
      const double mk = b1 * double(m[k]) + (1.0 - b1) * g;
      const double vk = b2 * double(v[k]) + (1.0 - b2) * g * g;
      m[k] = T(mk);
      v[k] = T(vk);
      const double mhat = mk / c1, vhat = vk / c2;
      p.value[k] = T(double(p.value[k]) - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

template <typename T>
std::vector<double> predict_sets(Classifier<T>& model, std::span<const SnapshotSet* const> sets,
                                 std::size_t batch_sets, std::size_t threads) {
  std::vector<double> out(sets.size());
  if (sets.empty()) return out;
  batch_sets = std::max<std::size_t>(batch_sets, 1);
  const std::size_t nbatches = (sets.size() + batch_sets - 1) / batch_sets;
  auto run = [&](std::size_t b) {
    const std::size_t lo = b * batch_sets, hi = std::min(sets.size(), lo + batch_sets);
    auto y = model.predict(sets.subspan(lo, hi - lo));
    for (std::size_t i = lo; i < hi; ++i) out[i] = double(y[i - lo]);
  };
  threads = std::clamp<std::size_t>(threads, 1, nbatches);
  if (threads == 1) {
    for (std::size_t b = 0; b < nbatches; ++b) run(b);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t b = t; b < nbatches; b += threads) run(b);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<LabeledSet> partition_for_epoch(std::span<const StateSamples* const> train, std::size_t set_size,
                                            const TrainConfig& cfg, std::size_t epoch) {
  return make_sets(train, set_size, derive_seed(cfg.seed, {1, epoch / cfg.shuffle_period}));
}

namespace {

void require_labels(std::span<const StateSamples* const> states, const char* split) {
  if (states.empty()) throw ConfigError(std::string("the ") + split + " split is empty");
  for (const auto* s : states)
    if (s->label != 0 && s->label != 1)
      throw ConfigError(std::string("state ") + s->id + " in the " + split + " split has no 0/1 label");
}

}  // namespace

template <typename T>
FitResult<T> fit(Classifier<T>& model, std::span<const StateSamples* const> train,
                 std::span<const StateSamples* const> validation, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
  cfg.validate();
  require_labels(train, "training");
  require_labels(validation, "validation");
  const std::size_t n = model.config().set_size;
  model.initialize(cfg.init, derive_seed(cfg.seed, {0}));

  const auto val_sets = make_sets(validation, n, derive_seed(cfg.seed, {2}));
  if (val_sets.empty()) throw ConfigError("the validation split yields no complete sets");
  std::vector<const SnapshotSet*> val_ptrs;
  for (const auto& s : val_sets) val_ptrs.push_back(&s.set);

  FitResult<T> result;
  result.info.config = model.config();
  result.info.precision = precision_tag<T>();
  double best_acc = -1, best_loss = 0;
  AdamState<T> adam;
  std::vector<LabeledSet> train_sets;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (epoch % cfg.shuffle_period == 0) {
      train_sets = partition_for_epoch(train, n, cfg, epoch);
      if (train_sets.empty()) throw ConfigError("the training split yields no complete sets");
    }
    const double lr = steplr(cfg.lr, epoch, cfg.step_size, cfg.gamma);
    std::vector<std::size_t> order(train_sets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng batch_rng(derive_seed(cfg.seed, {4, epoch}));
    shuffle_in_place(std::span<std::size_t>(order), batch_rng);
    Rng plan_rng(derive_seed(cfg.seed, {3, epoch}));

    double loss_sum = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_sets) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_sets);
      std::vector<const SnapshotSet*> batch;
      std::vector<T> labels;
      for (std::size_t i = lo; i < hi; ++i) {
        batch.push_back(&train_sets[order[i]].set);
        labels.push_back(T(train_sets[order[i]].label));
      }
      Tape<T> tape;
      ForwardOptions opt;
      opt.train = true;
      opt.plan_rng = &plan_rng;
      Var y = model.forward(tape, batch, opt);
      Var loss = tape.binary_cross_entropy(y, labels);
      const double lv = double(tape.value(loss)[0]);
      if (!std::isfinite(lv)) throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += lv * double(hi - lo);
      model.parameters().zero_grad();
      tape.backward(loss);
      adam_step(model.parameters(), adam, cfg, lr);
    }

    const auto conf = predict_sets(model, val_ptrs, cfg.batch_sets, cfg.threads);
    std::size_t correct = 0;
    double val_loss = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      correct += ((conf[i] > 0.5) == (val_sets[i].label == 1)) ? 1 : 0;
      val_loss += bce_loss(conf[i], val_sets[i].label);
    }
    MetricRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / double(train_sets.size());
    rec.val_accuracy = double(correct) / double(conf.size());
    rec.val_loss = val_loss / double(conf.size());
    result.info.history.push_back(rec);
    if (rec.val_accuracy > best_acc || (rec.val_accuracy == best_acc && rec.val_loss < best_loss)) {
      best_acc = rec.val_accuracy;
      best_loss = rec.val_loss;
      result.best = model.clone();
      result.info.epoch = epoch;
      result.info.val_accuracy = rec.val_accuracy;
    }
    result.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (on_epoch) on_epoch(rec);
  }
  if (!result.best) result.best = model.clone();
  return result;
}

template void adam_step(ParameterStore<float>&, AdamState<float>&, const TrainConfig&, double);
template void adam_step(ParameterStore<double>&, AdamState<double>&, const TrainConfig&, double);
template std::vector<double> predict_sets(Classifier<float>&, std::span<const SnapshotSet* const>, std::size_t,
                                          std::size_t);
template std::vector<double> predict_sets(Classifier<double>&, std::span<const SnapshotSet* const>, std::size_t,
                                          std::size_t);
template FitResult<float> fit(Classifier<float>&, std::span<const StateSamples* const>,
                              std::span<const StateSamples* const>, const TrainConfig&, const EpochCallback&);
template FitResult<double> fit(Classifier<double>&, std::span<const StateSamples* const>,
                               std::span<const StateSamples* const>, const TrainConfig&, const EpochCallback&);

}  // namespace quan
