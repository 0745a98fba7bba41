#include "quan/classifier.hpp"

#include "quan/baselines.hpp"
#include "quan/quan_model.hpp"

namespace quan {

template <typename T>
Classifier<T>::Classifier(ModelConfig cfg) : config_(std::move(cfg)) {
  config_.validate();
}

template <typename T>
Tensor<T> Classifier<T>::prepare(std::span<const SnapshotSet* const> batch,
                                 std::vector<std::vector<std::size_t>>& orders) const {
  orders.clear();
  orders.reserve(batch.size());
  for (const auto* set : batch) orders.push_back(canonical_order(*set));
  return encode_sets<T>(batch, orders, config_);
}

template <typename T>
std::vector<T> Classifier<T>::predict(std::span<const SnapshotSet* const> batch, ForwardTrace* trace) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.trace = trace;
  Var y = forward(tape, batch, opt);
  return tape.value(y).values();
}

template <typename T>
T Classifier<T>::predict(const SnapshotSet& set, ForwardTrace* trace) {
  const SnapshotSet* one[] = {&set};
  return predict(std::span<const SnapshotSet* const>(one), trace)[0];
}

template <typename T>
std::unique_ptr<Classifier<T>> make_classifier(const ModelConfig& cfg) {
  switch (cfg.architecture) {
    case Architecture::quan: return std::make_unique<QuanModel<T>>(cfg);
    case Architecture::smlp: return std::make_unique<SmlpModel<T>>(cfg);
    case Architecture::pab: return std::make_unique<PabOnlyModel<T>>(cfg);
  }
  throw ConfigError("unknown architecture");
}

template class Classifier<float>;
template class Classifier<double>;
template std::unique_ptr<Classifier<float>> make_classifier(const ModelConfig&);
template std::unique_ptr<Classifier<double>> make_classifier(const ModelConfig&);

}  // namespace quan
