#include "quan/init.hpp"

#include <cmath>

#include "quan/random.hpp"

namespace quan {

std::string to_string(InitScheme s) { return s == InitScheme::xavier_normal ? "xavier_normal" : "default"; }

InitScheme parse_init_scheme(const std::string& s) {
  if (s == "default" || s == "uniform") return InitScheme::default_uniform;
  if (s == "xavier_normal") return InitScheme::xavier_normal;
  throw ConfigError("unknown init scheme '" + s + "' (expected default or xavier_normal)");
}

namespace {

void require_matrix(const Shape& s) {
  if (s.size() != 2) throw Error("weight initialisers expect a 2-D tensor, got " + shape_string(s));
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
void xavier_normal_init(Tensor<T>& weight, std::uint64_t seed) {
  require_matrix(weight.shape());
  const double fan_out = double(weight.dim(0)), fan_in = double(weight.dim(1));
  const double sd = std::sqrt(2.0 / (fan_in + fan_out));
  Rng rng(seed);
  for (auto& v : weight.values()) v = static_cast<T>(sd * standard_normal(rng));
}

template <typename T>
void uniform_fan_in_init(Tensor<T>& weight, std::uint64_t seed) {
  require_matrix(weight.shape());
  const double bound = 1.0 / std::sqrt(double(weight.dim(1)));
  Rng rng(seed);
  for (auto& v : weight.values()) v = static_cast<T>(bound * (2.0 * uniform01(rng) - 1.0));
}

template <typename T>
void initialize_parameters(ParameterStore<T>& store, InitScheme scheme, std::uint64_t seed) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (!p.trainable) continue;
    if (p.value.rank() == 2) {
      const auto s = derive_seed(seed, {i});
      if (scheme == InitScheme::xavier_normal) xavier_normal_init(p.value, s);
      else uniform_fan_in_init(p.value, s);
    } else {
      p.value.fill(ends_with(p.name, "gain") || ends_with(p.name, "gamma") ? T(1) : T(0));
    }
  }
}

template void xavier_normal_init(Tensor<float>&, std::uint64_t);
template void xavier_normal_init(Tensor<double>&, std::uint64_t);
template void uniform_fan_in_init(Tensor<float>&, std::uint64_t);
template void uniform_fan_in_init(Tensor<double>&, std::uint64_t);
template void initialize_parameters(ParameterStore<float>&, InitScheme, std::uint64_t);
template void initialize_parameters(ParameterStore<double>&, InitScheme, std::uint64_t);

}  // namespace quan
