#pragma once

#include <cstdint>
#include <string>

#include "quan/autodiff.hpp"

namespace quan {

enum class InitScheme { default_uniform, xavier_normal };

std::string to_string(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);

/// Fills a 2-D weight [fan_out, fan_in] with N(0, 2/(fan_in + fan_out)).
template <typename T>
void xavier_normal_init(Tensor<T>& weight, std::uint64_t seed);

/// Fills a 2-D weight [fan_out, fan_in] with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void uniform_fan_in_init(Tensor<T>& weight, std::uint64_t seed);

/// Initialises every trainable parameter of a store. Rank-2 tensors are
/// weight matrices and use `scheme`; rank-1 tensors whose name ends in
/// "gain" or "gamma" start at one and all other rank-1 tensors at zero.
/// Parameter i draws from derive_seed(seed, {i}).
template <typename T>
void initialize_parameters(ParameterStore<T>& store, InitScheme scheme, std::uint64_t seed);

}  // namespace quan
