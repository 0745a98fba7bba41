#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace quan {

enum class Architecture { quan, smlp, pab };
enum class Activation { sigmoid, relu };

std::string to_string(Architecture a);
std::string to_string(Activation a);
Architecture parse_architecture(const std::string& s);
Activation parse_activation(const std::string& s);

/// Hyperparameters of a set classifier.
///
/// The per-element front end is an optional 2-D convolution with batch
/// normalisation (stride 1, no padding) followed by an optional stack of
/// sigmoid perceptrons. QuAN then applies `layers` MSSAB layers, a pooling
/// attention block and the decoder head. SMLP and PAB-only reuse the same
/// front end; see baselines.hpp.
struct ModelConfig {
  Architecture architecture = Architecture::quan;
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;

  bool use_conv = true;
  std::size_t n_c = 8;
  std::size_t kernel = 2;
  std::vector<std::size_t> mlp_widths;

  std::size_t d_h = 16;
  std::size_t n_h = 4;
  std::size_t n_s = 1;
  std::size_t layers = 1;
  Activation residual_activation = Activation::sigmoid;
  std::size_t set_size = 64;

  /// SMLP decoder hidden widths; a final linear map to one unit follows.
  std::vector<std::size_t> smlp_decoder_widths{48};

  /// Seed of the fixed mini-set shuffle used in evaluation mode.
  std::uint64_t eval_plan_seed = 0x5eedULL;

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;

  /// d_x = n_c (N_r - kernel + 1)(N_c - kernel + 1).
  std::size_t conv_width() const;
  /// Width of the per-element features entering the encoder.
  std::size_t frontend_width() const;
  std::size_t n_qubits() const { return grid_rows * grid_cols; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace quan
