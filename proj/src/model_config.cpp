#include "quan/model_config.hpp"

#include <algorithm>

#include "quan/tensor.hpp"

namespace quan {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::quan: return "quan";
    case Architecture::smlp: return "smlp";
    case Architecture::pab: return "pab";
  }
  return "?";
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "sigmoid"; }

Architecture parse_architecture(const std::string& s) {
  if (s == "quan") return Architecture::quan;
  if (s == "smlp") return Architecture::smlp;
  if (s == "pab" || s == "pab-only" || s == "pab_only") return Architecture::pab;
  throw ConfigError("unknown architecture '" + s + "' (expected quan, smlp or pab)");
}

Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (expected sigmoid or relu)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (grid_rows == 0 || grid_cols == 0) fail("grid extents must be positive");
  if (set_size == 0) fail("set_size must be positive");
  if (use_conv) {
    if (n_c == 0) fail("n_c must be positive");
    if (kernel == 0 || kernel > std::min(grid_rows, grid_cols))
      fail("kernel " + std::to_string(kernel) + " does not fit a " + std::to_string(grid_rows) + "x" +
           std::to_string(grid_cols) + " grid");
  }
  for (auto w : mlp_widths)
    if (w == 0) fail("mlp widths must be positive");
  if (architecture == Architecture::smlp) {
    for (auto w : smlp_decoder_widths)
      if (w == 0) fail("smlp decoder widths must be positive");
    return;
  }
  if (d_h == 0 || n_h == 0) fail("d_h and n_h must be positive");
  if (d_h % n_h != 0)
    fail("d_h (" + std::to_string(d_h) + ") must be divisible by n_h (" + std::to_string(n_h) + ")");
  if (architecture == Architecture::quan) {
    if (n_s == 0) fail("n_s must be positive");
    std::size_t div = 1;
    for (std::size_t l = 0; l < layers; ++l) div *= n_s;
    if (set_size % div != 0)
      fail("set_size " + std::to_string(set_size) + " is not divisible by N_s^L = " + std::to_string(div));
  }
}

std::size_t ModelConfig::conv_width() const {
  return n_c * (grid_rows - kernel + 1) * (grid_cols - kernel + 1);
}

std::size_t ModelConfig::frontend_width() const {
  if (!mlp_widths.empty()) return mlp_widths.back();
  return use_conv ? conv_width() : n_qubits();
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"architecture", to_string(c.architecture)},
                     {"grid", {c.grid_rows, c.grid_cols}},
                     {"use_conv", c.use_conv},
                     {"n_c", c.n_c},
                     {"kernel", c.kernel},
                     {"mlp_widths", c.mlp_widths},
                     {"d_h", c.d_h},
                     {"n_h", c.n_h},
                     {"n_s", c.n_s},
                     {"layers", c.layers},
                     {"residual_activation", to_string(c.residual_activation)},
                     {"set_size", c.set_size},
                     {"smlp_decoder_widths", c.smlp_decoder_widths},
                     {"eval_plan_seed", c.eval_plan_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c = d;
  try {
    if (j.contains("architecture")) c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    if (j.contains("grid")) {
      auto g = j.at("grid").get<std::vector<std::size_t>>();
      if (g.size() != 2) throw ConfigError("model config: grid must be [rows, cols]");
      c.grid_rows = g[0];
      c.grid_cols = g[1];
    }
    c.use_conv = j.value("use_conv", d.use_conv);
    c.n_c = j.value("n_c", d.n_c);
    c.kernel = j.value("kernel", d.kernel);
    c.mlp_widths = j.value("mlp_widths", d.mlp_widths);
    c.d_h = j.value("d_h", d.d_h);
    c.n_h = j.value("n_h", d.n_h);
    c.n_s = j.value("n_s", d.n_s);
    c.layers = j.value("layers", d.layers);
    if (j.contains("residual_activation"))
      c.residual_activation = parse_activation(j.at("residual_activation").get<std::string>());
    c.set_size = j.value("set_size", d.set_size);
    c.smlp_decoder_widths = j.value("smlp_decoder_widths", d.smlp_decoder_widths);
    c.eval_plan_seed = j.value("eval_plan_seed", d.eval_plan_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

}  // namespace quan
