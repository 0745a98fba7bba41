#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace quan {

inline constexpr const char* kToolVersion = "0.1.0";

/// Command-line overrides applied on top of the config file.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> precision;
  std::optional<std::filesystem::path> out;
};

/// Reads a JSON config. A manifest written by a previous run is accepted and
/// its resolved config is used.
nlohmann::json load_run_config(const std::filesystem::path& path);

/// Merges the overrides into `config` and checks the shared fields.
nlohmann::json resolve_run_config(nlohmann::json config, const RunOptions& opts);

/// generate: writes a dataset directory.
void cmd_generate(const nlohmann::json& resolved);
/// train: writes checkpoint.qckp, metrics.csv and timing.csv.
void cmd_train(const nlohmann::json& resolved);
/// eval: writes confidence.csv, summary.json and the optional attention and
/// sample-complexity reports.
void cmd_eval(const nlohmann::json& resolved);
/// report: model-free analyses (XEB sweeps, loop expectations of a dataset).
void cmd_report(const nlohmann::json& resolved);

/// Dispatches a command by name; every command writes manifest.json.
void run_command(const std::string& command, const nlohmann::json& resolved);

}  // namespace quan
