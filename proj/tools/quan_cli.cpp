#include <CLI11.hpp>
#include <iostream>

#include "quan/commands.hpp"
#include "quan/tensor.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Set-attention classifiers for quantum measurement snapshots"};
  app.require_subcommand(1);
  app.set_version_flag("--version", quan::kToolVersion);

  std::string config_path;
  quan::RunOptions opts;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string precision;
  std::string out;

  for (const char* name : {"generate", "train", "eval", "report"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run config or a previous manifest")->required();
    sub->add_option("--seed", seed, "global seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads (overrides the config)");
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--precision", precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opts.seed = seed;
  if (sub->count("--threads")) opts.threads = threads;
  if (sub->count("--precision")) opts.precision = precision;
  if (sub->count("--out")) opts.out = out;

  try {
    auto cfg = quan::resolve_run_config(quan::load_run_config(config_path), opts);
    quan::run_command(sub->get_name(), cfg);
  } catch (const quan::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
