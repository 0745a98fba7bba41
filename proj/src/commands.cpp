#include "quan/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "quan/analysis.hpp"
#include "quan/checkpoint.hpp"
#include "quan/datasets.hpp"
#include "quan/rqc.hpp"
#include "quan/training.hpp"

namespace quan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  return os;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << "\n"; }

fs::path out_dir(const json& cfg) {
  if (!cfg.contains("out")) throw ConfigError("no output directory: pass --out or set \"out\"");
  fs::path out = cfg.at("out").get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

const json& block(const json& cfg, const char* name) {
  if (!cfg.contains(name) || !cfg.at(name).is_object())
    throw ConfigError(std::string("config is missing the \"") + name + "\" block");
  return cfg.at(name);
}

std::uint64_t seed_of(const json& cfg) { return cfg.value("seed", std::uint64_t{0}); }
std::size_t threads_of(const json& cfg) { return cfg.value("threads", std::size_t{1}); }

Dataset load_dataset_at(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing \"") + key + "\" path");
  return load_dataset(j.at(key).get<std::string>());
}

// ---------------------------------------------------------------- train

template <typename T>
void train_impl(const json& cfg) {
  const fs::path out = out_dir(cfg);
  const json& data = block(cfg, "data");
  Dataset ds = load_dataset_at(data, "dataset");
  ModelConfig mc = block(cfg, "model").get<ModelConfig>();
  TrainConfig tc = cfg.value("train", json::object()).get<TrainConfig>();
  tc.seed = seed_of(cfg);
  tc.threads = threads_of(cfg);
  const auto train = ds.split(data.value("train_split", std::string("train")));
  const auto val = ds.split(data.value("validation_split", std::string("validation")));
  auto model = make_classifier<T>(mc);
  const bool verbose = cfg.value("verbose", false);
  auto result = fit<T>(*model, train, val, tc, [&](const MetricRecord& r) {
    if (verbose)
      std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " val_acc " << r.val_accuracy << "\n";
  });
  result.info.extra = json{{"train", tc},
                           {"dataset", data.at("dataset")},
                           {"trainable_parameters", result.best->parameters().trainable_count()}};
  save_checkpoint(out / "checkpoint.qckp", *result.best, result.info);
  auto metrics = open_out(out / "metrics.csv");
  metrics << "epoch,lr,train_loss,val_accuracy,val_loss\n";
  for (const auto& r : result.info.history)
    metrics << r.epoch << "," << fmt(r.lr) << "," << fmt(r.train_loss) << "," << fmt(r.val_accuracy) << ","
            << fmt(r.val_loss) << "\n";
  auto timing = open_out(out / "timing.csv");
  timing << "epoch,seconds\n";
  for (std::size_t e = 0; e < result.epoch_seconds.size(); ++e) timing << e << "," << result.epoch_seconds[e] << "\n";
}

// ---------------------------------------------------------------- eval

std::string group_key(const StateSamples& st, const std::vector<std::string>& keys) {
  if (keys.empty()) return st.id;
  std::ostringstream os;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i) os << ";";
    const json* v = nullptr;
    if (keys[i] == "label") {
      os << "label=" << st.label;
      continue;
    }
    if (st.params.contains(keys[i])) v = &st.params.at(keys[i]);
    os << keys[i] << "=" << (v ? v->dump() : "null");
  }
  return os.str();
}

template <typename T>
void eval_impl(const json& cfg, const json& ev) {
  const fs::path out = out_dir(cfg);
  std::vector<std::string> paths;
  if (ev.contains("checkpoints")) paths = ev.at("checkpoints").get<std::vector<std::string>>();
  if (ev.contains("checkpoint")) paths.push_back(ev.at("checkpoint").get<std::string>());
  if (paths.empty()) throw ConfigError("eval block needs \"checkpoint\" or \"checkpoints\"");
  std::vector<std::unique_ptr<Classifier<T>>> models;
  std::vector<CheckpointInfo> infos;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw ConfigError("checkpoint not found: " + p);
    CheckpointInfo info;
    models.push_back(load_checkpoint<T>(p, &info));
    infos.push_back(info);
    const auto& a = infos.front().config;
    const auto& b = info.config;
    if (a.grid_rows != b.grid_rows || a.grid_cols != b.grid_cols)
      throw ConfigError("checkpoint " + p + " has a different grid geometry from the first checkpoint");
    if (a.set_size != b.set_size) throw ConfigError("checkpoint " + p + " has a different set_size");
  }
  const ModelConfig& mc = infos.front().config;
  if (ev.contains("model")) {
    const json stored = mc;
    for (auto it = ev.at("model").begin(); it != ev.at("model").end(); ++it) {
      if (!stored.contains(it.key())) throw ConfigError("eval.model: unknown field '" + it.key() + "'");
      if (stored.at(it.key()) != it.value())
        throw ConfigError("checkpoint does not match the config in field '" + it.key() + "': checkpoint has " +
                          stored.at(it.key()).dump() + ", config has " + it.value().dump());
    }
  }
  Dataset ds = load_dataset_at(ev, "dataset");
  const std::string split = ev.value("split", std::string("test"));
  const auto states = ds.split(split);
  if (states.empty()) throw ConfigError("dataset has no states in split '" + split + "'");
  for (const auto* st : states) {
    const Grid g = st->snapshots.empty() ? Grid{} : st->snapshots.front().grid;
    if (g.rows != mc.grid_rows || g.cols != mc.grid_cols)
      throw ConfigError("grid mismatch: state " + st->id + " is " + std::to_string(g.rows) + "x" +
                        std::to_string(g.cols) + " but the checkpoint expects " + std::to_string(mc.grid_rows) +
                        "x" + std::to_string(mc.grid_cols));
  }
  std::uint64_t pseed = ev.contains("partition_seed") ? ev.at("partition_seed").get<std::uint64_t>()
                                                      : infos.front().extra.value("train", json::object()).value(
                                                            "seed", seed_of(cfg));
  std::size_t batch = ev.value("batch_sets", infos.front().extra.value("train", json::object()).value(
                                                 "batch_sets", std::size_t{32}));
  const auto sets = make_sets(states, mc.set_size, derive_seed(pseed, {2}));
  if (sets.empty()) throw ConfigError("split '" + split + "' yields no complete sets of size " +
                                      std::to_string(mc.set_size));
  std::vector<const SnapshotSet*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s.set);
  std::vector<std::vector<double>> conf;
  for (auto& m : models) conf.push_back(predict_sets(*m, ptrs, batch, threads_of(cfg)));

  // Group sets by parameter point, keeping first-seen order.
  const auto keys = ev.value("group_by", std::vector<std::string>{});
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto k = group_key(*states[sets[i].state], keys);
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(i);
  }

  json summary{{"split", split}, {"sets", sets.size()}, {"models", paths}, {"partition_seed", pseed}};
  json per_model = json::array();
  for (std::size_t m = 0; m < models.size(); ++m) {
    std::vector<int> labels;
    std::vector<double> y;
    for (std::size_t i = 0; i < sets.size(); ++i)
      if (sets[i].label >= 0) {
        labels.push_back(sets[i].label);
        y.push_back(conf[m][i]);
      }
    json e{{"checkpoint", paths[m]}, {"stored_val_accuracy", infos[m].val_accuracy}, {"epoch", infos[m].epoch}};
    if (!labels.empty()) e["accuracy"] = accuracy(y, labels);
    per_model.push_back(e);
  }
  summary["per_model"] = per_model;

  auto csv = open_out(out / "confidence.csv");
  csv << "group,states,sets,label,mean_confidence,std_error,accuracy\n";
  for (const auto& k : order) {
    const auto& idx = groups[k];
    std::vector<std::vector<double>> pm(models.size());
    std::vector<double> pooled;
    std::vector<int> labels;
    std::map<std::size_t, bool> st;
    for (auto i : idx) {
      for (std::size_t m = 0; m < models.size(); ++m) {
        pm[m].push_back(conf[m][i]);
        pooled.push_back(conf[m][i]);
      }
      st[sets[i].state] = true;
    }
    const Estimate e = models.size() > 1 ? average_confidence_over_models(pm) : average_confidence(pm[0]);
    const int label = sets[idx.front()].label;
    std::string acc = "";
    if (label >= 0) {
      for (std::size_t r = 0; r < pooled.size(); ++r) labels.push_back(label);
      acc = fmt(accuracy(pooled, labels));
    }
    csv << "\"" << k << "\"," << st.size() << "," << idx.size() << "," << label << "," << fmt(e.mean) << ","
        << fmt(e.std_error) << "," << acc << "\n";
  }

  if (ev.contains("attention")) {
    const auto& a = ev.at("attention");
    const double q = a.value("quantile", 0.15);
    const int head = a.value("head", -1);
    const std::size_t max_sets = a.value("max_sets", std::size_t{50});
    const std::size_t max_side = a.value("max_side", std::size_t{6});
    auto att = open_out(out / "attention.csv");
    att << "group,perimeter,high_mean,high_std_error,low_mean,low_std_error,high_snapshots,low_snapshots\n";
    for (const auto& k : order) {
      std::vector<const SnapshotSet*> sel;
      for (auto i : groups[k]) {
        if (sel.size() >= max_sets) break;
        sel.push_back(ptrs[i]);
      }
      auto rep = pooling_attention_report(*models.front(), sel, q, head, max_side);
      for (std::size_t l = 0; l < rep.high.loops.size(); ++l) {
        const auto& h = rep.high.loops[l];
        const auto& w = rep.low.loops[l];
        att << "\"" << k << "\"," << h.perimeter << "," << fmt(h.mean) << "," << fmt(h.std_error) << ","
            << fmt(w.mean) << "," << fmt(w.std_error) << "," << h.snapshots << "," << w.snapshots << "\n";
      }
    }
  }

  if (ev.contains("sample_complexity")) {
    const auto& sc = ev.at("sample_complexity");
    const std::size_t cells = sc.value("unit_cells", mc.n_qubits());
    const std::size_t reps = sc.value("repetitions", std::size_t{10});
    auto out_sc = open_out(out / "sample_complexity.csv");
    out_sc << "group,sets,defined,d_star_mean,cost_mean,cost_std_error\n";
    for (std::size_t g = 0; g < order.size(); ++g) {
      const auto& idx = groups[order[g]];
      std::vector<std::vector<double>> c(models.size());
      for (std::size_t m = 0; m < models.size(); ++m)
        for (auto i : idx) c[m].push_back(conf[m][i]);
      if (idx.size() < 2) continue;
      auto r = sample_complexity_ttest(c, mc.set_size, cells, derive_seed(seed_of(cfg), {5, g}), reps);
      double dmean = 0;
      for (auto d : r.d_star) dmean += double(d);
      dmean /= double(r.d_star.size());
      out_sc << "\"" << order[g] << "\"," << idx.size() << "," << (r.defined ? 1 : 0) << ","
             << (r.defined ? fmt(dmean) : "") << "," << (r.defined ? fmt(r.cost.mean) : "") << ","
             << (r.defined ? fmt(r.cost.std_error) : "") << "\n";
    }
  }
  write_json(out / "summary.json", summary);
}

// ---------------------------------------------------------------- report

void report_xeb(const json& x, const fs::path& out, std::uint64_t seed) {
  const auto grid = x.at("grid").get<std::vector<std::size_t>>();
  if (grid.size() != 2) throw ConfigError("xeb grid must be [rows, cols]");
  const auto depths = x.at("depths").get<std::vector<std::size_t>>();
  const std::size_t instances = x.value("instances", std::size_t{5});
  const std::size_t samples = x.value("samples", std::size_t{0});
  auto csv = open_out(out / "xeb.csv");
  csv << "depth,instance,circuit_seed,exact,estimate,estimate_std_error\n";
  auto sum = open_out(out / "xeb_summary.csv");
  sum << "depth,instances,exact_mean,exact_std_error\n";
  for (std::size_t di = 0; di < depths.size(); ++di) {
    std::vector<double> exact;
    for (std::size_t k = 0; k < instances; ++k) {
      RqcParams p;
      p.rows = grid[0];
      p.cols = grid[1];
      p.depth = depths[di];
      p.theta = x.value("theta", p.theta);
      p.phi = x.value("phi", p.phi);
      p.circuit_seed = derive_seed(seed, {di, k});
      auto psi = rqc_simulate(p);
      exact.push_back(xeb_exact(psi));
      csv << p.depth << "," << k << "," << p.circuit_seed << "," << fmt(exact.back()) << ",";
      if (samples > 0) {
        auto snaps = rqc_sample_bitstrings(psi, Grid{p.rows, p.cols}, samples, derive_seed(seed, {di, k, 1}));
        auto e = xeb_estimate(snaps, [&](std::uint64_t b) { return std::norm(psi[b]); }, p.qubits());
        csv << fmt(e.mean) << "," << fmt(e.std_error);
      } else {
        csv << ",";
      }
      csv << "\n";
    }
    auto e = mean_and_error(exact);
    sum << depths[di] << "," << instances << "," << fmt(e.mean) << "," << fmt(e.std_error) << "\n";
  }
}

void report_loops(const json& l, const fs::path& out) {
  Dataset ds = load_dataset_at(l, "dataset");
  const std::size_t max_side = l.value("max_side", std::size_t{6});
  auto csv = open_out(out / "loops.csv");
  csv << "state,label,perimeter,mean,std_error\n";
  auto tension = open_out(out / "loop_tension.csv");
  tension << "state,label,p_flip,alpha,reference_alpha\n";
  for (const auto& st : ds.states) {
    auto loops = loop_expectations(st.snapshots, max_side);
    for (const auto& s : loops)
      csv << st.id << "," << st.label << "," << s.perimeter << "," << fmt(s.mean) << "," << fmt(s.std_error) << "\n";
    tension << st.id << "," << st.label << ",";
    if (st.params.contains("p_flip")) {
      const double p = st.params.at("p_flip").get<double>();
      tension << fmt(p) << ",";
      tension << fmt(fit_loop_tension(loops)) << "," << (p < 0.5 ? fmt(-std::log(1 - 2 * p)) : "") << "\n";
    } else {
      tension << "," << fmt(fit_loop_tension(loops)) << ",\n";
    }
  }
}

std::string precision_of(const json& cfg) { return cfg.value("precision", std::string("f32")); }

}  // namespace

json load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.contains("tool") && j.contains("config")) return j.at("config");
  return j;
}

json resolve_run_config(json config, const RunOptions& opts) {
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  if (opts.seed) config["seed"] = *opts.seed;
  if (opts.threads) config["threads"] = *opts.threads;
  if (opts.precision) config["precision"] = *opts.precision;
  if (opts.out) config["out"] = opts.out->string();
  if (!config.contains("seed")) config["seed"] = 0;
  if (!config.contains("threads")) config["threads"] = 1;
  if (config.at("threads").get<std::size_t>() == 0) throw ConfigError("--threads must be at least 1");
  if (config.contains("precision")) {
    const auto p = config.at("precision").get<std::string>();
    if (p != "f32" && p != "f64") throw ConfigError("precision must be f32 or f64, got " + p);
  }
  return config;
}

void cmd_generate(const json& cfg) {
  const fs::path out = out_dir(cfg);
  Dataset ds = generate_dataset(block(cfg, "generate"), seed_of(cfg));
  save_dataset(out, ds);
}

void cmd_train(const json& cfg) {
  if (precision_of(cfg) == "f64") train_impl<double>(cfg);
  else train_impl<float>(cfg);
}

void cmd_eval(const json& cfg) {
  const json& ev = block(cfg, "eval");
  std::string precision = cfg.value("precision", std::string());
  if (precision.empty()) {
    std::string first = ev.contains("checkpoint") ? ev.at("checkpoint").get<std::string>()
                        : ev.contains("checkpoints") && !ev.at("checkpoints").empty()
                            ? ev.at("checkpoints").at(0).get<std::string>()
                            : std::string();
    if (first.empty()) throw ConfigError("eval block needs \"checkpoint\" or \"checkpoints\"");
    if (!fs::exists(first)) throw ConfigError("checkpoint not found: " + first);
    precision = read_checkpoint_info(first).precision;
  }
  if (precision == "f64") eval_impl<double>(cfg, ev);
  else eval_impl<float>(cfg, ev);
}

void cmd_report(const json& cfg) {
  const fs::path out = out_dir(cfg);
  const json& rep = block(cfg, "report");
  if (!rep.contains("xeb") && !rep.contains("loops")) throw ConfigError("report block needs \"xeb\" or \"loops\"");
  if (rep.contains("xeb")) report_xeb(rep.at("xeb"), out, seed_of(cfg));
  if (rep.contains("loops")) report_loops(rep.at("loops"), out);
}

void run_command(const std::string& command, const json& resolved) {
  try {
    if (command == "generate") cmd_generate(resolved);
    else if (command == "train") cmd_train(resolved);
    else if (command == "eval") cmd_eval(resolved);
    else if (command == "report") cmd_report(resolved);
    else throw ConfigError("unknown command " + command);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  json manifest{{"tool", "quan"}, {"version", kToolVersion}, {"command", command},
                {"seed", resolved.at("seed")}, {"threads", resolved.at("threads")}, {"config", resolved}};
  write_json(out_dir(resolved) / "manifest.json", manifest);
}

}  // namespace quan
