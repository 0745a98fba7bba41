#include "quan/datasets.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "quan/random.hpp"
#include "quan/rqc.hpp"
#include "quan/snapshot_io.hpp"
#include "quan/tensor.hpp"
#include "quan/toric.hpp"

namespace quan {

std::vector<const StateSamples*> Dataset::split(const std::string& name) const {
  std::vector<const StateSamples*> out;
  for (const auto& s : states)
    if (s.split == name) out.push_back(&s);
  return out;
}

std::vector<SnapshotSet> partition_into_sets(const std::vector<Snapshot>& snapshots, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("set size must be positive");
  if (n > snapshots.size())
    throw ConfigError("set size " + std::to_string(n) + " exceeds the " + std::to_string(snapshots.size()) +
                      " available snapshots");
  std::vector<std::size_t> idx(snapshots.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  shuffle_in_place(std::span<std::size_t>(idx), rng);
  std::vector<SnapshotSet> sets(snapshots.size() / n);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    sets[s].reserve(n);
    for (std::size_t j = 0; j < n; ++j) sets[s].push_back(snapshots[idx[s * n + j]]);
  }
  return sets;
}

std::vector<LabeledSet> make_sets(std::span<const StateSamples* const> states, std::size_t n, std::uint64_t seed) {
  std::vector<LabeledSet> out;
  for (std::size_t i = 0; i < states.size(); ++i)
    for (auto& set : partition_into_sets(states[i]->snapshots, n, derive_seed(seed, {i})))
      out.push_back(LabeledSet{std::move(set), states[i]->label, i});
  return out;
}

std::vector<Snapshot> filter_particle_number(const std::vector<Snapshot>& snapshots, std::size_t n) {
  std::vector<Snapshot> out;
  for (const auto& s : snapshots)
    if (s.popcount() == n) out.push_back(s);
  return out;
}

std::vector<Snapshot> parity_task_sample(Grid grid, std::size_t order, ParityClass cls, std::size_t count,
                                         std::uint64_t seed, std::vector<std::size_t> mask) {
  const std::size_t nb = grid.size();
  if (order < 3 || order > nb)
    throw ConfigError("parity task order " + std::to_string(order) + " must lie in [3, " + std::to_string(nb) + "]");
  if (mask.empty()) {
    mask.resize(order);
    std::iota(mask.begin(), mask.end(), std::size_t{0});
  }
  if (mask.size() != order) throw ConfigError("parity mask must list exactly `order` bits");
  for (auto m : mask)
    if (m >= nb) throw ConfigError("parity mask bit out of range");
  Rng rng(seed);
  std::vector<Snapshot> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<std::uint8_t> bits(nb);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
    if (cls == ParityClass::B) {
      unsigned parity = 0;
      for (auto m : mask) parity ^= bits[m];
      if (parity) bits[mask[0]] ^= 1;
    }
    out.emplace_back(grid, std::move(bits));
  }
  return out;
}

namespace {

Grid read_grid(const nlohmann::json& j, const char* key) {
  auto g = j.at(key).get<std::vector<std::size_t>>();
  if (g.size() != 2 || g[0] == 0 || g[1] == 0) throw ConfigError(std::string(key) + " must be [rows, cols] with positive extents");
  return Grid{g[0], g[1]};
}

// Generator-level fields with per-state overrides.
nlohmann::json merged(const nlohmann::json& block, const nlohmann::json& entry) {
  nlohmann::json m = block;
  m.erase("states");
  for (auto it = entry.begin(); it != entry.end(); ++it) m[it.key()] = it.value();
  return m;
}

std::string format_id(const std::string& prefix, std::size_t i, std::size_t r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%04zu-%03zu", prefix.c_str(), i, r);
  return buf;
}

StateSamples generate_state(const std::string& gen, const nlohmann::json& p, std::uint64_t seed,
                            const std::filesystem::path& base) {
  StateSamples st;
  st.params = p;
  st.params["seed"] = seed;
  if (gen == "toric") {
    ToricParams tp;
    auto torus = p.value("torus", std::vector<std::size_t>{12, 12});
    auto window = p.value("window", std::vector<std::size_t>{6, 6});
    if (torus.size() != 2 || window.size() != 2) throw ConfigError("toric: torus and window must be [rows, cols]");
    tp.lv = torus[0];
    tp.lh = torus[1];
    tp.window_rows = window[0];
    tp.window_cols = window[1];
    tp.p_flip = p.at("p_flip").get<double>();
    tp.samples = p.at("samples").get<std::size_t>();
    tp.seed = seed;
    st.snapshots = toric_window_snapshots(tp);
  } else if (gen == "rqc") {
    RqcParams rp;
    Grid g = read_grid(p, "grid");
    rp.rows = g.rows;
    rp.cols = g.cols;
    rp.depth = p.at("depth").get<std::size_t>();
    rp.theta = p.value("theta", rp.theta);
    rp.phi = p.value("phi", rp.phi);
    rp.circuit_seed = p.contains("circuit_seed") ? p.at("circuit_seed").get<std::uint64_t>() : derive_seed(seed, {0});
    st.params["circuit_seed"] = rp.circuit_seed;
    auto psi = rqc_simulate(rp);
    st.snapshots = rqc_sample_bitstrings(psi, g, p.at("samples").get<std::size_t>(), derive_seed(seed, {1}));
  } else if (gen == "parity") {
    Grid g = read_grid(p, "grid");
    const auto cls = p.at("class").get<std::string>();
    if (cls != "A" && cls != "B") throw ConfigError("parity class must be A or B");
    st.snapshots = parity_task_sample(g, p.at("order").get<std::size_t>(), cls == "A" ? ParityClass::A : ParityClass::B,
                                      p.at("samples").get<std::size_t>(), seed,
                                      p.value("mask", std::vector<std::size_t>{}));
  } else if (gen == "files") {
    std::filesystem::path file = p.at("file").get<std::string>();
    if (file.is_relative()) file = base / file;
    if (!std::filesystem::exists(file)) throw ConfigError("snapshot file not found: " + file.string());
    st.snapshots = read_snapshot_file(file).snapshots;
  } else {
    throw ConfigError("unknown generator '" + gen + "' (expected toric, rqc, parity or files)");
  }
  if (p.contains("particle_number"))
    st.snapshots = filter_particle_number(st.snapshots, p.at("particle_number").get<std::size_t>());
  return st;
}

}  // namespace

Dataset generate_dataset(const nlohmann::json& block, std::uint64_t seed) {
  Dataset ds;
  ds.config = block;
  ds.config["seed"] = seed;
  try {
    const auto gen = block.at("generator").get<std::string>();
    const std::filesystem::path base = block.value("base_dir", std::string("."));
    const auto& entries = block.at("states");
    if (!entries.is_array() || entries.empty()) throw ConfigError("generator block needs a non-empty states list");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto p = merged(block, entries[i]);
      const std::size_t replicas = p.value("replicas", std::size_t{1});
      for (std::size_t r = 0; r < replicas; ++r) {
        auto st = generate_state(gen, p, derive_seed(seed, {i, r}), base);
        st.id = format_id(p.value("name", gen), i, r);
        st.label = p.value("label", -1);
        if (st.label < -1 || st.label > 1) throw ConfigError("state labels must be 0, 1 or -1 (unlabeled)");
        st.split = p.value("split", std::string("train"));
        st.params.erase("replicas");
        st.params["replica"] = r;
        ds.states.push_back(std::move(st));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator block: ") + e.what());
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "states", ec);
  if (ec) throw ConfigError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.states.size(); ++i) {
    const auto& st = dataset.states[i];
    if (st.snapshots.empty()) throw Error("state " + st.id + " holds no snapshots");
    char name[32];
    std::snprintf(name, sizeof name, "states/%05zu.qsnp", i);
    nlohmann::json meta{{"id", st.id}, {"label", st.label}, {"split", st.split}, {"params", st.params}};
    write_snapshot_file(dir / name, SnapshotFile{st.snapshots.front().grid, meta, st.snapshots});
    meta["file"] = name;
    meta["count"] = st.snapshots.size();
    index.push_back(meta);
  }
  std::ofstream os(dir / "dataset.json", std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + (dir / "dataset.json").string());
  os << nlohmann::json{{"config", dataset.config}, {"states", index}}.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest = dir / "dataset.json";
  std::ifstream is(manifest);
  if (!is) throw ConfigError("dataset not found: " + manifest.string());
  Dataset ds;
  try {
    auto j = nlohmann::json::parse(is);
    ds.config = j.value("config", nlohmann::json::object());
    for (const auto& e : j.at("states")) {
      StateSamples st;
      st.id = e.at("id").get<std::string>();
      st.label = e.at("label").get<int>();
      st.split = e.at("split").get<std::string>();
      st.params = e.value("params", nlohmann::json::object());
      st.snapshots = read_snapshot_file(dir / e.at("file").get<std::string>()).snapshots;
      ds.states.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed dataset manifest " + manifest.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace quan
