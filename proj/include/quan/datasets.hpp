#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quan/snapshot.hpp"

namespace quan {

/// Snapshots measured on one source state.
struct StateSamples {
  std::string id;
  int label = -1;  // 0 or 1; -1 when unlabeled
  std::string split = "train";
  nlohmann::json params = nlohmann::json::object();
  std::vector<Snapshot> snapshots;
};

struct Dataset {
  nlohmann::json config = nlohmann::json::object();
  std::vector<StateSamples> states;

  std::vector<const StateSamples*> split(const std::string& name) const;
};

/// A set drawn from one state, carrying that state's label.
struct LabeledSet {
  SnapshotSet set;
  int label = -1;
  std::size_t state = 0;
};

/// Seeded shuffle into floor(M / n) disjoint sets; leftovers are dropped.
std::vector<SnapshotSet> partition_into_sets(const std::vector<Snapshot>& snapshots, std::size_t n, std::uint64_t seed);

/// Partitions every state with its own stream derive_seed(seed, {i}).
std::vector<LabeledSet> make_sets(std::span<const StateSamples* const> states, std::size_t n, std::uint64_t seed);

/// Keeps snapshots whose bit sum equals `n`.
std::vector<Snapshot> filter_particle_number(const std::vector<Snapshot>& snapshots, std::size_t n);

enum class ParityClass { A, B };

/// Class A: uniform strings. Class B: uniform strings with even parity over
/// `mask`. An empty mask means the first `order` bits.
std::vector<Snapshot> parity_task_sample(Grid grid, std::size_t order, ParityClass cls, std::size_t count,
                                         std::uint64_t seed, std::vector<std::size_t> mask = {});

/// Builds a dataset from a generator block (see README for the schema). Each
/// state entry i, replica r draws from derive_seed(seed, {i, r}).
Dataset generate_dataset(const nlohmann::json& block, std::uint64_t seed);

/// Directory layout: dataset.json plus states/<index>.qsnp.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace quan
