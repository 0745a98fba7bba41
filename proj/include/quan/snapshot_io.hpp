#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "quan/snapshot.hpp"

namespace quan {

struct SnapshotFile {
  Grid grid;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Snapshot> snapshots;
};

/// Layout: "QSNP", u32 version, u32 rows, u32 cols, u64 count, u64 metadata
/// length, metadata JSON, then one record per snapshot of ceil(rows*cols/8)
/// bytes holding bit i in byte i/8 at position i%8. Integers are little-endian.
void write_snapshot_file(const std::filesystem::path& path, const SnapshotFile& file);
SnapshotFile read_snapshot_file(const std::filesystem::path& path);

}  // namespace quan
