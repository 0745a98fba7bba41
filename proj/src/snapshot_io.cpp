#include "quan/snapshot_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "quan/tensor.hpp"

namespace quan {

namespace {

constexpr char kMagic[4] = {'Q', 'S', 'N', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::ostream& os, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get(std::istream& is, const std::filesystem::path& path) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == EOF) throw ConfigError("truncated snapshot file: " + path.string());
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_snapshot_file(const std::filesystem::path& path, const SnapshotFile& file) {
  const std::size_t nbits = file.grid.size();
  if (nbits == 0) throw ConfigError("snapshot file grid must be non-empty");
  for (const auto& s : file.snapshots)
    if (!(s.grid == file.grid)) throw Error("snapshot geometry differs from the file geometry");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write snapshot file: " + path.string());
  const std::string meta = file.metadata.dump();
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(file.grid.rows));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(file.grid.cols));
  put<std::uint64_t>(os, file.snapshots.size());
  put<std::uint64_t>(os, meta.size());
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  const std::size_t nbytes = (nbits + 7) / 8;
  std::vector<char> buf(nbytes);
  for (const auto& s : file.snapshots) {
    std::fill(buf.begin(), buf.end(), 0);
    for (std::size_t i = 0; i < nbits; ++i)
      if (s.bits[i]) buf[i / 8] = static_cast<char>(buf[i / 8] | (1 << (i % 8)));
    os.write(buf.data(), static_cast<std::streamsize>(nbytes));
  }
  if (!os) throw Error("failed writing snapshot file: " + path.string());
}

SnapshotFile read_snapshot_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open snapshot file: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ConfigError("not a snapshot file: " + path.string());
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) throw ConfigError("unsupported snapshot file version " + std::to_string(version));
  SnapshotFile f;
  f.grid.rows = get<std::uint32_t>(is, path);
  f.grid.cols = get<std::uint32_t>(is, path);
  const auto count = get<std::uint64_t>(is, path);
  const auto meta_len = get<std::uint64_t>(is, path);
  std::string meta(meta_len, '\0');
  if (!is.read(meta.data(), static_cast<std::streamsize>(meta_len)))
    throw ConfigError("truncated snapshot file: " + path.string());
  try {
    f.metadata = meta.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("snapshot file metadata is not JSON: " + std::string(e.what()));
  }
  const std::size_t nbits = f.grid.size();
  if (nbits == 0) throw ConfigError("snapshot file has an empty grid: " + path.string());
  const std::size_t nbytes = (nbits + 7) / 8;
  std::vector<unsigned char> buf(nbytes);
  f.snapshots.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(nbytes)))
      throw ConfigError("truncated snapshot file: " + path.string());
    std::vector<std::uint8_t> bits(nbits);
    for (std::size_t i = 0; i < nbits; ++i) bits[i] = (buf[i / 8] >> (i % 8)) & 1u;
    f.snapshots.emplace_back(f.grid, std::move(bits));
  }
  return f;
}

}  // namespace quan
