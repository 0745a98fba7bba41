#include "quan/checkpoint.hpp"

#include <cstdint>
#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace quan {

namespace {

constexpr char kMagic[4] = {'Q', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void write_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw Error("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
  U v;
  std::memcpy(&v, buf, sizeof(U));
  return v;
}

struct Header {
  CheckpointInfo info;
  nlohmann::json tensors;
  std::streamoff data_offset = 0;
};

Header read_header(std::ifstream& is, const std::filesystem::path& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ConfigError("not a checkpoint file: " + path.string());
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion) throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  const auto len = read_le<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw Error("checkpoint: truncated header");
  Header h;
  try {
    auto j = nlohmann::json::parse(text);
    h.info.config = j.at("config").get<ModelConfig>();
    h.info.precision = j.at("precision").get<std::string>();
    h.info.epoch = j.at("epoch").get<std::size_t>();
    h.info.val_accuracy = j.at("val_accuracy").get<double>();
    h.info.history = j.at("history").get<std::vector<MetricRecord>>();
    h.info.extra = j.value("extra", nlohmann::json::object());
    h.tensors = j.at("tensors");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint header: ") + e.what());
  }
  if (h.info.precision != "f32" && h.info.precision != "f64")
    throw ConfigError("checkpoint precision tag must be f32 or f64, got " + h.info.precision);
  h.data_offset = is.tellg();
  return h;
}

}  // namespace

void to_json(nlohmann::json& j, const MetricRecord& m) {
  j = nlohmann::json{{"epoch", m.epoch},
                     {"lr", m.lr},
                     {"train_loss", m.train_loss},
                     {"val_accuracy", m.val_accuracy},
                     {"val_loss", m.val_loss}};
}

void from_json(const nlohmann::json& j, MetricRecord& m) {
  m.epoch = j.at("epoch").get<std::size_t>();
  m.lr = j.at("lr").get<double>();
  m.train_loss = j.at("train_loss").get<double>();
  m.val_accuracy = j.at("val_accuracy").get<double>();
  m.val_loss = j.value("val_loss", 0.0);
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Classifier<T>& model, CheckpointInfo info) {
  const auto& store = model.parameters();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : store)
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.trainable}});
  nlohmann::json header{{"config", model.config()},
                        {"precision", precision_tag<T>()},
                        {"epoch", info.epoch},
                        {"val_accuracy", info.val_accuracy},
                        {"history", info.history},
                        {"extra", info.extra},
                        {"tensors", tensors}};
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint: " + path.string());
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : store)
    for (T v : p.value.values()) write_le<T>(os, v);
  if (!os) throw Error("failed writing checkpoint: " + path.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path.string());
  return read_header(is, path).info;
}

template <typename T>
std::unique_ptr<Classifier<T>> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path.string());
  Header h = read_header(is, path);
  auto model = make_classifier<T>(h.info.config);
  auto& store = model->parameters();
  if (h.tensors.size() != store.size())
    throw ConfigError("checkpoint holds " + std::to_string(h.tensors.size()) + " tensors, model expects " +
                      std::to_string(store.size()));
  const bool wide = h.info.precision == "f64";
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    const auto& t = h.tensors[i];
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    if (name != p.name || shape != p.value.shape())
      throw ConfigError("checkpoint tensor " + name + " " + shape_string(shape) + " does not match model tensor " +
                        p.name + " " + shape_string(p.value.shape()));
    for (auto& v : p.value.values()) v = wide ? static_cast<T>(read_le<double>(is)) : static_cast<T>(read_le<float>(is));
  }
  if (info) *info = h.info;
  return model;
}

template void save_checkpoint(const std::filesystem::path&, const Classifier<float>&, CheckpointInfo);
template void save_checkpoint(const std::filesystem::path&, const Classifier<double>&, CheckpointInfo);
template std::unique_ptr<Classifier<float>> load_checkpoint(const std::filesystem::path&, CheckpointInfo*);
template std::unique_ptr<Classifier<double>> load_checkpoint(const std::filesystem::path&, CheckpointInfo*);

}  // namespace quan
