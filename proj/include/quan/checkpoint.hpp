#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "quan/classifier.hpp"

namespace quan {

/// Per-epoch scalars recorded during training.
struct MetricRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_accuracy = 0;
  double val_loss = 0;
};

void to_json(nlohmann::json& j, const MetricRecord& m);
void from_json(const nlohmann::json& j, MetricRecord& m);

struct CheckpointInfo {
  ModelConfig config;
  std::string precision;  // "f32" or "f64"
  std::size_t epoch = 0;
  double val_accuracy = 0;
  std::vector<MetricRecord> history;
  nlohmann::json extra = nlohmann::json::object();
};

template <typename T>
constexpr const char* precision_tag() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

/// Writes "QCKP", a format version, a JSON header (config, precision, epoch,
/// validation accuracy, history, tensor index) and the raw little-endian
/// tensor data in parameter order.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Classifier<T>& model, CheckpointInfo info);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Rebuilds the model stored at `path`. Values stored in the other precision
/// are converted; same-precision loads are bit-exact.
template <typename T>
std::unique_ptr<Classifier<T>> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace quan
