#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "quan/checkpoint.hpp"
#include "quan/classifier.hpp"
#include "quan/datasets.hpp"
#include "quan/init.hpp"

namespace quan {

struct TrainConfig {
  double lr = 1e-4;
  double l2 = 0.0;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t step_size = 100;
  double gamma = 0.65;
  std::size_t epochs = 200;
  std::size_t shuffle_period = 10;
  std::size_t batch_sets = 32;  // sets per minibatch
  InitScheme init = InitScheme::xavier_normal;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // evaluation workers

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// -[label ln y + (1 - label) ln(1 - y)] with y clamped to [1e-7, 1 - 1e-7].
double bce_loss(double y, int label);

/// lr = base_lr * gamma^floor(epoch / step_size).
double steplr(double base_lr, std::size_t epoch, std::size_t step_size, double gamma);

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::size_t step = 0;
};

/// Bias-corrected Adam on every trainable parameter, with the L2 term
/// l2 * w added to the gradient before the moment updates.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, const TrainConfig& cfg, double lr);

/// Evaluation-mode confidences for each set, computed in batches across
/// `threads` workers. The result does not depend on the thread count.
template <typename T>
std::vector<double> predict_sets(Classifier<T>& model, std::span<const SnapshotSet* const> sets,
                                 std::size_t batch_sets, std::size_t threads);

template <typename T>
struct FitResult {
  std::unique_ptr<Classifier<T>> best;
  CheckpointInfo info;                // best epoch, its validation accuracy and the full history
  std::vector<double> epoch_seconds;  // wall time, kept apart from the reproducible history
};

using EpochCallback = std::function<void(const MetricRecord&)>;

/// Initialises `model` from cfg.init and cfg.seed, then trains it. The
/// training states are re-partitioned into sets every shuffle_period epochs;
/// the validation partition is fixed. The returned model is the epoch with
/// the highest validation accuracy; ties go to the lower validation
/// loss, then to the earlier epoch.
template <typename T>
FitResult<T> fit(Classifier<T>& model, std::span<const StateSamples* const> train,
                 std::span<const StateSamples* const> validation, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

/// Training sets used in `epoch` (exposed for reproducibility checks).
std::vector<LabeledSet> partition_for_epoch(std::span<const StateSamples* const> train, std::size_t set_size,
                                            const TrainConfig& cfg, std::size_t epoch);

}  // namespace quan
