#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cd3net/blocks.hpp"
#include "cd3net/objectives.hpp"
#include "cd3net/scene.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

struct TrainState {
  std::uint64_t step = 0;
  double lr = 1e-3;
  std::vector<std::vector<Real>> m, v;
  double best_val = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;
  std::uint64_t rng_seed = 0;
};

/// One Adam step with bias correction. Weight decay is decoupled and applied
/// first: p <- p - lr * wd * p. Throws NumericalError naming the first
/// parameter whose gradient is not finite; nothing is updated in that case.
void adam_step(const std::vector<NamedTensor>& params,
               const std::vector<std::span<const Real>>& grads, TrainState& state,
               const AdamOptions& opt = {});
/// Same, reading each parameter's accumulated gradient (absent = zero).
void adam_step(const std::vector<NamedTensor>& params, TrainState& state,
               const AdamOptions& opt = {});

struct ScheduleOptions {
  double factor = 0.9;
  int patience = 3;
  double threshold = 1e-6;
};

/// Plateau rule: an improvement beyond the threshold resets the stale count;
/// otherwise it grows, and at `patience` the rate is multiplied by `factor`
/// and the count restarts.
void lr_schedule(TrainState& state, double val_loss, const ScheduleOptions& opt = {});

struct TrainPlan {
  std::size_t epochs = 1;
  // 0 uses the whole pool every epoch.
  std::size_t scenes_per_epoch = 0;
  std::size_t batch_size = 1;
  // Gradients of this many consecutive batches are summed before a step.
  std::size_t accumulate = 1;
  // Stops after this many optimizer steps when non-zero.
  std::size_t max_steps = 0;
  LossWeights weights;
  AugmentOptions augment;
  double lr0 = 1e-3;
  AdamOptions adam;
  ScheduleOptions schedule;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  TrainState state;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mean loss of a batch of scenes: the average of per-utterance losses.
Tensor batch_loss(Cd3Net& net, const std::vector<const SceneQuad*>& batch,
                  const LossWeights& weights, Mode mode);

/// Mean per-scene loss in eval mode without gradient recording.
double validation_loss(Cd3Net& net, const std::vector<SceneQuad>& scenes,
                       const LossWeights& weights, std::size_t batch_size);

TrainResult train(const TrainPlan& plan, Cd3Net& net, const std::vector<SceneQuad>& train_scenes,
                  const std::vector<SceneQuad>& val_scenes, const EpochCallback& on_epoch = {});

std::string format_history(const std::vector<EpochRecord>& history);

// Evaluation.
struct SceneMetrics {
  std::string id;
  double si_sdr_mic = 0, si_sdr_out = 0;
  double sdr_mic = 0, sdr_out = 0;
  // Non-empty when the scene could not be scored.
  std::string error;

  double si_sdr_gain() const { return si_sdr_out - si_sdr_mic; }
  double sdr_gain() const { return sdr_out - sdr_mic; }
};

struct MetricSummary {
  double mean = 0;
  double stdev = 0;
};

struct EvalReport {
  std::vector<SceneMetrics> scenes;

  std::size_t scored() const;
  MetricSummary summary(double (*field)(const SceneMetrics&)) const;
  MetricSummary si_sdr_gain() const;
  MetricSummary sdr_gain() const;
  /// Tab-separated table with one row per scene plus mean and stdev rows.
  std::string to_tsv() const;
};

using Estimator = std::function<TimeSignal(const SceneQuad&)>;

EvalReport evaluate(const std::vector<NamedScene>& scenes, const Estimator& estimate);
EvalReport evaluate(Cd3Net& net, const std::vector<NamedScene>& scenes);

/// Estimator that applies A = 1 and the oracle B computed from the scene's echo.
TimeSignal oracle_dual_mask_estimate(const SceneQuad& scene);

}  // namespace CD3NET_ABI
}  // namespace cd3net
