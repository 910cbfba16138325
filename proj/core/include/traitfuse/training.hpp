#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "traitfuse/fusion.hpp"

namespace traitfuse {

struct Dataset {
  std::vector<VideoSample> videos;

  std::vector<const VideoSample*> split(Split s) const;
};

struct TrainConfig {
  std::size_t batch_size = 8;
  /// Desk-scale default; full_scale_preset() uses 1e-5 for full-size grids.
  double learning_rate = 1e-3;
  std::size_t patience = 5;
  double factor = 0.5;
  /// Validation MSE must drop by more than this to count as improvement.
  double threshold = 1e-6;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  /// Stop once the start-of-epoch train MSE is below this; 0 disables.
  double target_train_mse = 0.0;
  /// Worker threads for per-sample gradients and evaluation.
  std::size_t threads = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  static TrainConfig full_scale_preset();
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(std::string_view text);

/// Reduce-on-plateau: after `patience` consecutive epochs without an
/// improvement over the best value seen, multiply the rate by `factor` and
/// start counting again.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, std::size_t patience, double factor, double threshold);

  /// Sets the reference value (e.g. validation MSE before training) without
  /// counting an epoch.
  void prime(double metric);
  /// Records one epoch and returns the rate for the next one.
  double step(double metric);

  double lr() const { return lr_; }
  std::size_t reductions() const { return reductions_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double threshold_;
  double best_;
  std::size_t bad_epochs_ = 0;
  std::size_t reductions_ = 0;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// grads[i] belongs to params[i]; a null entry skips that parameter.
  void step(std::span<const Tensor* const> grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct AccuracyReport {
  std::array<double, kTraitCount> per_trait{};
  double mean = 0.0;
};

/// Per trait 1 - mean |t - p| over videos, then the average of the five.
AccuracyReport mean_accuracy(std::span<const TraitScores> preds, std::span<const TraitScores> targets);
/// Same on (N, 5) tensors; throws DimensionError on a shape mismatch.
AccuracyReport mean_accuracy(const Tensor& preds, const Tensor& targets);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;  // parameters as of the start of the epoch
  double val_mse = 0.0;    // parameters as of the end of the epoch
  double lr = 0.0;         // rate in effect after the epoch's scheduler step
};

struct TrainReport {
  std::vector<EpochRecord> history;
  bool reached_target = false;
  /// Accuracy on the test split, or the validation split when there is none.
  AccuracyReport accuracy;
  Split accuracy_split = Split::test;
  std::uint64_t seed = 0;
};

/// Mean over videos of the per-video MSE, inference mode, prediction unclamped.
double dataset_mse(const FusionModel& model, std::span<const VideoSample* const> videos, std::size_t threads = 1);
std::vector<TraitScores> predict_all(const FusionModel& model, std::span<const VideoSample* const> videos,
                                     std::size_t threads = 1);

struct TrainHooks {
  /// Called with the parameters as they are when an epoch starts.
  std::function<void(std::size_t epoch, const FusionModel&)> on_epoch_start;
  /// Replaces the validation MSE fed to the scheduler and the history.
  std::function<double(std::size_t epoch, double measured)> override_val_mse;
};

/// Adam on per-video MSE averaged over mini-batches, plateau-scheduled on
/// validation MSE. Throws UsageError when the train split is empty.
TrainReport train(FusionModel& model, const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

struct AblationResult {
  std::string name;
  InputSet inputs;
  std::uint64_t seed = 0;
  TrainReport report;
  double final_val_mse = 0.0;
};

/// Trains a fresh model with `inputs` from a seed derived from cfg.seed and
/// `config_index`.
AblationResult ablate(const Dataset& data, const ModelConfig& base, const TrainConfig& cfg, const InputSet& inputs,
                      std::size_t config_index);

/// "full", "no_<input>" for each disabled input, then "baseline" with all of
/// them off when more than one is given. Throws ParameterError on unknown names.
std::vector<std::pair<std::string, InputSet>> ablation_configs(std::string_view disabled_csv);

/// Runs every configuration independently; up to cfg.threads at once.
std::vector<AblationResult> run_ablation_study(const Dataset& data, const ModelConfig& base, const TrainConfig& cfg,
                                               std::span<const std::pair<std::string, InputSet>> configs);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace traitfuse
