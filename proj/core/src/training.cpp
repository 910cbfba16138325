#include "traitfuse/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "traitfuse/errors.hpp"
#include "traitfuse/random.hpp"

namespace traitfuse {

using nlohmann::json;

std::vector<const VideoSample*> Dataset::split(Split s) const {
  std::vector<const VideoSample*> out;
  for (const auto& v : videos) {
    if (v.split == s) out.push_back(&v);
  }
  return out;
}

TrainConfig TrainConfig::full_scale_preset() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-5;
  return cfg;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (patience == 0) throw ParameterError("patience must be at least 1");
  if (!(factor > 0.0 && factor < 1.0)) throw ParameterError("factor must lie in (0, 1)");
  if (!(threshold >= 0.0)) throw ParameterError("threshold must be nonnegative");
  if (!(target_train_mse >= 0.0)) throw ParameterError("target_train_mse must be nonnegative");
}

std::string train_config_to_json(const TrainConfig& cfg) {
  const json j{{"batch_size", cfg.batch_size},
               {"learning_rate", cfg.learning_rate},
               {"patience", cfg.patience},
               {"factor", cfg.factor},
               {"threshold", cfg.threshold},
               {"max_epochs", cfg.max_epochs},
               {"seed", cfg.seed},
               {"target_train_mse", cfg.target_train_mse},
               {"threads", cfg.threads},
               {"beta1", cfg.beta1},
               {"beta2", cfg.beta2},
               {"adam_eps", cfg.adam_eps}};
  return j.dump(2);
}

TrainConfig train_config_from_json(std::string_view text) {
  TrainConfig cfg;
  try {
    const json j = json::parse(text);
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("batch_size", cfg.batch_size);
    get("learning_rate", cfg.learning_rate);
    get("patience", cfg.patience);
    get("factor", cfg.factor);
    get("threshold", cfg.threshold);
    get("max_epochs", cfg.max_epochs);
    get("seed", cfg.seed);
    get("target_train_mse", cfg.target_train_mse);
    get("threads", cfg.threads);
    get("beta1", cfg.beta1);
    get("beta2", cfg.beta2);
    get("adam_eps", cfg.adam_eps);
  } catch (const json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor, double threshold)
    : lr_(lr), patience_(patience), factor_(factor), threshold_(threshold),
      best_(std::numeric_limits<double>::infinity()) {
  if (patience == 0 || !(factor > 0.0 && factor < 1.0)) {
    throw ParameterError("plateau scheduler needs patience >= 1 and factor in (0, 1)");
  }
}

void PlateauScheduler::prime(double metric) { best_ = metric; }

double PlateauScheduler::step(double metric) {
  if (metric < best_ - threshold_) {
    best_ = metric;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ > patience_) {
    lr_ *= factor_;
    ++reductions_;
    bad_epochs_ = 0;
  }
  return lr_;
}

Adam::Adam(std::vector<Parameter*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(std::span<const Tensor* const> grads, double lr) {
  if (grads.size() != params_.size()) throw UsageError("Adam::step: gradient count differs from parameter count");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!grads[i]) continue;
    auto w = params_[i]->value.data();
    const auto g = grads[i]->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

AccuracyReport mean_accuracy(std::span<const TraitScores> preds, std::span<const TraitScores> targets) {
  if (preds.size() != targets.size()) {
    throw DimensionError("mean_accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  }
  if (preds.empty()) throw UsageError("mean_accuracy: no videos");
  AccuracyReport r;
  const double n = static_cast<double>(preds.size());
  for (std::size_t j = 0; j < kTraitCount; ++j) {
    double err = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) err += std::abs(targets[i].values[j] - preds[i].values[j]);
    r.per_trait[j] = 1.0 - err / n;
  }
  r.mean = std::accumulate(r.per_trait.begin(), r.per_trait.end(), 0.0) / static_cast<double>(kTraitCount);
  return r;
}

AccuracyReport mean_accuracy(const Tensor& preds, const Tensor& targets) {
  if (preds.shape() != targets.shape() || preds.rank() != 2 || preds.extent(1) != kTraitCount) {
    throw DimensionError("mean_accuracy: predictions " + shape_string(preds.shape()) + " and targets " +
                         shape_string(targets.shape()) + " must both be (N, 5)");
  }
  std::vector<TraitScores> p(preds.extent(0)), t(targets.extent(0));
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < kTraitCount; ++j) {
      p[i].values[j] = preds[i * kTraitCount + j];
      t[i].values[j] = targets[i * kTraitCount + j];
    }
  }
  return mean_accuracy(p, t);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

Tensor raw_prediction(const FusionModel& model, const VideoSample& v) {
  Tape tape;
  std::mt19937_64 unused(0);
  return model_forward(tape, model, v, false, unused).value();
}

}  // namespace

double dataset_mse(const FusionModel& model, std::span<const VideoSample* const> videos, std::size_t threads) {
  if (videos.empty()) throw UsageError("dataset_mse: no videos");
  std::vector<double> per_video(videos.size());
  parallel_for(videos.size(), threads, [&](std::size_t i) {
    const Tensor pred = raw_prediction(model, *videos[i]);
    double s = 0.0;
    for (std::size_t j = 0; j < kTraitCount; ++j) {
      const double d = pred[j] - videos[i]->targets.values[j];
      s += d * d;
    }
    per_video[i] = s / static_cast<double>(kTraitCount);
  });
  return std::accumulate(per_video.begin(), per_video.end(), 0.0) / static_cast<double>(videos.size());
}

std::vector<TraitScores> predict_all(const FusionModel& model, std::span<const VideoSample* const> videos,
                                     std::size_t threads) {
  std::vector<TraitScores> out(videos.size());
  parallel_for(videos.size(), threads, [&](std::size_t i) { out[i] = predict(model, *videos[i]); });
  return out;
}

TrainReport train(FusionModel& model, const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const auto train_set = data.split(Split::train);
  if (train_set.empty()) throw UsageError("train: the dataset has no training videos");
  auto val_set = data.split(Split::val);
  const bool has_val = !val_set.empty();
  if (!has_val) val_set = train_set;
  for (const auto* v : train_set) check_sample(model.config, *v);

  std::vector<Parameter*> params = model.parameters();
  Adam adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps);
  PlateauScheduler scheduler(cfg.learning_rate, cfg.patience, cfg.factor, cfg.threshold);
  scheduler.prime(dataset_mse(model, val_set, cfg.threads));

  TrainReport report;
  report.seed = cfg.seed;
  std::vector<std::size_t> order(train_set.size());
  std::vector<Tensor> sums;
  for (const Parameter* p : params) sums.emplace_back(p->value.shape());
  std::vector<std::vector<Tensor>> sample_grads(cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (hooks.on_epoch_start) hooks.on_epoch_start(epoch, model);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = dataset_mse(model, train_set, cfg.threads);
    if (cfg.target_train_mse > 0.0 && rec.train_mse < cfg.target_train_mse) {
      rec.val_mse = dataset_mse(model, val_set, cfg.threads);
      rec.lr = scheduler.lr();
      report.history.push_back(rec);
      report.reached_target = true;
      break;
    }

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {0x5EED, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      parallel_for(count, cfg.threads, [&](std::size_t b) {
        const std::size_t index = order[start + b];
        const VideoSample& v = *train_set[index];
        Tape tape;
        std::mt19937_64 rng(derive_seed(cfg.seed, {epoch, index}));
        const Var pred = model_forward(tape, model, v, true, rng);
        tape.backward(mse(pred, tape.constant(v.targets.to_tensor())));
        auto& grads = sample_grads[b];
        grads.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
          const Tensor* g = tape.gradient(*params[k]);
          grads[k] = g ? *g : Tensor();
        }
      });
      std::vector<const Tensor*> batch_grads(params.size());
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto acc = sums[k].data();
        std::fill(acc.begin(), acc.end(), 0.0);
        bool any = false;
        for (std::size_t b = 0; b < count; ++b) {
          const Tensor& g = sample_grads[b][k];
          if (g.size() != acc.size()) continue;
          any = true;
          for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += g[e];
        }
        for (auto& a : acc) a *= inv;
        batch_grads[k] = any ? &sums[k] : nullptr;
      }
      adam.step(batch_grads, scheduler.lr());
    }

    rec.val_mse = dataset_mse(model, val_set, cfg.threads);
    if (hooks.override_val_mse) rec.val_mse = hooks.override_val_mse(epoch, rec.val_mse);
    rec.lr = scheduler.step(rec.val_mse);
    report.history.push_back(rec);
  }

  auto eval_set = data.split(Split::test);
  report.accuracy_split = Split::test;
  if (eval_set.empty()) {
    eval_set = has_val ? data.split(Split::val) : train_set;
    report.accuracy_split = has_val ? Split::val : Split::train;
  }
  std::vector<TraitScores> targets;
  for (const auto* v : eval_set) targets.push_back(v->targets);
  report.accuracy = mean_accuracy(predict_all(model, eval_set, cfg.threads), targets);
  return report;
}

AblationResult ablate(const Dataset& data, const ModelConfig& base, const TrainConfig& cfg, const InputSet& inputs,
                      std::size_t config_index) {
  ModelConfig model_cfg = base;
  model_cfg.inputs = inputs;
  AblationResult r;
  r.inputs = inputs;
  r.seed = derive_seed(cfg.seed, {0xAB1A7E, config_index});
  TrainConfig run_cfg = cfg;
  run_cfg.seed = r.seed;
  FusionModel model = FusionModel::init(model_cfg, r.seed);
  r.report = train(model, data, run_cfg);
  r.final_val_mse = r.report.history.empty() ? 0.0 : r.report.history.back().val_mse;
  return r;
}

std::vector<std::pair<std::string, InputSet>> ablation_configs(std::string_view disabled_csv) {
  const InputSet off = inputs_without(disabled_csv);
  std::vector<std::pair<std::string, InputSet>> out{{"full", InputSet{}}};
  std::size_t disabled = 0;
  auto single = [&](bool on, const char* name, bool InputSet::*field) {
    if (on) return;
    ++disabled;
    InputSet s;
    s.*field = false;
    out.emplace_back(std::string("no_") + name, s);
  };
  single(off.behaviour, "behaviour", &InputSet::behaviour);
  single(off.transcript, "transcript", &InputSet::transcript);
  single(off.metadata, "metadata", &InputSet::metadata);
  single(off.lstm, "lstm", &InputSet::lstm);
  if (disabled > 1) out.emplace_back("baseline", off);
  return out;
}

std::vector<AblationResult> run_ablation_study(const Dataset& data, const ModelConfig& base, const TrainConfig& cfg,
                                               std::span<const std::pair<std::string, InputSet>> configs) {
  std::vector<AblationResult> results(configs.size());
  TrainConfig inner = cfg;
  const std::size_t outer_threads = std::min(cfg.threads, configs.size());
  if (outer_threads > 1) inner.threads = std::max<std::size_t>(1, cfg.threads / outer_threads);
  parallel_for(configs.size(), outer_threads, [&](std::size_t i) {
    results[i] = ablate(data, base, inner, configs[i].second, i);
    results[i].name = configs[i].first;
  });
  return results;
}

}  // namespace traitfuse
