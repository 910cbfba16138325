// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "traitfuse/behaviour.hpp"
#include "traitfuse/chunking.hpp"
#include "traitfuse/fusion.hpp"
#include "traitfuse/gradcheck_suite.hpp"
#include "traitfuse/random.hpp"
#include "traitfuse/synth.hpp"
#include "traitfuse/training.hpp"

using namespace traitfuse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::size_t worker_count() { return std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 4); }

Outcome not_reproduced() {
  return {true,
          "statement: absolute accuracies on the real video corpus need that corpus and pretrained feature "
          "backbones and are not reproduced here; checks 2-9 are property-based substitutes"};
}

Outcome gradient_suite() {
  const auto cfg = gradcheck_config();
  const auto t0 = Clock::now();
  const auto cases = run_gradcheck_suite();
  const double elapsed = seconds_since(t0);
  std::size_t failed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    if (!c.passed) {
      ++failed;
      std::printf("    grad-check FAIL %s max_rel %.3e (%s)\n", c.name.c_str(), c.max_rel_error, c.worst.c_str());
    }
    if (c.max_rel_error > worst) {
      worst = c.max_rel_error;
      worst_name = c.name;
    }
  }
  return {failed == 0 && !cases.empty() && elapsed < 60.0,
          fmt("%zu cases, %zu failed, worst max_rel %.2e (%s), face %zux%zux%zux%zu, %zu tokens, %.1f s (limit 60 s)",
              cases.size(), failed, worst, worst_name.c_str(), cfg.face_shape[0], cfg.face_shape[1],
              cfg.face_shape[2], cfg.face_shape[3], cfg.tokens(), elapsed)};
}

Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  return normal_tensor({rows, cols}, 1.0, rng);
}

Outcome attention_normalization() {
  const auto cfg = gradcheck_config();
  double worst_sum = 0.0, worst_perm = 0.0, min_weight = 1.0;
  std::size_t rows = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const auto model = FusionModel::init(cfg, derive_seed(trial, {1}));
    const auto sample = random_sample(cfg, 2, derive_seed(trial, {2}));
    ForwardProbe probe;
    predict(model, sample, &probe);
    for (const auto& row : probe.attention) {
      double s = 0.0;
      for (double w : row.data()) {
        s += w;
        min_weight = std::min(min_weight, w);
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      ++rows;
    }

    std::mt19937_64 rng(derive_seed(trial, {3}));
    const std::size_t n = cfg.tokens(), d = cfg.model_dim;
    const Tensor q = normal_tensor({d}, 1.0, rng);
    const Tensor k = random_matrix(n, d, rng);
    const Tensor v = random_matrix(n, d, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor kp({n, d}), vp({n, d});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        kp.at({r, c}) = k.at({perm[r], c});
        vp.at({r, c}) = v.at({perm[r], c});
      }
    Tape t1, t2;
    const auto a = transformer_forward(t1.constant(q), t1.constant(k), t1.constant(v), model.transformer).value();
    const auto b = transformer_forward(t2.constant(q), t2.constant(kp), t2.constant(vp), model.transformer).value();
    worst_perm = std::max(worst_perm, max_abs_diff(a, b));
  }
  return {rows > 0 && worst_sum <= 1e-6 && min_weight >= 0.0 && worst_perm <= 1e-6,
          fmt("%zu attention rows over 100 forwards, max |sum-1| %.2e, min weight %.3e, max permutation "
              "difference %.2e (limit 1e-6)",
              rows, worst_sum, min_weight, worst_perm)};
}

KeypointStream still_stream(std::size_t n) {
  KeypointStream s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(neutral_frame(static_cast<std::int64_t>(i), i / 15.0));
  return s;
}

Outcome behaviour_closed_forms() {
  const std::size_t n = 60;
  const auto neutral = still_stream(n);
  bool ok = true;
  std::ostringstream weak;

  KeypointStream tilted = neutral;
  const std::vector<Plant> tilt{{Behaviour::head_tilt, 1.0, 0.0, 100.0}};
  for (auto& f : tilted) apply_plants(f, tilt);
  const double tilt_conf = encode_frame(tilted, n / 2)[Behaviour::head_tilt];
  ok = ok && tilted[n / 2].head.roll == 30.0 && tilt_conf > 0.999;
  const double tilt_neutral = encode_frame(neutral, n / 2)[Behaviour::head_tilt];
  ok = ok && tilt_neutral < 0.001;

  KeypointStream frown = neutral;
  frown[n / 2].aus["AU04"] = 1.2;
  const double frown_conf = encode_frame(frown, n / 2)[Behaviour::frown];
  ok = ok && std::abs(frown_conf - 0.5) <= 1e-9;

  std::size_t covered = 0;
  double worst_neutral = 0.0;
  for (auto b : all_behaviours()) {
    KeypointStream planted = neutral;
    const std::vector<Plant> plants{{b, 1.0, 0.0, 100.0}};
    for (auto& f : planted) apply_plants(f, plants);
    double high = 0.0, low = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      high = std::max(high, encode_frame(planted, i)[b]);
      low = std::max(low, encode_frame(neutral, i)[b]);
    }
    worst_neutral = std::max(worst_neutral, low);
    if (high > 0.98 && low < 0.001) ++covered;
    else weak << ' ' << behaviour_name(b) << '(' << high << '/' << low << ')';
  }
  ok = ok && covered == kBehaviourCount;
  return {ok, fmt("tilt 30 deg %.7f, neutral tilt %.2e, frown AU04=1.2 |c-0.5| %.1e, planted/neutral pairs %zu/13 "
                  "(planted > 0.98, neutral max %.2e < 0.001)%s",
                  tilt_conf, tilt_neutral, std::abs(frown_conf - 0.5), covered, worst_neutral, weak.str().c_str())};
}

Outcome overfit() {
  SynthSpec spec;
  spec.videos = 32;
  spec.seed = 3;
  const auto data = make_synthetic_dataset(spec);
  TrainConfig cfg;
  cfg.max_epochs = 500;
  cfg.seed = 1;
  cfg.target_train_mse = 0.01;
  cfg.threads = 1;

  const auto t0 = Clock::now();
  auto run = [&] {
    auto model = FusionModel::init(ModelConfig::toy(), 2);
    return train(model, data, cfg);
  };
  const auto a = run();
  const double first = seconds_since(t0);
  const auto b = run();
  const double total = seconds_since(t0);

  bool identical = a.history.size() == b.history.size();
  for (std::size_t e = 0; identical && e < a.history.size(); ++e) {
    const auto &x = a.history[e], &y = b.history[e];
    identical = x.epoch == y.epoch && x.train_mse == y.train_mse && x.val_mse == y.val_mse && x.lr == y.lr;
  }
  const double final_train = a.history.empty() ? INFINITY : a.history.back().train_mse;
  return {a.reached_target && final_train < 0.01 && a.history.size() <= 500 && first < 600.0 && identical,
          fmt("train MSE %.5f after %zu epochs (limit 500), %.1f s per run (limit 600 s), histories %s across two "
              "runs (%.1f s total)",
              final_train, a.history.size(), first, identical ? "bit-identical" : "DIFFER", total)};
}

Outcome ablation_direction() {
  SynthSpec spec;
  spec.videos = 200;
  spec.seed = 11;
  const auto data = make_synthetic_dataset(spec);
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.seed = 5;
  cfg.threads = worker_count();
  auto configs = ablation_configs("behaviour,lstm");
  configs.resize(3);  // full, no_behaviour, no_lstm

  const auto t0 = Clock::now();
  const auto results = run_ablation_study(data, ModelConfig::toy(), cfg, configs);
  const double full = results[0].report.accuracy.mean;
  const double no_behaviour = results[1].report.accuracy.mean;
  const double no_lstm = results[2].report.accuracy.mean;
  const bool on_test = results[0].report.accuracy_split == Split::test;
  return {on_test && full - no_behaviour >= 0.01,
          fmt("test-split mean accuracy after %zu epochs each: full %.4f, no_behaviour %.4f (margin %+.4f, need >= "
              "0.01), no_lstm %.4f (margin full-no_lstm %+.4f, reported only); %.1f s",
              cfg.max_epochs, full, no_behaviour, full - no_behaviour, no_lstm, full - no_lstm, seconds_since(t0))};
}

Outcome metric_exactness() {
  // Independent evaluation of 1 - mean |t - p| per trait, then the average.
  auto oracle = [](const std::array<double, 5>& t, const std::array<double, 5>& p) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += 1.0 - std::abs(t[j] - p[j]);
    return s / 5.0;
  };
  struct Example {
    std::array<double, 5> t, p;
    double hand;
  };
  const Example examples[] = {
      {{.1, .2, .3, .4, .5}, {.1, .2, .3, .4, .5}, 1.0},
      {{1, 0, 1, 0, 1}, {0, 1, 0, 1, 0}, 0.0},
      {{.6, .5, .4, .7, .3}, {.5, .5, .5, .5, .5}, .88},
  };
  bool ok = true;
  std::ostringstream out;
  out.precision(17);
  for (const auto& ex : examples) {
    const std::vector<TraitScores> t{{ex.t}}, p{{ex.p}};
    const double a = mean_accuracy(p, t).mean;
    const double o = oracle(ex.t, ex.p);
    // .88 has no exact binary form: the value must equal the f64 evaluation of
    // the formula and sit within one ulp of the decimal.
    const bool exact = a == o && std::abs(a - ex.hand) <= std::nextafter(ex.hand, 2.0) - ex.hand;
    ok = ok && exact;
    out << " A=" << a << (exact ? "" : " MISMATCH") << ';';
  }
  return {ok, "hand examples:" + out.str()};
}

Outcome chunking() {
  const auto c = chunk_video(450, 30);
  bool ok = c.size() == 7;
  std::set<std::size_t> seen;
  for (const auto& ch : c) {
    ok = ok && ch.stride == 2 && ch.count == 32;
    for (std::size_t k = 0; k < ch.count; ++k) ok = ok && seen.insert(ch.frame(k)).second && ch.frame(k) < 450;
  }
  const bool example_ok = ok;

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> fps_dist(10.0, 120.0);
  std::size_t bad = 0, total_chunks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double fps = fps_dist(rng);
    const std::size_t window = kFramesPerChunk * chunk_stride(fps);
    const std::size_t frames = window + rng() % 5000;
    const auto chunks = chunk_video(frames, fps);
    total_chunks += chunks.size();
    std::set<std::size_t> idx;
    bool good = chunks.size() == frames / window;
    for (const auto& ch : chunks)
      for (std::size_t k = 0; k < ch.count; ++k) good = good && ch.frame(k) < frames && idx.insert(ch.frame(k)).second;
    if (!good) ++bad;
  }
  ok = ok && bad == 0;
  return {ok, fmt("450 frames at 30 fps: %zu chunks, stride %zu, %s; 1000 random (frames, fps) pairs, %zu chunks, "
                  "%zu violations",
                  c.size(), c.empty() ? 0 : c[0].stride, example_ok ? "disjoint" : "WRONG", total_chunks, bad)};
}

Outcome scheduler_trace() {
  SynthSpec spec;
  spec.videos = 10;
  spec.seed = 21;
  const auto data = make_synthetic_dataset(spec);
  auto cfg = TrainConfig::full_scale_preset();
  cfg.max_epochs = 12;
  cfg.batch_size = 4;
  cfg.seed = 7;
  auto model = FusionModel::init(ModelConfig::toy(), 8);
  // The scheduler is primed with the untrained validation loss; reporting
  // exactly that value every epoch means no epoch ever improves.
  const double frozen = dataset_mse(model, data.split(Split::val));
  TrainHooks hooks;
  hooks.override_val_mse = [frozen](std::size_t, double) { return frozen; };
  const auto report = train(model, data, cfg, hooks);

  bool ok = report.history.size() == 12;
  std::ostringstream lrs;
  for (const auto& e : report.history) {
    const double expected = e.epoch < 6 ? 1e-5 : e.epoch < 12 ? 5e-6 : 2.5e-6;
    ok = ok && e.lr == expected;
    lrs << ' ' << e.lr;
  }
  return {ok, "lr after epochs 1-12:" + lrs.str() + " (expect 1e-05 until epoch 6, 5e-06 until 12, then 2.5e-06)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"real-corpus accuracies not reproduced", not_reproduced},
      {"gradient suite", gradient_suite},
      {"attention normalization", attention_normalization},
      {"behaviour encoder closed forms", behaviour_closed_forms},
      {"overfit oracle", overfit},
      {"ablation direction", ablation_direction},
      {"metric exactness", metric_exactness},
      {"chunking", chunking},
      {"scheduler trace", scheduler_trace},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
