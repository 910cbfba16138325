#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>

#include "helpers.hpp"
#include "traitfuse/errors.hpp"
#include "traitfuse/synth.hpp"
#include "traitfuse/training.hpp"

using namespace traitfuse;

namespace {

const Dataset& small_dataset() {
  static const Dataset data = [] {
    SynthSpec spec;
    spec.videos = 10;
    spec.seed = 21;
    return make_synthetic_dataset(spec);
  }();
  return data;
}

TrainConfig quick(std::size_t epochs, std::uint64_t seed = 4) {
  TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.batch_size = 4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("plateau scheduler") {
  PlateauScheduler s(1e-5, 5, 0.5, 1e-6);
  s.prime(1.0);
  std::vector<double> lrs;
  for (int epoch = 1; epoch <= 12; ++epoch) lrs.push_back(s.step(1.0));
  for (int epoch = 1; epoch <= 12; ++epoch) {
    CAPTURE(epoch);
    const double expected = epoch < 6 ? 1e-5 : epoch < 12 ? 5e-6 : 2.5e-6;
    CHECK(lrs[epoch - 1] == expected);
  }
  CHECK(s.reductions() == 2);

  SUBCASE("improvement resets the count") {
    PlateauScheduler t(1.0, 2, 0.5, 1e-6);
    t.prime(1.0);
    CHECK(t.step(1.0) == 1.0);
    CHECK(t.step(1.0) == 1.0);
    CHECK(t.step(0.5) == 1.0);  // improvement
    CHECK(t.step(0.5 - 1e-7) == 1.0);  // within threshold: not an improvement
    CHECK(t.step(0.5) == 1.0);
    CHECK(t.step(0.5) == 0.5);
  }

  SUBCASE("never increases; every cut is exactly the factor") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    PlateauScheduler t(1e-3, 3, 0.5, 1e-6);
    t.prime(u(rng));
    double prev = t.lr();
    for (int i = 0; i < 500; ++i) {
      const double lr = t.step(u(rng));
      CHECK(lr <= prev);
      if (lr != prev) CHECK(lr == prev * 0.5);
      prev = lr;
    }
  }

  CHECK_THROWS_AS(PlateauScheduler(1e-3, 5, 1.5, 0), ParameterError);
}

TEST_CASE("mean_accuracy") {
  const std::vector<TraitScores> same{{{.1, .2, .3, .4, .5}}, {{.9, .8, .7, .6, .5}}};
  const auto a = mean_accuracy(same, same);
  CHECK(a.mean == 1.0);
  for (double v : a.per_trait) CHECK(v == 1.0);

  const std::vector<TraitScores> t1{{{1, 0, 1, 0, 1}}}, p1{{{0, 1, 0, 1, 0}}};
  CHECK(mean_accuracy(p1, t1).mean == 0.0);

  const std::vector<TraitScores> t2{{{.6, .5, .4, .7, .3}}}, p2{{{.5, .5, .5, .5, .5}}};
  const auto r = mean_accuracy(p2, t2);
  const std::array<double, 5> expected{1 - std::abs(.6 - .5), 1.0, 1 - std::abs(.4 - .5), 1 - std::abs(.7 - .5),
                                       1 - std::abs(.3 - .5)};
  CHECK(r.per_trait == expected);
  CHECK(r.mean == (expected[0] + expected[1] + expected[2] + expected[3] + expected[4]) / 5);
  CHECK(r.mean == doctest::Approx(0.88).epsilon(1e-15));

  CHECK_THROWS_AS(mean_accuracy(Tensor({2, 5}), Tensor({3, 5})), DimensionError);
  CHECK_THROWS_AS(mean_accuracy(Tensor({2, 4}), Tensor({2, 4})), DimensionError);
  CHECK(mean_accuracy(Tensor({2, 5}, 0.5), Tensor({2, 5}, 0.5)).mean == 1.0);

  SUBCASE("properties on random scores") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<TraitScores> p(7), t(7);
      for (auto* v : {&p, &t})
        for (auto& s : *v)
          for (auto& x : s.values) x = u(rng);
      const auto base = mean_accuracy(p, t);
      CHECK(base.mean >= 0.0);
      CHECK(base.mean < 1.0);
      std::vector<std::size_t> order{0, 1, 2, 3, 4, 5, 6};
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<TraitScores> ps, ts;
      for (auto i : order) {
        ps.push_back(p[i]);
        ts.push_back(t[i]);
      }
      CHECK(mean_accuracy(ps, ts).mean == doctest::Approx(base.mean).epsilon(1e-14));
    }
  }
}

TEST_CASE("adam first step") {
  Parameter p{"p", Tensor::vector({1.0, -2.0})};
  Adam adam({&p});
  const Tensor g = Tensor::vector({0.5, -3.0});
  const std::array<const Tensor*, 1> grads{&g};
  adam.step(grads, 0.1);
  // Bias-corrected first step: m_hat = g, v_hat = g^2.
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p.value[1] == doctest::Approx(-2.0 + 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-14));
  CHECK(adam.steps() == 1);
}

TEST_CASE("train config json") {
  auto cfg = TrainConfig::full_scale_preset();
  CHECK(cfg.learning_rate == 1e-5);
  cfg.seed = 99;
  cfg.target_train_mse = 0.25;
  const auto back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.seed == 99);
  CHECK(back.learning_rate == 1e-5);
  CHECK(back.target_train_mse == 0.25);
  CHECK(train_config_from_json("{}").batch_size == TrainConfig{}.batch_size);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("train loss is measured with start-of-epoch parameters") {
  const auto& data = small_dataset();
  auto model = FusionModel::init(ModelConfig::toy(), 5);
  std::vector<double> replayed;
  TrainHooks hooks;
  hooks.on_epoch_start = [&](std::size_t, const FusionModel& m) {
    const FusionModel snapshot = m;
    replayed.push_back(dataset_mse(snapshot, data.split(Split::train)));
  };
  const auto report = train(model, data, quick(3), hooks);
  REQUIRE(report.history.size() == 3);
  REQUIRE(replayed.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(report.history[e].epoch == e + 1);
    CHECK(report.history[e].train_mse == replayed[e]);
  }
  // Validation loss uses end-of-epoch parameters: the next epoch's start.
  CHECK(report.history[2].val_mse == dataset_mse(model, data.split(Split::val)));
}

TEST_CASE("training is deterministic and thread-count independent") {
  const auto& data = small_dataset();
  auto run = [&](std::uint64_t seed, std::size_t threads) {
    auto model = FusionModel::init(ModelConfig::toy(), 6);
    auto cfg = quick(2, seed);
    cfg.threads = threads;
    return train(model, data, cfg);
  };
  const auto a = run(4, 1);
  const auto b = run(4, 1);
  const auto c = run(4, 3);
  const auto d = run(5, 1);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(a.history[e].train_mse == b.history[e].train_mse);
    CHECK(a.history[e].val_mse == b.history[e].val_mse);
    CHECK(a.history[e].val_mse == c.history[e].val_mse);
  }
  CHECK(a.accuracy.mean == c.accuracy.mean);
  CHECK(a.history[1].val_mse != d.history[1].val_mse);
}

TEST_CASE("train hooks and stopping") {
  const auto& data = small_dataset();
  SUBCASE("override feeds the scheduler") {
    auto model = FusionModel::init(ModelConfig::toy(), 7);
    auto cfg = quick(3);
    cfg.patience = 1;
    TrainHooks hooks;
    hooks.override_val_mse = [](std::size_t, double) { return 2.0; };
    const auto r = train(model, data, cfg, hooks);
    for (const auto& e : r.history) CHECK(e.val_mse == 2.0);
    CHECK(r.history.back().lr < cfg.learning_rate);
  }
  SUBCASE("target stops early") {
    auto model = FusionModel::init(ModelConfig::toy(), 8);
    auto cfg = quick(5);
    cfg.target_train_mse = 10.0;
    const auto before = model.parameters().front()->value;
    const auto r = train(model, data, cfg);
    CHECK(r.reached_target);
    // The epoch that meets the target is recorded, then no update happens.
    REQUIRE(r.history.size() == 1);
    CHECK(model.parameters().front()->value == before);
  }
  SUBCASE("empty train split") {
    Dataset only_val;
    for (const auto& v : data.videos)
      if (v.split == Split::val) only_val.videos.push_back(v);
    auto model = FusionModel::init(ModelConfig::toy(), 9);
    CHECK_THROWS_AS(train(model, only_val, quick(1)), UsageError);
  }
}

TEST_CASE("ablation configurations") {
  const auto c = ablation_configs("behaviour,lstm");
  REQUIRE(c.size() == 4);
  CHECK(c[0].first == "full");
  CHECK(c[0].second == InputSet{});
  CHECK(c[1].first == "no_behaviour");
  CHECK_FALSE(c[1].second.behaviour);
  CHECK(c[1].second.lstm);
  CHECK(c[2].first == "no_lstm");
  CHECK(c[3].first == "baseline");
  CHECK_FALSE(c[3].second.behaviour);
  CHECK_FALSE(c[3].second.lstm);
  CHECK(ablation_configs("").size() == 1);
  CHECK(ablation_configs("transcript").size() == 2);
  CHECK_THROWS_AS(ablation_configs("behaviour,colour"), ParameterError);

  const auto& data = small_dataset();
  const auto results = run_ablation_study(data, ModelConfig::toy(), quick(1), c);
  REQUIRE(results.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(results[i].name == c[i].first);
    CHECK(results[i].inputs == c[i].second);
    for (std::size_t j = 0; j < i; ++j) CHECK(results[i].seed != results[j].seed);
  }
  // Configurations are independent: rerunning one alone reproduces it.
  const auto again = ablate(data, ModelConfig::toy(), quick(1), c[2].second, 2);
  CHECK(again.report.history[0].val_mse == results[2].report.history[0].val_mse);
}

TEST_CASE("parallel_for visits every index once") {
  for (std::size_t threads : {1u, 2u, 5u}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(37, threads, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
}
