#include "traitfuse/gradcheck_suite.hpp"

#include <array>
#include <cstdio>
#include <functional>
#include <random>

#include "traitfuse/fusion.hpp"
#include "traitfuse/grad_check.hpp"
#include "traitfuse/random.hpp"

namespace traitfuse {

namespace {

// Values in [-1, -0.05] u [0.05, 1] so ReLU kinks sit far from every probe.
Tensor off_kink(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// Weighted mean with fixed weights: keeps the function O(1) so rounding noise
// stays small, and no gradient vanishes by symmetry (plain sum of a softmax
// is constant).
Var readout(const Var& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w(v.shape());
  const double n = static_cast<double>(w.size());
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  for (auto& x : w.data()) x = dist(rng) / n;
  return sum(mul(v, v.tape().constant(std::move(w))));
}

// Largest absolute disagreement tolerated on coordinates below resolution.
constexpr double kSmallAbsTolerance = 1e-9;

class Suite {
 public:
  explicit Suite(const GradCheckSuiteOptions& o) : options_(o), rng_(derive_seed(o.seed, {0x6C})) {}

  void input_case(const std::string& name, const Tensor& x, const std::function<Var(Tape&, const Var&)>& f,
                  double resolution = 0.0) {
    const std::uint64_t rs = next_seed();
    const auto r = grad_check_detailed([&](Tape& t, const Var& v) { return readout(f(t, v), rs); }, x,
                                       check_options(0, resolution));
    finish(name, r);
  }

  void param_case(const std::string& name, std::vector<Parameter*> params, const std::function<Var(Tape&)>& f,
                  std::size_t coords_per_tensor = 0, double resolution = 0.0) {
    const std::uint64_t rs = next_seed();
    const auto r = grad_check_parameters([&](Tape& t) { return readout(f(t), rs); }, params,
                                         check_options(coords_per_tensor, resolution));
    finish(name, r);
  }

  Tensor random(Shape shape) { return off_kink(std::move(shape), rng_); }
  std::uint64_t next_seed() { return rng_(); }
  std::vector<GradCheckCase> results() && { return std::move(results_); }

 private:
  CheckOptions check_options(std::size_t coords, double resolution) {
    CheckOptions o;
    o.eps = options_.eps;
    o.coords_per_tensor = coords;
    o.seed = next_seed();
    o.resolution = resolution;
    return o;
  }

  void finish(const std::string& name, const CheckResult& r) {
    GradCheckCase c;
    c.name = name;
    c.max_rel_error = r.max_rel_error;
    c.coords = r.coords_checked;
    c.below_resolution = r.below_resolution;
    c.max_small_abs_error = r.max_small_abs_error;
    if (!r.worst_tensor.empty()) {
      char detail[128];
      std::snprintf(detail, sizeof detail, "%s[%zu] analytic %.6e numeric %.6e", r.worst_tensor.c_str(),
                    r.worst_index, r.worst_analytic, r.worst_numeric);
      c.worst = detail;
    }
    c.passed = c.max_rel_error < options_.tolerance && c.max_small_abs_error < kSmallAbsTolerance;
    results_.push_back(std::move(c));
  }

  GradCheckSuiteOptions options_;
  std::mt19937_64 rng_;
  std::vector<GradCheckCase> results_;
};

void op_cases(Suite& s) {
  const Tensor a = s.random({3, 4});
  const Tensor b = s.random({4, 2});
  s.input_case("matmul/a", a, [&](Tape& t, const Var& x) { return matmul(x, t.constant(b)); });
  s.input_case("matmul/b", b, [&](Tape& t, const Var& x) { return matmul(t.constant(a), x); });

  const Tensor c = s.random({2, 3, 4});
  s.input_case("add", c, [&](Tape& t, const Var& x) { return add(x, t.constant(c)); });
  s.input_case("mul", c, [&](Tape& t, const Var& x) { return mul(x, t.constant(c)); });
  s.input_case("scale", c, [](Tape&, const Var& x) { return scale(x, -1.7); });
  s.input_case("relu", c, [](Tape&, const Var& x) { return relu(x); });
  s.input_case("sigmoid", c, [](Tape&, const Var& x) { return sigmoid(x); });
  s.input_case("tanh", c, [](Tape&, const Var& x) { return tanh(x); });
  s.input_case("softmax/axis0", c, [](Tape&, const Var& x) { return softmax(x, 0); });
  s.input_case("softmax/axis2", c, [](Tape&, const Var& x) { return softmax(x, 2); });

  const std::array<std::size_t, 3> k3{1, 2, 2};
  const std::array<std::size_t, 2> k2{2, 2};
  s.input_case("pool_max/3d", s.random({2, 2, 4, 4}),
               [&](Tape&, const Var& x) { return pool_max(x, k3, k3); });
  s.input_case("pool_max/2d", s.random({3, 5, 4}), [&](Tape&, const Var& x) { return pool_max(x, k2, k2); });

  const Tensor x3 = s.random({2, 2, 3, 3});
  const Tensor w3 = s.random({3, 2, 1, 2, 2});
  const Tensor b3 = s.random({3});
  s.input_case("convolve3d/x", x3,
               [&](Tape& t, const Var& x) { return convolve(x, t.constant(w3), t.constant(b3), 1, 3); });
  s.input_case("convolve3d/kernels", w3,
               [&](Tape& t, const Var& w) { return convolve(t.constant(x3), w, t.constant(b3), 1, 3); });
  s.input_case("convolve3d/bias", b3,
               [&](Tape& t, const Var& b) { return convolve(t.constant(x3), t.constant(w3), b, 1, 3); });
  const Tensor x2 = s.random({3, 5, 5});
  const Tensor w2 = s.random({2, 3, 2, 2});
  const Tensor b2 = s.random({2});
  s.input_case("convolve2d/x", x2,
               [&](Tape& t, const Var& x) { return convolve(x, t.constant(w2), t.constant(b2), 2, 2); });
  s.input_case("convolve2d/kernels", w2,
               [&](Tape& t, const Var& w) { return convolve(t.constant(x2), w, t.constant(b2), 2, 2); });

  const Tensor lx = s.random({3, 4});
  const Tensor lw = s.random({4, 5});
  const Tensor lb = s.random({5});
  s.input_case("linear/x", lx, [&](Tape& t, const Var& x) { return linear(x, t.constant(lw), t.constant(lb)); });
  s.input_case("linear/weight", lw, [&](Tape& t, const Var& w) { return linear(t.constant(lx), w, t.constant(lb)); });
  s.input_case("linear/bias", lb, [&](Tape& t, const Var& b) { return linear(t.constant(lx), t.constant(lw), b); });
  const Tensor target = s.random({3, 5});
  s.input_case("mse/linear", lx, [&](Tape& t, const Var& x) {
    return mse(linear(x, t.constant(lw), t.constant(lb)), t.constant(target));
  });

  const std::uint64_t mask_seed = s.next_seed();
  s.input_case("dropout", c, [&](Tape&, const Var& x) {
    std::mt19937_64 mask(mask_seed);
    return dropout(x, 0.3, true, mask);
  });

  const Tensor c2 = s.random({2, 2, 4});
  s.input_case("concat", c, [&](Tape& t, const Var& x) {
    const std::array<Var, 2> parts{x, t.constant(c2)};
    return concat(parts, 1);
  });
  const Tensor grid = s.random({3, 2, 2, 2});
  const Tensor vec = s.random({4});
  s.input_case("broadcast_concat/x", grid, [&](Tape& t, const Var& x) { return broadcast_concat(x, t.constant(vec)); });
  s.input_case("broadcast_concat/v", vec, [&](Tape& t, const Var& v) { return broadcast_concat(t.constant(grid), v); });
  s.input_case("reshape", c, [](Tape&, const Var& x) { return reshape(x, {4, 6}); });
  s.input_case("transpose", a, [](Tape&, const Var& x) { return transpose(x); });
  const Tensor c_target = s.random({2, 3, 4});
  s.input_case("mse", c, [&](Tape& t, const Var& x) { return mse(x, t.constant(c_target)); });
  s.input_case("sum", c, [](Tape&, const Var& x) { return sum(x); });
  s.input_case("mean", c, [](Tape&, const Var& x) { return mean(x); });

  const Tensor gain = s.random({4});
  const Tensor bias = s.random({4});
  s.input_case("layer_norm/x", c,
               [&](Tape& t, const Var& x) { return layer_norm(x, t.constant(gain), t.constant(bias)); });
  s.input_case("layer_norm/gain", gain,
               [&](Tape& t, const Var& g) { return layer_norm(t.constant(c), g, t.constant(bias)); });
  s.input_case("layer_norm/bias", bias,
               [&](Tape& t, const Var& b) { return layer_norm(t.constant(c), t.constant(gain), b); });
  s.input_case("median_rows/odd", s.random({5, 3}), [](Tape&, const Var& x) { return median_rows(x); });
  s.input_case("median_rows/even", s.random({4, 3}), [](Tape&, const Var& x) { return median_rows(x); });
}

void model_cases(Suite& s, const GradCheckSuiteOptions& options) {
  const ModelConfig cfg = gradcheck_config();
  FusionModel model = FusionModel::init(cfg, s.next_seed());
  const VideoSample sample = random_sample(cfg, 2, s.next_seed());
  const auto& ch = sample.chunks.front();
  const std::size_t k = options.coords_per_param;
  const double res = options.resolution;

  {
    std::vector<Parameter*> params;
    model.positional.collect(params);
    s.param_case("spatiotemporal_encoding", params,
                 [&](Tape& t) { return spatiotemporal_encoding(t, model.positional); }, k, res);
  }
  {
    std::vector<Parameter*> params;
    model.pipeline.collect(params);
    const std::uint64_t drop_seed = s.next_seed();
    s.param_case("prepare_query", params, [&](Tape& t) {
      std::mt19937_64 mask(drop_seed);
      return prepare_query(t.constant(ch.face), sample.metadata, model.pipeline, cfg, true, mask);
    }, k, res);
    s.param_case("prepare_keys_values", params, [&](Tape& t) {
      const Var ste = spatiotemporal_encoding(t, model.positional);
      const auto kv = prepare_keys_values(t.constant(ch.context), ste, t.constant(behaviour_tensor(ch.behaviour)),
                                          t.constant(ch.audio), model.pipeline, cfg);
      const std::array<Var, 2> both{kv.keys, kv.values};
      return concat(both, 0);
    }, k, res);
  }
  {
    const Tensor q = s.random({1, cfg.model_dim});
    const Tensor keys = s.random({cfg.tokens(), cfg.model_dim});
    const Tensor values = s.random({cfg.tokens(), cfg.model_dim});
    std::vector<Parameter*> params;
    model.transformer.layers.front().collect(params);
    s.param_case("encoder_layer", params, [&](Tape& t) {
      return encoder_layer(t.constant(q), t.constant(keys), t.constant(values), model.transformer.layers.front());
    }, k, res);
    s.input_case("encoder_layer/query", q, [&](Tape& t, const Var& x) {
      return encoder_layer(x, t.constant(keys), t.constant(values), model.transformer.layers.front());
    }, res);
    s.input_case("encoder_layer/keys", keys, [&](Tape& t, const Var& x) {
      return encoder_layer(t.constant(q), x, t.constant(values), model.transformer.layers.front());
    }, res);
  }
  {
    const std::array<Tensor, 3> seq{s.random({cfg.model_dim}), s.random({cfg.model_dim}), s.random({cfg.model_dim})};
    std::vector<Parameter*> params;
    model.lstm.collect(params);
    s.param_case("lstm_sequence", params, [&](Tape& t) {
      std::vector<Var> xs;
      for (const auto& x : seq) xs.push_back(t.constant(x));
      return lstm_sequence(xs, model.lstm);
    }, k, res);
  }
  {
    const Tensor hidden = s.random({cfg.model_dim});
    std::vector<Parameter*> params;
    model.head.collect(params);
    const std::uint64_t drop_seed = s.next_seed();
    s.param_case("head_forward", params, [&](Tape& t) {
      std::mt19937_64 mask(drop_seed);
      return head_forward(t.constant(hidden), t.constant(sample.transcript), model.head, cfg.dropout, true, mask);
    }, k, res);
  }

  const Tensor target = sample.targets.to_tensor();
  auto end_to_end = [&](const std::string& name, FusionModel& m) {
    const std::uint64_t drop_seed = s.next_seed();
    s.param_case(name, m.parameters(), [&](Tape& t) {
      std::mt19937_64 mask(drop_seed);
      return mse(model_forward(t, m, sample, true, mask), t.constant(target));
    }, k, res);
  };
  end_to_end("model_forward", model);
  ModelConfig no_lstm = cfg;
  no_lstm.inputs.lstm = false;
  FusionModel median_model = FusionModel::init(no_lstm, s.next_seed());
  end_to_end("model_forward/median", median_model);
}

}  // namespace

ModelConfig gradcheck_config() { return ModelConfig::toy(); }

VideoSample random_sample(const ModelConfig& cfg, std::size_t chunks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VideoSample s;
  s.id = "random";
  for (std::size_t i = 0; i < chunks; ++i) {
    ChunkFeatures ch;
    ch.face = uniform_tensor(cfg.face_shape, 1.0, rng);
    ch.context = uniform_tensor(cfg.context_shape, 1.0, rng);
    ch.audio = uniform_tensor({cfg.audio_dim}, 1.0, rng);
    for (auto& b : ch.behaviour.values) b = unit(rng);
    s.chunks.push_back(std::move(ch));
  }
  s.metadata.ethnicity = {0.0, 1.0, 0.0};
  s.metadata.gender = {0.0, 1.0};
  s.metadata.age = unit(rng);
  s.metadata.attractiveness = 0.0;
  s.transcript = uniform_tensor({cfg.transcript_dim}, 1.0, rng);
  for (auto& v : s.targets.values) v = unit(rng);
  return s;
}

std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  Suite s(options);
  op_cases(s);
  model_cases(s, options);
  return std::move(s).results();
}

}  // namespace traitfuse
