#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "traitfuse/errors.hpp"
#include "traitfuse/positional.hpp"
#include "traitfuse/qkv.hpp"

using namespace traitfuse;
using tf_test::random_tensor;

namespace {

EncodingTables tables(std::uint64_t seed, std::size_t t = 8, std::size_t h = 3, std::size_t w = 2) {
  std::mt19937_64 rng(seed);
  return init_tables(t, h, w, 16, 16, 32, rng);
}

Tensor encode(const EncodingTables& e) {
  Tape t;
  return spatiotemporal_encoding(t, e).value();
}

void zero(Parameter& p) {
  for (auto& v : p.value.data()) v = 0.0;
}

}  // namespace

TEST_CASE("init_tables") {
  const auto a = tables(1);
  const auto b = tables(1);
  CHECK(a.temporal_table.value == b.temporal_table.value);
  CHECK(a.spatial_mlp.second.weight.value == b.spatial_mlp.second.weight.value);
  CHECK(a.temporal_table.value.shape() == Shape{8, 16});
  CHECK(a.spatial_table.value.shape() == Shape{6, 16});
  CHECK_FALSE(tables(2).temporal_table.value == a.temporal_table.value);
  for (double v : a.temporal_table.value.data()) CHECK(std::abs(v) <= 0.1);
  std::mt19937_64 rng(0);
  CHECK_THROWS_AS(init_tables(0, 3, 3, 16, 16, 32, rng), ParameterError);
}

TEST_CASE("spatiotemporal_encoding structure") {
  const auto e = tables(3);
  const auto y = encode(e);
  REQUIRE(y.shape() == Shape{32, 8, 3, 2});

  for (std::size_t c = 0; c < 32; ++c)
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t w = 0; w < 2; ++w) {
          if (c < 16) CHECK(y.at({c, t, h, w}) == y.at({c, t, 0, 0}));  // temporal part ignores (h, w)
          else CHECK(y.at({c, t, h, w}) == y.at({c, 0, h, w}));          // spatial part ignores t
        }

  SUBCASE("zero second-layer weights leave the biases everywhere") {
    auto z = e;
    zero(z.temporal_mlp.second.weight);
    zero(z.spatial_mlp.second.weight);
    const auto c = encode(z);
    for (std::size_t ch = 0; ch < 32; ++ch) {
      const double b = ch < 16 ? z.temporal_mlp.second.bias.value[ch] : z.spatial_mlp.second.bias.value[ch - 16];
      for (std::size_t i = 0; i < 8 * 3 * 2; ++i) CHECK(c[ch * 48 + i] == b);
    }
  }

  SUBCASE("swapping table rows permutes only the matching slices") {
    auto s = e;
    auto& tt = s.temporal_table.value;
    for (std::size_t k = 0; k < 16; ++k) std::swap(tt.at({1, k}), tt.at({5, k}));
    const auto p = encode(s);
    for (std::size_t c = 0; c < 32; ++c)
      for (std::size_t t = 0; t < 8; ++t) {
        const std::size_t src = c < 16 && t == 1 ? 5 : c < 16 && t == 5 ? 1 : t;
        CHECK(p.at({c, t, 2, 1}) == y.at({c, src, 2, 1}));
      }

    auto sp = e;
    auto& st = sp.spatial_table.value;
    for (std::size_t k = 0; k < 16; ++k) std::swap(st.at({0, k}), st.at({4, k}));  // (0,0) <-> (2,0)
    const auto q = encode(sp);
    for (std::size_t c = 0; c < 32; ++c) {
      CHECK(q.at({c, 3, 0, 0}) == y.at({c, 3, c < 16 ? 0u : 2u, 0}));
      CHECK(q.at({c, 3, 2, 0}) == y.at({c, 3, c < 16 ? 2u : 0u, 0}));
      CHECK(q.at({c, 3, 1, 1}) == y.at({c, 3, 1, 1}));
    }
  }
}

TEST_CASE("spatiotemporal_encoding gradients reach every parameter") {
  auto e = tables(4, 2, 2, 2);
  const auto w = random_tensor({32, 2, 2, 2}, 5, 0.5, 1.5);
  auto readout = [&](Tape& t) { return sum(mul(spatiotemporal_encoding(t, e), t.constant(w))); };
  std::vector<Parameter*> params;
  e.collect(params);
  REQUIRE(params.size() == 10);

  Tape tape;
  tape.backward(readout(tape));
  for (auto* p : params) {
    CAPTURE(p->name);
    const Tensor* g = tape.gradient(*p);
    REQUIRE(g != nullptr);
    // Independent central difference on the first and last coordinate.
    for (std::size_t i : {std::size_t{0}, p->value.size() - 1}) {
      const double saved = p->value[i];
      p->value[i] = saved + 1e-6;
      Tape up;
      const double fu = readout(up).value().item();
      p->value[i] = saved - 1e-6;
      Tape down;
      const double fd = readout(down).value().item();
      p->value[i] = saved;
      const double numeric = (fu - fd) / 2e-6;
      const double rel = std::abs((*g)[i] - numeric) / std::max({std::abs((*g)[i]), std::abs(numeric), 1e-8});
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("encode_metadata") {
  const auto m = encode_metadata("asian", "female", 50, 0.8);
  CHECK(m.values().size() == 7);
  CHECK(m.ethnicity == std::array<double, 3>{0, 0, 1});
  CHECK(m.gender == std::array<double, 2>{0, 1});
  CHECK(m.age == 0.5);
  CHECK(m.attractiveness == 0.0);
  CHECK(encode_metadata("caucasian", "male", 20, 0.8).attractiveness == 0.8);
  CHECK(encode_metadata("caucasian", "male", 20, std::nullopt).attractiveness == 0.0);
  CHECK_THROWS_AS(encode_metadata("martian", "male", 20, std::nullopt), DataError);
  CHECK_THROWS_AS(encode_metadata("asian", "x", 20, std::nullopt), DataError);
  CHECK_THROWS_AS(encode_metadata("asian", "male", 140, std::nullopt), DataError);
  CHECK_THROWS_AS(encode_metadata("caucasian", "male", 20, 1.5), DataError);
}

TEST_CASE("query shape trace") {
  const ModelConfig cfg;  // face (64, 8, 14, 14)
  const std::vector<Shape> expected{{64, 8, 7, 7}, {16, 8, 7, 7}, {128, 7, 7}, {128, 3, 3},
                                    {128, 2, 2},   {512},         {128}};
  CHECK(query_shape_trace(cfg) == expected);

  ModelConfig bad = ModelConfig::toy();
  bad.face_shape = {8, 2, 4, 4};
  CHECK_THROWS_WITH_AS(query_shape_trace(bad), doctest::Contains("step"), DimensionError);
}

TEST_CASE("prepare_query") {
  const auto cfg = ModelConfig::toy();
  std::mt19937_64 rng(7);
  const auto params = PipelineParams::init(cfg, rng);
  const auto face = random_tensor(cfg.face_shape, 8);
  const auto meta = encode_metadata("caucasian", "male", 30, 0.5);
  auto run = [&](const DemographicMetadata& m, bool training, std::uint64_t seed) {
    Tape t;
    std::mt19937_64 r(seed);
    std::vector<Shape> trace;
    auto q = prepare_query(t.constant(face), m, params, cfg, training, r, &trace);
    CHECK(trace.size() == 8);
    return q.value();
  };
  const auto a = run(meta, false, 1);
  CHECK(a.shape() == Shape{cfg.model_dim});
  CHECK(run(meta, false, 2) == a);
  auto other = meta;
  other.gender = {0, 1};
  CHECK(max_abs_diff(run(other, false, 1), a) > 1e-9);
  CHECK(max_abs_diff(run(meta, true, 1), a) > 1e-9);

  Tape t;
  CHECK_THROWS_AS(prepare_query(t.constant(Tensor({8, 2, 6, 6})), meta, params, cfg, false, rng), DimensionError);
}

TEST_CASE("prepare_keys_values") {
  SUBCASE("default grids") {
    const ModelConfig cfg;
    CHECK(cfg.token_dim() == 64 + 32 + 13 + 100);
    CHECK(cfg.tokens() == 392);
    std::mt19937_64 rng(9);
    const auto params = PipelineParams::init(cfg, rng);
    Tape t;
    const auto kv = prepare_keys_values(t.constant(random_tensor(cfg.context_shape, 1)),
                                        t.constant(random_tensor({32, 8, 7, 7}, 2)),
                                        t.constant(random_tensor({13}, 3)), t.constant(random_tensor({128}, 4)),
                                        params, cfg);
    CHECK(kv.keys.shape() == Shape{392, 128});
    CHECK(kv.values.shape() == Shape{392, 128});
  }

  const auto cfg = ModelConfig::toy();
  std::mt19937_64 rng(10);
  const auto params = PipelineParams::init(cfg, rng);
  const auto context = random_tensor(cfg.context_shape, 11);
  const auto encoding = random_tensor({32, 2, 2, 2}, 12);
  const auto audio = random_tensor({cfg.audio_dim}, 13);
  auto run = [&](const PipelineParams& p, const ModelConfig& c, const Tensor& ctx, const Tensor& enc,
                 const Tensor& behaviour) {
    Tape t;
    auto kv = prepare_keys_values(t.constant(ctx), t.constant(enc), t.constant(behaviour), t.constant(audio), p, c);
    return std::pair{kv.keys.value(), kv.values.value()};
  };

  const auto [k0, v0] = run(params, cfg, context, encoding, Tensor({13}, 0.0));
  const auto [k1, v1] = run(params, cfg, context, encoding, Tensor({13}, 1.0));
  CHECK(k0.shape()[0] == cfg.tokens());
  CHECK(v0.shape()[0] == k0.shape()[0]);
  CHECK(max_abs_diff(k0, k1) > 1e-9);

  SUBCASE("token permutation permutes rows") {
    // Swap positions (t=0,h=0,w=1) and (t=1,h=1,w=0): token rows 1 and 6.
    auto ctx = context;
    auto enc = encoding;
    for (std::size_t c = 0; c < 8; ++c) std::swap(ctx.at({c, 0, 0, 1}), ctx.at({c, 1, 1, 0}));
    for (std::size_t c = 0; c < 32; ++c) std::swap(enc.at({c, 0, 0, 1}), enc.at({c, 1, 1, 0}));
    const auto [kp, vp] = run(params, cfg, ctx, enc, Tensor({13}, 0.0));
    for (std::size_t row = 0; row < 8; ++row) {
      const std::size_t src = row == 1 ? 6 : row == 6 ? 1 : row;
      for (std::size_t j = 0; j < cfg.model_dim; ++j) {
        CHECK(kp.at({row, j}) == doctest::Approx(k0.at({src, j})).epsilon(1e-12));
        CHECK(vp.at({row, j}) == doctest::Approx(v0.at({src, j})).epsilon(1e-12));
      }
    }
  }

  SUBCASE("removing the behaviour channels equals zeroing them") {
    auto no_b = cfg;
    no_b.inputs.behaviour = false;
    CHECK(no_b.token_dim() == cfg.token_dim() - 13);
    auto cut = params;
    const std::size_t first = 8 + 32;
    for (Linear* l : {&cut.key, &cut.value}) {
      const auto& w = l->weight.value;
      Tensor smaller({w.extent(0) - 13, w.extent(1)});
      for (std::size_t r = 0, out = 0; r < w.extent(0); ++r) {
        if (r >= first && r < first + 13) continue;
        for (std::size_t c = 0; c < w.extent(1); ++c) smaller.at({out, c}) = w.at({r, c});
        ++out;
      }
      l->weight.value = smaller;
    }
    const auto [kc, vc] = run(cut, no_b, context, encoding, Tensor({13}, 0.0));
    CHECK(max_abs_diff(kc, k0) < 1e-12);
    CHECK(max_abs_diff(vc, v0) < 1e-12);
  }
}
