#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "traitfuse/errors.hpp"
#include "traitfuse/grad_check.hpp"
#include "traitfuse/mprt.hpp"
#include "traitfuse/ops.hpp"

using namespace traitfuse;
using tf_test::check_tensor;
using tf_test::random_tensor;

namespace {

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape t;
  return f(t).value();
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at({1, 2}) == 1.5);
  t.at({1, 2}) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK_THROWS(t.at({2, 0}));
  CHECK(Tensor::scalar(3.0).item() == 3.0);
  CHECK_THROWS(t.item());
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS(t.reshaped({4, 2}));
  CHECK_THROWS(Tensor({2, 0}));
  CHECK(Tensor::vector({}).size() == 0);
}

TEST_CASE("matmul") {
  const auto id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const auto b = Tensor::matrix(2, 2, {3, 4, 5, 6});
  check_tensor(eval([&](Tape& t) { return matmul(t.constant(id), t.constant(b)); }), b);
  CHECK(eval([](Tape& t) {
          return matmul(t.constant(Tensor::matrix(1, 1, {2})), t.constant(Tensor::matrix(1, 1, {3})));
        }).item() == 6.0);

  // d/da sum(a b) = b^T
  const auto g = tf_test::tape_gradient(
      [](Tape& t, const Var& a) { return sum(matmul(a, t.constant(Tensor::matrix(2, 1, {3, 4})))); },
      Tensor::matrix(1, 2, {1, 2}));
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-12));

  Tape t;
  CHECK_THROWS_AS(matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3}))), DimensionError);
}

TEST_CASE("activations") {
  const auto r = eval([](Tape& t) { return relu(t.constant(Tensor::vector({-1, 0, 2}))); });
  check_tensor(r, Tensor::vector({0, 0, 2}));
  CHECK(eval([](Tape& t) { return sigmoid(t.constant(Tensor::scalar(0))); }).item() == 0.5);

  const auto g = tf_test::tape_gradient([](Tape&, const Var& x) { return sum(relu(x)); }, Tensor::vector({-1, 2}));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
}

TEST_CASE("softmax") {
  auto sm = [](std::vector<double> v) {
    return eval([&](Tape& t) { return softmax(t.constant(Tensor::vector(v)), 0); });
  };
  check_tensor(sm({0, 0}), Tensor::vector({0.5, 0.5}));
  check_tensor(sm({1000, 1000}), Tensor::vector({0.5, 0.5}));
  check_tensor(sm({std::log(2.0), 0}), Tensor::vector({2.0 / 3.0, 1.0 / 3.0}));

  SUBCASE("rows are distributions and shift invariant") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto x = random_tensor({3, 7}, seed, -30, 30);
      const auto y = eval([&](Tape& t) { return softmax(t.constant(x), 1); });
      for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 7; ++c) {
          CHECK(y.at({r, c}) >= 0.0);
          s += y.at({r, c});
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
      for (std::size_t c = 0; c < 7; ++c) x.at({1, c}) += 123.25;
      const auto shifted = eval([&](Tape& t) { return softmax(t.constant(x), 1); });
      CHECK(max_abs_diff(y, shifted) < 1e-12);
    }
  }
}

TEST_CASE("pool_max") {
  const std::array<std::size_t, 1> k1{2};
  const auto p = eval([&](Tape& t) { return pool_max(t.constant(Tensor::vector({1, 3, 2, 4})), k1, k1); });
  check_tensor(p, Tensor::vector({3, 4}));

  const std::array<std::size_t, 3> k{1, 2, 2};
  const auto c = eval([&](Tape& t) { return pool_max(t.constant(Tensor({4, 3, 6, 6}, 2.5)), k, k); });
  CHECK(c.shape() == Shape{4, 3, 3, 3});
  for (double v : c.data()) CHECK(v == 2.5);

  Tape t;
  const auto big = pool_max(t.constant(Tensor({64, 8, 14, 14})), k, k);
  CHECK(big.shape() == Shape{64, 8, 7, 7});

  SUBCASE("ties route the gradient to the first maximum") {
    const auto g = tf_test::tape_gradient(
        [&](Tape&, const Var& x) { return sum(pool_max(x, k1, k1)); }, Tensor::vector({5, 5, 1, 1}));
    check_tensor(g, Tensor::vector({1, 0, 1, 0}));
  }

  SUBCASE("extent formula over random parameterizations") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t in = 1 + rng() % 9, kern = 1 + rng() % in, stride = 1 + rng() % 3;
      const std::array<std::size_t, 2> kk{kern, 1}, ss{stride, 1};
      Tape tt;
      const auto y = pool_max(tt.constant(Tensor({2, in, 3})), kk, ss);
      CHECK(y.shape() == Shape{2, (in - kern) / stride + 1, 3});
    }
  }
}

TEST_CASE("convolve") {
  SUBCASE("unit kernel is the identity") {
    const auto x = random_tensor({1, 3, 4, 5}, 1);
    const auto y = eval([&](Tape& t) {
      return convolve(t.constant(x), t.constant(Tensor({1, 1, 1, 1, 1}, 1.0)), t.constant(Tensor({1})), 1, 3);
    });
    check_tensor(y, x);
  }
  Tape t;
  const auto a = convolve(t.constant(Tensor({64, 8, 14, 14})), t.constant(Tensor({16, 64, 1, 1, 1})),
                          t.constant(Tensor({16})), 1, 3);
  CHECK(a.shape() == Shape{16, 8, 14, 14});
  const auto b =
      convolve(t.constant(Tensor({4, 7, 7})), t.constant(Tensor({6, 4, 2, 2})), t.constant(Tensor({6})), 1, 2);
  CHECK(b.shape() == Shape{6, 6, 6});
  CHECK_THROWS_AS(
      convolve(t.constant(Tensor({4, 7, 7})), t.constant(Tensor({6, 3, 2, 2})), t.constant(Tensor({6})), 1, 2),
      DimensionError);

  SUBCASE("matches a direct sum") {
    const auto x = random_tensor({2, 5, 4}, 2);
    const auto w = random_tensor({3, 2, 2, 3}, 3);
    const auto bias = random_tensor({3}, 4);
    const auto y = eval([&](Tape& tt) { return convolve(tt.constant(x), tt.constant(w), tt.constant(bias), 2, 2); });
    REQUIRE(y.shape() == Shape{3, 2, 1});
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < 2; ++i) {
        double s = bias[k];
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t a2 = 0; a2 < 2; ++a2)
            for (std::size_t b2 = 0; b2 < 3; ++b2) s += w.at({k, c, a2, b2}) * x.at({c, 2 * i + a2, b2});
        CHECK(y.at({k, i, 0}) == doctest::Approx(s).epsilon(1e-12));
      }
  }
}

TEST_CASE("linear") {
  const auto x = Tensor::vector({1, 1});
  const auto y = eval([&](Tape& t) {
    return linear(t.constant(x), t.constant(Tensor::matrix(2, 1, {1, 1})), t.constant(Tensor::vector({0.5})));
  });
  check_tensor(y, Tensor::vector({2.5}));
  const auto z = random_tensor({3, 4}, 5);
  const auto id = eval([&](Tape& t) {
    return linear(t.constant(z), t.constant(Tensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1})),
                  t.constant(Tensor({4})));
  });
  check_tensor(id, z);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({4, 5}, 6);
  for (double p : {0.0, 0.3, 0.9}) {
    CHECK(eval([&](Tape& t) { return dropout(t.constant(x), p, false, rng); }) == x);
  }
  CHECK(eval([&](Tape& t) { return dropout(t.constant(x), 0.0, true, rng); }) == x);

  const auto ones = Tensor({100000}, 1.0);
  const auto m = eval([&](Tape& t) { return mean(dropout(t.constant(ones), 0.2, true, rng)); }).item();
  CHECK(std::abs(m - 1.0) < 0.01);

  Tape t;
  CHECK_THROWS_AS(dropout(t.constant(x), 1.0, true, rng), ParameterError);
}

TEST_CASE("concat and broadcast_concat") {
  const std::array<Tensor, 2> parts{Tensor::vector({1}), Tensor::vector({2})};
  const auto c = eval([&](Tape& t) {
    const std::array<Var, 2> vs{t.constant(parts[0]), t.constant(parts[1])};
    return concat(vs, 0);
  });
  check_tensor(c, Tensor::vector({1, 2}));

  Tape t;
  const auto x = random_tensor({64, 8, 7, 7}, 7);
  const auto v = random_tensor({13}, 8);
  const auto y = broadcast_concat(t.constant(x), t.constant(v));
  REQUIRE(y.shape() == Shape{77, 8, 7, 7});
  CHECK(y.value().at({0, 3, 2, 1}) == x.at({0, 3, 2, 1}));
  CHECK(y.value().at({64 + 5, 3, 2, 1}) == v[5]);
  CHECK(broadcast_concat(t.constant(x), t.constant(Tensor::vector({}))).value() == x);
}

TEST_CASE("mse") {
  auto m = [](std::vector<double> p, std::vector<double> q) {
    return eval([&](Tape& t) { return mse(t.constant(Tensor::vector(p)), t.constant(Tensor::vector(q))); }).item();
  };
  CHECK(m({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(m({1, 0}, {0, 0}) == 0.5);
  CHECK(m({.6, .4}, {.5, .5}) == doctest::Approx(0.01).epsilon(1e-12));
  Tape t;
  CHECK_THROWS_AS(mse(t.constant(Tensor({2})), t.constant(Tensor({3}))), DimensionError);
}

TEST_CASE("backward") {
  const auto g = tf_test::tape_gradient([](Tape&, const Var& x) { return sum(x); }, random_tensor({2, 3, 2}, 9));
  for (double v : g.data()) CHECK(v == 1.0);

  const auto g2 = tf_test::tape_gradient(
      [](Tape& t, const Var& x) { return mse(x, t.constant(Tensor::vector({0}))); }, Tensor::vector({2}));
  CHECK(g2[0] == doctest::Approx(4.0).epsilon(1e-12));

  SUBCASE("disjoint branches add") {
    const auto x = random_tensor({5}, 10);
    auto left = [](const Var& v) { return sum(tanh(v)); };
    auto right = [](const Var& v) { return sum(mul(v, v)); };
    const auto gl = tf_test::tape_gradient([&](Tape&, const Var& v) { return left(v); }, x);
    const auto gr = tf_test::tape_gradient([&](Tape&, const Var& v) { return right(v); }, x);
    const auto both = tf_test::tape_gradient([&](Tape&, const Var& v) { return add(left(v), right(v)); }, x);
    for (std::size_t i = 0; i < 5; ++i) CHECK(both[i] == doctest::Approx(gl[i] + gr[i]).epsilon(1e-12));
  }

  SUBCASE("order is the exact reverse of recording") {
    Tape t;
    const auto x = t.input(Tensor::vector({1, 2}));
    const auto y = sum(tanh(scale(x, 2)));
    t.backward(y);
    const auto& order = t.backward_order();
    for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i] < order[i - 1]);
    CHECK_THROWS_AS(t.input(Tensor::vector({1})), UsageError);
  }

  SUBCASE("constants get no gradient") {
    Tape t;
    const auto c = t.constant(Tensor::vector({1, 2}));
    const auto x = t.input(Tensor::vector({3, 4}));
    t.backward(sum(mul(c, x)));
    CHECK(t.grad_if_any(c.id()) == nullptr);
  }

  Tape t;
  CHECK_THROWS_AS(t.backward(t.input(Tensor::vector({1, 2}))), UsageError);
}

TEST_CASE("grad_check") {
  CHECK(grad_check([](Tape&, const Var& x) { return sum(x); }, random_tensor({3, 4}, 11)) < 1e-10);

  const auto w = random_tensor({4, 3}, 12);
  const auto b = random_tensor({3}, 13);
  const auto target = random_tensor({5, 3}, 14);
  auto f = [&](Tape& t, const Var& x) {
    return mse(linear(x, t.constant(w), t.constant(b)), t.constant(target));
  };
  CHECK(grad_check(f, random_tensor({5, 4}, 15), 1e-6) < 1e-4);

  SUBCASE("agrees with an independent central difference") {
    const auto x = random_tensor({5, 4}, 16);
    const auto analytic = tf_test::tape_gradient(f, x);
    const auto numeric = tf_test::numeric_gradient(
        [&](const Tensor& v) {
          Tape t;
          return f(t, t.constant(v)).value().item();
        },
        x);
    CHECK(tf_test::max_rel(analytic, numeric) < 1e-6);
  }

  SUBCASE("detects a wrong gradient") {
    auto broken = [](Tape& t, const Var& x) {
      // Value of x*x, gradient of x: a deliberately inconsistent node.
      Tensor v = x.value();
      for (auto& e : v.data()) e *= e;
      return sum(t.record("broken_square", std::move(v), {x.id()}, [](Tape& tape, std::size_t node) {
        const auto in = tape.inputs(node)[0];
        auto& g = tape.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += tape.grad_of(node)[i];
      }));
    };
    CHECK(grad_check(broken, Tensor::vector({0.7, -1.3})) > 0.1);
  }
}

TEST_CASE("forward ops stay finite") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape t;
    const auto x = t.constant(random_tensor({4, 6}, seed, -50, 50));
    std::mt19937_64 rng(seed);
    const std::array<std::size_t, 1> k{2};
    for (const auto& v : {relu(x), sigmoid(x), tanh(x), softmax(x, 0), softmax(x, 1), pool_max(x, k, k),
                          dropout(x, 0.5, true, rng), transpose(x), mean(x), median_rows(x),
                          layer_norm(x, t.constant(Tensor({6}, 1.0)), t.constant(Tensor({6})))}) {
      CHECK(v.value().all_finite());
    }
  }
}

TEST_CASE("median_rows") {
  const auto odd = eval([](Tape& t) { return median_rows(t.constant(Tensor::matrix(3, 2, {5, 1, 2, 9, 4, 3}))); });
  check_tensor(odd, Tensor::vector({4, 3}).reshaped({2}));
  const auto even =
      eval([](Tape& t) { return median_rows(t.constant(Tensor::matrix(4, 1, {1, 7, 3, 5}))); });
  CHECK(even[0] == 4.0);
}

TEST_CASE("layer_norm") {
  const auto x = random_tensor({2, 8}, 20, -3, 3);
  const auto y = eval([&](Tape& t) { return layer_norm(t.constant(x), t.constant(Tensor({8}, 1.0)), t.constant(Tensor({8}))); });
  for (std::size_t r = 0; r < 2; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at({r, c}) / 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m) / 8;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("mprt round trip") {
  const auto x = random_tensor({2, 3, 4}, 21);
  CHECK(decode_mprt(encode_mprt(x, Dtype::f64)) == x);

  const auto bytes = encode_mprt(Tensor::matrix(1, 2, {1.5, -2.0}), Dtype::f32);
  REQUIRE(bytes.size() == 4 + 3 + 2 * 4 + 2 * 4);
  CHECK(bytes[0] == 'M');
  CHECK(bytes[3] == 'T');
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[5] == 0);  // f32
  CHECK(bytes[6] == 2);  // rank
  CHECK(bytes[7] == 1);  // extent 0, little endian
  CHECK(bytes[11] == 2);
  const auto f32 = decode_mprt(bytes);
  CHECK(f32.at({0, 0}) == 1.5);
  CHECK(f32.at({0, 1}) == -2.0);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_mprt(bad), DataError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_mprt(bad), DataError);

  const auto dir = tf_test::scratch_dir("mprt");
  write_mprt(dir / "x.mprt", x, Dtype::f64);
  CHECK(read_mprt(dir / "x.mprt") == x);
  CHECK_THROWS_AS(read_mprt(dir / "missing.mprt"), IoError);
}
