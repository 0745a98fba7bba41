#include <doctest.h>

#include <cmath>
#include <numeric>

#include "quan/autodiff.hpp"
#include "quan/gradcheck.hpp"
#include "quan/random.hpp"

using namespace quan;

namespace {

Tensor<double> randn(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * standard_normal(rng);
  return t;
}

// Independent layer-norm reference: plain loops, two-pass variance.
std::vector<double> layer_norm_ref(const std::vector<double>& x, double eps) {
  double mu = 0;
  for (double v : x) mu += v;
  mu /= double(x.size());
  double var = 0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= double(x.size());
  std::vector<double> y;
  for (double v : x) y.push_back((v - mu) / std::sqrt(var + eps));
  return y;
}

}  // namespace

TEST_CASE("tensor shape contract") {
  Tensor<double> t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS(Tensor<double>(Shape{2, 0}));
  CHECK_THROWS(Tensor<double>(Shape{2, 2}, std::vector<double>(3)));
  CHECK(t.reshaped(Shape{3, 2}).cols() == 2);
}

TEST_CASE("softmax_rows examples") {
  Tape<double> tape;
  auto y = tape.value(tape.softmax_rows(tape.constant(Tensor<double>(Shape{1, 4}))));
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == 0.25);

  auto one = tape.value(tape.softmax_rows(tape.constant(Tensor<double>(Shape{1, 1}, 3.7))));
  CHECK(one[0] == 1.0);

  Tensor<double> logs(Shape{1, 3}, std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)});
  auto z = tape.value(tape.softmax_rows(tape.constant(logs)));
  CHECK(z[0] == doctest::Approx(1.0 / 6).epsilon(1e-14));
  CHECK(z[1] == doctest::Approx(2.0 / 6).epsilon(1e-14));
  CHECK(z[2] == doctest::Approx(3.0 / 6).epsilon(1e-14));
}

TEST_CASE("softmax_rows rejects non-finite logits naming the index") {
  Tape<double> tape;
  Tensor<double> x(Shape{2, 3});
  x[4] = std::nan("");
  try {
    tape.softmax_rows(tape.constant(x));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("index 4") != std::string::npos);
  }
}

TEST_CASE("softmax_rows rows sum to one and ignore constant shifts") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto x = randn(Shape{5, 7}, rng, 3.0);
    Tensor<double> shifted = x;
    for (std::size_t r = 0; r < 5; ++r) {
      const double c = 10.0 * standard_normal(rng);
      for (std::size_t k = 0; k < 7; ++k) shifted.at(r, k) += c;
    }
    Tape<double> tape;
    auto y = tape.value(tape.softmax_rows(tape.constant(x)));
    auto ys = tape.value(tape.softmax_rows(tape.constant(shifted)));
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) {
        CHECK(y.at(r, k) >= 0.0);
        s += y.at(r, k);
        CHECK(std::abs(y.at(r, k) - ys.at(r, k)) <= 1e-12);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Tape<double> tape;
  Var ones = tape.constant(Tensor<double>(Shape{3}, 1.0));
  Var zeros = tape.constant(Tensor<double>(Shape{3}));
  auto c = tape.value(tape.layer_norm(tape.constant(Tensor<double>(Shape{1, 3}, 2.5)), ones, zeros));
  for (double v : c.values()) CHECK(v == 0.0);

  Var g2 = tape.constant(Tensor<double>(Shape{2}, 1.0));
  Var b2 = tape.constant(Tensor<double>(Shape{2}));
  auto s = tape.value(tape.layer_norm(tape.constant(Tensor<double>(Shape{1, 2}, std::vector<double>{-1, 1})), g2, b2, 1e-300));
  CHECK(s[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-15));

  auto y = tape.value(tape.layer_norm(tape.constant(Tensor<double>(Shape{1, 3}, std::vector<double>{0, 2, 4})), ones, zeros));
  auto ref = layer_norm_ref({0, 2, 4}, 1e-5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-14);
}

TEST_CASE("layer_norm standardises rows and is affine invariant") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    auto x = randn(Shape{4, 9}, rng, 5.0);
    Tensor<double> ax = x;
    const double a = 0.5 + 3.0 * uniform01(rng), c = 20.0 * standard_normal(rng);
    for (auto& v : ax.values()) v = a * v + c;
    Tape<double> tape;
    Var g = tape.constant(Tensor<double>(Shape{9}, 1.0));
    Var b = tape.constant(Tensor<double>(Shape{9}));
    auto y = tape.value(tape.layer_norm(tape.constant(x), g, b, 1e-12));
    auto ya = tape.value(tape.layer_norm(tape.constant(ax), g, b, 1e-12));
    for (std::size_t r = 0; r < 4; ++r) {
      double mu = 0, var = 0;
      for (std::size_t k = 0; k < 9; ++k) mu += y.at(r, k);
      mu /= 9;
      for (std::size_t k = 0; k < 9; ++k) var += (y.at(r, k) - mu) * (y.at(r, k) - mu);
      var /= 9;
      CHECK(std::abs(mu) <= 1e-10);
      CHECK(std::abs(var - 1.0) <= 1e-10);
      for (std::size_t k = 0; k < 9; ++k) CHECK(std::abs(y.at(r, k) - ya.at(r, k)) <= 1e-10);
    }
  }
}

TEST_CASE("gradient_check on a scalar square") {
  ParameterStore<double> store;
  auto i = store.add("x", Shape{1}, true, 3.0);
  auto reports = gradient_check(store, [&](Tape<double>& t) {
    Var x = t.parameter(store[i]);
    return t.mul(x, x);
  });
  REQUIRE(reports.size() == 1);
  CHECK(store[i].grad[0] == 6.0);
  CHECK(reports[0].max_relative_error < 1e-9);
  CHECK(reports[0].pass);
}

TEST_CASE("gradient_check validates its inputs") {
  ParameterStore<double> store;
  auto i = store.add("x", Shape{1}, true, 1.0);
  auto sq = [&](Tape<double>& t) {
    Var x = t.parameter(store[i]);
    return t.mul(x, x);
  };
  GradCheckOptions bad;
  bad.perturbation = 1e-2;
  CHECK_THROWS_AS(gradient_check(store, sq, bad), ConfigError);

  int calls = 0;
  CHECK_THROWS_AS(gradient_check(store,
                                 [&](Tape<double>& t) {
                                   Var x = t.parameter(store[i]);
                                   return t.scale(x, double(++calls));
                                 }),
                  Error);
}

TEST_CASE("parameter gradients are zero after zeroing and accumulate across passes") {
  ParameterStore<double> store;
  auto i = store.add("w", Shape{2}, true, 1.0);
  CHECK(store[i].grad.shape() == store[i].value.shape());
  for (double g : store[i].grad.values()) CHECK(g == 0.0);
  for (int pass = 0; pass < 2; ++pass) {
    Tape<double> t;
    t.backward(t.sum_all(t.parameter(store[i])));
  }
  CHECK(store[i].grad[0] == 2.0);
  store.zero_grad();
  CHECK(store[i].grad[0] == 0.0);
}

// Every primitive's reverse-mode gradient against central differences over 20 seeds.
TEST_CASE("primitive gradients match finite differences") {
  struct Case {
    const char* name;
    std::function<Var(Tape<double>&, std::vector<Var>&)> op;
    std::vector<Shape> inputs;
  };
  Parameter<double> rm("rm", Tensor<double>(Shape{3}), false), rv("rv", Tensor<double>(Shape{3}, 1.0), false);
  std::vector<Case> cases = {
      {"matmul", [](auto& t, auto& v) { return t.matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
      {"matmul_ta", [](auto& t, auto& v) { return t.matmul(v[0], v[1], true, false); }, {{4, 3}, {4, 2}}},
      {"matmul_tb", [](auto& t, auto& v) { return t.matmul(v[0], v[1], false, true); }, {{3, 4}, {2, 4}}},
      {"matmul_tab", [](auto& t, auto& v) { return t.matmul(v[0], v[1], true, true); }, {{4, 3}, {2, 4}}},
      {"linear", [](auto& t, auto& v) { return t.linear(v[0], v[1], v[2]); }, {{3, 4}, {2, 4}, {2}}},
      {"add", [](auto& t, auto& v) { return t.add(v[0], v[1]); }, {{3, 2}, {3, 2}}},
      {"sub", [](auto& t, auto& v) { return t.sub(v[0], v[1]); }, {{3, 2}, {3, 2}}},
      {"mul", [](auto& t, auto& v) { return t.mul(v[0], v[1]); }, {{3, 2}, {3, 2}}},
      {"scale", [](auto& t, auto& v) { return t.scale(v[0], -1.7); }, {{3, 2}}},
      {"add_row", [](auto& t, auto& v) { return t.add_row(v[0], v[1]); }, {{3, 4}, {4}}},
      {"sigmoid", [](auto& t, auto& v) { return t.sigmoid(v[0]); }, {{3, 4}}},
      {"relu", [](auto& t, auto& v) { return t.relu(v[0]); }, {{3, 4}}},
      {"softmax_rows", [](auto& t, auto& v) { return t.softmax_rows(v[0]); }, {{3, 5}}},
      {"attention", [](auto& t, auto& v) { return t.attention(v[0], v[1], v[2], 2, 2); }, {{6, 4}, {4, 4}, {4, 4}}},
      {"layer_norm", [](auto& t, auto& v) { return t.layer_norm(v[0], v[1], v[2]); }, {{3, 5}, {5}, {5}}},
      {"batch_norm", [&](auto& t, auto& v) { return t.batch_norm(v[0], v[1], v[2], rm, rv, true); }, {{6, 3}, {3}, {3}}},
      {"sum0", [](auto& t, auto& v) { return t.sum(v[0], 0); }, {{3, 4}}},
      {"sum1", [](auto& t, auto& v) { return t.sum(v[0], 1); }, {{3, 4}}},
      {"mean", [](auto& t, auto& v) { return t.mean(v[0], 1); }, {{3, 4}}},
      {"reshape", [](auto& t, auto& v) { return t.reshape(v[0], Shape{2, 6}); }, {{3, 4}}},
      {"concat_cols", [](auto& t, auto& v) { return t.concat_cols(std::vector<Var>{v[0], v[1]}); }, {{3, 2}, {3, 3}}},
      {"slice_cols", [](auto& t, auto& v) { return t.slice_cols(v[0], 1, 3); }, {{3, 4}}},
      {"concat_rows", [](auto& t, auto& v) { return t.concat_rows(std::vector<Var>{v[0], v[1]}); }, {{2, 3}, {1, 3}}},
      {"gather_rows", [](auto& t, auto& v) { return t.gather_rows(v[0], std::vector<std::size_t>{2, 0, 2}); }, {{3, 2}}},
      {"gather", [](auto& t, auto& v) { return t.gather(v[0], {5, 1, 1, 0}, Shape{2, 2}); }, {{2, 3}}},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(c.name);
      CAPTURE(seed);
      Rng rng(derive_seed(seed, {7}));
      ParameterStore<double> store;
      std::vector<std::size_t> ids;
      for (std::size_t k = 0; k < c.inputs.size(); ++k)
        ids.push_back(store.add("in" + std::to_string(k), c.inputs[k]));
      for (std::size_t k = 0; k < ids.size(); ++k) store[ids[k]].value = randn(c.inputs[k], rng);
      // Random linear read-out makes every output element matter.
      Tensor<double> readout;
      auto loss = [&](Tape<double>& t) {
        std::vector<Var> v;
        for (auto id : ids) v.push_back(t.parameter(store[id]));
        Var y = c.op(t, v);
        if (readout.empty()) {
          Rng r2(derive_seed(seed, {8}));
          readout = randn(t.shape(y), r2);
        }
        return t.sum_all(t.mul(y, t.constant(readout)));
      };
      auto reports = gradient_check(store, loss);
      for (const auto& r : reports) {
        CAPTURE(r.parameter);
        CHECK(r.max_relative_error <= 1e-4);
      }
    }
  }
}

TEST_CASE("binary_cross_entropy gradient and label validation") {
  ParameterStore<double> store;
  auto i = store.add("logit", Shape{4});
  Rng rng(3);
  store[i].value = randn(Shape{4}, rng);
  std::vector<double> labels{0, 1, 1, 0};
  auto reports = gradient_check(store, [&](Tape<double>& t) {
    return t.binary_cross_entropy(t.sigmoid(t.parameter(store[i])), labels);
  });
  CHECK(all_pass(reports));
  Tape<double> t;
  std::vector<double> bad{0, 2, 1, 0};
  CHECK_THROWS_AS(t.binary_cross_entropy(t.constant(Tensor<double>(Shape{4}, 0.5)), bad), ConfigError);
}

TEST_CASE("forward primitives are deterministic") {
  Rng rng(11);
  auto x = randn(Shape{8, 6}, rng);
  auto run = [&] {
    Tape<double> t;
    Var a = t.constant(x);
    Var y = t.attention(a, a, a, 2, 3);
    return t.value(t.softmax_rows(t.matmul(y, a, true, false)));
  };
  CHECK(run() == run());
}
