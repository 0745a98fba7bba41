#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <numeric>

#include "quan/checkpoint.hpp"
#include "quan/gradcheck.hpp"
#include "quan/quan_model.hpp"
#include "reference.hpp"

using namespace quan;

namespace {

Tensor<double> to_tensor(const ref::Mat& m) {
  Tensor<double> t(Shape{m.size(), m[0].size()});
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[0].size(); ++c) t.at(r, c) = m[r][c];
  return t;
}

ref::Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng) {
  ref::Mat m(rows, ref::Vec(cols));
  for (auto& row : m)
    for (auto& v : row) v = standard_normal(rng);
  return m;
}

double max_diff(const Tensor<double>& t, const ref::Mat& m) {
  double d = 0;
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) d = std::max(d, std::abs(t.at(r, c) - m[r][c]));
  return d;
}

ModelConfig small_quan(std::size_t n, std::size_t ns, std::size_t layers) {
  ModelConfig c;
  c.grid_rows = 3;
  c.grid_cols = 3;
  c.n_c = 2;
  c.kernel = 2;
  c.d_h = 4;
  c.n_h = 2;
  c.n_s = ns;
  c.layers = layers;
  c.set_size = n;
  return c;
}

std::vector<const SnapshotSet*> ptrs(const std::vector<SnapshotSet>& sets) {
  std::vector<const SnapshotSet*> p;
  for (const auto& s : sets) p.push_back(&s);
  return p;
}

template <typename M>
std::vector<double> predict_with(M& model, const std::vector<SnapshotSet>& sets, const std::vector<MiniSetPlan>* plans) {
  Tape<double> tape;
  ForwardOptions opt;
  opt.plans = plans;
  auto p = ptrs(sets);
  return tape.value(model.forward(tape, p, opt)).values();
}

}  // namespace

TEST_CASE("conv output width") {
  auto width = [](std::size_t r, std::size_t c, std::size_t k, std::size_t nc) {
    ModelConfig cfg;
    cfg.grid_rows = r;
    cfg.grid_cols = c;
    cfg.kernel = k;
    cfg.n_c = nc;
    return cfg.conv_width();
  };
  CHECK(width(4, 4, 2, 7) == 63);
  CHECK(width(4, 4, 2, 8) == 72);
  CHECK(width(5, 5, 2, 16) == 256);
}

TEST_CASE("conv_forward matches a direct convolution with batch norm") {
  ModelConfig cfg = small_quan(4, 1, 1);
  cfg.grid_cols = 4;
  ParameterStore<double> store;
  auto w = add_frontend_weights(store, cfg);
  ref::randomize(store, 5);
  Rng rng(6);
  for (auto& v : store[w.bn_var].value.values()) v = 0.5 + uniform01(rng);
  for (auto& v : store[w.bn_mean].value.values()) v = standard_normal(rng);
  auto set = ref::random_set({3, 4}, 4, 9);
  std::vector<const SnapshotSet*> batch{&set};
  std::vector<std::vector<std::size_t>> orders{{0, 1, 2, 3}};
  Tape<double> tape;
  auto y = tape.value(conv_forward(tape, store, w, cfg, encode_sets<double>(batch, orders, cfg), false));
  REQUIRE(y.cols() == cfg.conv_width());
  auto F = ref::from_tensor(store[w.filters].value);
  for (std::size_t j = 0; j < 4; ++j) {
    auto expect = ref::conv(set[j], F, 2, store[w.bn_gamma].value.values(), store[w.bn_beta].value.values(),
                            store[w.bn_mean].value.values(), store[w.bn_var].value.values());
    for (std::size_t c = 0; c < expect.size(); ++c) CHECK(std::abs(y.at(j, c) - expect[c]) <= 1e-12);
  }
}

TEST_CASE("kernel larger than the grid is a configuration error") {
  ModelConfig cfg = small_quan(4, 1, 1);
  cfg.kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("model config invariants") {
  ModelConfig cfg = small_quan(8, 2, 2);
  CHECK_NOTHROW(cfg.validate());
  cfg.n_h = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_quan(6, 2, 2);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_quan(8, 2, 2);
  nlohmann::json j = cfg;
  ModelConfig back = j.get<ModelConfig>();
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("attention block with zero query and key weights averages uniformly") {
  ParameterStore<double> store;
  auto w = add_attention_weights(store, "b", 3, 2);
  ref::randomize(store, 1);
  store[w.query].value.fill(0);
  store[w.key].value.fill(0);
  Tensor<double> probs;
  Rng rng(2);
  auto x = to_tensor(random_mat(3, 3, rng));
  Tape<double> tape;
  Var xv = tape.constant(x);
  attention_block(tape, store, w, xv, xv, 1, 1, Activation::sigmoid, &probs);
  for (double p : probs.values()) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("attention block on a single element") {
  ParameterStore<double> store;
  auto w = add_attention_weights(store, "b", 2, 2);
  ref::randomize(store, 3);
  Tensor<double> probs;
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>(Shape{1, 2}, std::vector<double>{0.3, -1.1}));
  Var y = attention_block(tape, store, w, x, x, 1, 1, Activation::sigmoid, &probs);
  CHECK(probs[0] == 1.0);
  // With one key the attention term is exactly V x.
  auto blk = ref::read_block(store, "b");
  CHECK(max_diff(tape.value(y), ref::block(blk, {{0.3, -1.1}}, {{0.3, -1.1}}, 1, false)) <= 1e-12);
}

TEST_CASE("self-attention block matches the straight-line reference") {
  // Hand-set weights, n = 2, d_in = d_h = 2, one head.
  ParameterStore<double> store;
  auto w = add_attention_weights(store, "b", 2, 2);
  store[w.query].value = Tensor<double>(Shape{2, 2}, std::vector<double>{0.5, -0.2, 0.1, 0.9});
  store[w.key].value = Tensor<double>(Shape{2, 2}, std::vector<double>{-0.3, 0.8, 0.4, 0.2});
  store[w.value].value = Tensor<double>(Shape{2, 2}, std::vector<double>{1.0, 0.3, -0.6, 0.7});
  store[w.out].value = Tensor<double>(Shape{2, 2}, std::vector<double>{0.2, -0.4, 0.9, 0.1});
  store[w.norm1_gain].value = Tensor<double>(Shape{2}, std::vector<double>{1.2, 0.8});
  store[w.norm1_bias].value = Tensor<double>(Shape{2}, std::vector<double>{0.1, -0.1});
  store[w.norm2_gain].value = Tensor<double>(Shape{2}, std::vector<double>{0.9, 1.1});
  store[w.norm2_bias].value = Tensor<double>(Shape{2}, std::vector<double>{-0.2, 0.3});
  ref::Mat x{{1.0, 0.0}, {0.5, 2.0}};
  for (auto act : {Activation::sigmoid, Activation::relu}) {
    Tape<double> tape;
    Var xv = tape.constant(to_tensor(x));
    Var y = sab_forward(tape, store, w, xv, 1, 1, act);
    CHECK(max_diff(tape.value(y), ref::block(ref::read_block(store, "b"), x, x, 1, act == Activation::relu)) <=
          1e-12);
  }
}

TEST_CASE("attention blocks match the reference over random weights, heads and batches") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t sets = 2, nq = 3, nk = 4, d_in = 5, d_h = 4, heads = 2;
    ParameterStore<double> store;
    auto w = add_attention_weights(store, "b", d_in, d_h);
    ref::randomize(store, seed + 50);
    auto q = random_mat(sets * nq, d_in, rng), k = random_mat(sets * nk, d_in, rng);
    Tape<double> tape;
    Var y = attention_block(tape, store, w, tape.constant(to_tensor(q)), tape.constant(to_tensor(k)), sets, heads,
                            Activation::relu);
    auto blk = ref::read_block(store, "b");
    for (std::size_t s = 0; s < sets; ++s) {
      ref::Mat qs(q.begin() + s * nq, q.begin() + (s + 1) * nq), ks(k.begin() + s * nk, k.begin() + (s + 1) * nk);
      auto expect = ref::block(blk, qs, ks, heads, true);
      for (std::size_t r = 0; r < nq; ++r)
        for (std::size_t c = 0; c < d_h; ++c) CHECK(std::abs(tape.value(y).at(s * nq + r, c) - expect[r][c]) <= 1e-12);
    }
  }
}

TEST_CASE("cross attention with identical query and key sets is self-attention") {
  ParameterStore<double> store;
  auto w = add_attention_weights(store, "b", 4, 4);
  ref::randomize(store, 8);
  Rng rng(9);
  auto x = to_tensor(random_mat(5, 4, rng));
  Tape<double> tape;
  Var a = tape.constant(x), b = tape.constant(x);
  auto y1 = tape.value(attention_block(tape, store, w, a, b, 1, 2, Activation::sigmoid));
  auto y2 = tape.value(sab_forward(tape, store, w, a, 1, 2, Activation::sigmoid));
  CHECK(y1 == y2);
}

TEST_CASE("cross attention on a single key") {
  ParameterStore<double> store;
  auto w = add_attention_weights(store, "b", 2, 2);
  ref::randomize(store, 4);
  ref::Mat q{{0.1, 0.2}, {-1.0, 0.4}, {0.0, 1.0}}, k{{0.7, -0.3}};
  Tensor<double> probs;
  Tape<double> tape;
  Var y = attention_block(tape, store, w, tape.constant(to_tensor(q)), tape.constant(to_tensor(k)), 1, 1,
                          Activation::sigmoid, &probs);
  for (double p : probs.values()) CHECK(p == 1.0);
  CHECK(max_diff(tape.value(y), ref::block(ref::read_block(store, "b"), q, k, 1, false)) <= 1e-12);
}

TEST_CASE("attention block rejects mismatched widths") {
  ParameterStore<double> store;
  auto w = add_attention_weights(store, "b", 3, 2);
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>(Shape{2, 2}));
  CHECK_THROWS(attention_block(tape, store, w, x, x, 1, 1, Activation::sigmoid));
}

TEST_CASE("mini-set plans") {
  auto p = identity_plan(6, 3);
  CHECK(p.mini_size() == 2);
  Rng rng(4);
  auto r = random_plan(12, 3, rng);
  CHECK_NOTHROW(r.validate());
  auto f1 = fixed_plan(12, 3, 7), f2 = fixed_plan(12, 3, 7);
  CHECK(f1.order == f2.order);
  CHECK(f1.sigma == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(identity_plan(7, 2), ConfigError);
  MiniSetPlan bad = identity_plan(4, 2);
  bad.order[0] = 1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("mssab with one mini-set is the self-attention block bit-exactly") {
  ParameterStore<double> store;
  auto w = add_mssab_weights(store, "m", 3, 4, 1);
  ref::randomize(store, 12);
  Rng rng(13);
  auto x = to_tensor(random_mat(2 * 6, 3, rng));
  Tape<double> tape;
  Var xv = tape.constant(x);
  auto y1 = tape.value(mssab_forward(tape, store, w, xv, 2, identity_plan(6, 1), 2, Activation::relu));
  auto y2 = tape.value(sab_forward(tape, store, w.sab, xv, 2, 2, Activation::relu));
  CHECK(y1 == y2);
}

TEST_CASE("mssab matches the reference recursions") {
  // N_s = 2, d_h = 2, hand-chosen fold order, then larger random cases.
  struct Case {
    std::size_t n, ns, d_in, d_h, heads;
  };
  for (Case c : {Case{4, 2, 2, 2, 1}, Case{6, 3, 3, 4, 2}, Case{12, 4, 4, 4, 4}}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ParameterStore<double> store;
      auto w = add_mssab_weights(store, "m", c.d_in, c.d_h, c.ns);
      ref::randomize(store, seed + 20);
      Rng rng(seed);
      const std::size_t sets = 2;
      auto x = random_mat(sets * c.n, c.d_in, rng);
      MiniSetPlan plan = random_plan(c.n, c.ns, rng);
      if (c.ns == 2) plan.sigma = {1, 0};
      Tape<double> tape;
      auto y = tape.value(mssab_forward(tape, store, w, tape.constant(to_tensor(x)), sets, plan, c.heads,
                                        Activation::sigmoid));
      REQUIRE(y.rows() == sets * c.n / c.ns);
      auto sab = ref::read_block(store, "m.sab"), mab = ref::read_block(store, "m.mab");
      const std::size_t out_n = c.n / c.ns;
      for (std::size_t s = 0; s < sets; ++s) {
        ref::Mat xs(x.begin() + s * c.n, x.begin() + (s + 1) * c.n);
        auto expect = ref::mssab(sab, mab, xs, plan.order, plan.sigma, c.ns, c.heads, false);
        for (std::size_t r = 0; r < out_n; ++r)
          for (std::size_t k = 0; k < c.d_h; ++k) CHECK(std::abs(y.at(s * out_n + r, k) - expect[r][k]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("mssab rejects sizes that the plan does not cover") {
  ParameterStore<double> store;
  auto w = add_mssab_weights(store, "m", 2, 2, 2);
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>(Shape{6, 2}));
  CHECK_THROWS(mssab_forward(tape, store, w, x, 1, identity_plan(4, 2), 1, Activation::sigmoid));
}

TEST_CASE("set-size contract across stacked layers") {
  const std::size_t n = 16, ns = 2, sets = 3;
  ParameterStore<double> store;
  std::vector<MssabWeights> layers;
  for (std::size_t l = 0; l < 3; ++l) layers.push_back(add_mssab_weights(store, "m" + std::to_string(l), 4, 4, ns));
  ref::randomize(store, 3);
  Rng rng(1);
  Tape<double> tape;
  Var h = tape.constant(to_tensor(random_mat(sets * n, 4, rng)));
  std::size_t size = n;
  for (std::size_t l = 0; l < 3; ++l) {
    h = mssab_forward(tape, store, layers[l], h, sets, random_plan(size, ns, rng), 2, Activation::sigmoid);
    size /= ns;
    CHECK(tape.value(h).rows() == sets * size);
  }
  CHECK(size == 2);
}

TEST_CASE("pooling attention") {
  ParameterStore<double> store;
  auto w = add_pooling_weights(store, "p", 3, 4);
  ref::randomize(store, 30);
  Rng rng(31);
  const std::size_t sets = 2, n = 5, heads = 2;
  auto z = random_mat(sets * n, 3, rng);

  SUBCASE("matches the reference and scores sum to one") {
    Tape<double> tape;
    auto out = pab_forward(tape, store, w, tape.constant(to_tensor(z)), sets, heads);
    REQUIRE(out.scores.shape() == Shape{sets, heads, n});
    auto Kp = ref::from_tensor(store[w.key].value), Vp = ref::from_tensor(store[w.value].value);
    auto seed = store[w.seed].value.values();
    for (std::size_t s = 0; s < sets; ++s) {
      auto expect = ref::pab(seed, Kp, Vp, ref::Mat(z.begin() + s * n, z.begin() + (s + 1) * n), heads);
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(tape.value(out.pooled).at(s, c) - expect.pooled[c]) <= 1e-12);
      for (std::size_t h = 0; h < heads; ++h) {
        double total = 0;
        for (std::size_t b = 0; b < n; ++b) {
          const double sc = out.scores[(s * heads + h) * n + b];
          CHECK(sc >= 0.0);
          CHECK(std::abs(sc - expect.scores[h][b]) <= 1e-12);
          total += sc;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }

  SUBCASE("zero key projection gives uniform scores") {
    store[w.key].value.fill(0);
    Tape<double> tape;
    auto out = pab_forward(tape, store, w, tape.constant(to_tensor(z)), sets, heads);
    for (double sc : out.scores.values()) CHECK(sc == doctest::Approx(0.2).epsilon(1e-15));
  }

  SUBCASE("single element") {
    Tape<double> tape;
    ref::Mat one{{0.4, -0.2, 1.0}};
    auto out = pab_forward(tape, store, w, tape.constant(to_tensor(one)), 1, heads);
    for (double sc : out.scores.values()) CHECK(sc == 1.0);
    auto v = ref::matvec(ref::from_tensor(store[w.value].value), one[0]);
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(std::abs(tape.value(out.pooled)[c] - (store[w.seed].value[c] + v[c])) <= 1e-12);
  }

  SUBCASE("permuting elements permutes scores and keeps the pooled vector") {
    ref::Mat one(z.begin(), z.begin() + n), perm = one;
    std::vector<std::size_t> idx{3, 0, 4, 1, 2};
    for (std::size_t i = 0; i < n; ++i) perm[i] = one[idx[i]];
    Tape<double> tape;
    auto a = pab_forward(tape, store, w, tape.constant(to_tensor(one)), 1, heads);
    auto b = pab_forward(tape, store, w, tape.constant(to_tensor(perm)), 1, heads);
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(std::abs(tape.value(a.pooled)[c] - tape.value(b.pooled)[c]) <= 1e-12);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i)
        CHECK(std::abs(b.scores[h * n + i] - a.scores[h * n + idx[i]]) <= 1e-12);
  }
}

TEST_CASE("decoder head") {
  ParameterStore<double> store;
  auto w = add_head_weights(store, "head", 2);
  ref::randomize(store, 40);
  Tensor<double> pooled(Shape{3, 2}, std::vector<double>{0.3, -0.7, 1.5, 0.2, -2.0, 4.0});
  auto run = [&] {
    Tape<double> tape;
    return tape.value(decoder_head(tape, store, w, tape.constant(pooled), Activation::relu));
  };
  auto y = run();
  REQUIRE(y.shape() == Shape{3});
  auto hw = ref::read_head(store, "head");
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(y[s] > 0.0);
    CHECK(y[s] < 1.0);
    CHECK(std::abs(y[s] - ref::head(hw, {pooled.at(s, 0), pooled.at(s, 1)}, true)) <= 1e-12);
  }
  store[w.readout.weight].value.fill(0);
  store[w.readout.bias].value.fill(0);
  const auto half = run();
  for (double v : half.values()) CHECK(v == 0.5);
  store[w.readout.bias].value.fill(10);
  const auto high = run();
  for (double v : high.values()) CHECK(v == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-15));
}

TEST_CASE("full model equals the composition of the reference blocks") {
  for (std::size_t ns : {1, 2}) {
    ModelConfig cfg = small_quan(4, ns, 1);
    QuanModel<double> model(cfg);
    model.initialize(InitScheme::xavier_normal, 3);
    auto& store = model.parameters();
    ref::randomize(store, 77);
    std::vector<SnapshotSet> sets{ref::random_set({3, 3}, 4, 1), ref::random_set({3, 3}, 4, 2)};
    auto y = predict_with(model, sets, nullptr);
    auto plans = model.eval_plans();
    auto F = ref::from_tensor(store.at("conv.filters").value);
    auto sab = ref::read_block(store, "mssab.0.sab");
    auto mab = ns > 1 ? ref::read_block(store, "mssab.0.mab") : sab;
    auto hw = ref::read_head(store, "head");
    for (std::size_t s = 0; s < sets.size(); ++s) {
      auto order = canonical_order(sets[s]);
      ref::Mat x;
      for (auto j : order)
        x.push_back(ref::conv(sets[s][j], F, 2, store.at("conv.bn.gamma").value.values(),
                              store.at("conv.bn.beta").value.values(), store.at("conv.bn.running_mean").value.values(),
                              store.at("conv.bn.running_var").value.values()));
      auto z = ref::mssab(sab, mab, x, plans[0].order, plans[0].sigma, ns, 2, false);
      auto p = ref::pab(store.at("pab.seed").value.values(), ref::from_tensor(store.at("pab.key").value),
                        ref::from_tensor(store.at("pab.value").value), z, 2);
      CHECK(std::abs(y[s] - ref::head(hw, p.pooled, false)) <= 1e-12);
    }
  }
}

TEST_CASE("weight shapes follow the configuration") {
  ModelConfig cfg = small_quan(8, 2, 2);
  cfg.grid_rows = 4;
  cfg.grid_cols = 4;
  cfg.n_c = 7;
  cfg.d_h = 16;
  cfg.n_h = 4;
  QuanModel<double> model(cfg);
  auto& s = model.parameters();
  CHECK(s.at("conv.filters").value.shape() == Shape{7, 4});
  CHECK(s.at("mssab.0.sab.query").value.shape() == Shape{16, 63});
  CHECK(s.at("mssab.1.sab.query").value.shape() == Shape{16, 16});
  CHECK(s.at("mssab.0.mab.key").value.shape() == Shape{16, 16});
  CHECK(s.at("pab.seed").value.shape() == Shape{1, 16});
  CHECK(s.at("head.readout.weight").value.shape() == Shape{1, 16});
  CHECK_FALSE(QuanModel<double>(small_quan(4, 1, 1)).parameters().contains("mssab.0.mab.query"));
}

TEST_CASE("set size and geometry are enforced") {
  QuanModel<double> model(small_quan(4, 1, 1));
  model.initialize(InitScheme::xavier_normal, 1);
  auto wrong_size = ref::random_set({3, 3}, 5, 1);
  CHECK_THROWS_AS(model.predict(wrong_size), ConfigError);
  auto wrong_grid = ref::random_set({3, 4}, 4, 1);
  CHECK_THROWS_AS(model.predict(wrong_grid), ConfigError);
}

TEST_CASE("training forward with several mini-sets requires a plan stream") {
  QuanModel<double> model(small_quan(4, 2, 1));
  model.initialize(InitScheme::xavier_normal, 1);
  auto set = ref::random_set({3, 3}, 4, 1);
  std::vector<const SnapshotSet*> batch{&set};
  Tape<double> tape;
  ForwardOptions opt;
  opt.train = true;
  CHECK_THROWS_AS(model.forward(tape, batch, opt), ConfigError);
}

TEST_CASE("exact permutation invariance with one mini-set") {
  SUBCASE("all permutations of a small set") {
    QuanModel<double> model(small_quan(4, 1, 2));
    ref::randomize(model.parameters(), 5);
    auto set = ref::random_set({3, 3}, 4, 17);
    const double base = model.predict(set);
    std::vector<std::size_t> idx{0, 1, 2, 3};
    int count = 0;
    do {
      SnapshotSet p;
      for (auto i : idx) p.push_back(set[i]);
      CHECK(model.predict(p) == base);
      ++count;
    } while (std::next_permutation(idx.begin(), idx.end()));
    CHECK(count == 24);
  }
  SUBCASE("random permutations of a larger set") {
    QuanModel<double> model(small_quan(32, 1, 1));
    ref::randomize(model.parameters(), 6);
    auto set = ref::random_set({3, 3}, 32, 18);
    const double base = model.predict(set);
    Rng rng(19);
    for (int t = 0; t < 100; ++t) {
      auto p = set;
      shuffle_in_place(std::span<Snapshot>(p), rng);
      CHECK(model.predict(p) == base);
    }
  }
}

TEST_CASE("eval mode with several mini-sets is invariant within planned mini-sets") {
  QuanModel<double> model(small_quan(16, 4, 1));
  ref::randomize(model.parameters(), 7);
  auto set = ref::random_set({3, 3}, 16, 21);
  const double base = model.predict(set);
  auto canon = canonical_order(set);
  auto plan = model.eval_plans()[0];
  Rng rng(22);
  for (int t = 0; t < 50; ++t) {
    auto p = set;
    for (std::size_t m = 0; m < 4; ++m) {
      std::vector<std::size_t> members, slots;
      for (std::size_t j = 0; j < 4; ++j) members.push_back(canon[plan.order[m * 4 + j]]);
      slots = members;
      shuffle_in_place(std::span<std::size_t>(members), rng);
      for (std::size_t j = 0; j < 4; ++j) p[slots[j]] = set[members[j]];
    }
    CHECK(model.predict(p) == base);
  }
}

TEST_CASE("shuffled plans give the same confidence distribution for any input order") {
  QuanModel<double> model(small_quan(16, 2, 1));
  ref::randomize(model.parameters(), 8);
  auto set = ref::random_set({3, 3}, 16, 23);
  auto other = set;
  Rng perm_rng(24);
  shuffle_in_place(std::span<Snapshot>(other), perm_rng);
  auto stats = [&](const SnapshotSet& s, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> ys;
    for (int t = 0; t < 200; ++t) {
      std::vector<MiniSetPlan> plans{random_plan(16, 2, rng)};
      ys.push_back(predict_with(model, {s}, &plans)[0]);
    }
    double m = std::accumulate(ys.begin(), ys.end(), 0.0) / 200, v = 0;
    for (double y : ys) v += (y - m) * (y - m);
    return std::pair{m, std::sqrt(v / 199 / 200)};
  };
  auto [m1, e1] = stats(set, 100);
  auto [m2, e2] = stats(other, 200);
  CHECK(e1 > 0.0);
  CHECK(std::abs(m1 - m2) <= 3 * std::sqrt(e1 * e1 + e2 * e2));
}

TEST_CASE("moment order accounting") {
  CHECK(moment_order(5, 1) == 50);
  CHECK(moment_order(1, 2) == 4);
  CHECK(moment_order(1, 0) == 1);
  CHECK(layers_required(50, 1) == 6);
  CHECK(layers_required(50, 5) == 1);
  CHECK(layers_required(1, 3) == 0);
  for (std::uint64_t ns = 1; ns <= 4; ++ns)
    for (std::uint64_t theta = 1; theta < 3000; theta += 7) {
      const auto l = layers_required(theta, ns);
      CHECK(moment_order(ns, l) >= theta);
      if (l > 0) CHECK(moment_order(ns, l - 1) < theta);
    }
}

TEST_CASE("full model gradient check") {
  for (std::size_t ns : {1, 2}) {
    ModelConfig cfg = small_quan(8, ns, 1);
    cfg.grid_rows = 4;
    cfg.grid_cols = 4;
    cfg.d_h = 8;
    cfg.n_h = 4;
    QuanModel<double> model(cfg);
    model.initialize(InitScheme::xavier_normal, 1);
    std::vector<SnapshotSet> sets;
    for (std::uint64_t i = 0; i < 4; ++i) sets.push_back(ref::random_set({4, 4}, 8, i + 10));
    auto batch = ptrs(sets);
    std::vector<MiniSetPlan> plans{fixed_plan(8, ns, 5)};
    std::vector<double> labels{1, 0, 1, 0};
    GradCheckOptions opts;
    opts.perturbation = 1e-4;
    auto reports = gradient_check(
        model.parameters(),
        [&](Tape<double>& t) {
          ForwardOptions opt;
          opt.train = true;
          opt.plans = &plans;
          return t.binary_cross_entropy(model.forward(t, batch, opt), labels);
        },
        opts);
    for (const auto& r : reports) {
      CAPTURE(ns);
      CAPTURE(r.parameter);
      CHECK(r.max_relative_error <= 1e-4);
    }
  }
}

TEST_CASE("one mssab layer scales at most quadratically") {
  ParameterStore<double> store;
  auto w = add_mssab_weights(store, "m", 16, 16, 2);
  ref::randomize(store, 1, 0.3);
  auto time_for = [&](std::size_t n) {
    Rng rng(n);
    auto x = to_tensor(random_mat(n, 16, rng));
    auto plan = random_plan(n, 2, rng);
    double best = 1e9;
    for (int rep = 0; rep < 5; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      Tape<double> tape;
      mssab_forward(tape, store, w, tape.constant(x), 1, plan, 4, Activation::relu);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  double prev = time_for(64);
  for (std::size_t n : {128, 256, 512}) {
    const double t = time_for(n);
    CAPTURE(n);
    CHECK(t / prev <= 4.5);
    prev = t;
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  ModelConfig cfg = small_quan(8, 2, 1);
  cfg.residual_activation = Activation::relu;
  QuanModel<double> model(cfg);
  model.initialize(InitScheme::xavier_normal, 42);
  auto dir = std::filesystem::temp_directory_path() / "quan_test_ckpt";
  std::filesystem::create_directories(dir);
  CheckpointInfo info;
  info.epoch = 3;
  info.val_accuracy = 0.75;
  save_checkpoint(dir / "m.qckp", model, info);
  CheckpointInfo back;
  auto loaded = load_checkpoint<double>(dir / "m.qckp", &back);
  CHECK(back.epoch == 3);
  CHECK(back.val_accuracy == 0.75);
  CHECK(back.precision == "f64");
  REQUIRE(loaded->parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(loaded->parameters()[i].name == model.parameters()[i].name);
    CHECK(loaded->parameters()[i].value == model.parameters()[i].value);
  }
  auto set = ref::random_set({3, 3}, 8, 4);
  CHECK(loaded->predict(set) == model.predict(set));

  auto as_float = load_checkpoint<float>(dir / "m.qckp");
  CHECK(std::abs(double(as_float->predict(set)) - model.predict(set)) < 1e-4);
  std::filesystem::remove_all(dir);
}
