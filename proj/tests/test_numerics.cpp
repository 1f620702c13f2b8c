#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <numbers>

#include "ennal/numerics.hpp"

using namespace ennal;

namespace {

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> flat(p.param_count());
  copy_params_to_flat(p, flat.data());
  return flat;
}

MlpParams from_flat(const MlpParams& shape, const std::vector<double>& flat) {
  MlpParams p = shape;
  copy_params_from_flat(p, flat.data());
  return p;
}

}  // namespace

TEST_CASE("glorot uniform variance matches 2/(fan_in+fan_out)") {
  Rng rng(12345);
  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;
  for (int rep = 0; rep < 4; ++rep) {
    const Matrix w = glorot_init(50, 50, rng);
    for (double v : w.data) {
      sum += v;
      sumsq += v * v;
      ++n;
    }
  }
  REQUIRE(n == 10000);
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  REQUIRE(var == Catch::Approx(0.02).margin(0.002));
}

TEST_CASE("glorot normal variant matches the same variance") {
  Rng rng(77);
  const Matrix w = glorot_init(100, 100, rng, GlorotVariant::normal);
  double sum = 0.0, sumsq = 0.0;
  for (double v : w.data) {
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / w.size();
  const double var = sumsq / w.size() - mean * mean;
  REQUIRE(var == Catch::Approx(2.0 / 200.0).epsilon(0.1));
}

TEST_CASE("glorot rejects empty dimensions") {
  Rng rng(1);
  REQUIRE_THROWS_AS(glorot_init(0, 5, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(glorot_init(5, 0, rng), std::invalid_argument);
}

TEST_CASE("glorot is deterministic under a fixed seed") {
  Rng a(99), b(99);
  const Matrix wa = glorot_init(7, 9, a);
  const Matrix wb = glorot_init(7, 9, b);
  REQUIRE(std::memcmp(wa.data.data(), wb.data.data(),
                      wa.size() * sizeof(double)) == 0);
}

TEST_CASE("mlp_init biases are zero") {
  Rng rng(3);
  const std::size_t dims[] = {4, 2, 2};
  const MlpParams p = mlp_init(dims, rng);
  for (const auto& l : p.layers) {
    for (double b : l.b) REQUIRE(b == 0.0);
  }
}

TEST_CASE("mlp_forward hand cases") {
  SECTION("zero parameters give zero logits") {
    MlpParams p;
    p.layers.push_back({Matrix(3, 4), std::vector<double>(3, 0.0)});
    const std::vector<double> x{1.0, -2.0, 0.5, 3.0};
    for (double v : mlp_forward(p, x)) REQUIRE(v == 0.0);
  }
  SECTION("1-1-1 net with unit weights composes ReLU") {
    MlpParams p;
    Matrix w(1, 1);
    w(0, 0) = 1.0;
    p.layers.push_back({w, {0.0}});
    p.layers.push_back({w, {0.0}});
    REQUIRE(mlp_forward(p, std::vector<double>{2.0})[0] == 2.0);
    REQUIRE(mlp_forward(p, std::vector<double>{-2.0})[0] == 0.0);
  }
  SECTION("output layer is linear in its weights") {
    Rng rng(11);
    const std::size_t dims[] = {3, 5, 2};
    MlpParams p = mlp_init(dims, rng);
    for (auto& b : p.layers.back().b) b = 0.0;
    const std::vector<double> x{0.3, -1.2, 0.8};
    const std::vector<double> once = mlp_forward(p, x);
    for (double& v : p.layers.back().w.data) v *= 2.0;
    const std::vector<double> twice = mlp_forward(p, x);
    for (std::size_t c = 0; c < once.size(); ++c) {
      REQUIRE(twice[c] == Catch::Approx(2.0 * once[c]).margin(1e-15));
    }
  }
  SECTION("width mismatch throws") {
    Rng rng(4);
    const std::size_t dims[] = {3, 2, 2};
    const MlpParams p = mlp_init(dims, rng);
    REQUIRE_THROWS_AS(mlp_forward(p, std::vector<double>{1.0}),
                      std::invalid_argument);
  }
}

TEST_CASE("log_softmax") {
  SECTION("symmetric two-class") {
    const auto lp = log_softmax(std::vector<double>{0.0, 0.0});
    REQUIRE(lp[0] == Catch::Approx(-std::numbers::ln2).margin(1e-15));
    REQUIRE(lp[1] == Catch::Approx(-std::numbers::ln2).margin(1e-15));
  }
  SECTION("shift invariance") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> v(4), shifted(4);
      const double c = 200.0 * (rng.uniform() - 0.5);
      for (std::size_t i = 0; i < 4; ++i) {
        v[i] = 10.0 * (rng.uniform() - 0.5);
        shifted[i] = v[i] + c;
      }
      const auto a = log_softmax(v);
      const auto b = log_softmax(shifted);
      for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-12));
      }
    }
  }
  SECTION("extreme logits stay finite") {
    const auto lp = log_softmax(std::vector<double>{1000.0, 0.0});
    REQUIRE(std::isfinite(lp[0]));
    REQUIRE(std::isfinite(lp[1]));
    REQUIRE(lp[0] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(lp[1] == Catch::Approx(-1000.0).margin(1e-9));
  }
  SECTION("normalization holds at extreme magnitudes") {
    Rng rng(6);
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> v(5);
      for (double& x : v) x = 2e3 * (rng.uniform() - 0.5);
      const auto lp = log_softmax(v);
      double sum = 0.0;
      for (double l : lp) sum += std::exp(l);
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }
  SECTION("non-finite input is rejected") {
    REQUIRE_THROWS_AS(
        log_softmax(std::vector<double>{1.0, std::nan("")}),
        std::invalid_argument);
  }
}

TEST_CASE("xent_l2_loss") {
  const std::vector<double> none;
  SECTION("uniform prediction costs ln 2") {
    REQUIRE(xent_l2_loss(std::vector<double>{0.0, 0.0}, 0, none, 0.0) ==
            Catch::Approx(std::numbers::ln2).margin(1e-15));
  }
  SECTION("zero penalty leaves the pure cross-entropy term") {
    const std::vector<double> logits{0.7, -0.4, 2.2};
    const std::vector<double> zeros(9, 0.0);
    const auto lp = log_softmax(logits);
    REQUIRE(xent_l2_loss(logits, 2, zeros, 0.5) ==
            Catch::Approx(-lp[2]).margin(1e-15));
  }
  SECTION("direct formula evaluation") {
    // logits (2,0), second class, lambda 0.1, |params|^2 = 4.
    const std::vector<double> params{2.0, 0.0, 0.0};
    const double expected = std::log1p(std::exp(2.0)) + 0.4;
    REQUIRE(xent_l2_loss(std::vector<double>{2.0, 0.0}, 1, params, 0.1) ==
            Catch::Approx(expected).margin(1e-12));
    REQUIRE(expected == Catch::Approx(2.126928 + 0.4).margin(1e-6));
  }
  SECTION("label out of range") {
    REQUIRE_THROWS_AS(xent_l2_loss(std::vector<double>{0.0, 0.0}, 2, none, 0.0),
                      std::out_of_range);
  }
}

TEST_CASE("mlp_backward hand cases") {
  SECTION("zero upstream gives zero gradient") {
    Rng rng(8);
    const std::size_t dims[] = {3, 4, 2};
    const MlpParams p = mlp_init(dims, rng);
    const MlpGrad g = mlp_backward(p, std::vector<double>{1.0, 2.0, 3.0},
                                   std::vector<double>{0.0, 0.0});
    for (const auto& l : g.layers) {
      for (double v : l.w.data) REQUIRE(v == 0.0);
      for (double v : l.b) REQUIRE(v == 0.0);
    }
  }
  SECTION("single affine layer") {
    MlpParams p;
    Matrix w(1, 1);
    w(0, 0) = 0.5;
    p.layers.push_back({w, {0.1}});
    const MlpGrad g = mlp_backward(p, std::vector<double>{3.0},
                                   std::vector<double>{1.0});
    REQUIRE(g.layers[0].w(0, 0) == 3.0);
    REQUIRE(g.layers[0].b[0] == 1.0);
  }
}

TEST_CASE("finite differences agree with backprop on a random 4-5-3 net") {
  Rng rng(21);
  const std::size_t dims[] = {4, 5, 3};
  MlpParams p = mlp_init(dims, rng);
  for (auto& l : p.layers) {
    for (double& b : l.b) b = 0.3 * rng.normal();
  }
  std::vector<double> x(4), upstream(3);
  for (double& v : x) v = rng.normal();
  for (double& v : upstream) v = rng.normal();

  const MlpGrad g = mlp_backward(p, x, upstream);
  std::vector<double> analytic(p.param_count());
  copy_params_to_flat(g, analytic.data());

  const auto loss = [&](const std::vector<double>& flat) {
    const MlpParams q = from_flat(p, flat);
    return dot(mlp_forward(q, x), upstream);
  };
  const std::vector<double> fd = finite_diff_grad(loss, flatten(p), 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double err =
        std::abs(analytic[i] - fd[i]) / std::max(1.0, std::abs(fd[i]));
    REQUIRE(err < 1e-5);
  }
}

TEST_CASE("cross-entropy gradients match finite differences on 100 random MLPs") {
  Rng rng(314);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 1 + rng.below(5);
    const std::size_t hid = 1 + rng.below(8);
    const std::size_t classes = 2 + rng.below(2);
    const std::vector<std::size_t> dims{in, hid, classes};
    MlpParams p = mlp_init(dims, rng);
    for (auto& l : p.layers) {
      for (double& b : l.b) b = 0.2 * rng.normal();
    }
    std::vector<double> x(in);
    for (double& v : x) v = rng.normal();
    const std::size_t label = rng.below(classes);
    const double lambda = trial % 3 == 0 ? 0.01 : 0.0;

    // Analytic: softmax-minus-onehot upstream through backprop, plus the
    // L2 term.
    const std::vector<double> logits = mlp_forward(p, x);
    std::vector<double> up = softmax(logits);
    up[label] -= 1.0;
    const MlpGrad g = mlp_backward(p, x, up);
    std::vector<double> analytic(p.param_count());
    copy_params_to_flat(g, analytic.data());
    const std::vector<double> flat = flatten(p);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      analytic[i] += 2.0 * lambda * flat[i];
    }

    const auto loss = [&](const std::vector<double>& f) {
      const MlpParams q = from_flat(p, f);
      return xent_l2_loss(mlp_forward(q, x), label, f, lambda);
    };
    const std::vector<double> fd = finite_diff_grad(loss, flat, 1e-5);
    double max_err = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      max_err = std::max(max_err, std::abs(analytic[i] - fd[i]) /
                                      std::max(1.0, std::abs(fd[i])));
    }
    REQUIRE(max_err <= 1e-5);
  }
}

TEST_CASE("adam_step") {
  SECTION("zero gradient leaves parameters unchanged") {
    AdamState s = make_adam(3);
    const std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g(3, 0.0);
    const auto [next, state] = adam_step(s, p, g);
    REQUIRE(next == p);
    REQUIRE(state.step == 1);
  }
  SECTION("global-norm clipping saturates before the moment update") {
    AdamState s = make_adam(1);
    const auto [next, state] =
        adam_step(s, std::vector<double>{0.0}, std::vector<double>{10.0});
    // Clipped gradient is exactly 1.
    REQUIRE(state.first_moment[0] == Catch::Approx(0.1).margin(1e-15));
    REQUIRE(state.second_moment[0] == Catch::Approx(0.05).margin(1e-15));
    REQUIRE(next[0] == Catch::Approx(-1e-3).margin(1e-9));
  }
  SECTION("hand-executed single step") {
    AdamState s = make_adam(1);
    const auto [next, state] =
        adam_step(s, std::vector<double>{0.0}, std::vector<double>{0.5});
    const double mhat = 0.05 / (1.0 - 0.9);
    const double vhat = (1.0 - 0.95) * 0.25 / (1.0 - 0.95);
    const double expected = -1e-3 * mhat / (std::sqrt(vhat) + 1e-8);
    REQUIRE(next[0] == Catch::Approx(expected).margin(1e-15));
    REQUIRE(next[0] == Catch::Approx(-1e-3).margin(1e-6));
  }
  SECTION("bit-identical under identical inputs") {
    AdamState s = make_adam(4);
    s.settings.clip_norm = 0.7;
    std::vector<double> p{0.1, 0.2, -0.3, 0.4};
    std::vector<double> g{1.0, -2.0, 3.0, -4.0};
    const auto r1 = adam_step(s, p, g);
    const auto r2 = adam_step(s, p, g);
    REQUIRE(std::memcmp(r1.first.data(), r2.first.data(),
                        4 * sizeof(double)) == 0);
    REQUIRE(std::memcmp(r1.second.first_moment.data(),
                        r2.second.first_moment.data(), 4 * sizeof(double)) == 0);
  }
}

TEST_CASE("finite_diff_grad oracle sanity") {
  SECTION("quadratic") {
    const auto f = [](const std::vector<double>& p) { return p[0] * p[0]; };
    const auto g = finite_diff_grad(f, {3.0}, 1e-5);
    REQUIRE(g[0] == Catch::Approx(6.0).margin(1e-6));
  }
  SECTION("constant") {
    const auto f = [](const std::vector<double>&) { return 42.0; };
    const auto g = finite_diff_grad(f, {1.0, 2.0}, 1e-5);
    REQUIRE(g[0] == 0.0);
    REQUIRE(g[1] == 0.0);
  }
  SECTION("exponential") {
    const auto f = [](const std::vector<double>& p) { return std::exp(p[0]); };
    const auto g = finite_diff_grad(f, {0.0}, 1e-5);
    REQUIRE(g[0] == Catch::Approx(1.0).margin(1e-8));
  }
  SECTION("rejects nonpositive step") {
    const auto f = [](const std::vector<double>&) { return 0.0; };
    REQUIRE_THROWS_AS(finite_diff_grad(f, {1.0}, 0.0), std::invalid_argument);
  }
}

TEST_CASE("matmul_acc agrees with naive loops") {
  Rng rng(17);
  const std::size_t m = 7, k = 5, n = 9;
  std::vector<double> a(m * k), b(k * n), c(m * n, 0.0), ref(m * n, 0.0);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal();
  matmul_acc(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
    }
  }
  for (std::size_t i = 0; i < m * n; ++i) {
    REQUIRE(c[i] == Catch::Approx(ref[i]).margin(1e-12));
  }
}
