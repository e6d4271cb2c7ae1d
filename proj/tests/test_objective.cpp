#include <doctest.h>

#include <cmath>
#include <vector>

#include "charrnn/error.hpp"
#include "charrnn/objective.hpp"
#include "gradcheck.hpp"

using namespace charrnn;

namespace {

template <typename F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::usage, "");
}

Tensor random_logits(std::size_t b, std::size_t l, std::size_t v, Rng& rng,
                     double scale = 2.0) {
  Tensor t({b, l, v});
  for (double& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

std::vector<Index> random_targets(std::size_t n, std::size_t v, Rng& rng) {
  std::vector<Index> t(n);
  for (auto& x : t) x = static_cast<Index>(rng.below(v));
  return t;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("uniform logits give ln V") {
  for (std::size_t V : {2u, 5u, 37u, 256u}) {
    const Tensor logits({2, 3, V}, 0.7);
    Rng rng(V);
    const auto targets = random_targets(6, V, rng);
    const LossReport r = ce_loss(logits, targets);
    CHECK(r.count == 6);
    CHECK(std::abs(r.mean_loss - std::log(static_cast<double>(V))) < 1e-12);
  }
}

TEST_CASE("confident correct prediction has near-zero loss") {
  Tensor logits({1, 1, 3}, 0.0);
  logits.at(0, 0, 2) = 50.0;
  const std::vector<Index> t{2};
  CHECK(ce_loss(logits, t).mean_loss < 1e-9);
  const Tensor g = ce_grad(logits, t);
  for (double v : g.data()) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("two classes at even odds give ln 2") {
  const Tensor logits({1, 1, 2}, std::vector<double>{3.0, 3.0});
  const std::vector<Index> t{1};
  CHECK(ce_loss(logits, t).mean_loss == doctest::Approx(0.693147180559945).epsilon(1e-14));
}

TEST_CASE("loss uses log-sum-exp and stays finite for huge logits") {
  const Tensor logits({1, 1, 2}, std::vector<double>{1000.0, -1000.0});
  const std::vector<Index> wrong{1};
  const double loss = ce_loss(logits, wrong).mean_loss;
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(2000.0));
}

TEST_CASE("out of range targets raise a label error with position") {
  const Tensor logits({2, 2, 3}, 0.0);
  const std::vector<Index> t{0, 1, 2, 3};
  const Error e = error_of([&] { ce_loss(logits, t); });
  CHECK(e.code() == ErrorCode::label);
  CHECK(std::string(e.what()).find("(1, 1)") != std::string::npos);
  const std::vector<Index> neg{0, -1, 0, 0};
  CHECK(error_of([&] { ce_grad(logits, neg); }).code() == ErrorCode::label);
  const std::vector<Index> too_few{0, 1};
  CHECK(error_of([&] { ce_loss(logits, too_few); }).code() == ErrorCode::shape);
}

TEST_CASE("ce_grad rows sum to zero and match the closed form") {
  Rng rng(3);
  const Tensor logits = random_logits(3, 4, 6, rng);
  const auto targets = random_targets(12, 6, rng);
  const Tensor g = ce_grad(logits, targets);
  const double N = 12;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t t = 0; t < 4; ++t) {
      Tensor row({6});
      for (std::size_t v = 0; v < 6; ++v) row[v] = logits.at(b, t, v);
      const Tensor p = softmax(row);
      double sum = 0;
      for (std::size_t v = 0; v < 6; ++v) {
        const double onehot = targets[b * 4 + t] == static_cast<Index>(v) ? 1 : 0;
        CHECK(std::abs(g.at(b, t, v) - (p[v] - onehot) / N) < 1e-15);
        sum += g.at(b, t, v);
      }
      CHECK(std::abs(sum) < 1e-12);
    }
  Tensor g2;
  const LossReport r = ce_loss_and_grad(logits, targets, g2);
  CHECK(g2 == g);
  CHECK(r.mean_loss == ce_loss(logits, targets).mean_loss);
}

TEST_CASE("ce_grad matches central differences of ce_loss") {
  Rng rng(21);
  Tensor logits = random_logits(2, 3, 5, rng);
  const auto targets = random_targets(6, 5, rng);
  const Tensor g = ce_grad(logits, targets);
  double worst = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double saved = logits[i];
    logits[i] = saved + 1e-5;
    const double up = ce_loss(logits, targets).mean_loss;
    logits[i] = saved - 1e-5;
    const double down = ce_loss(logits, targets).mean_loss;
    logits[i] = saved;
    const double numeric = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(numeric - g[i]) /
                                std::max({std::abs(numeric), std::abs(g[i]), 1e-8}));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("loss is nonnegative and falls as the correct logit rises") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor logits = random_logits(1, 1, 7, rng, 5.0);
    const std::vector<Index> t{static_cast<Index>(rng.below(7))};
    double prev = ce_loss(logits, t).mean_loss;
    CHECK(prev >= 0.0);
    double prev_norm = 1e9;
    for (int k = 0; k < 5; ++k) {
      logits.at(0, 0, t[0]) += 2.0;
      const double now = ce_loss(logits, t).mean_loss;
      CHECK(now < prev);
      prev = now;
      const Tensor g = ce_grad(logits, t);
      double norm = 0;
      for (double v : g.data()) norm += v * v;
      CHECK(norm < prev_norm);
      prev_norm = norm;
    }
  }
}

TEST_CASE("clip_global_norm") {
  std::vector<Tensor> grads{Tensor::vector({3.0}), Tensor::vector({4.0, 0.0})};
  CHECK(clip_global_norm(grads, 10.0) == doctest::Approx(5.0));
  CHECK(grads[0][0] == 3.0);
  CHECK(clip_global_norm(grads, 1.0) == doctest::Approx(5.0));
  CHECK(grads[0][0] == doctest::Approx(0.6));
  CHECK(grads[1][0] == doctest::Approx(0.8));
  std::vector<Tensor> big{Tensor::vector({30.0, 40.0})};
  CHECK(clip_global_norm(big, 0.0) == doctest::Approx(50.0));
  CHECK(big[0][1] == 40.0);
}

TEST_CASE("rmsprop zero gradient leaves weights and decays the accumulator") {
  Tensor w = Tensor::vector({0.5, -0.25});
  const Tensor* cw[] = {&w};
  RmspropState s = make_rmsprop_state(cw, {1e-3, 0.9, 0.0});
  s.accumulators[0] = Tensor::vector({0.4, 0.2});
  Tensor* pw[] = {&w};
  const std::vector<Tensor> g{Tensor::vector({0.0, 0.0})};
  rmsprop_step(pw, g, s);
  CHECK(w == Tensor::vector({0.5, -0.25}));
  CHECK(s.accumulators[0][0] == doctest::Approx(0.36).epsilon(1e-15));
  CHECK(s.accumulators[0][1] == doctest::Approx(0.18).epsilon(1e-15));
}

TEST_CASE("rmsprop two-step hand trace") {
  const double alpha = 1e-3, rho = 0.9;
  Tensor w = Tensor::vector({0.0});
  const Tensor* cw[] = {&w};
  RmspropState s = make_rmsprop_state(cw, {alpha, rho, 0.0});
  Tensor* pw[] = {&w};

  rmsprop_step(pw, std::vector<Tensor>{Tensor::vector({1.0})}, s);
  CHECK(rel(s.accumulators[0][0], 0.1) < 1e-12);
  CHECK(rel(w[0], -3.1622776601683795e-3) < 1e-12);

  rmsprop_step(pw, std::vector<Tensor>{Tensor::vector({-2.0})}, s);
  // V2 = 0.9 * 0.1 + 0.1 * 4 = 0.49; step = +2e-3 / 0.7.
  CHECK(rel(s.accumulators[0][0], 0.49) < 1e-12);
  CHECK(rel(w[0], -3.1622776601683795e-3 + 2e-3 / 0.7) < 1e-12);
}

TEST_CASE("rmsprop update is bounded after the first step") {
  Rng rng(8);
  const double alpha = 1e-3, rho = 0.9;
  for (int trial = 0; trial < 200; ++trial) {
    Tensor w({4});
    for (double& v : w.data()) v = rng.uniform(-1, 1);
    const Tensor before = w;
    const Tensor* cw[] = {&w};
    RmspropState s = make_rmsprop_state(cw, {alpha, rho, 1e-7});
    Tensor* pw[] = {&w};
    Tensor g({4});
    for (double& v : g.data()) v = rng.uniform(-100, 100);
    rmsprop_step(pw, std::vector<Tensor>{g}, s);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(w[i] - before[i]) <= alpha / std::sqrt(1 - rho) + 1e-15);
      CHECK(s.accumulators[0][i] >= 0.0);
    }
  }
}

TEST_CASE("rmsprop rejects non-finite gradients without touching state") {
  Tensor a = Tensor::vector({1.0});
  Tensor b = Tensor::vector({2.0});
  const Tensor* c[] = {&a, &b};
  RmspropState s = make_rmsprop_state(c, {});
  Tensor* p[] = {&a, &b};
  const std::vector<Tensor> g{Tensor::vector({0.5}), Tensor::vector({NAN})};
  CHECK(error_of([&] { rmsprop_step(p, g, s); }).code() == ErrorCode::optimizer);
  CHECK(a[0] == 1.0);
  CHECK(s.accumulators[0][0] == 0.0);

  const std::vector<Tensor> wrong{Tensor::vector({0.5})};
  CHECK(error_of([&] { rmsprop_step(p, wrong, s); }).code() == ErrorCode::shape);
}
