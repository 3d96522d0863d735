#include <cmath>
#include <doctest.h>

#include "ptcmil/error.hpp"
#include "ptcmil/prompt.hpp"
#include "ptcmil/rng.hpp"

using namespace ptcmil;

TEST_CASE("orthonormal init across shapes") {
  for (auto [c, d] : {std::pair{2, 4}, {4, 8}, {8, 32}, {16, 32}, {5, 5}, {1, 3}}) {
    Rng rng(42);
    Tensor p = Tensor::from_values(c, d, orthonormal_rows(c, d, rng));
    CHECK(max_abs_row_gram_residual(p) < 1e-10);
  }
  Rng rng(1);
  CHECK_THROWS_AS(orthonormal_rows(5, 4, rng), ValueError);
  CHECK_THROWS_AS(orthonormal_rows(0, 4, rng), ValueError);
}

TEST_CASE("orthonormal init is deterministic in the seed") {
  Rng a(99);
  Rng b(99);
  CHECK(orthonormal_rows(4, 8, a) == orthonormal_rows(4, 8, b));
  Rng c(100);
  CHECK(orthonormal_rows(4, 8, a) != orthonormal_rows(4, 8, c));
}

TEST_CASE("reg loss: exact zeros, hand value, and the rectangular floor") {
  // Exactly orthonormal square matrices have exactly zero loss.
  CHECK(reg_loss(Tensor::identity(8)).item() == 0.0);
  Tensor signed_perm = Tensor::from_values(3, 3, {0, -1, 0, 1, 0, 0, 0, 0, -1});
  CHECK(reg_loss(signed_perm).item() == 0.0);
  // P = diag(2, 1): P^T P - I = diag(3, 0), Frobenius norm 3.
  Tensor p = Tensor::from_values(2, 2, {2, 0, 0, 1});
  CHECK(reg_loss(p).item() == doctest::Approx(3.0).epsilon(1e-14));
  // For C < D orthonormal rows, P^T P is a rank-C projection, so the loss
  // cannot drop below sqrt(D - C); the row-gram residual is what vanishes.
  Rng rng(5);
  Tensor rect = Tensor::from_values(4, 8, orthonormal_rows(4, 8, rng));
  CHECK(reg_loss(rect).item() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(max_abs_row_gram_residual(rect) < 1e-10);
}

TEST_CASE("assignment rows are probability distributions") {
  Rng rng(8);
  std::vector<double> tok(30 * 6);
  for (double& v : tok) v = rng.normal();
  Tensor tokens = Tensor::from_values(30, 6, tok);
  Tensor prompts = Tensor::from_values(4, 6, orthonormal_rows(4, 6, rng));
  Tensor a = assign(tokens, prompts);
  CHECK(a.rows() == 30);
  CHECK(a.cols() == 4);
  for (int i = 0; i < 30; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += a.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(assign(tokens, Tensor::zeros(4, 5)), ShapeError);
}

TEST_CASE("single-cluster assignment is all ones") {
  Rng rng(4);
  std::vector<double> tok(10 * 3);
  for (double& v : tok) v = rng.normal();
  Tensor a = assign(Tensor::from_values(10, 3, tok), Tensor::from_values(1, 3, {0.3, -0.2, 0.9}));
  for (double v : a.values()) CHECK(v == 1.0);
}

TEST_CASE("two-cluster probabilities from a known logit gap") {
  // exp(ln 3) / (exp(ln 3) + 1) = 0.75 when the logit gap is ln 3.
  Tensor tokens = Tensor::from_values(1, 1, {1.0});
  Tensor prompts = Tensor::from_values(2, 1, {std::log(3.0), 0.0});
  Tensor a = assign(tokens, prompts);
  CHECK(std::abs(a.at(0, 0) - 0.75) < 1e-12);
  CHECK(std::abs(a.at(0, 1) - 0.25) < 1e-12);
}

TEST_CASE("partition: argmax, tie to lowest index, empty flags, order kept") {
  Tensor a = Tensor::from_values(5, 3,
                                 {0.2, 0.5, 0.3,    // -> 1
                                  0.4, 0.4, 0.2,    // tie -> 0
                                  0.1, 0.2, 0.7,    // -> 2
                                  1.0 / 3, 1.0 / 3, 1.0 / 3,  // three-way tie -> 0
                                  0.0, 0.9, 0.1});  // -> 1
  ClusterPartition part = partition(a);
  CHECK(part.labels == std::vector<int>{1, 0, 2, 0, 1});
  CHECK(part.groups[0] == std::vector<int>{1, 3});
  CHECK(part.groups[1] == std::vector<int>{0, 4});
  CHECK(part.groups[2] == std::vector<int>{2});
  CHECK_FALSE(part.empty[0]);
  Tensor lopsided = Tensor::from_values(2, 3, {0.9, 0.05, 0.05, 0.8, 0.1, 0.1});
  ClusterPartition p2 = partition(lopsided);
  CHECK(p2.empty == std::vector<bool>{false, true, true});
}

TEST_CASE("ema update: geometric approach, endpoints, commit") {
  Rng rng(12);
  ParamRegistry reg;
  PromptBank bank = PromptBank::create(3, 4, 0.9, rng, &reg);
  std::vector<double> target(12);
  for (double& v : target) v = rng.normal();
  Tensor current = Tensor::from_values(3, 4, target);
  std::vector<double> prev = bank.ema;
  for (int step = 0; step < 10; ++step) {
    ema_update(bank, current);
    for (std::size_t i = 0; i < bank.ema.size(); ++i) {
      const double num = bank.ema[i] - target[i];
      const double den = prev[i] - target[i];
      if (std::abs(den) > 1e-12) CHECK(std::abs(num / den - 0.9) < 1e-9);
    }
    prev = bank.ema;
  }
  CHECK(bank.steps == 10);
  SUBCASE("theta = 1 leaves the shadow fixed") {
    Rng r2(12);
    PromptBank frozen = PromptBank::create(3, 4, 1.0, r2, nullptr);
    const std::vector<double> before = frozen.ema;
    ema_update(frozen, current);
    CHECK(frozen.ema == before);
  }
  SUBCASE("theta = 0 copies the current value") {
    Rng r2(12);
    PromptBank copy = PromptBank::create(3, 4, 0.0, r2, nullptr);
    ema_update(copy, current);
    for (std::size_t i = 0; i < copy.ema.size(); ++i) CHECK(copy.ema[i] == target[i]);
  }
  SUBCASE("invalid theta rejected") {
    Rng r2(12);
    CHECK_THROWS_AS(PromptBank::create(3, 4, 1.5, r2, nullptr), ValueError);
    bank.theta = -0.1;
    CHECK_THROWS_AS(ema_update(bank, current), ValueError);
  }
}

TEST_CASE("gradient reaches prompts only through the (1 - theta) term") {
  Rng rng(31);
  PromptBank bank = PromptBank::create(2, 3, 0.9, rng, nullptr);
  Graph g;
  GraphScope scope(g);
  bank.prompts.zero_grad();
  Tensor blended = ema_update(bank, bank.prompts);
  g.backward(sum_all(blended));
  for (double v : bank.prompts.grad()) {
    CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("ema shape mismatch rejected") {
  Rng rng(2);
  PromptBank bank = PromptBank::create(2, 3, 0.5, rng, nullptr);
  CHECK_THROWS_AS(ema_update(bank, Tensor::zeros(3, 3)), ShapeError);
}
