#include <cmath>
#include <doctest.h>

#include "ptcmil/error.hpp"
#include "ptcmil/gradcheck.hpp"
#include "ptcmil/prototype.hpp"
#include "ptcmil/rng.hpp"

using namespace ptcmil;

namespace {

Tensor random_input(int rows, int cols, Rng& rng) {
  std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
  for (double& v : vals) v = rng.normal();
  return Tensor::from_values(rows, cols, vals);
}

}  // namespace

TEST_CASE("merge: softmax-weighted combination of member rows") {
  Tensor members = Tensor::from_values(3, 2, {1, 10, 2, 20, 3, 30});
  SUBCASE("equal scores give the exact arithmetic mean") {
    Tensor scores = Tensor::full(3, 1, 0.7);
    Tensor proto = merge(members, scores);
    CHECK(proto.rows() == 1);
    CHECK(proto.at(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(proto.at(0, 1) == doctest::Approx(20.0).epsilon(1e-14));
  }
  SUBCASE("dominant score selects its row") {
    Tensor scores = Tensor::from_values(3, 1, {0.0, 50.0, 0.0});
    Tensor proto = merge(members, scores);
    CHECK(proto.at(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(proto.at(0, 1) == doctest::Approx(20.0).epsilon(1e-9));
  }
  SUBCASE("single member is returned as-is") {
    Tensor one = merge(Tensor::from_values(1, 2, {4.0, 5.0}), Tensor::from_values(1, 1, {-3.0}));
    CHECK(one.at(0, 0) == 4.0);
    CHECK(one.at(0, 1) == 5.0);
  }
  SUBCASE("shape guards") {
    CHECK_THROWS_AS(merge(members, Tensor::zeros(2, 1)), ShapeError);
    CHECK_THROWS_AS(merge(members, Tensor::zeros(3, 2)), ShapeError);
  }
}

TEST_CASE("score head is a linear map to one column") {
  ParamRegistry reg;
  Rng rng(6);
  ScoreHead head = ScoreHead::create("score", 4, rng, reg);
  CHECK(reg.has("score.weight"));
  CHECK(reg.has("score.bias"));
  Tensor scores = head(random_input(5, 4, rng));
  CHECK(scores.rows() == 5);
  CHECK(scores.cols() == 1);
}

TEST_CASE("local refine: routing, shared weights, empty clusters") {
  ParamRegistry reg;
  Rng rng(15);
  EncoderLayer local = EncoderLayer::create("local", 6, 2, rng, reg);
  Tensor prompts = random_input(3, 6, rng);
  Tensor tokens = random_input(5, 6, rng);
  ClusterPartition part;
  part.cluster_count = 3;
  part.labels = {0, 2, 0, 2, 2};
  part.groups = {{0, 2}, {}, {1, 3, 4}};
  part.empty = {false, true, false};
  const std::vector<RefinedCluster> refined = local_refine(part, prompts, tokens, local);
  REQUIRE(refined.size() == 3);
  CHECK_FALSE(refined[0].empty);
  CHECK(refined[1].empty);
  CHECK_FALSE(refined[2].empty);
  CHECK(refined[0].members.rows() == 2);
  CHECK(refined[2].members.rows() == 3);
  CHECK_FALSE(refined[1].members.defined());
  CHECK(refined[0].member_indices == std::vector<int>{0, 2});
  CHECK(refined[2].member_indices == std::vector<int>{1, 3, 4});
  for (const RefinedCluster& rc : refined) {
    CHECK(rc.prompt.rows() == 1);
    CHECK(rc.prompt.cols() == 6);
  }
  // The created layer is the identity (zero output projections), so give the
  // attention path weight before probing the joint-processing behaviour.
  Tensor& o_weight = reg.at("local.attn.o.weight").tensor;
  for (int i = 0; i < o_weight.rows(); ++i) {
    for (int j = 0; j < o_weight.cols(); ++j) o_weight.at(i, j) = 0.1 * (1 + ((i + j) % 3));
  }
  const std::vector<RefinedCluster> mixed = local_refine(part, prompts, tokens, local);
  // The local layer processes [prompt; members] jointly: the refined prompt of
  // a non-empty cluster differs from refining the prompt row alone.
  Tensor alone = local(gather_rows(prompts, {0}));
  bool same = true;
  for (int j = 0; j < 6; ++j) {
    if (std::abs(alone.at(0, j) - mixed[0].prompt.at(0, j)) > 1e-12) same = false;
  }
  CHECK_FALSE(same);
  // An empty cluster's refined prompt equals the prompt refined alone.
  Tensor alone1 = local(gather_rows(prompts, {1}));
  for (int j = 0; j < 6; ++j) {
    CHECK(mixed[1].prompt.at(0, j) == doctest::Approx(alone1.at(0, j)).epsilon(1e-14));
  }
}

TEST_CASE("local refine shape guards") {
  ParamRegistry reg;
  Rng rng(3);
  EncoderLayer local = EncoderLayer::create("local", 4, 2, rng, reg);
  ClusterPartition part;
  part.cluster_count = 2;
  part.groups = {{0}, {}};
  part.empty = {false, true};
  part.labels = {0};
  CHECK_THROWS_AS(local_refine(part, Tensor::zeros(3, 4), Tensor::zeros(1, 4), local), ShapeError);
  CHECK_THROWS_AS(local_refine(part, Tensor::zeros(2, 4), Tensor::zeros(1, 5), local), ShapeError);
}

TEST_CASE("gradients flow through refine and merge") {
  ParamRegistry reg;
  Rng rng(44);
  EncoderLayer local = EncoderLayer::create("local", 4, 2, rng, reg);
  ScoreHead score = ScoreHead::create("score", 4, rng, reg);
  Tensor prompts = random_input(2, 4, rng).set_requires_grad(true);
  Tensor tokens = random_input(4, 4, rng);
  ClusterPartition part;
  part.cluster_count = 2;
  part.labels = {0, 1, 0, 1};
  part.groups = {{0, 2}, {1, 3}};
  part.empty = {false, false};
  auto loss = [&] {
    const std::vector<RefinedCluster> refined = local_refine(part, prompts, tokens, local);
    Tensor sum;
    for (const RefinedCluster& rc : refined) {
      Tensor proto = merge(rc.members, score(rc.members));
      sum = sum.defined() ? add(sum, proto) : proto;
    }
    return mean_all(mul(sum, sum));
  };
  std::vector<Tensor> leaves = reg.tensors();
  leaves.push_back(prompts);
  CHECK(finite_diff_check(loss, leaves) < 5e-6);
}
