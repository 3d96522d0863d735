#include <cmath>
#include <doctest.h>

#include "ptcmil/error.hpp"
#include "ptcmil/gradcheck.hpp"
#include "ptcmil/nn.hpp"
#include "ptcmil/params.hpp"
#include "ptcmil/rng.hpp"

using namespace ptcmil;

namespace {

Tensor random_input(int rows, int cols, Rng& rng) {
  std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
  for (double& v : vals) v = rng.normal();
  return Tensor::from_values(rows, cols, vals);
}

}  // namespace

TEST_CASE("linear layer: registration, shapes, affine map") {
  ParamRegistry reg;
  Rng rng(3);
  Linear lin = Linear::create("proj", 3, 2, rng, reg);
  CHECK(reg.has("proj.weight"));
  CHECK(reg.has("proj.bias"));
  CHECK(lin.weight.rows() == 2);
  CHECK(lin.weight.cols() == 3);
  CHECK(lin.bias.rows() == 1);
  CHECK(lin.bias.cols() == 2);
  // Bias starts at zero, so f(0) = 0.
  Tensor out = lin(Tensor::zeros(4, 3));
  for (double v : out.values()) CHECK(v == 0.0);
  // f(x) = x W^T + b, checked against a manual contraction.
  Tensor x = Tensor::from_values(1, 3, {1.0, -2.0, 0.5});
  Tensor y = lin(x);
  for (int j = 0; j < 2; ++j) {
    double expect = lin.bias.at(0, j);
    for (int k = 0; k < 3; ++k) expect += x.at(0, k) * lin.weight.at(j, k);
    CHECK(y.at(0, j) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("xavier bound scales with fan-in and fan-out") {
  ParamRegistry reg;
  Rng rng(17);
  Linear lin = Linear::create("wide", 50, 10, rng, reg);
  const double bound = std::sqrt(6.0 / 60.0);
  double peak = 0.0;
  for (double v : lin.weight.values()) {
    CHECK(std::abs(v) <= bound);
    peak = std::max(peak, std::abs(v));
  }
  CHECK(peak > 0.5 * bound);  // draws actually span the interval
}

TEST_CASE("attention: shape preservation and row-stochastic maps") {
  ParamRegistry reg;
  Rng rng(7);
  MultiHeadAttention attn = MultiHeadAttention::create("attn", 8, 2, rng, reg);
  Tensor x = random_input(5, 8, rng);
  Tensor y = attn(x);
  CHECK(y.rows() == 5);
  CHECK(y.cols() == 8);
  const std::vector<Tensor> maps = attn.attention_maps(x);
  CHECK(maps.size() == 2);
  for (const Tensor& m : maps) {
    CHECK(m.rows() == 5);
    CHECK(m.cols() == 5);
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 5; ++j) {
        CHECK(m.at(i, j) >= 0.0);
        s += m.at(i, j);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(MultiHeadAttention::create("bad", 8, 3, rng, reg), ValueError);
}

TEST_CASE("encoder layer: shape, param naming, dim guard") {
  ParamRegistry reg;
  Rng rng(9);
  EncoderLayer enc = EncoderLayer::create("enc", 8, 2, rng, reg);
  for (const char* name : {"enc.norm1.gamma", "enc.norm1.beta", "enc.attn.q.weight", "enc.attn.k.weight",
                           "enc.attn.v.weight", "enc.attn.o.weight", "enc.norm2.gamma", "enc.mlp.fc_in.weight",
                           "enc.mlp.fc_out.weight"}) {
    CHECK(reg.has(name));
  }
  // Hidden width is 2x the embed dim.
  CHECK(reg.at("enc.mlp.fc_in.weight").tensor.rows() == 16);
  CHECK(reg.at("enc.mlp.fc_in.weight").tensor.cols() == 8);
  Tensor x = random_input(6, 8, rng);
  Tensor y = enc(x);
  CHECK(y.rows() == 6);
  CHECK(y.cols() == 8);
  CHECK_THROWS_AS(enc(Tensor::zeros(3, 4)), ShapeError);
}

TEST_CASE("encoder layer is permutation-equivariant") {
  ParamRegistry reg;
  Rng rng(21);
  EncoderLayer enc = EncoderLayer::create("enc", 8, 2, rng, reg);
  Tensor x = random_input(7, 8, rng);
  Tensor y = enc(x);
  std::vector<int> perm = {3, 0, 6, 1, 5, 2, 4};
  Tensor y_perm = enc(gather_rows(x, perm));
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 8; ++j) {
      CHECK(y_perm.at(i, j) == doctest::Approx(y.at(perm[static_cast<std::size_t>(i)], j)).epsilon(1e-9));
    }
  }
}

TEST_CASE("gradients flow through attention and the encoder layer") {
  ParamRegistry reg;
  Rng rng(33);
  EncoderLayer enc = EncoderLayer::create("enc", 6, 2, rng, reg);
  Tensor x = random_input(4, 6, rng);
  auto loss = [&] { return mean_all(mul(enc(x), enc(x))); };
  CHECK(finite_diff_check(loss, reg.tensors()) < 5e-6);
}

TEST_CASE("layer norm params init to identity transform") {
  ParamRegistry reg;
  Rng rng(1);
  LayerNormParams ln = LayerNormParams::create("ln", 4, reg);
  for (double v : ln.gamma.values()) CHECK(v == 1.0);
  for (double v : ln.beta.values()) CHECK(v == 0.0);
  Tensor x = random_input(3, 4, rng);
  Tensor y = ln(x);
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (int j = 0; j < 4; ++j) mean += y.at(i, j);
    CHECK(std::abs(mean / 4.0) < 1e-12);
  }
}
