#pragma once

#include <string>
#include <vector>

#include "ptcmil/params.hpp"
#include "ptcmil/rng.hpp"
#include "ptcmil/tensor.hpp"

namespace ptcmil {

// Entries i.i.d. uniform on [-b, b] with b = sqrt(6 / (rows + cols)).
std::vector<double> xavier_uniform(int rows, int cols, Rng& rng);

// y = x W^T + b with W out x in, bias 1 x out.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(const std::string& prefix, int in_dim, int out_dim, Rng& rng,
                       ParamRegistry& reg);
  static Linear create_zero(const std::string& prefix, int in_dim, int out_dim,
                            ParamRegistry& reg);
  Tensor operator()(const Tensor& x) const;
  int in_dim() const { return weight.cols(); }
  int out_dim() const { return weight.rows(); }
};

struct LayerNormParams {
  Tensor gamma;  // init 1
  Tensor beta;   // init 0

  static LayerNormParams create(const std::string& prefix, int dim, ParamRegistry& reg);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

struct MultiHeadAttention {
  Linear query, key, value, out;
  int heads = 1;

  static MultiHeadAttention create(const std::string& prefix, int dim, int heads, Rng& rng,
                                   ParamRegistry& reg);
  Tensor operator()(const Tensor& tokens) const;
  // Row-stochastic per-head attention maps for the given tokens (forward-only).
  std::vector<Tensor> attention_maps(const Tensor& tokens) const;
};

// Pre-norm transformer encoder layer: x + Attn(LN(x)), then + MLP(LN(.)).
// MLP hidden width is 2 * dim with GELU. No positional encodings anywhere,
// so the layer is permutation-equivariant over tokens.
struct EncoderLayer {
  LayerNormParams norm1, norm2;
  MultiHeadAttention attn;
  Linear fc_in, fc_out;
  int dim = 0;

  static EncoderLayer create(const std::string& prefix, int dim, int heads, Rng& rng,
                             ParamRegistry& reg);
  Tensor operator()(const Tensor& tokens) const;
};

}  // namespace ptcmil
