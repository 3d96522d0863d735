#include "ptcmil/nn.hpp"

#include <cmath>

#include "ptcmil/error.hpp"

namespace ptcmil {

std::vector<double> xavier_uniform(int rows, int cols, Rng& rng) {
  if (rows < 1 || cols < 1) {
    throw ValueError("xavier_uniform: extents must be positive");
  }
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
  for (double& v : vals) {
    v = rng.uniform(-bound, bound);
  }
  return vals;
}

Linear Linear::create(const std::string& prefix, int in_dim, int out_dim, Rng& rng,
                      ParamRegistry& reg) {
  Linear l;
  l.weight = reg.add(prefix + ".weight", out_dim, in_dim, xavier_uniform(out_dim, in_dim, rng));
  l.bias = reg.add(prefix + ".bias", 1, out_dim, std::vector<double>(out_dim, 0.0));
  return l;
}

Linear Linear::create_zero(const std::string& prefix, int in_dim, int out_dim,
                           ParamRegistry& reg) {
  Linear l;
  l.weight = reg.add(prefix + ".weight", out_dim, in_dim,
                     std::vector<double>(static_cast<std::size_t>(out_dim) * in_dim, 0.0));
  l.bias = reg.add(prefix + ".bias", 1, out_dim, std::vector<double>(out_dim, 0.0));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  return add_row(matmul(x, transpose(weight)), bias);
}

LayerNormParams LayerNormParams::create(const std::string& prefix, int dim, ParamRegistry& reg) {
  LayerNormParams ln;
  ln.gamma = reg.add(prefix + ".gamma", 1, dim, std::vector<double>(dim, 1.0));
  ln.beta = reg.add(prefix + ".beta", 1, dim, std::vector<double>(dim, 0.0));
  return ln;
}

MultiHeadAttention MultiHeadAttention::create(const std::string& prefix, int dim, int heads,
                                              Rng& rng, ParamRegistry& reg) {
  if (heads < 1 || dim % heads != 0) {
    throw ValueError("attention: head count " + std::to_string(heads) + " must divide dim " +
                     std::to_string(dim));
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.query = Linear::create(prefix + ".q", dim, dim, rng, reg);
  a.key = Linear::create(prefix + ".k", dim, dim, rng, reg);
  a.value = Linear::create(prefix + ".v", dim, dim, rng, reg);
  // Zero output projection: the attention sublayer contributes nothing at step 0,
  // so the residual stream starts as the raw embeddings and deepens gradually.
  a.out = Linear::create_zero(prefix + ".o", dim, dim, reg);
  return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& tokens) const {
  const int dim = query.out_dim();
  const int head_dim = dim / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = query(tokens);
  Tensor k = key(tokens);
  Tensor v = value(tokens);
  std::vector<Tensor> contexts;
  contexts.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * head_dim, head_dim);
    Tensor kh = slice_cols(k, h * head_dim, head_dim);
    Tensor vh = slice_cols(v, h * head_dim, head_dim);
    Tensor weights = row_softmax(scale(matmul(qh, transpose(kh)), inv_scale));
    contexts.push_back(matmul(weights, vh));
  }
  Tensor ctx = heads == 1 ? contexts[0] : concat_cols(contexts);
  return out(ctx);
}

std::vector<Tensor> MultiHeadAttention::attention_maps(const Tensor& tokens) const {
  const int dim = query.out_dim();
  const int head_dim = dim / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = query(tokens);
  Tensor k = key(tokens);
  std::vector<Tensor> maps;
  maps.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * head_dim, head_dim);
    Tensor kh = slice_cols(k, h * head_dim, head_dim);
    maps.push_back(row_softmax(scale(matmul(qh, transpose(kh)), inv_scale)));
  }
  return maps;
}

EncoderLayer EncoderLayer::create(const std::string& prefix, int dim, int heads, Rng& rng,
                                  ParamRegistry& reg) {
  EncoderLayer e;
  e.dim = dim;
  e.norm1 = LayerNormParams::create(prefix + ".norm1", dim, reg);
  e.attn = MultiHeadAttention::create(prefix + ".attn", dim, heads, rng, reg);
  e.norm2 = LayerNormParams::create(prefix + ".norm2", dim, reg);
  e.fc_in = Linear::create(prefix + ".mlp.fc_in", dim, 2 * dim, rng, reg);
  // Zero MLP output: together with the zero attention projection the whole
  // layer is the identity at init, which keeps early optimization stable.
  e.fc_out = Linear::create_zero(prefix + ".mlp.fc_out", 2 * dim, dim, reg);
  return e;
}

Tensor EncoderLayer::operator()(const Tensor& tokens) const {
  if (tokens.cols() != dim) {
    throw ShapeError("encoder: token dim " + tokens.shape_str() + " does not match layer dim " +
                     std::to_string(dim));
  }
  Tensor h = add(tokens, attn(norm1(tokens)));
  Tensor mlp = fc_out(gelu(fc_in(norm2(h))));
  return add(h, mlp);
}

}  // namespace ptcmil
