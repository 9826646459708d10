#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ustar/tensor.hpp"

namespace ustar::nn {

template <typename T>
struct Parameter {
  std::string name;
  ad::Tensor<T> tensor;
  std::vector<T> m;  // AdamW first moment
  std::vector<T> v;  // AdamW second moment
  std::uint64_t step = 0;
};

/// Owns every trainable tensor of a model, in registration order.
/// Initialization is uniform in +-1/sqrt(fan_in); each parameter draws from
/// its own stream keyed by (seed, name), so adding a parameter never shifts
/// the values of the others.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  ad::Tensor<T> uniform(const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in);
  ad::Tensor<T> filled(const std::string& name, std::vector<std::size_t> shape, T value);

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  const Parameter<T>* find(const std::string& name) const;
  Parameter<T>* find(const std::string& name);
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  ad::Tensor<T>& add(const std::string& name, ad::Tensor<T> t);

  std::uint64_t seed_;
  std::vector<Parameter<T>> params_;
};

template <typename T>
struct Linear {
  ad::Tensor<T> weight;  // [in, out]
  ad::Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out);
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return ad::linear(x, weight, bias); }
};

template <typename T>
struct LayerNorm {
  ad::Tensor<T> gamma;
  ad::Tensor<T> beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t width);
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return ad::layer_norm(x, gamma, beta); }
};

/// Learned Q/K/V/output projections around the segmented attention core.
/// No positional information is added here.
template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, out;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t width,
                     std::size_t heads);
  ad::Tensor<T> operator()(const ad::Tensor<T>& queries, const ad::Tensor<T>& keys_values,
                           const std::vector<std::size_t>& q_offsets,
                           const std::vector<std::size_t>& k_offsets) const;
};

/// width -> width -> width with GELU in between.
template <typename T>
struct Mlp {
  Linear<T> in, out;

  Mlp() = default;
  Mlp(ParameterStore<T>& store, const std::string& name, std::size_t width);
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return out(ad::gelu(in(x))); }
};

/// x + Attn(x); x + Mlp(x). With pre_norm, each sublayer reads a
/// layer-normalized copy of its input.
template <typename T>
struct SelfAttentionBlock {
  MultiHeadAttention<T> attn;
  Mlp<T> mlp;
  bool pre_norm = false;
  LayerNorm<T> norm_attn, norm_mlp;

  SelfAttentionBlock() = default;
  SelfAttentionBlock(ParameterStore<T>& store, const std::string& name, std::size_t width,
                     std::size_t heads, bool pre_norm);
  ad::Tensor<T> operator()(const ad::Tensor<T>& x, const std::vector<std::size_t>& offsets) const;
};

/// q + Attn(q, kv); q + Mlp(q).
template <typename T>
struct CrossAttentionBlock {
  MultiHeadAttention<T> attn;
  Mlp<T> mlp;
  bool pre_norm = false;
  LayerNorm<T> norm_q, norm_kv, norm_mlp;

  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParameterStore<T>& store, const std::string& name, std::size_t width,
                      std::size_t heads, bool pre_norm);
  ad::Tensor<T> operator()(const ad::Tensor<T>& q, const ad::Tensor<T>& kv,
                           const std::vector<std::size_t>& q_offsets,
                           const std::vector<std::size_t>& k_offsets) const;
};

/// Parameter scalars in one SelfAttentionBlock / CrossAttentionBlock of the given width.
std::size_t attention_block_size(std::size_t width, bool pre_norm, bool cross);

}  // namespace ustar::nn
