#include "ustar/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "ustar/rng.hpp"

namespace ustar::nn {

template <typename T>
ad::Tensor<T>& ParameterStore<T>::add(const std::string& name, ad::Tensor<T> t) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  Parameter<T> p;
  p.name = name;
  p.m.assign(t.size(), T(0));
  p.v.assign(t.size(), T(0));
  p.tensor = std::move(t);
  params_.push_back(std::move(p));
  return params_.back().tensor;
}

template <typename T>
ad::Tensor<T> ParameterStore<T>::uniform(const std::string& name, std::vector<std::size_t> shape,
                                         std::size_t fan_in) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng = Rng::derive(seed_, {fnv1a(name)});
  std::vector<T> values(n);
  for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
  return add(name, ad::Tensor<T>::variable(std::move(shape), std::move(values)));
}

template <typename T>
ad::Tensor<T> ParameterStore<T>::filled(const std::string& name, std::vector<std::size_t> shape,
                                        T value) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return add(name, ad::Tensor<T>::variable(std::move(shape), std::vector<T>(n, value)));
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out)
    : weight(store.uniform(name + ".weight", {in, out}, in)),
      bias(store.uniform(name + ".bias", {out}, in)) {}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t width)
    : gamma(store.filled(name + ".gamma", {width}, T(1))),
      beta(store.filled(name + ".beta", {width}, T(0))) {}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T>& store, const std::string& name,
                                          std::size_t width, std::size_t heads_)
    : heads(heads_) {
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument(name + ": width " + std::to_string(width) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
  q = Linear<T>(store, name + ".q", width, width);
  k = Linear<T>(store, name + ".k", width, width);
  v = Linear<T>(store, name + ".v", width, width);
  out = Linear<T>(store, name + ".out", width, width);
}

template <typename T>
ad::Tensor<T> MultiHeadAttention<T>::operator()(const ad::Tensor<T>& queries,
                                                const ad::Tensor<T>& keys_values,
                                                const std::vector<std::size_t>& q_offsets,
                                                const std::vector<std::size_t>& k_offsets) const {
  auto mixed = ad::attention(q(queries), k(keys_values), v(keys_values), heads, q_offsets, k_offsets);
  return out(mixed);
}

template <typename T>
Mlp<T>::Mlp(ParameterStore<T>& store, const std::string& name, std::size_t width)
    : in(store, name + ".in", width, width), out(store, name + ".out", width, width) {}

template <typename T>
SelfAttentionBlock<T>::SelfAttentionBlock(ParameterStore<T>& store, const std::string& name,
                                          std::size_t width, std::size_t heads, bool pre_norm_)
    : attn(store, name + ".attn", width, heads), mlp(store, name + ".mlp", width), pre_norm(pre_norm_) {
  if (pre_norm) {
    norm_attn = LayerNorm<T>(store, name + ".norm_attn", width);
    norm_mlp = LayerNorm<T>(store, name + ".norm_mlp", width);
  }
}

template <typename T>
ad::Tensor<T> SelfAttentionBlock<T>::operator()(const ad::Tensor<T>& x,
                                                const std::vector<std::size_t>& offsets) const {
  const auto a_in = pre_norm ? norm_attn(x) : x;
  auto h = ad::add(x, attn(a_in, a_in, offsets, offsets));
  const auto m_in = pre_norm ? norm_mlp(h) : h;
  return ad::add(h, mlp(m_in));
}

template <typename T>
CrossAttentionBlock<T>::CrossAttentionBlock(ParameterStore<T>& store, const std::string& name,
                                            std::size_t width, std::size_t heads, bool pre_norm_)
    : attn(store, name + ".attn", width, heads), mlp(store, name + ".mlp", width), pre_norm(pre_norm_) {
  if (pre_norm) {
    norm_q = LayerNorm<T>(store, name + ".norm_q", width);
    norm_kv = LayerNorm<T>(store, name + ".norm_kv", width);
    norm_mlp = LayerNorm<T>(store, name + ".norm_mlp", width);
  }
}

template <typename T>
ad::Tensor<T> CrossAttentionBlock<T>::operator()(const ad::Tensor<T>& q, const ad::Tensor<T>& kv,
                                                 const std::vector<std::size_t>& q_offsets,
                                                 const std::vector<std::size_t>& k_offsets) const {
  const auto q_in = pre_norm ? norm_q(q) : q;
  const auto kv_in = pre_norm ? norm_kv(kv) : kv;
  auto h = ad::add(q, attn(q_in, kv_in, q_offsets, k_offsets));
  const auto m_in = pre_norm ? norm_mlp(h) : h;
  return ad::add(h, mlp(m_in));
}

std::size_t attention_block_size(std::size_t width, bool pre_norm, bool cross) {
  const std::size_t affine = width * width + width;
  std::size_t n = 4 * affine + 2 * affine;
  if (pre_norm) n += (cross ? 3 : 2) * 2 * width;
  return n;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template struct SelfAttentionBlock<float>;
template struct SelfAttentionBlock<double>;
template struct CrossAttentionBlock<float>;
template struct CrossAttentionBlock<double>;

}  // namespace ustar::nn
