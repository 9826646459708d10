#include "ustar/models.hpp"

#include <cmath>
#include <stdexcept>

namespace ustar {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::single_frame: return "single";
    case ModelKind::chain: return "chain";
    case ModelKind::fully_connected: return "fc";
    case ModelKind::star: return "star";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "single") return ModelKind::single_frame;
  if (name == "chain") return ModelKind::chain;
  if (name == "fc") return ModelKind::fully_connected;
  if (name == "star") return ModelKind::star;
  throw std::invalid_argument("unknown model '" + name + "' (expected star, chain, fc or single)");
}

void HeadConfig::validate() const {
  if (dim == 0) throw std::invalid_argument("model.C must be positive");
  if (heads == 0) throw std::invalid_argument("model.heads must be positive");
  if (dim % heads != 0) throw std::invalid_argument("model.C must be divisible by model.heads");
  if (kind != ModelKind::single_frame && depth == 0) throw std::invalid_argument("model.depth must be positive");
  if (kind == ModelKind::chain && dim % 2 != 0) throw std::invalid_argument("chain head needs even model.C");
}

AnchorSet build_anchor_set(const ScanTrajectory& scan, const FeatureProvider& provider,
                           std::size_t current_index, std::span<const std::size_t> sampled) {
  if (current_index >= scan.frames.size()) throw std::invalid_argument("current frame out of range");
  AnchorSet set;
  set.scan_id = scan.scan;
  set.current_index = current_index;
  set.current_feature = provider.lookup(scan.scan, current_index);
  const Pose6& pc = scan.frames[current_index].pose;
  const Pose6* prev = nullptr;
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    const std::size_t i = sampled[k];
    if (i >= current_index || (k > 0 && i <= sampled[k - 1])) {
      throw std::invalid_argument("anchor indices must increase strictly and precede the current frame");
    }
    const Pose6& pi = scan.frames[i].pose;
    set.indices.push_back(i);
    set.features.push_back(provider.lookup(scan.scan, i));
    set.actions.push_back(relative_action(pc, pi));
    set.step_actions.push_back(prev ? relative_action(*prev, pi) : Action6{});
    prev = &pi;
  }
  set.step_actions.push_back(prev ? relative_action(*prev, pc) : Action6{});
  return set;
}

template <typename T>
GraphBatch<T> GraphBatch<T>::pack(std::span<const AnchorSet> sets) {
  if (sets.empty()) throw std::invalid_argument("cannot pack an empty batch");
  GraphBatch g;
  g.size = sets.size();
  g.dim = sets.front().current_feature.size();
  const std::size_t C = g.dim;
  std::size_t n = 0;
  for (const auto& s : sets) n += s.features.size();

  std::vector<T> cur, af, aa, tf, ta, st;
  cur.reserve(g.size * C);
  af.reserve(n * C);
  aa.reserve(n * 6);
  tf.reserve((n + g.size) * C);
  ta.reserve((n + g.size) * 6);
  st.reserve((n + g.size) * 6);
  g.anchor_offsets.push_back(0);
  g.token_offsets.push_back(0);
  auto put = [](std::vector<T>& dst, const auto& src) {
    for (double x : src) dst.push_back(static_cast<T>(x));
  };
  for (const auto& s : sets) {
    if (s.current_feature.size() != C) throw std::invalid_argument("batch mixes feature widths");
    if (s.actions.size() != s.features.size() || s.step_actions.size() != s.features.size() + 1) {
      throw std::invalid_argument("malformed anchor set");
    }
    put(cur, s.current_feature);
    for (std::size_t i = 0; i < s.features.size(); ++i) {
      if (s.features[i].size() != C) throw std::invalid_argument("batch mixes feature widths");
      put(af, s.features[i]);
      put(aa, s.actions[i].to_array());
      put(tf, s.features[i]);
      put(ta, s.actions[i].to_array());
      put(st, s.step_actions[i].to_array());
      g.positions.push_back(i);
    }
    put(tf, s.current_feature);
    put(ta, Action6{}.to_array());
    put(st, s.step_actions.back().to_array());
    g.positions.push_back(s.features.size());
    g.anchor_offsets.push_back(g.anchor_offsets.back() + s.features.size());
    g.token_offsets.push_back(g.token_offsets.back() + s.features.size() + 1);
    g.current_rows.push_back(g.token_offsets.back() - 1);
  }
  g.current = ad::Tensor<T>::constant({g.size, C}, std::move(cur));
  g.anchor_features = ad::Tensor<T>::constant({n, C}, std::move(af));
  g.anchor_actions = ad::Tensor<T>::constant({n, 6}, std::move(aa));
  g.token_features = ad::Tensor<T>::constant({n + g.size, C}, std::move(tf));
  g.token_actions = ad::Tensor<T>::constant({n + g.size, 6}, std::move(ta));
  g.step_actions = ad::Tensor<T>::constant({n + g.size, 6}, std::move(st));
  return g;
}

// --- heads -----------------------------------------------------------------

template <typename T>
NavigationHead<T>::NavigationHead(const HeadConfig& config) : config_(config), store_(config.seed) {
  config_.validate();
}

template <typename T>
ad::Tensor<T> NavigationHead<T>::decode(const ad::Tensor<T>& m) const {
  auto h = ad::gelu(ad::grouped_linear(m, dec_w1_, dec_b1_, true));
  return ad::grouped_linear(h, dec_w2_, dec_b2_, false);
}

namespace {

template <typename T>
void register_decoders(nn::ParameterStore<T>& store, std::size_t C, ad::Tensor<T>& w1,
                       ad::Tensor<T>& b1, ad::Tensor<T>& w2, ad::Tensor<T>& b2) {
  w1 = store.uniform("decoder.w1", {kViewCount, C, C}, C);
  b1 = store.uniform("decoder.b1", {kViewCount, C}, C);
  w2 = store.uniform("decoder.w2", {kViewCount, C, 6}, C);
  b2 = store.uniform("decoder.b2", {kViewCount, 6}, C);
}

template <typename T>
std::vector<nn::SelfAttentionBlock<T>> make_blocks(nn::ParameterStore<T>& store, const HeadConfig& c,
                                                   std::size_t width) {
  std::vector<nn::SelfAttentionBlock<T>> blocks;
  for (std::size_t d = 0; d < c.depth; ++d) {
    blocks.emplace_back(store, "refine" + std::to_string(d), width, c.heads, c.pre_norm);
  }
  return blocks;
}

}  // namespace

template <typename T>
StarHead<T>::StarHead(const HeadConfig& config) : NavigationHead<T>(config) {
  const std::size_t C = this->config_.dim;
  auto& store = this->store_;
  encoder_ = ActionEncoder<T>(store, "action_encoder", C, this->config_.standardize_actions);
  blocks_ = make_blocks(store, this->config_, 2 * C);
  project_ = nn::Linear<T>(store, "project", 2 * C, C);
  cross_ = nn::CrossAttentionBlock<T>(store, "localize", C, this->config_.heads, this->config_.pre_norm);
  register_decoders(store, C, this->dec_w1_, this->dec_b1_, this->dec_w2_, this->dec_b2_);
}

template <typename T>
ad::Tensor<T> StarHead<T>::forward(const GraphBatch<T>& batch) const {
  if (batch.dim != this->config_.dim) throw std::invalid_argument("batch width differs from model.C");
  if (bypass_localization) return this->decode(batch.current);
  for (std::size_t b = 0; b < batch.size; ++b) {
    if (batch.anchor_offsets[b + 1] == batch.anchor_offsets[b]) {
      throw std::invalid_argument("star head needs at least one anchor per sample");
    }
  }
  auto h = ad::concat_cols(batch.anchor_features, encoder_(batch.anchor_actions));
  for (const auto& block : blocks_) h = block(h, batch.anchor_offsets);
  auto kv = project_(h);
  std::vector<std::size_t> q_offsets(batch.size + 1);
  for (std::size_t b = 0; b <= batch.size; ++b) q_offsets[b] = b;
  auto m = cross_(batch.current, kv, q_offsets, batch.anchor_offsets);
  return this->decode(m);
}

template <typename T>
TokenHead<T>::TokenHead(const HeadConfig& config) : NavigationHead<T>(config) {
  if (config.kind != ModelKind::chain && config.kind != ModelKind::fully_connected) {
    throw std::invalid_argument("TokenHead is for chain and fc models");
  }
  const std::size_t C = this->config_.dim;
  auto& store = this->store_;
  encoder_ = ActionEncoder<T>(store, "action_encoder", C, this->config_.standardize_actions);
  blocks_ = make_blocks(store, this->config_, 2 * C);
  project_ = nn::Linear<T>(store, "project", 2 * C, C);
  register_decoders(store, C, this->dec_w1_, this->dec_b1_, this->dec_w2_, this->dec_b2_);
}

template <typename T>
ad::Tensor<T> TokenHead<T>::forward(const GraphBatch<T>& batch) const {
  const std::size_t C = this->config_.dim;
  if (batch.dim != C) throw std::invalid_argument("batch width differs from model.C");
  const bool chain = this->config_.kind == ModelKind::chain;
  auto h = ad::concat_cols(batch.token_features, encoder_(chain ? batch.step_actions : batch.token_actions));
  if (chain) {
    std::vector<T> pe;
    pe.reserve(batch.positions.size() * 2 * C);
    for (std::size_t p : batch.positions) {
      for (double x : sinusoidal_position(p, 2 * C)) pe.push_back(static_cast<T>(x));
    }
    h = ad::add(h, ad::Tensor<T>::constant({batch.positions.size(), 2 * C}, std::move(pe)));
  }
  for (const auto& block : blocks_) h = block(h, batch.token_offsets);
  return this->decode(project_(ad::gather_rows(h, batch.current_rows)));
}

template <typename T>
SingleFrameHead<T>::SingleFrameHead(const HeadConfig& config) : NavigationHead<T>(config) {
  register_decoders(this->store_, this->config_.dim, this->dec_w1_, this->dec_b1_, this->dec_w2_,
                    this->dec_b2_);
}

template <typename T>
ad::Tensor<T> SingleFrameHead<T>::forward(const GraphBatch<T>& batch) const {
  if (batch.dim != this->config_.dim) throw std::invalid_argument("batch width differs from model.C");
  return this->decode(batch.current);
}

template <typename T>
std::unique_ptr<NavigationHead<T>> make_head(const HeadConfig& config) {
  switch (config.kind) {
    case ModelKind::star: return std::make_unique<StarHead<T>>(config);
    case ModelKind::chain:
    case ModelKind::fully_connected: return std::make_unique<TokenHead<T>>(config);
    case ModelKind::single_frame: return std::make_unique<SingleFrameHead<T>>(config);
  }
  throw std::invalid_argument("unknown model kind");
}

std::size_t head_parameter_count(const HeadConfig& c) {
  const std::size_t C = c.dim;
  const std::size_t decoders = kViewCount * (C * C + C) + kViewCount * (C * 6 + 6);
  if (c.kind == ModelKind::single_frame) return decoders;
  const std::size_t encoder = 6 * C + C;
  const std::size_t refine = c.depth * nn::attention_block_size(2 * C, c.pre_norm, false);
  const std::size_t project = 2 * C * C + C;
  std::size_t n = encoder + refine + project + decoders;
  if (c.kind == ModelKind::star) n += nn::attention_block_size(C, c.pre_norm, true);
  return n;
}

std::vector<double> sinusoidal_position(std::size_t position, std::size_t width) {
  if (width % 2 != 0) throw std::invalid_argument("sinusoidal width must be even");
  std::vector<double> out(width);
  const double p = static_cast<double>(position);
  for (std::size_t i = 0; i < width / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
    out[2 * i] = std::sin(p * freq);
    out[2 * i + 1] = std::cos(p * freq);
  }
  return out;
}

template <typename T>
ad::Tensor<T> multi_view_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& labels,
                              std::span<const T> mask) {
  return ad::action_smooth_l1(pred, labels, mask, T(1));
}

double multi_view_loss(const std::array<Action6, kViewCount>& pred,
                       const std::array<Action6, kViewCount>& labels,
                       const std::array<bool, kViewCount>& mask) {
  std::vector<double> p, l, m;
  for (std::size_t k = 0; k < kViewCount; ++k) {
    const auto a = pred[k].to_array(), b = labels[k].to_array();
    p.insert(p.end(), a.begin(), a.end());
    l.insert(l.end(), b.begin(), b.end());
    m.push_back(mask[k] ? 1.0 : 0.0);
  }
  const auto tp = ad::Tensor<double>::constant({1, 6 * kViewCount}, std::move(p));
  const auto tl = ad::Tensor<double>::constant({1, 6 * kViewCount}, std::move(l));
  return multi_view_loss<double>(tp, tl, m).item();
}

template <typename T>
std::array<Action6, kViewCount> prediction_row(const ad::Tensor<T>& pred, std::size_t b) {
  if (pred.cols() != 6 * kViewCount || b >= pred.rows()) throw std::out_of_range("prediction row");
  std::array<Action6, kViewCount> out{};
  for (std::size_t k = 0; k < kViewCount; ++k) {
    std::array<double, 6> a{};
    for (std::size_t j = 0; j < 6; ++j) a[j] = static_cast<double>(pred.at(b, 6 * k + j));
    out[k] = Action6::from_array(a);
  }
  return out;
}

#define USTAR_INSTANTIATE(T)                                                                      \
  template struct GraphBatch<T>;                                                                  \
  template class NavigationHead<T>;                                                               \
  template class StarHead<T>;                                                                     \
  template class TokenHead<T>;                                                                    \
  template class SingleFrameHead<T>;                                                              \
  template std::unique_ptr<NavigationHead<T>> make_head<T>(const HeadConfig&);                    \
  template ad::Tensor<T> multi_view_loss<T>(const ad::Tensor<T>&, const ad::Tensor<T>&,           \
                                            std::span<const T>);                                  \
  template std::array<Action6, kViewCount> prediction_row<T>(const ad::Tensor<T>&, std::size_t);

USTAR_INSTANTIATE(float)
USTAR_INSTANTIATE(double)

#undef USTAR_INSTANTIATE

}  // namespace ustar
