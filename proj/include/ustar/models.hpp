#pragma once

// Navigation heads. Every head maps a batch of anchor sets to ten per-view
// action predictions, laid out as [B, 60]: view-major, six columns per view
// (dpos mm, then drot deg).
//
//   star    anchors h_i = [f_i ; A(a_{c->i})], two self-attention blocks over
//           the anchor set, a learned 2C -> C projection, then one
//           cross-attention block queried by the current feature. No
//           positional information anywhere, so the head is a set function.
//   chain   anchors and the current frame as a time-ordered sequence, tokens
//           [f_i ; A(a_{i-1 -> i})] plus sinusoidal ordinal encodings,
//           non-causal self-attention, read the current token.
//   fc      anchors and the current frame as one fully connected token set,
//           tokens [f_i ; A(a_{c->i})] (current gets the zero action), read
//           the current token.
//   single  decoders applied to the current feature alone.
//
// Decoders are ten independent two-layer MLPs (C -> C -> 6, GELU), stored as
// grouped weights so all ten run as two batched products.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ustar/encoders.hpp"
#include "ustar/nn.hpp"
#include "ustar/pose.hpp"
#include "ustar/scan.hpp"

namespace ustar {

enum class ModelKind { single_frame, chain, fully_connected, star };

std::string to_string(ModelKind kind);
/// Accepts "single", "chain", "fc", "star".
ModelKind parse_model_kind(const std::string& name);

struct HeadConfig {
  ModelKind kind = ModelKind::star;
  std::size_t dim = 64;    // C
  std::size_t heads = 4;
  std::size_t depth = 2;   // self-attention blocks
  bool pre_norm = false;
  bool standardize_actions = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inputs of one prediction: the current frame plus its anchors in ascending
/// frame order.
struct AnchorSet {
  int scan_id = 0;
  std::size_t current_index = 0;
  std::vector<double> current_feature;
  std::vector<std::size_t> indices;
  std::vector<std::vector<double>> features;
  std::vector<Action6> actions;       // relative_action(current, anchor)
  std::vector<Action6> step_actions;  // per token of anchors + current; first is zero
};

/// Throws std::invalid_argument unless indices are strictly increasing and
/// below current_index.
AnchorSet build_anchor_set(const ScanTrajectory& scan, const FeatureProvider& provider,
                           std::size_t current_index, std::span<const std::size_t> sampled);

template <typename T>
struct GraphBatch {
  std::size_t size = 0;
  std::size_t dim = 0;
  ad::Tensor<T> current;                   // [B, C]
  ad::Tensor<T> anchor_features;           // [N, C]
  ad::Tensor<T> anchor_actions;            // [N, 6]
  std::vector<std::size_t> anchor_offsets; // B + 1
  // Token view used by chain and fc: each sample's anchors followed by its current frame.
  ad::Tensor<T> token_features;            // [N + B, C]
  ad::Tensor<T> token_actions;             // [N + B, 6] action to current, zero for current
  ad::Tensor<T> step_actions;              // [N + B, 6]
  std::vector<std::size_t> token_offsets;  // B + 1
  std::vector<std::size_t> current_rows;   // B
  std::vector<std::size_t> positions;      // N + B, ordinal within the sample

  static GraphBatch pack(std::span<const AnchorSet> sets);
};

template <typename T>
class NavigationHead {
 public:
  explicit NavigationHead(const HeadConfig& config);
  virtual ~NavigationHead() = default;
  NavigationHead(const NavigationHead&) = delete;
  NavigationHead& operator=(const NavigationHead&) = delete;

  /// [B, views * 6] predictions.
  virtual ad::Tensor<T> forward(const GraphBatch<T>& batch) const = 0;

  const HeadConfig& config() const { return config_; }
  nn::ParameterStore<T>& store() { return store_; }
  const nn::ParameterStore<T>& store() const { return store_; }

 protected:
  ad::Tensor<T> decode(const ad::Tensor<T>& m) const;

  HeadConfig config_;
  nn::ParameterStore<T> store_;
  ad::Tensor<T> dec_w1_, dec_b1_, dec_w2_, dec_b2_;
};

template <typename T>
class StarHead final : public NavigationHead<T> {
 public:
  explicit StarHead(const HeadConfig& config);
  ad::Tensor<T> forward(const GraphBatch<T>& batch) const override;

  /// Test hook: replace the localization output m by the current feature,
  /// which reduces the head to the single-frame wiring.
  bool bypass_localization = false;

 private:
  ActionEncoder<T> encoder_;
  std::vector<nn::SelfAttentionBlock<T>> blocks_;
  nn::Linear<T> project_;
  nn::CrossAttentionBlock<T> cross_;
};

template <typename T>
class TokenHead final : public NavigationHead<T> {
 public:
  explicit TokenHead(const HeadConfig& config);  // kind chain or fully_connected
  ad::Tensor<T> forward(const GraphBatch<T>& batch) const override;

 private:
  ActionEncoder<T> encoder_;
  std::vector<nn::SelfAttentionBlock<T>> blocks_;
  nn::Linear<T> project_;
};

template <typename T>
class SingleFrameHead final : public NavigationHead<T> {
 public:
  explicit SingleFrameHead(const HeadConfig& config);
  ad::Tensor<T> forward(const GraphBatch<T>& batch) const override;
};

template <typename T>
std::unique_ptr<NavigationHead<T>> make_head(const HeadConfig& config);

/// Closed-form parameter scalar count of the head `config` describes.
std::size_t head_parameter_count(const HeadConfig& config);

/// Sinusoidal encoding of an ordinal position, width `width` (even).
std::vector<double> sinusoidal_position(std::size_t position, std::size_t width);

/// Mean over present views of the mean Smooth L1 (beta 1) over six components,
/// rotation differences wrapped. pred/labels are [B, 60], mask [B, 10].
template <typename T>
ad::Tensor<T> multi_view_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& labels,
                              std::span<const T> mask);

/// Double-precision convenience for one sample.
double multi_view_loss(const std::array<Action6, kViewCount>& pred,
                       const std::array<Action6, kViewCount>& labels,
                       const std::array<bool, kViewCount>& mask);

/// Row b of a [B, 60] prediction tensor as ten actions.
template <typename T>
std::array<Action6, kViewCount> prediction_row(const ad::Tensor<T>& pred, std::size_t b);

}  // namespace ustar
