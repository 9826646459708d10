#pragma once

// Frozen visual features and the trainable action encoder.
//
// A FeatureProvider stands in for a frozen vision backbone: it maps
// (scan id, frame index) to a fixed vector of width C. Nothing downstream can
// write to it, so gradients stop at the features.

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ustar/nn.hpp"
#include "ustar/pose.hpp"
#include "ustar/scan.hpp"
#include "ustar/simulator.hpp"

namespace ustar {

class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;

  virtual std::size_t dim() const = 0;
  /// Writes the feature of frame `frame` (position in the scan) into `out`,
  /// which must hold dim() values. Throws std::out_of_range for an unknown
  /// scan or frame; `out` is untouched in that case.
  virtual void lookup(int scan_id, std::size_t frame, std::span<double> out) const = 0;
  /// Content digest; equal digests mean every lookup returns the same bits.
  virtual std::uint64_t digest() const = 0;

  std::vector<double> lookup(int scan_id, std::size_t frame) const;
};

/// Serves the features stored in scan files. The scans must outlive the provider.
class ScanFeatureProvider final : public FeatureProvider {
 public:
  explicit ScanFeatureProvider(std::span<const ScanTrajectory> scans);

  std::size_t dim() const override { return dim_; }
  using FeatureProvider::lookup;
  void lookup(int scan_id, std::size_t frame, std::span<double> out) const override;
  std::uint64_t digest() const override;

 private:
  std::span<const ScanTrajectory> scans_;
  std::unordered_map<int, std::size_t> by_id_;
  std::size_t dim_ = 0;
};

/// Recomputes features from the simulator oracle at each stored pose.
class OracleFeatureProvider final : public FeatureProvider {
 public:
  /// `anatomies` is indexed by subject id lookup; scans must outlive the provider.
  OracleFeatureProvider(std::vector<LatentAnatomy> anatomies, std::span<const ScanTrajectory> scans);

  std::size_t dim() const override { return dim_; }
  using FeatureProvider::lookup;
  void lookup(int scan_id, std::size_t frame, std::span<double> out) const override;
  std::uint64_t digest() const override;

 private:
  std::vector<LatentAnatomy> anatomies_;
  std::unordered_map<int, std::size_t> anatomy_by_subject_;
  std::span<const ScanTrajectory> scans_;
  std::unordered_map<int, std::size_t> by_id_;
  std::size_t dim_ = 0;
};

/// f^a = W [dpos; drot] + b, 6 -> C. Actions enter in native mm/deg units
/// unless `standardize` is set, in which case every component is divided by
/// kActionScale first.
template <typename T>
struct ActionEncoder {
  static constexpr double kActionScale = 10.0;

  nn::Linear<T> proj;
  bool standardize = false;

  ActionEncoder() = default;
  ActionEncoder(nn::ParameterStore<T>& store, const std::string& name, std::size_t dim,
                bool standardize = false);

  /// actions is [n, 6].
  ad::Tensor<T> operator()(const ad::Tensor<T>& actions) const;
  std::vector<T> encode(const Action6& a) const;
};

}  // namespace ustar
