#include "ustar/encoders.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

#include "ustar/rng.hpp"

namespace ustar {
namespace {

std::unordered_map<int, std::size_t> index_scans(std::span<const ScanTrajectory> scans) {
  std::unordered_map<int, std::size_t> out;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (!out.emplace(scans[i].scan, i).second) {
      throw std::invalid_argument("duplicate scan id " + std::to_string(scans[i].scan));
    }
  }
  return out;
}

const ScanTrajectory& find_scan(std::span<const ScanTrajectory> scans,
                                const std::unordered_map<int, std::size_t>& by_id, int scan_id,
                                std::size_t frame) {
  auto it = by_id.find(scan_id);
  if (it == by_id.end()) throw std::out_of_range("unknown scan id " + std::to_string(scan_id));
  const auto& scan = scans[it->second];
  if (frame >= scan.frames.size()) {
    throw std::out_of_range("scan " + std::to_string(scan_id) + " has no frame " + std::to_string(frame));
  }
  return scan;
}

std::uint64_t hash_doubles(std::uint64_t h, std::span<const double> xs) {
  for (double x : xs) h = mix64(h ^ std::bit_cast<std::uint64_t>(x));
  return h;
}

}  // namespace

std::vector<double> FeatureProvider::lookup(int scan_id, std::size_t frame) const {
  std::vector<double> out(dim());
  lookup(scan_id, frame, out);
  return out;
}

ScanFeatureProvider::ScanFeatureProvider(std::span<const ScanTrajectory> scans)
    : scans_(scans), by_id_(index_scans(scans)) {
  if (scans.empty()) throw std::invalid_argument("feature provider needs at least one scan");
  dim_ = scans.front().dim;
  for (const auto& s : scans) {
    if (s.dim != dim_) throw std::invalid_argument("scans disagree on feature dimension");
  }
}

void ScanFeatureProvider::lookup(int scan_id, std::size_t frame, std::span<double> out) const {
  const auto& scan = find_scan(scans_, by_id_, scan_id, frame);
  if (out.size() != dim_) throw std::invalid_argument("lookup buffer has wrong width");
  std::copy(scan.frames[frame].feature.begin(), scan.frames[frame].feature.end(), out.begin());
}

std::uint64_t ScanFeatureProvider::digest() const {
  std::uint64_t h = mix64(dim_);
  for (const auto& s : scans_) {
    h = mix64(h ^ static_cast<std::uint64_t>(s.scan));
    for (const auto& f : s.frames) h = hash_doubles(h, f.feature);
  }
  return h;
}

OracleFeatureProvider::OracleFeatureProvider(std::vector<LatentAnatomy> anatomies,
                                             std::span<const ScanTrajectory> scans)
    : anatomies_(std::move(anatomies)), scans_(scans), by_id_(index_scans(scans)) {
  if (anatomies_.empty()) throw std::invalid_argument("oracle provider needs at least one anatomy");
  dim_ = anatomies_.front().dim;
  for (std::size_t i = 0; i < anatomies_.size(); ++i) {
    if (anatomies_[i].dim != dim_) throw std::invalid_argument("anatomies disagree on feature dimension");
    anatomy_by_subject_.emplace(anatomies_[i].subject, i);
  }
  for (const auto& s : scans) {
    if (!anatomy_by_subject_.contains(s.subject)) {
      throw std::invalid_argument("no anatomy for subject " + std::to_string(s.subject));
    }
  }
}

void OracleFeatureProvider::lookup(int scan_id, std::size_t frame, std::span<double> out) const {
  const auto& scan = find_scan(scans_, by_id_, scan_id, frame);
  if (out.size() != dim_) throw std::invalid_argument("lookup buffer has wrong width");
  const auto& anatomy = anatomies_[anatomy_by_subject_.at(scan.subject)];
  const auto& f = scan.frames[frame];
  const auto feat = feature_oracle(anatomy, f.pose, frame_seed(anatomy, scan_id, f.t));
  std::copy(feat.begin(), feat.end(), out.begin());
}

std::uint64_t OracleFeatureProvider::digest() const {
  std::uint64_t h = mix64(dim_ ^ 0x6f7261636c65ULL);
  for (const auto& a : anatomies_) {
    h = mix64(h ^ a.seed ^ static_cast<std::uint64_t>(a.subject));
    h = hash_doubles(h, a.omega);
    h = hash_doubles(h, a.phase);
    h = hash_doubles(h, a.mixing);
  }
  for (const auto& s : scans_) {
    h = mix64(h ^ static_cast<std::uint64_t>(s.scan));
    for (const auto& f : s.frames) {
      h = hash_doubles(h, f.pose.pos);
      h = hash_doubles(h, f.pose.rot);
    }
  }
  return h;
}

template <typename T>
ActionEncoder<T>::ActionEncoder(nn::ParameterStore<T>& store, const std::string& name,
                                std::size_t dim, bool standardize_inputs)
    : proj(store, name, 6, dim), standardize(standardize_inputs) {}

template <typename T>
ad::Tensor<T> ActionEncoder<T>::operator()(const ad::Tensor<T>& actions) const {
  if (actions.cols() != 6) throw std::invalid_argument("action encoder expects [n, 6] input");
  if (!standardize) return proj(actions);
  return proj(ad::scale(actions, static_cast<T>(1.0 / kActionScale)));
}

template <typename T>
std::vector<T> ActionEncoder<T>::encode(const Action6& a) const {
  const auto arr = a.to_array();
  std::vector<T> in(arr.begin(), arr.end());
  const auto out = (*this)(ad::Tensor<T>::constant({1, 6}, std::move(in)));
  return {out.value().begin(), out.value().end()};
}

template struct ActionEncoder<float>;
template struct ActionEncoder<double>;

}  // namespace ustar
