#pragma once

// Keyframe selection from a scan's history.
//
// A candidate pool is a strictly increasing list of frame positions, all
// before the current frame, with leakage-prone frames already removed. The
// samplers return positions drawn from it, in ascending order.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ustar/pose.hpp"
#include "ustar/rng.hpp"
#include "ustar/scan.hpp"

namespace ustar {

enum class SamplerKind { segmental, semantic };

std::string to_string(SamplerKind kind);
/// Accepts "segmental" or "semantic"; throws std::invalid_argument otherwise.
SamplerKind parse_sampler_kind(const std::string& name);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::semantic;
  std::size_t K = 128;           // candidate-set size of the semantic sampler
  double exclude_mm = 5.0;       // frames within both thresholds of a target
  double exclude_deg = 5.0;      // pose are dropped from every pool
  std::uint64_t seed = 0;

  void validate() const;
};

/// dot / (|z1| |z2|). Throws std::invalid_argument if either norm is zero.
double cosine_similarity(const ViewDistribution& z1, const ViewDistribution& z2);

/// Summed similarity of a candidate to the current view and every selected anchor,
/// accumulated in the order current, selected[0], selected[1], ...
double redundancy_score(const ViewDistribution& candidate, const ViewDistribution& current,
                        std::span<const ViewDistribution> selected);

/// Splits the pool into n contiguous segments (earlier segments take the
/// remainder) and draws one member of each uniformly. If the pool has at most
/// n entries the whole pool is returned.
std::vector<std::size_t> segmental_sample(std::span<const std::size_t> pool, std::size_t n, Rng& rng);

/// Iterative low-redundancy selection. At each of n steps every unselected
/// candidate is scored with redundancy_score, the K lowest (ties to the
/// earlier pool position) form the candidate set, and one is drawn uniformly.
/// `zs[i]` is the distribution of pool[i]. K is clamped to the remaining pool.
/// If `order` is given it receives the picks in selection order.
std::vector<std::size_t> semantic_sample(std::span<const std::size_t> pool,
                                         std::span<const ViewDistribution> zs,
                                         const ViewDistribution& current, std::size_t n,
                                         std::size_t K, Rng& rng,
                                         std::vector<std::size_t>* order = nullptr);

/// Drops pool entries whose pose is within both thresholds of `target`.
/// `poses[i]` is the pose of pool[i].
std::vector<std::size_t> exclude_near_target(std::span<const std::size_t> pool,
                                             std::span<const Pose6> poses, const Pose6& target,
                                             double trans_threshold_mm, double rot_threshold_deg);

}  // namespace ustar
