#pragma once

// Synthetic scanning corpus: per-subject anatomies with ten target poses, a
// pose-determined frozen feature oracle, a view-classifier oracle, and noisy
// trial-and-error probe trajectories.
//
// Anatomy model. A population defines canonical target poses and one random
// Fourier feature map. Each subject shifts the whole anatomy by a random
// origin and perturbs every target by a small jitter. Features are computed
// in a subject-warped frame in which the subject's own targets sit at the
// canonical poses, so an image taken at a target looks the same for every
// subject while images far from the targets carry subject-specific geometry.

#include <array>
#include <cstdint>
#include <vector>

#include "ustar/pose.hpp"
#include "ustar/scan.hpp"

namespace ustar {

struct SimConfig {
  std::size_t frames_per_scan = 800;  // budget per trajectory
  std::size_t feature_dim = 64;
  std::size_t fourier_features = 96;

  double step_mm = 1.5;               // max deliberate motion per frame
  double step_deg = 1.5;
  double approach_fraction = 0.07;    // of the remaining offset, per frame
  double exploration_noise = 0.35;    // per-component std, mm / deg
  double backtrack_prob = 0.4;        // chance of a detour before each approach
  double capture_mm = 3.0;
  double capture_deg = 3.0;
  double feature_noise = 0.05;
  double classifier_tau = 5.0;        // mm+deg scale of the view classifier

  double workspace_mm = 30.0;         // canonical targets within +-workspace
  double workspace_deg = 25.0;
  double subject_offset_mm = 8.0;
  double subject_offset_deg = 6.0;
  double target_jitter_mm = 4.0;
  double target_jitter_deg = 4.0;
  double min_separation = 15.0;       // mm or deg
  double feature_scale_mm = 15.0;
  double feature_scale_deg = 15.0;
  double warp_radius = 6.0;

  std::size_t max_retries = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LatentAnatomy {
  int subject = 0;
  std::uint64_t seed = 0;
  Pose6 origin;
  std::array<Pose6, kViewCount> canonical{};  // anatomy-relative, shared by the population
  std::array<Pose6, kViewCount> targets{};    // absolute poses of this subject

  std::size_t dim = 0;
  std::size_t fourier = 0;
  std::vector<double> omega;   // [fourier, 6]
  std::vector<double> phase;   // [fourier]
  std::vector<double> mixing;  // [dim, fourier]
  double tau = 1.0;
  double scale_mm = 1.0;
  double scale_deg = 1.0;
  double warp_radius = 1.0;
  double feature_noise = 0.0;
};

/// Deterministic in (seed, subject_id, config). Throws std::runtime_error when
/// target separation cannot be satisfied within the retry bound.
LatentAnatomy generate_anatomy(std::uint64_t seed, int subject_id, const SimConfig& config);

/// Noise stream key for a frame; the stored feature of frame t of scan s
/// equals feature_oracle(anatomy, pose, frame_seed(anatomy, s, t)).
std::uint64_t frame_seed(const LatentAnatomy& anatomy, int scan_id, std::int64_t t);

std::vector<double> feature_oracle(const LatentAnatomy& anatomy, const Pose6& pose,
                                   std::uint64_t frame_seed);

/// softmax(-d_k / tau) with d_k = pose_distance(pose, target_k).
ViewDistribution classifier_oracle(const LatentAnatomy& anatomy, const Pose6& pose);

/// Statistics of the walk that produced a trajectory (not serialized).
struct WalkStats {
  std::size_t attempts = 0;
  /// Per captured target: frames spent since the previous capture and the
  /// straight-line frame count for the same leg.
  std::vector<std::size_t> leg_frames;
  std::vector<double> leg_straight_frames;
};

/// Throws std::runtime_error when the frame budget is insufficient after
/// config.max_retries derived seeds.
ScanTrajectory generate_trajectory(const LatentAnatomy& anatomy, const SimConfig& config,
                                   int scan_id, std::uint64_t scan_seed,
                                   WalkStats* stats = nullptr);

}  // namespace ustar
