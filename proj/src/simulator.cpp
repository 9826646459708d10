#include "ustar/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ustar/rng.hpp"

namespace ustar {
namespace {

// Stream tags keep the population, subject and walk draws independent.
constexpr std::uint64_t kPopulationStream = 0x9051A7;
constexpr std::uint64_t kSubjectStream = 0x5B1EC7;
constexpr std::uint64_t kWalkStream = 0x3A1C;
constexpr std::uint64_t kFrameStream = 0xF2A3E;
constexpr std::size_t kSeparationTries = 4096;

using Vec6 = std::array<double, 6>;

Vec6 offset(const Pose6& from, const Pose6& to) {
  return {to.pos[0] - from.pos[0], to.pos[1] - from.pos[1], to.pos[2] - from.pos[2],
          wrap_degrees(to.rot[0] - from.rot[0]), wrap_degrees(to.rot[1] - from.rot[1]),
          wrap_degrees(to.rot[2] - from.rot[2])};
}

Pose6 shifted(const Pose6& p, const Vec6& d) {
  return Pose6{{p.pos[0] + d[0], p.pos[1] + d[1], p.pos[2] + d[2]},
               {p.rot[0] + d[3], p.rot[1] + d[4], p.rot[2] + d[5]}}
      .normalized();
}

bool separated(const Pose6& a, const Pose6& b, double min_sep) {
  return translation_distance(a, b) >= min_sep || rotation_distance(a, b) >= min_sep;
}

bool all_separated(std::span<const Pose6> poses, std::size_t n, const Pose6& candidate,
                   double min_sep) {
  for (std::size_t i = 0; i < n; ++i)
    if (!separated(poses[i], candidate, min_sep)) return false;
  return true;
}

Pose6 uniform_pose(Rng& rng, double mm, double deg) {
  Pose6 p;
  for (auto& v : p.pos) v = rng.uniform(-mm, mm);
  for (auto& v : p.rot) v = rng.uniform(-deg, deg);
  return p;
}

bool captured_by(const Pose6& pose, const Pose6& target, const SimConfig& c) {
  return translation_distance(pose, target) <= c.capture_mm &&
         rotation_distance(pose, target) <= c.capture_deg;
}

double straight_frames(const Pose6& from, const Pose6& to, const SimConfig& c) {
  return std::max(translation_distance(from, to) / c.step_mm,
                  rotation_distance(from, to) / c.step_deg);
}

}  // namespace

void SimConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("sim.") + name + " must be positive");
  };
  if (frames_per_scan < 2) throw std::invalid_argument("sim.frames must be at least 2");
  if (feature_dim == 0 || fourier_features == 0) throw std::invalid_argument("sim feature sizes must be positive");
  positive(step_mm, "step_mm");
  positive(step_deg, "step_deg");
  positive(approach_fraction, "approach_fraction");
  positive(capture_mm, "capture_mm");
  positive(capture_deg, "capture_deg");
  positive(classifier_tau, "classifier_tau");
  positive(workspace_mm, "workspace_mm");
  positive(workspace_deg, "workspace_deg");
  positive(feature_scale_mm, "feature_scale_mm");
  positive(feature_scale_deg, "feature_scale_deg");
  positive(warp_radius, "warp_radius");
  if (exploration_noise < 0 || feature_noise < 0) throw std::invalid_argument("sim noise scales must be non-negative");
  if (backtrack_prob < 0 || backtrack_prob >= 1) throw std::invalid_argument("sim.backtrack_prob must be in [0, 1)");
}

LatentAnatomy generate_anatomy(std::uint64_t seed, int subject_id, const SimConfig& config) {
  config.validate();
  LatentAnatomy a;
  a.subject = subject_id;
  a.seed = seed;
  a.dim = config.feature_dim;
  a.fourier = config.fourier_features;
  a.tau = config.classifier_tau;
  a.scale_mm = config.feature_scale_mm;
  a.scale_deg = config.feature_scale_deg;
  a.warp_radius = config.warp_radius;
  a.feature_noise = config.feature_noise;

  Rng pop = Rng::derive(seed, {kPopulationStream});
  for (std::size_t k = 0; k < kViewCount; ++k) {
    std::size_t tries = 0;
    Pose6 p = uniform_pose(pop, config.workspace_mm, config.workspace_deg);
    while (!all_separated(a.canonical, k, p, config.min_separation)) {
      if (++tries > kSeparationTries) throw std::runtime_error("generate_anatomy: canonical targets cannot be separated");
      p = uniform_pose(pop, config.workspace_mm, config.workspace_deg);
    }
    a.canonical[k] = p;
  }
  a.omega.resize(a.fourier * 6);
  for (auto& w : a.omega) w = pop.normal();
  a.phase.resize(a.fourier);
  for (auto& p : a.phase) p = pop.uniform(0.0, 2.0 * std::numbers::pi);
  a.mixing.resize(a.dim * a.fourier);
  const double mix_scale = std::sqrt(2.0 / static_cast<double>(a.fourier));
  for (auto& m : a.mixing) m = mix_scale * pop.normal();

  Rng subj = Rng::derive(seed, {kSubjectStream, static_cast<std::uint64_t>(subject_id)});
  for (auto& v : a.origin.pos) v = subj.normal(0.0, config.subject_offset_mm);
  for (auto& v : a.origin.rot) v = subj.normal(0.0, config.subject_offset_deg);
  for (std::size_t attempt = 0;; ++attempt) {
    if (attempt > config.max_retries * 64) {
      throw std::runtime_error("generate_anatomy: subject " + std::to_string(subject_id) +
                               " targets violate the separation bound");
    }
    bool ok = true;
    for (std::size_t k = 0; k < kViewCount; ++k) {
      Vec6 d{};
      for (int i = 0; i < 3; ++i) d[i] = a.canonical[k].pos[i] + a.origin.pos[i] + subj.normal(0.0, config.target_jitter_mm);
      for (int i = 0; i < 3; ++i) d[3 + i] = a.canonical[k].rot[i] + a.origin.rot[i] + subj.normal(0.0, config.target_jitter_deg);
      a.targets[k] = shifted(Pose6{}, d);
      if (!all_separated(a.targets, k, a.targets[k], config.min_separation)) ok = false;
    }
    if (ok) break;
  }
  return a;
}

std::uint64_t frame_seed(const LatentAnatomy& anatomy, int scan_id, std::int64_t t) {
  return Rng::derive(anatomy.seed, {kFrameStream, static_cast<std::uint64_t>(anatomy.subject),
                                    static_cast<std::uint64_t>(scan_id), static_cast<std::uint64_t>(t)})
      .next_u64();
}

std::vector<double> feature_oracle(const LatentAnatomy& a, const Pose6& pose, std::uint64_t seed) {
  // Anatomy-relative coordinates, warped so each subject target lands on its
  // canonical pose.
  Vec6 u = offset(a.origin, pose);
  Vec6 warped = u;
  const double inv_two_r2 = 1.0 / (2.0 * a.warp_radius * a.warp_radius);
  for (std::size_t k = 0; k < kViewCount; ++k) {
    const Vec6 target_rel = offset(a.origin, a.targets[k]);
    const Vec6 canon{a.canonical[k].pos[0], a.canonical[k].pos[1], a.canonical[k].pos[2],
                     a.canonical[k].rot[0], a.canonical[k].rot[1], a.canonical[k].rot[2]};
    double d2 = 0.0;
    for (int i = 0; i < 6; ++i) d2 += (u[i] - target_rel[i]) * (u[i] - target_rel[i]);
    const double w = std::exp(-d2 * inv_two_r2);
    for (int i = 0; i < 6; ++i) warped[i] -= w * (target_rel[i] - canon[i]);
  }
  std::array<double, 6> x{};
  for (int i = 0; i < 3; ++i) x[i] = warped[i] / a.scale_mm;
  for (int i = 3; i < 6; ++i) x[i] = warped[i] / a.scale_deg;

  std::vector<double> basis(a.fourier);
  for (std::size_t j = 0; j < a.fourier; ++j) {
    double s = a.phase[j];
    for (int i = 0; i < 6; ++i) s += a.omega[j * 6 + i] * x[i];
    basis[j] = std::cos(s);
  }
  std::vector<double> f(a.dim, 0.0);
  Rng noise(seed);
  for (std::size_t r = 0; r < a.dim; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.fourier; ++j) s += a.mixing[r * a.fourier + j] * basis[j];
    f[r] = s;
  }
  if (a.feature_noise > 0.0) {
    for (auto& v : f) v += a.feature_noise * noise.normal();
  }
  return f;
}

ViewDistribution classifier_oracle(const LatentAnatomy& a, const Pose6& pose) {
  ViewDistribution z{};
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kViewCount; ++k) {
    z[k] = -pose_distance(pose, a.targets[k]) / a.tau;
    best = std::max(best, z[k]);
  }
  double total = 0.0;
  for (auto& v : z) {
    v = std::exp(v - best);
    total += v;
  }
  for (auto& v : z) v /= total;
  return z;
}

namespace {

struct Walker {
  const LatentAnatomy& anatomy;
  const SimConfig& config;
  int scan_id;
  Rng rng;
  ScanTrajectory traj;
  std::array<bool, kViewCount> captured{};
  std::size_t remaining = kViewCount;

  void record(const Pose6& pose) {
    ScanFrame f;
    f.t = static_cast<std::int64_t>(traj.frames.size());
    f.pose = pose;
    f.feature = feature_oracle(anatomy, pose, frame_seed(anatomy, scan_id, f.t));
    f.viewdist = classifier_oracle(anatomy, pose);
    for (std::size_t k = 0; k < kViewCount; ++k) {
      if (!captured[k] && captured_by(pose, anatomy.targets[k], config)) {
        captured[k] = true;
        traj.annotations[k] = f.t;
        --remaining;
      }
    }
    traj.frames.push_back(std::move(f));
  }

  const Pose6& current() const { return traj.frames.back().pose; }
  bool out_of_budget() const { return traj.frames.size() >= config.frames_per_scan; }

  void step_toward(const Pose6& goal) {
    Vec6 d = offset(current(), goal);
    for (auto& v : d) v *= config.approach_fraction;
    const double tm = std::hypot(d[0], d[1], d[2]);
    const double rm = std::hypot(d[3], d[4], d[5]);
    double s = 1.0;
    if (tm > config.step_mm) s = std::min(s, config.step_mm / tm);
    if (rm > config.step_deg) s = std::min(s, config.step_deg / rm);
    for (auto& v : d) v = v * s + rng.normal(0.0, config.exploration_noise);
    record(shifted(current(), d));
  }

  // Returns false when the frame budget runs out first.
  template <typename Done>
  bool walk_to(const Pose6& goal, Done done) {
    while (!done()) {
      if (out_of_budget()) return false;
      step_toward(goal);
    }
    return true;
  }
};

}  // namespace

ScanTrajectory generate_trajectory(const LatentAnatomy& anatomy, const SimConfig& config,
                                   int scan_id, std::uint64_t scan_seed, WalkStats* stats) {
  config.validate();
  if (config.feature_dim != anatomy.dim) throw std::invalid_argument("generate_trajectory: feature_dim differs from anatomy");
  for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
    Walker w{anatomy, config, scan_id, Rng::derive(scan_seed, {kWalkStream, attempt}), {}, {}, kViewCount};
    w.traj.subject = anatomy.subject;
    w.traj.scan = scan_id;
    w.traj.dim = anatomy.dim;
    WalkStats local;
    local.attempts = attempt + 1;

    w.record(shifted(anatomy.origin, offset(Pose6{}, uniform_pose(w.rng, config.workspace_mm, config.workspace_deg))));
    std::array<std::size_t, kViewCount> order{};
    for (std::size_t k = 0; k < kViewCount; ++k) order[k] = k;
    for (std::size_t k = kViewCount - 1; k > 0; --k) std::swap(order[k], order[w.rng.below(k + 1)]);

    bool ok = true;
    for (std::size_t goal : order) {
      if (w.captured[goal]) continue;
      const std::size_t leg_start = w.traj.frames.size() - 1;
      const double straight = straight_frames(w.current(), anatomy.targets[goal], config);
      while (ok && !w.captured[goal] && w.rng.uniform() < config.backtrack_prob) {
        const Pose6 detour = shifted(anatomy.origin, offset(Pose6{}, uniform_pose(w.rng, config.workspace_mm, config.workspace_deg)));
        ok = w.walk_to(detour, [&] {
          return w.captured[goal] || (translation_distance(w.current(), detour) <= 2 * config.capture_mm &&
                                      rotation_distance(w.current(), detour) <= 2 * config.capture_deg);
        });
      }
      ok = ok && w.walk_to(anatomy.targets[goal], [&] { return w.captured[goal]; });
      if (!ok) break;
      local.leg_frames.push_back(static_cast<std::size_t>(w.traj.annotations[goal]) - leg_start);
      local.leg_straight_frames.push_back(straight);
    }
    if (ok && w.remaining == 0) {
      if (stats) *stats = std::move(local);
      return std::move(w.traj);
    }
  }
  throw std::runtime_error("generate_trajectory: frame budget " + std::to_string(config.frames_per_scan) +
                           " too small for scan " + std::to_string(scan_id));
}

}  // namespace ustar
