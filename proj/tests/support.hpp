#pragma once

// Shared oracles and fixtures for the test suites.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "ustar/dataset.hpp"
#include "ustar/models.hpp"
#include "ustar/nn.hpp"
#include "ustar/pose.hpp"
#include "ustar/rng.hpp"
#include "ustar/simulator.hpp"

namespace ustar::testing {

// --- homogeneous-transform oracle -----------------------------------------
// Built from elementary axis rotations with no code shared with pose.cpp.

using Mat4 = std::array<std::array<double, 4>, 4>;

inline Mat4 mat4_identity() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat4 mat4_mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat4 axis_rotation(int axis, double deg) {
  const double r = deg * std::numbers::pi / 180.0, c = std::cos(r), s = std::sin(r);
  Mat4 m = mat4_identity();
  const int i = (axis + 1) % 3, j = (axis + 2) % 3;
  m[i][i] = c;
  m[i][j] = -s;
  m[j][i] = s;
  m[j][j] = c;
  return m;
}

inline Mat4 pose_matrix(const Pose6& p) {
  Mat4 m = mat4_mul(axis_rotation(2, p.rot[2]), mat4_mul(axis_rotation(1, p.rot[1]), axis_rotation(0, p.rot[0])));
  for (int i = 0; i < 3; ++i) m[i][3] = p.pos[i];
  return m;
}

/// Inverse of a rigid transform: [R^T, -R^T t].
inline Mat4 rigid_inverse(const Mat4& m) {
  Mat4 inv = mat4_identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv[i][j] = m[j][i];
  for (int i = 0; i < 3; ++i) {
    inv[i][3] = 0.0;
    for (int j = 0; j < 3; ++j) inv[i][3] -= m[j][i] * m[j][3];
  }
  return inv;
}

/// Largest elementwise gap between relative_action(a, b) and T_a^-1 T_b.
inline double homogeneous_gap(const Pose6& a, const Pose6& b) {
  const Mat4 rel = mat4_mul(rigid_inverse(pose_matrix(a)), pose_matrix(b));
  const Action6 act = relative_action(a, b);
  const Mat4 mine = pose_matrix(Pose6{act.dpos, act.drot});
  double gap = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) gap = std::max(gap, std::abs(rel[i][j] - mine[i][j]));
  return gap;
}

inline Pose6 random_pose(Rng& rng, double mm = 100.0, double max_pitch = 89.0) {
  return Pose6{{rng.uniform(-mm, mm), rng.uniform(-mm, mm), rng.uniform(-mm, mm)},
               {rng.uniform(-180.0, 180.0), rng.uniform(-max_pitch, max_pitch), rng.uniform(-180.0, 180.0)}};
}

inline double angle_gap(double a, double b) { return std::abs(wrap_degrees(a - b)); }

// --- gradient checking -----------------------------------------------------

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). Central differences with
/// h = 1e-5 on an O(1) loss resolve gradients only to about 1e-11, so the
/// floor keeps rounding noise on near-zero entries from reading as error.
inline double relative_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Central differences of `loss` against every scalar of every parameter.
/// The five-point stencil cuts truncation error from O(h^2) to O(h^4), which
/// matters for small gradients under strong curvature.
inline GradCheck check_gradients(nn::ParameterStore<double>& store,
                                 const std::function<ad::Tensor<double>()>& loss, double h = 1e-5,
                                 bool five_point = false) {
  store.zero_grad();
  loss().backward();
  GradCheck out;
  for (auto& p : store.params()) {
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto values = p.tensor.mutable_value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      auto at = [&](double dx) {
        values[i] = orig + dx;
        const double v = loss().item();
        values[i] = orig;
        return v;
      };
      const double numeric = five_point ? (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h)
                                        : (at(h) - at(-h)) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      out.max_rel_error = std::max(out.max_rel_error, relative_error(a, numeric));
      ++out.checked;
    }
  }
  return out;
}

// --- synthetic anchor sets -------------------------------------------------

/// Random anchor set of n anchors with features of width C.
inline AnchorSet random_anchor_set(Rng& rng, std::size_t C, std::size_t n) {
  AnchorSet s;
  s.current_index = n;
  for (std::size_t c = 0; c < C; ++c) s.current_feature.push_back(rng.normal());
  std::vector<Pose6> poses;
  for (std::size_t i = 0; i <= n; ++i) poses.push_back(random_pose(rng, 20.0, 30.0));
  for (std::size_t i = 0; i < n; ++i) {
    s.indices.push_back(i);
    std::vector<double> f(C);
    for (auto& v : f) v = rng.normal();
    s.features.push_back(std::move(f));
    s.actions.push_back(relative_action(poses[n], poses[i]));
    s.step_actions.push_back(i == 0 ? Action6{} : relative_action(poses[i - 1], poses[i]));
  }
  s.step_actions.push_back(n == 0 ? Action6{} : relative_action(poses[n - 1], poses[n]));
  return s;
}

/// Permutes the anchor tokens (features, actions and step actions move together).
inline AnchorSet permute_anchors(const AnchorSet& s, const std::vector<std::size_t>& perm) {
  AnchorSet out = s;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.features[i] = s.features[perm[i]];
    out.actions[i] = s.actions[perm[i]];
    out.step_actions[i] = s.step_actions[perm[i]];
    out.indices[i] = s.indices[perm[i]];
  }
  return out;
}

inline std::array<Action6, kViewCount> random_labels(Rng& rng) {
  std::array<Action6, kViewCount> out{};
  for (auto& a : out) {
    for (auto& v : a.dpos) v = rng.uniform(-3.0, 3.0);
    for (auto& v : a.drot) v = rng.uniform(-3.0, 3.0);
  }
  return out;
}

inline ad::Tensor<double> label_tensor(const std::vector<std::array<Action6, kViewCount>>& labels) {
  std::vector<double> v;
  for (const auto& row : labels)
    for (const auto& a : row)
      for (double x : a.to_array()) v.push_back(x);
  return ad::Tensor<double>::constant({labels.size(), 6 * kViewCount}, std::move(v));
}

/// Labels whose residual against `pred` is at least 0.2 away from the
/// Smooth L1 kink at |d| = 1 in every component, so central differences never
/// straddle the non-differentiable point.
inline ad::Tensor<double> labels_clear_of_kink(const ad::Tensor<double>& pred, Rng& rng) {
  std::vector<double> v(pred.value().begin(), pred.value().end());
  for (auto& x : v) {
    const double mag = rng.uniform() < 0.5 ? rng.uniform(0.05, 0.8) : rng.uniform(1.2, 3.0);
    x += rng.uniform() < 0.5 ? -mag : mag;
  }
  return ad::Tensor<double>::constant(pred.shape(), std::move(v));
}

// --- small corpora -----------------------------------------------------------

/// A cheap simulator configuration for unit tests.
inline SimConfig small_sim(std::size_t dim = 16) {
  SimConfig c;
  c.feature_dim = dim;
  c.fourier_features = 32;
  return c;
}

inline Corpus in_memory_corpus(std::vector<ScanTrajectory> scans) {
  Corpus c;
  for (const auto& s : scans) c.manifest.scans.push_back({"scan_" + std::to_string(s.scan), s.subject});
  c.scans = std::move(scans);
  return c;
}

}  // namespace ustar::testing
