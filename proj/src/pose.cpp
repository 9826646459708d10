#include "ustar/pose.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ustar {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kGimbalTolDeg = 1e-7;

}  // namespace

RotMat RotMat::identity() {
  RotMat r;
  r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return r;
}

RotMat RotMat::transpose() const {
  RotMat t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double RotMat::determinant() const {
  const auto& a = m;
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
         a[2] * (a[3] * a[7] - a[4] * a[6]);
}

double RotMat::orthonormality_residual() const {
  double worst = 0.0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (*this)(r, k) * (*this)(c, k);
      worst = std::max(worst, std::abs(s - (r == c ? 1.0 : 0.0)));
    }
  }
  return worst;
}

RotMat operator*(const RotMat& a, const RotMat& b) {
  RotMat out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
      out(r, c) = s;
    }
  }
  return out;
}

Vec3 operator*(const RotMat& r, const Vec3& v) {
  return {r(0, 0) * v[0] + r(0, 1) * v[1] + r(0, 2) * v[2],
          r(1, 0) * v[0] + r(1, 1) * v[1] + r(1, 2) * v[2],
          r(2, 0) * v[0] + r(2, 1) * v[1] + r(2, 2) * v[2]};
}

double wrap_degrees(double deg) {
  double w = deg - 360.0 * std::floor((deg + 180.0) / 360.0);
  if (w >= 180.0) w -= 360.0;
  if (w < -180.0) w += 360.0;
  return w;
}

Pose6 Pose6::normalized() const {
  return {pos, {wrap_degrees(rot[0]), wrap_degrees(rot[1]), wrap_degrees(rot[2])}};
}

RotMat euler_to_matrix(const Vec3& rot_deg) {
  const double ca = std::cos(rot_deg[0] * kDegToRad), sa = std::sin(rot_deg[0] * kDegToRad);
  const double cb = std::cos(rot_deg[1] * kDegToRad), sb = std::sin(rot_deg[1] * kDegToRad);
  const double cg = std::cos(rot_deg[2] * kDegToRad), sg = std::sin(rot_deg[2] * kDegToRad);
  RotMat r;
  r.m = {cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa,
         sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa,
         -sb,     cb * sa,                cb * ca};
  return r;
}

Vec3 matrix_to_euler(const RotMat& r) {
  if (!(r.orthonormality_residual() <= 1e-4) || !(std::abs(r.determinant() - 1.0) <= 1e-4)) {
    throw std::invalid_argument("matrix_to_euler: input is not a proper rotation matrix");
  }
  const double pitch = std::atan2(-r(2, 0), std::hypot(r(0, 0), r(1, 0))) * kRadToDeg;
  double roll = 0.0;
  double yaw = 0.0;
  if (std::abs(std::abs(pitch) - 90.0) <= kGimbalTolDeg) {
    // Only roll - yaw (pitch +90) or roll + yaw (pitch -90) is observable.
    if (pitch > 0) {
      roll = std::atan2(r(0, 1), r(0, 2)) * kRadToDeg;
    } else {
      roll = std::atan2(-r(0, 1), -r(0, 2)) * kRadToDeg;
    }
  } else {
    roll = std::atan2(r(2, 1), r(2, 2)) * kRadToDeg;
    yaw = std::atan2(r(1, 0), r(0, 0)) * kRadToDeg;
  }
  return {wrap_degrees(roll), std::clamp(pitch, -90.0, 90.0), wrap_degrees(yaw)};
}

Action6 relative_action(const Pose6& from, const Pose6& to) {
  if (from == to) return {};
  const RotMat ri = euler_to_matrix(from.rot);
  const RotMat rit = ri.transpose();
  const Vec3 d{to.pos[0] - from.pos[0], to.pos[1] - from.pos[1], to.pos[2] - from.pos[2]};
  Action6 a;
  a.dpos = rit * d;
  a.drot = matrix_to_euler(rit * euler_to_matrix(to.rot));
  return a;
}

Pose6 apply_action(const Pose6& p, const Action6& a) {
  const RotMat rp = euler_to_matrix(p.rot);
  const Vec3 step = rp * a.dpos;
  Pose6 out;
  for (int i = 0; i < 3; ++i) out.pos[i] = p.pos[i] + step[i];
  if (a.drot == Vec3{0.0, 0.0, 0.0}) {
    out.rot = p.normalized().rot;
  } else {
    out.rot = matrix_to_euler(rp * euler_to_matrix(a.drot));
  }
  return out;
}

ActionError action_mae(std::span<const Action6> pred, std::span<const Action6> gt) {
  if (pred.empty()) throw std::invalid_argument("action_mae: empty input");
  if (pred.size() != gt.size()) throw std::invalid_argument("action_mae: length mismatch");
  double t = 0.0;
  double r = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      t += std::abs(pred[i].dpos[c] - gt[i].dpos[c]);
      r += std::abs(wrap_degrees(pred[i].drot[c] - gt[i].drot[c]));
    }
  }
  const double n = 3.0 * static_cast<double>(pred.size());
  return {t / n, r / n};
}

double translation_distance(const Pose6& a, const Pose6& b) {
  return std::hypot(a.pos[0] - b.pos[0], a.pos[1] - b.pos[1], a.pos[2] - b.pos[2]);
}

double rotation_distance(const Pose6& a, const Pose6& b) {
  return std::hypot(wrap_degrees(a.rot[0] - b.rot[0]), wrap_degrees(a.rot[1] - b.rot[1]),
                    wrap_degrees(a.rot[2] - b.rot[2]));
}

double pose_distance(const Pose6& a, const Pose6& b) {
  return translation_distance(a, b) + rotation_distance(a, b);
}

}  // namespace ustar
