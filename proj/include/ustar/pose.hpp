#pragma once

// Rigid 6-DOF probe pose algebra.
//
// Conventions shared by every module:
//   - positions in millimeters, orientations as Euler angles in degrees;
//   - R = Rz(yaw) * Ry(pitch) * Rx(roll)  (extrinsic x-y-z);
//   - relative actions are expressed in the source pose's local frame;
//   - every returned angle is wrapped to [-180, 180).

#include <array>
#include <span>

namespace ustar {

using Vec3 = std::array<double, 3>;

struct RotMat {
  std::array<double, 9> m{};  // row-major

  static RotMat identity();

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  RotMat transpose() const;
  double determinant() const;
  // max |R R^T - I| elementwise
  double orthonormality_residual() const;
};

RotMat operator*(const RotMat& a, const RotMat& b);
Vec3 operator*(const RotMat& r, const Vec3& v);

struct Pose6 {
  Vec3 pos{};  // mm
  Vec3 rot{};  // deg, (about x, about y, about z)

  Pose6 normalized() const;
  friend bool operator==(const Pose6&, const Pose6&) = default;
};

struct Action6 {
  Vec3 dpos{};  // mm, in the source pose's frame
  Vec3 drot{};  // deg

  std::array<double, 6> to_array() const {
    return {dpos[0], dpos[1], dpos[2], drot[0], drot[1], drot[2]};
  }
  static Action6 from_array(std::span<const double, 6> a) {
    return {{a[0], a[1], a[2]}, {a[3], a[4], a[5]}};
  }
  friend bool operator==(const Action6&, const Action6&) = default;
};

/// Wraps an angle in degrees to [-180, 180).
double wrap_degrees(double deg);

RotMat euler_to_matrix(const Vec3& rot_deg);

/// Inverse of euler_to_matrix with pitch in [-90, 90]. At gimbal lock
/// (|pitch| within 1e-7 deg of 90) yaw is forced to 0 and the coupled angle
/// is carried by roll. Throws std::invalid_argument when R is not a proper
/// rotation (residual > 1e-4).
Vec3 matrix_to_euler(const RotMat& r);

/// Motion taking p_i to p_j, expressed in p_i's frame.
Action6 relative_action(const Pose6& from, const Pose6& to);

/// Pose reached by executing `a` from `p`; inverse of relative_action.
Pose6 apply_action(const Pose6& p, const Action6& a);

struct ActionError {
  double trans_mm = 0.0;
  double rot_deg = 0.0;
};

/// Mean absolute error over samples and components; rotation differences are
/// wrapped before taking magnitudes. Throws on empty or mismatched input.
ActionError action_mae(std::span<const Action6> pred, std::span<const Action6> gt);

// Distances used by capture, exclusion, classification and retrieval.
double translation_distance(const Pose6& a, const Pose6& b);
/// Euclidean norm of the wrapped Euler-angle difference.
double rotation_distance(const Pose6& a, const Pose6& b);
/// translation_distance + rotation_distance (mm and deg weighted equally).
double pose_distance(const Pose6& a, const Pose6& b);

}  // namespace ustar
