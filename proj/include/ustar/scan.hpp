#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ustar/pose.hpp"

namespace ustar {

inline constexpr std::size_t kViewCount = 10;
/// Views 0..5 are parasternal-window planes, 6..9 apical-window planes.
inline constexpr std::size_t kParasternalViews = 6;

/// Classifier probabilities over the ten standard views.
using ViewDistribution = std::array<double, kViewCount>;

struct ScanFrame {
  std::int64_t t = 0;
  Pose6 pose;
  std::vector<double> feature;
  ViewDistribution viewdist{};

  friend bool operator==(const ScanFrame&, const ScanFrame&) = default;
};

struct ScanTrajectory {
  int subject = 0;
  int scan = 0;  // unique across a corpus
  std::size_t dim = 0;
  std::vector<ScanFrame> frames;
  std::array<std::int64_t, kViewCount> annotations{};  // timestamp per view

  /// Frame index holding timestamp t. Throws std::out_of_range.
  std::size_t index_of(std::int64_t t) const;
  std::size_t annotated_index(std::size_t view) const { return index_of(annotations.at(view)); }
  const Pose6& target_pose(std::size_t view) const { return frames[annotated_index(view)].pose; }

  friend bool operator==(const ScanTrajectory&, const ScanTrajectory&) = default;
};

}  // namespace ustar
