#pragma once

// Metric reports and their CSV / JSON / SVG renderings. Every writer is a
// pure function of its inputs, so identical runs give identical bytes.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ustar/pose.hpp"
#include "ustar/scan.hpp"

namespace ustar {

struct MetricsReport {
  std::array<ActionError, kViewCount> per_view{};
  std::array<std::size_t, kViewCount> counts{};
  ActionError parasternal;  // mean of views 0..5
  ActionError apical;       // mean of views 6..9
  ActionError overall;      // mean of all ten views
  std::size_t samples = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t manifest_digest = 0;
  std::string model;
  std::string sampler;
  std::size_t L = 0;
  std::string split;
};

/// Fills the group means from per_view.
void finalize_groups(MetricsReport& report);

std::string metrics_csv(const MetricsReport& report);
/// `config` entries are embedded verbatim under "config".
std::string metrics_json(const MetricsReport& report,
                         const std::vector<std::pair<std::string, std::string>>& config);

struct LossRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

std::string loss_log_csv(const std::vector<LossRecord>& log);

struct CurvePoint {
  double x = 0.0;
  double trans_mae = 0.0;
  double rot_mae = 0.0;
};

/// Line chart of translation and rotation MAE against x, one <circle> per
/// plotted value.
std::string curve_svg(const std::vector<CurvePoint>& points, const std::string& x_label);

/// "%.17g" rendering used by all CSV writers.
std::string format_number(double v);

}  // namespace ustar
