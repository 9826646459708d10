#include "ustar/report.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

namespace ustar {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void finalize_groups(MetricsReport& r) {
  auto mean = [&](std::size_t lo, std::size_t hi) {
    ActionError e{};
    for (std::size_t k = lo; k < hi; ++k) {
      e.trans_mm += r.per_view[k].trans_mm;
      e.rot_deg += r.per_view[k].rot_deg;
    }
    const auto n = static_cast<double>(hi - lo);
    e.trans_mm /= n;
    e.rot_deg /= n;
    return e;
  };
  r.parasternal = mean(0, kParasternalViews);
  r.apical = mean(kParasternalViews, kViewCount);
  r.overall = mean(0, kViewCount);
}

std::string metrics_csv(const MetricsReport& r) {
  std::string out = "row,trans_mae_mm,rot_mae_deg,samples\n";
  auto row = [&](const std::string& name, const ActionError& e, std::size_t n) {
    out += name + "," + format_number(e.trans_mm) + "," + format_number(e.rot_deg) + "," + std::to_string(n) + "\n";
  };
  for (std::size_t k = 0; k < kViewCount; ++k) row("view" + std::to_string(k), r.per_view[k], r.counts[k]);
  row("parasternal", r.parasternal, r.samples);
  row("apical", r.apical, r.samples);
  row("overall", r.overall, r.samples);
  return out;
}

std::string metrics_json(const MetricsReport& r,
                         const std::vector<std::pair<std::string, std::string>>& config) {
  using nlohmann::ordered_json;
  auto err = [](const ActionError& e) { return ordered_json{{"trans_mae_mm", e.trans_mm}, {"rot_mae_deg", e.rot_deg}}; };
  ordered_json j;
  j["model"] = r.model;
  j["sampler"] = r.sampler;
  j["L"] = r.L;
  j["split"] = r.split;
  j["samples"] = r.samples;
  char digest[40];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(r.config_digest));
  j["config_digest"] = digest;
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(r.manifest_digest));
  j["manifest_digest"] = digest;
  ordered_json views = ordered_json::array();
  for (std::size_t k = 0; k < kViewCount; ++k) {
    auto v = err(r.per_view[k]);
    v["view"] = k;
    v["samples"] = r.counts[k];
    views.push_back(v);
  }
  j["per_view"] = views;
  j["parasternal"] = err(r.parasternal);
  j["apical"] = err(r.apical);
  j["overall"] = err(r.overall);
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string out = "step,lr,loss\n";
  for (const auto& r : log) out += std::to_string(r.step) + "," + format_number(r.lr) + "," + format_number(r.loss) + "\n";
  return out;
}

std::string curve_svg(const std::vector<CurvePoint>& points, const std::string& x_label) {
  constexpr double W = 640, H = 400, left = 60, right = 20, top = 30, bottom = 50;
  double xmin = 0, xmax = 1, ymax = 1;
  if (!points.empty()) {
    xmin = xmax = points.front().x;
    ymax = 0;
    for (const auto& p : points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymax = std::max({ymax, p.trans_mae, p.rot_mae});
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax <= 0) ymax = 1;
    ymax *= 1.1;
  }
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - y / ymax * (H - top - bottom); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(H - bottom) + "\" x2=\"" + num(W - right) + "\" y2=\"" +
         num(H - bottom) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(H - bottom) +
         "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + num(W / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\" font-size=\"14\">" + x_label + "</text>\n";
  svg += "<text x=\"16\" y=\"" + num(H / 2) + "\" transform=\"rotate(-90 16 " + num(H / 2) +
         ")\" text-anchor=\"middle\" font-size=\"14\">MAE (mm / deg)</text>\n";
  for (const auto& p : points) {
    svg += "<text x=\"" + num(px(p.x)) + "\" y=\"" + num(H - bottom + 18) + "\" text-anchor=\"middle\" font-size=\"12\">" +
           format_number(p.x) + "</text>\n";
  }

  const struct {
    const char* name;
    const char* color;
    double CurvePoint::*field;
  } series[] = {{"translation", "#1f77b4", &CurvePoint::trans_mae}, {"rotation", "#d62728", &CurvePoint::rot_mae}};
  double legend_y = top;
  for (const auto& s : series) {
    std::string poly;
    for (const auto& p : points) poly += (poly.empty() ? "" : " ") + num(px(p.x)) + "," + num(py(p.*s.field));
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(s.color) + "\" stroke-width=\"2\" points=\"" + poly + "\"/>\n";
    for (const auto& p : points) {
      svg += "<circle cx=\"" + num(px(p.x)) + "\" cy=\"" + num(py(p.*s.field)) + "\" r=\"4\" fill=\"" + s.color +
             "\"><title>" + s.name + " x=" + format_number(p.x) + " mae=" + format_number(p.*s.field) +
             "</title></circle>\n";
    }
    svg += "<text x=\"" + num(W - right - 120) + "\" y=\"" + num(legend_y + 12) + "\" fill=\"" + s.color +
           "\" font-size=\"13\">" + s.name + "</text>\n";
    legend_y += 18;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ustar
