#include "ustar/scan_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ustar {
namespace {

using nlohmann::json;

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

template <typename Range>
void append_array(std::string& out, const Range& values) {
  out += '[';
  bool first = true;
  for (double v : values) {
    if (!first) out += ',';
    first = false;
    append_double(out, v);
  }
  out += ']';
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* field, std::size_t expect,
                                  const std::string& src, std::size_t line) {
  std::array<double, N> out{};
  if (!j.contains(field) || !j[field].is_array() || j[field].size() != expect) {
    throw ScanFormatError(src, line, std::string("field '") + field + "' must be an array of " +
                                         std::to_string(expect) + " numbers");
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[field][i].is_number()) throw ScanFormatError(src, line, std::string("field '") + field + "' holds a non-number");
    out[i] = j[field][i].get<double>();
    if (!std::isfinite(out[i])) throw ScanFormatError(src, line, std::string("field '") + field + "' is not finite");
  }
  return out;
}

}  // namespace

ScanFormatError::ScanFormatError(const std::string& source, std::size_t line, const std::string& what)
    : std::invalid_argument(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

std::size_t ScanTrajectory::index_of(std::int64_t t) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), t,
                             [](const ScanFrame& f, std::int64_t v) { return f.t < v; });
  if (it == frames.end() || it->t != t) {
    throw std::out_of_range("scan " + std::to_string(scan) + " has no frame with t=" + std::to_string(t));
  }
  return static_cast<std::size_t>(it - frames.begin());
}

std::string format_scan(const ScanTrajectory& scan) {
  json header;
  header["format"] = kScanFormat;
  header["subject"] = scan.subject;
  header["scan"] = scan.scan;
  header["C"] = scan.dim;
  json ann = json::object();
  for (std::size_t k = 0; k < kViewCount; ++k) ann[std::to_string(k)] = scan.annotations[k];
  header["annotations"] = ann;

  std::string out = header.dump();
  out += '\n';
  for (const auto& f : scan.frames) {
    out += "{\"t\":" + std::to_string(f.t) + ",\"pos_mm\":";
    append_array(out, f.pose.pos);
    out += ",\"rot_deg\":";
    append_array(out, f.pose.rot);
    out += ",\"feat\":";
    append_array(out, f.feature);
    out += ",\"viewdist\":";
    append_array(out, f.viewdist);
    out += "}\n";
  }
  return out;
}

ScanTrajectory parse_scan(const std::string& text, const std::string& src) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  ScanTrajectory scan;
  std::array<bool, kViewCount> seen{};

  auto parse_line = [&](const std::string& s) {
    try {
      return json::parse(s);
    } catch (const json::parse_error& e) {
      throw ScanFormatError(src, lineno, std::string("invalid JSON: ") + e.what());
    }
  };

  if (!std::getline(in, line)) throw ScanFormatError(src, 1, "empty scan file");
  lineno = 1;
  const json header = parse_line(line);
  if (!header.is_object() || header.value("format", std::string()) != kScanFormat) {
    throw ScanFormatError(src, lineno, std::string("header format must be '") + kScanFormat + "'");
  }
  for (const char* key : {"subject", "scan", "C"}) {
    if (!header.contains(key) || !header[key].is_number_integer()) {
      throw ScanFormatError(src, lineno, std::string("header field '") + key + "' must be an integer");
    }
  }
  scan.subject = header["subject"].get<int>();
  scan.scan = header["scan"].get<int>();
  const auto dim = header["C"].get<std::int64_t>();
  if (dim <= 0) throw ScanFormatError(src, lineno, "header field 'C' must be positive");
  scan.dim = static_cast<std::size_t>(dim);
  if (!header.contains("annotations") || !header["annotations"].is_object()) {
    throw ScanFormatError(src, lineno, "header field 'annotations' must be an object");
  }
  for (auto& [key, value] : header["annotations"].items()) {
    std::size_t view = kViewCount;
    try {
      std::size_t used = 0;
      view = std::stoul(key, &used);
      if (used != key.size()) view = kViewCount;
    } catch (const std::exception&) {
    }
    if (view >= kViewCount || seen[view]) throw ScanFormatError(src, lineno, "bad annotation key '" + key + "'");
    if (!value.is_number_integer()) throw ScanFormatError(src, lineno, "annotation '" + key + "' must be an integer");
    seen[view] = true;
    scan.annotations[view] = value.get<std::int64_t>();
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw ScanFormatError(src, lineno, "annotations must cover views 0..9");
  }

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line);
    if (!j.is_object()) throw ScanFormatError(src, lineno, "frame must be a JSON object");
    if (!j.contains("t") || !j["t"].is_number_integer()) throw ScanFormatError(src, lineno, "field 't' must be an integer");
    ScanFrame f;
    f.t = j["t"].get<std::int64_t>();
    const std::int64_t expect = scan.frames.empty() ? 0 : scan.frames.back().t + 1;
    if (scan.frames.empty() ? f.t != 0 : f.t <= scan.frames.back().t) {
      throw ScanFormatError(src, lineno, "timestamps must increase strictly from 0 (expected >= " +
                                             std::to_string(expect) + ")");
    }
    f.pose.pos = fixed_array<3>(j, "pos_mm", 3, src, lineno);
    f.pose.rot = fixed_array<3>(j, "rot_deg", 3, src, lineno);
    f.viewdist = fixed_array<kViewCount>(j, "viewdist", kViewCount, src, lineno);
    if (!j.contains("feat") || !j["feat"].is_array() || j["feat"].size() != scan.dim) {
      throw ScanFormatError(src, lineno, "field 'feat' must hold C=" + std::to_string(scan.dim) + " numbers");
    }
    f.feature.reserve(scan.dim);
    for (const auto& v : j["feat"]) {
      if (!v.is_number() || !std::isfinite(v.get<double>())) throw ScanFormatError(src, lineno, "field 'feat' holds a non-finite value");
      f.feature.push_back(v.get<double>());
    }
    double total = 0.0;
    for (double z : f.viewdist) {
      if (z < 0.0) throw ScanFormatError(src, lineno, "field 'viewdist' has a negative entry");
      total += z;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ScanFormatError(src, lineno, "field 'viewdist' does not sum to 1");
    scan.frames.push_back(std::move(f));
  }
  if (scan.frames.empty()) throw ScanFormatError(src, lineno, "scan has no frames");
  for (std::size_t k = 0; k < kViewCount; ++k) {
    try {
      scan.annotated_index(k);
    } catch (const std::out_of_range&) {
      throw ScanFormatError(src, 1, "annotation for view " + std::to_string(k) + " names a missing frame");
    }
  }
  return scan;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_scan(const ScanTrajectory& scan, const std::filesystem::path& path) {
  write_text_file(path, format_scan(scan));
}

ScanTrajectory read_scan(const std::filesystem::path& path) {
  return parse_scan(read_text_file(path), path.string());
}

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  json j;
  j["format"] = kCorpusFormat;
  j["scans"] = json::array();
  for (const auto& e : manifest.scans) j["scans"].push_back({{"path", e.path}, {"subject", e.subject}});
  write_text_file(path, j.dump(2) + "\n");
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != kCorpusFormat || !j.contains("scans") ||
      !j["scans"].is_array()) {
    throw std::invalid_argument(path.string() + ": not a " + std::string(kCorpusFormat) + " manifest");
  }
  CorpusManifest m;
  for (const auto& e : j["scans"]) {
    if (!e.contains("path") || !e["path"].is_string() || !e.contains("subject") || !e["subject"].is_number_integer()) {
      throw std::invalid_argument(path.string() + ": manifest entries need 'path' and integer 'subject'");
    }
    m.scans.push_back({e["path"].get<std::string>(), e["subject"].get<int>()});
  }
  return m;
}

}  // namespace ustar
