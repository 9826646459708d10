#include "ustar/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ustar/rng.hpp"
#include "ustar/scan_io.hpp"

namespace ustar {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename U, typename F>
std::string join(const std::vector<U>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + f(xs[i]);
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define DOUBLE_FIELD(key, member)                                          \
  {key, {[](const RunConfig& c) { return fmt_double(c.member); },          \
         [](RunConfig& c, const std::string& v) { c.member = parse_double(key, v); }}}
#define SIZE_FIELD(key, member)                                                      \
  {key, {[](const RunConfig& c) { return std::to_string(c.member); },                \
         [](RunConfig& c, const std::string& v) { c.member = static_cast<decltype(c.member)>(parse_u64(key, v)); }}}
#define BOOL_FIELD(key, member)                                            \
  {key, {[](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, \
         [](RunConfig& c, const std::string& v) { c.member = parse_bool(key, v); }}}
#define STRING_FIELD(key, member)                                          \
  {key, {[](const RunConfig& c) { return c.member; },                      \
         [](RunConfig& c, const std::string& v) { c.member = v; }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      STRING_FIELD("corpus.dir", corpus_dir),
      STRING_FIELD("out.dir", out_dir),
      STRING_FIELD("checkpoint", checkpoint),

      SIZE_FIELD("sim.subjects", subjects),
      SIZE_FIELD("sim.scans_per_subject", scans_per_subject),
      SIZE_FIELD("sim.frames_per_scan", sim.frames_per_scan),
      SIZE_FIELD("sim.C", sim.feature_dim),
      SIZE_FIELD("sim.fourier_features", sim.fourier_features),
      DOUBLE_FIELD("sim.step_mm", sim.step_mm),
      DOUBLE_FIELD("sim.step_deg", sim.step_deg),
      DOUBLE_FIELD("sim.approach_fraction", sim.approach_fraction),
      DOUBLE_FIELD("sim.exploration_noise", sim.exploration_noise),
      DOUBLE_FIELD("sim.backtrack_prob", sim.backtrack_prob),
      DOUBLE_FIELD("sim.capture_mm", sim.capture_mm),
      DOUBLE_FIELD("sim.capture_deg", sim.capture_deg),
      DOUBLE_FIELD("sim.feature_noise", sim.feature_noise),
      DOUBLE_FIELD("sim.classifier_tau", sim.classifier_tau),
      DOUBLE_FIELD("sim.workspace_mm", sim.workspace_mm),
      DOUBLE_FIELD("sim.workspace_deg", sim.workspace_deg),
      DOUBLE_FIELD("sim.subject_offset_mm", sim.subject_offset_mm),
      DOUBLE_FIELD("sim.subject_offset_deg", sim.subject_offset_deg),
      DOUBLE_FIELD("sim.target_jitter_mm", sim.target_jitter_mm),
      DOUBLE_FIELD("sim.target_jitter_deg", sim.target_jitter_deg),
      DOUBLE_FIELD("sim.min_separation", sim.min_separation),
      DOUBLE_FIELD("sim.feature_scale_mm", sim.feature_scale_mm),
      DOUBLE_FIELD("sim.feature_scale_deg", sim.feature_scale_deg),
      DOUBLE_FIELD("sim.warp_radius", sim.warp_radius),
      SIZE_FIELD("sim.max_retries", sim.max_retries),
      SIZE_FIELD("sim.seed", sim.seed),

      DOUBLE_FIELD("split.val_fraction", val_fraction),
      SIZE_FIELD("split.seed", split_seed),

      {"model.kind", {[](const RunConfig& c) { return to_string(c.head.kind); },
                      [](RunConfig& c, const std::string& v) { c.head.kind = parse_model_kind(v); }}},
      SIZE_FIELD("model.C", head.dim),
      SIZE_FIELD("model.heads", head.heads),
      SIZE_FIELD("model.depth", head.depth),
      BOOL_FIELD("model.pre_norm", head.pre_norm),
      BOOL_FIELD("model.standardize_actions", head.standardize_actions),
      SIZE_FIELD("model.L", data.L),

      {"sampler.strategy", {[](const RunConfig& c) { return to_string(c.data.sampler.kind); },
                            [](RunConfig& c, const std::string& v) { c.data.sampler.kind = parse_sampler_kind(v); }}},
      SIZE_FIELD("sampler.K", data.sampler.K),
      DOUBLE_FIELD("sampler.exclude.trans_mm", data.sampler.exclude_mm),
      DOUBLE_FIELD("sampler.exclude.rot_deg", data.sampler.exclude_deg),
      SIZE_FIELD("sampler.seed", data.sampler.seed),
      SIZE_FIELD("data.min_history", data.min_history),

      SIZE_FIELD("train.batch_size", train.batch_size),
      DOUBLE_FIELD("train.lr", train.learning_rate),
      SIZE_FIELD("train.epochs", train.epochs),
      DOUBLE_FIELD("train.weight_decay", train.weight_decay),
      DOUBLE_FIELD("train.beta1", train.beta1),
      DOUBLE_FIELD("train.beta2", train.beta2),
      DOUBLE_FIELD("train.eps", train.eps),
      {"train.precision", {[](const RunConfig& c) { return std::string(c.train.precision == Precision::f32 ? "f32" : "f64"); },
                           [](RunConfig& c, const std::string& v) {
                             if (v == "f32") c.train.precision = Precision::f32;
                             else if (v == "f64") c.train.precision = Precision::f64;
                             else throw std::invalid_argument("train.precision: expected f32 or f64, got '" + v + "'");
                           }}},
      SIZE_FIELD("train.seed", train.seed),

      SIZE_FIELD("eval.seed", eval_seed),
      {"eval.split", {[](const RunConfig& c) { return c.eval_split; },
                      [](RunConfig& c, const std::string& v) {
                        if (v != "val" && v != "train") throw std::invalid_argument("eval.split: expected val or train, got '" + v + "'");
                        c.eval_split = v;
                      }}},
      SIZE_FIELD("eval.batch_size", eval_batch),

      {"scale.L_list", {[](const RunConfig& c) { return join(c.scale_L, [](std::size_t x) { return std::to_string(x); }); },
                        [](RunConfig& c, const std::string& v) {
                          c.scale_L.clear();
                          for (const auto& s : split_list(v)) c.scale_L.push_back(parse_u64("scale.L_list", s));
                        }}},
      {"sweep.seeds", {[](const RunConfig& c) { return join(c.sweep_seeds, [](std::uint64_t x) { return std::to_string(x); }); },
                       [](RunConfig& c, const std::string& v) {
                         c.sweep_seeds.clear();
                         for (const auto& s : split_list(v)) c.sweep_seeds.push_back(parse_u64("sweep.seeds", s));
                       }}},
      {"ablate.models", {[](const RunConfig& c) { return join(c.ablate_models, [](ModelKind k) { return to_string(k); }); },
                         [](RunConfig& c, const std::string& v) {
                           c.ablate_models.clear();
                           for (const auto& s : split_list(v)) c.ablate_models.push_back(parse_model_kind(s));
                         }}},
      {"ablate.samplers", {[](const RunConfig& c) { return join(c.ablate_samplers, [](SamplerKind k) { return to_string(k); }); },
                           [](RunConfig& c, const std::string& v) {
                             c.ablate_samplers.clear();
                             for (const auto& s : split_list(v)) c.ablate_samplers.push_back(parse_sampler_kind(s));
                           }}},
  };
  return table;
}

#undef DOUBLE_FIELD
#undef SIZE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [k, f] : fields()) {
    if (k == key) {
      f.set(*this, trim(value));
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, f] : fields()) out.emplace_back(k, f.get(*this));
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

bool RunConfig::is_path_key(const std::string& key) {
  return key == "corpus.dir" || key == "out.dir" || key == "checkpoint";
}

void RunConfig::validate() const {
  sim.validate();
  if (subjects < 2) throw std::invalid_argument("sim.subjects must be at least 2");
  if (scans_per_subject == 0) throw std::invalid_argument("sim.scans_per_subject must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("split.val_fraction must lie in (0, 1)");
  head.validate();
  data.validate();
  if (head.kind == ModelKind::star && data.L < 2) throw std::invalid_argument("star model needs model.L >= 2");
  train.validate();
  if (eval_batch == 0) throw std::invalid_argument("eval.batch_size must be positive");
  for (auto L : scale_L) {
    if (L == 0) throw std::invalid_argument("scale.L_list entries must be positive");
  }
  if (sweep_seeds.empty()) throw std::invalid_argument("sweep.seeds must not be empty");
}

std::uint64_t RunConfig::digest() const {
  std::string text;
  for (const auto& [k, v] : entries()) {
    if (is_path_key(k)) continue;
    text += k + "=" + v + "\n";
  }
  return fnv1a(text);
}

std::filesystem::path RunConfig::checkpoint_path() const {
  if (!checkpoint.empty()) return checkpoint;
  return std::filesystem::path(out_dir) / "model.ckpt";
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  apply_config_text(config, read_text_file(path), path.string());
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected key=value, got '" + text + "'");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

}  // namespace ustar
