#include "ustar/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "ustar/rng.hpp"

namespace ustar {

Corpus load_corpus(const std::filesystem::path& manifest_path) {
  Corpus corpus;
  corpus.manifest = read_manifest(manifest_path);
  corpus.manifest_digest = fnv1a(read_text_file(manifest_path));
  const auto root = manifest_path.parent_path();
  for (const auto& entry : corpus.manifest.scans) {
    auto scan = read_scan(root / entry.path);
    if (scan.subject != entry.subject) {
      throw std::invalid_argument(entry.path + ": subject " + std::to_string(scan.subject) +
                                  " disagrees with manifest subject " + std::to_string(entry.subject));
    }
    corpus.scans.push_back(std::move(scan));
  }
  if (corpus.scans.empty()) throw std::invalid_argument(manifest_path.string() + ": manifest lists no scans");
  return corpus;
}

SplitSpec split_by_subject(const CorpusManifest& manifest, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("split.val_fraction must lie in (0, 1)");
  }
  std::set<int> distinct;
  for (const auto& e : manifest.scans) distinct.insert(e.subject);
  std::vector<int> ids(distinct.begin(), distinct.end());
  if (ids.size() < 2) throw std::invalid_argument("a subject split needs at least two subjects");

  Rng rng = Rng::derive(seed, {0x73706c6974ULL});
  for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);
  // The small epsilon keeps products like 26 * 0.23 = 5.98 from drifting past an integer.
  auto n_val = static_cast<std::size_t>(std::ceil(static_cast<double>(ids.size()) * val_fraction - 1e-9));
  n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);

  SplitSpec split;
  split.seed = seed;
  split.val_subjects.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train_subjects.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(split.val_subjects.begin(), split.val_subjects.end());
  std::sort(split.train_subjects.begin(), split.train_subjects.end());
  return split;
}

std::string format_split(const SplitSpec& split) {
  nlohmann::json j;
  j["train"] = split.train_subjects;
  j["val"] = split.val_subjects;
  j["seed"] = split.seed;
  return j.dump(2) + "\n";
}

SplitSpec parse_split(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("split file: invalid JSON: ") + e.what());
  }
  SplitSpec split;
  try {
    split.train_subjects = j.at("train").get<std::vector<int>>();
    split.val_subjects = j.at("val").get<std::vector<int>>();
    split.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("split file: ") + e.what());
  }
  std::set<int> train(split.train_subjects.begin(), split.train_subjects.end());
  for (int s : split.val_subjects) {
    if (train.contains(s)) throw std::invalid_argument("split file: subject " + std::to_string(s) + " on both sides");
  }
  return split;
}

void SampleConfig::validate() const {
  if (L == 0) throw std::invalid_argument("model.L must be at least 1");
  sampler.validate();
}

std::vector<std::size_t> eligible_history(const ScanTrajectory& scan, const SamplerConfig& sampler) {
  std::vector<std::size_t> pool(scan.frames.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  std::vector<Pose6> poses;
  for (std::size_t k = 0; k < kViewCount; ++k) {
    const Pose6 target = scan.target_pose(k);
    poses.clear();
    for (std::size_t i : pool) poses.push_back(scan.frames[i].pose);
    pool = exclude_near_target(pool, poses, target, sampler.exclude_mm, sampler.exclude_deg);
  }
  return pool;
}

std::vector<Sample> build_samples(const ScanTrajectory& scan, std::size_t scan_pos,
                                  const SampleConfig& config, SampleStats* stats) {
  config.validate();
  const auto eligible = eligible_history(scan, config.sampler);
  std::vector<ViewDistribution> eligible_z;
  eligible_z.reserve(eligible.size());
  for (std::size_t i : eligible) eligible_z.push_back(scan.frames[i].viewdist);

  std::array<Pose6, kViewCount> targets{};
  for (std::size_t k = 0; k < kViewCount; ++k) targets[k] = scan.target_pose(k);

  SampleStats local;
  std::vector<Sample> out;
  const std::size_t n = config.L - 1;
  for (std::size_t t = 0; t < scan.frames.size(); ++t) {
    if (t < config.min_history) {
      ++local.skipped_history;
      continue;
    }
    const auto pool_len = static_cast<std::size_t>(
        std::lower_bound(eligible.begin(), eligible.end(), t) - eligible.begin());
    if (pool_len == 0) {
      ++local.skipped_pool;
      continue;
    }
    Sample s;
    s.scan = scan_pos;
    s.scan_id = scan.scan;
    s.current = t;
    s.pool_size = pool_len;
    if (n > 0) {
      Rng rng = Rng::derive(config.sampler.seed, {static_cast<std::uint64_t>(scan.scan), t});
      const std::span<const std::size_t> pool(eligible.data(), pool_len);
      s.anchors = config.sampler.kind == SamplerKind::segmental
                      ? segmental_sample(pool, n, rng)
                      : semantic_sample(pool, std::span(eligible_z.data(), pool_len),
                                        scan.frames[t].viewdist, n, config.sampler.K, rng);
    }
    const Pose6& pc = scan.frames[t].pose;
    for (std::size_t k = 0; k < kViewCount; ++k) {
      s.labels[k] = relative_action(pc, targets[k]);
      s.mask[k] = true;
    }
    out.push_back(std::move(s));
  }
  local.samples = out.size();
  if (stats) {
    stats->samples += local.samples;
    stats->skipped_history += local.skipped_history;
    stats->skipped_pool += local.skipped_pool;
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t epoch_seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(epoch_seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::size_t nearest_frame(const ScanTrajectory& scan, const Pose6& pose) {
  if (scan.frames.empty()) throw std::invalid_argument("nearest_frame on an empty scan");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scan.frames.size(); ++i) {
    const double d = pose_distance(scan.frames[i].pose, pose);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace ustar
