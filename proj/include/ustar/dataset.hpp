#pragma once

// Supervised samples from scans, subject-disjoint splits, batching and
// pose-based retrieval.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ustar/pose.hpp"
#include "ustar/sampling.hpp"
#include "ustar/scan.hpp"
#include "ustar/scan_io.hpp"

namespace ustar {

struct Corpus {
  CorpusManifest manifest;
  std::vector<ScanTrajectory> scans;  // manifest order
  std::uint64_t manifest_digest = 0;  // over the manifest file bytes
};

/// Reads a manifest and every scan it lists (paths relative to the manifest).
Corpus load_corpus(const std::filesystem::path& manifest_path);

struct SplitSpec {
  std::vector<int> train_subjects;  // ascending
  std::vector<int> val_subjects;    // ascending
  std::uint64_t seed = 0;
};

/// Shuffles the distinct subject ids with `seed` and puts the first
/// ceil(n * val_fraction) of them (clamped to [1, n-1]) on the validation side.
/// Throws std::invalid_argument for fewer than two subjects or a fraction outside (0, 1).
SplitSpec split_by_subject(const CorpusManifest& manifest, double val_fraction, std::uint64_t seed);

std::string format_split(const SplitSpec& split);
SplitSpec parse_split(const std::string& text);

struct SampleConfig {
  std::size_t L = 8;            // graph size: L - 1 anchors plus the current frame
  std::size_t min_history = 8;  // first frame that may be a current frame
  SamplerConfig sampler;

  void validate() const;
};

struct Sample {
  std::size_t scan = 0;   // position in the corpus scan list
  int scan_id = 0;
  std::size_t current = 0;
  std::size_t pool_size = 0;
  std::vector<std::size_t> anchors;  // ascending frame positions
  std::array<Action6, kViewCount> labels{};
  std::array<bool, kViewCount> mask{};
};

struct SampleStats {
  std::size_t samples = 0;
  std::size_t skipped_history = 0;
  std::size_t skipped_pool = 0;
};

/// Frame positions of `scan` that are not within both exclusion thresholds of
/// any annotated target pose. Every sample's pool is a prefix of this list.
std::vector<std::size_t> eligible_history(const ScanTrajectory& scan, const SamplerConfig& sampler);

/// One sample per eligible current frame. Anchors are drawn with the stream
/// Rng::derive(sampler.seed, {scan id, current}).
std::vector<Sample> build_samples(const ScanTrajectory& scan, std::size_t scan_pos,
                                  const SampleConfig& config, SampleStats* stats = nullptr);

/// Seeded shuffle of [0, n) cut into consecutive batches; the last may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t epoch_seed);

/// Frame position minimizing pose_distance to `pose`; ties go to the earliest.
std::size_t nearest_frame(const ScanTrajectory& scan, const Pose6& pose);

}  // namespace ustar
