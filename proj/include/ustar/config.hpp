#pragma once

// Run configuration shared by every CLI verb.
//
// Configs are flat `key = value` files; `#` starts a comment. Every key can
// be overridden on the command line, and the effective value is resolved as
// flag > file > built-in default.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ustar/dataset.hpp"
#include "ustar/models.hpp"
#include "ustar/optim.hpp"
#include "ustar/sampling.hpp"
#include "ustar/simulator.hpp"

namespace ustar {

struct RunConfig {
  // Paths. They are excluded from the config digest so relocated reruns
  // produce identical reports.
  std::string corpus_dir = "corpus";
  std::string out_dir = "out";
  std::string checkpoint;  // eval input; empty means <out_dir>/model.ckpt

  SimConfig sim;
  std::size_t subjects = 26;
  std::size_t scans_per_subject = 2;

  double val_fraction = 0.23;
  std::uint64_t split_seed = 0;

  HeadConfig head;
  SampleConfig data;
  TrainConfig train;

  std::uint64_t eval_seed = 20240501;  // eval anchors never depend on the training seed
  std::string eval_split = "val";      // val | train
  std::size_t eval_batch = 256;

  std::vector<std::size_t> scale_L = {2, 4, 6, 8, 12, 16};
  std::vector<std::uint64_t> sweep_seeds = {0, 1, 2};
  std::vector<ModelKind> ablate_models = {ModelKind::single_frame, ModelKind::chain,
                                          ModelKind::fully_connected, ModelKind::star};
  std::vector<SamplerKind> ablate_samplers = {SamplerKind::segmental, SamplerKind::semantic};

  /// Sets one key from its text form. Throws std::invalid_argument for an
  /// unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Every key with its canonical text value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  static std::vector<std::string> keys();
  static bool is_path_key(const std::string& key);

  void validate() const;
  /// FNV-1a over the non-path entries.
  std::uint64_t digest() const;

  std::filesystem::path manifest_path() const { return std::filesystem::path(corpus_dir) / "manifest.json"; }
  std::filesystem::path split_path() const { return std::filesystem::path(corpus_dir) / "split.json"; }
  std::filesystem::path checkpoint_path() const;
};

/// Applies `key = value` lines in order. Errors name the source and line.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& source);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Parses "key=value" (used by repeated --set flags).
std::pair<std::string, std::string> split_assignment(const std::string& text);

}  // namespace ustar
