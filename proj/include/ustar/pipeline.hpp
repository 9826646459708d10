#pragma once

// End-to-end entry points: corpus generation, training, evaluation and the
// L-sweep / model-by-sampler ablations. The cmd_* functions read and write
// files under the configured directories; the lower-level functions work on
// in-memory corpora.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ustar/config.hpp"
#include "ustar/dataset.hpp"
#include "ustar/encoders.hpp"
#include "ustar/models.hpp"
#include "ustar/report.hpp"

namespace ustar {

struct TrainOutcome {
  std::vector<LossRecord> log;      // one row per optimizer step
  std::vector<double> epoch_loss;   // mean batch loss per epoch
  std::size_t samples_per_epoch = 0;
  std::size_t total_steps = 0;
  std::uint64_t provider_digest_before = 0;
  std::uint64_t provider_digest_after = 0;
};

/// Positions in corpus.scans of every scan whose subject is listed.
std::vector<std::size_t> scans_of(const Corpus& corpus, std::span<const int> subjects);

/// Sampler seed used for training epoch `epoch`.
std::uint64_t training_sampler_seed(const RunConfig& config, std::size_t epoch);

/// Trains `head` in place on the listed scans. Anchors are redrawn every
/// epoch; batches are shuffled per epoch; lr follows cosine_lr over all steps.
template <typename T>
TrainOutcome train_head(NavigationHead<T>& head, const Corpus& corpus, std::span<const std::size_t> scans,
                        const FeatureProvider& provider, const RunConfig& config);

/// MAE over every eligible frame of the listed scans, anchors drawn with eval_seed.
template <typename T>
MetricsReport evaluate_head(const NavigationHead<T>& head, const Corpus& corpus,
                            std::span<const std::size_t> scans, const FeatureProvider& provider,
                            const RunConfig& config);

struct ExperimentResult {
  TrainOutcome train;
  MetricsReport val;
};

/// Trains on the split's training subjects and evaluates on its validation
/// subjects, without touching the filesystem.
ExperimentResult run_experiment(const RunConfig& config, const Corpus& corpus, const SplitSpec& split);

/// Generates anatomies and trajectories in memory (what cmd_simulate writes).
std::vector<ScanTrajectory> simulate_corpus(const RunConfig& config, std::vector<LatentAnatomy>* anatomies = nullptr);

/// Hyperparameters stored in checkpoint metadata, and their inverse.
std::string checkpoint_metadata(const RunConfig& config);
HeadConfig head_from_metadata(const std::string& metadata, Precision* precision = nullptr);

SplitSpec load_or_make_split(const RunConfig& config, const Corpus& corpus);

// --- verbs ---------------------------------------------------------------

/// Writes <corpus.dir>/manifest.json, split.json and scans/*.jsonl.
void cmd_simulate(const RunConfig& config);
/// Writes <out.dir>/model.ckpt and loss_log.csv.
TrainOutcome cmd_train(const RunConfig& config);
/// Writes <out.dir>/metrics.csv and metrics.json.
MetricsReport cmd_eval(const RunConfig& config);
/// Writes <out.dir>/scale_curve.csv (row by row) and curve.svg.
std::vector<CurvePoint> cmd_scale_curve(const RunConfig& config);

struct AblationCell {
  std::string model;
  std::string sampler;
  double trans_mean = 0.0, trans_spread = 0.0;  // spread = sample standard deviation
  double rot_mean = 0.0, rot_spread = 0.0;
  std::size_t runs = 0;
};

/// Writes <out.dir>/ablation_runs.csv (one row per run) and ablation.csv (one per cell).
std::vector<AblationCell> cmd_ablate(const RunConfig& config);

}  // namespace ustar
