#include "ustar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "ustar/checkpoint.hpp"
#include "ustar/kernels.hpp"
#include "ustar/rng.hpp"
#include "ustar/scan_io.hpp"
#include "ustar/simulator.hpp"

namespace ustar {
namespace fs = std::filesystem;

namespace {

SampleConfig sample_config_for(const RunConfig& config, std::uint64_t sampler_seed) {
  SampleConfig sc = config.data;
  sc.sampler.seed = sampler_seed;
  // The single-frame head never reads anchors; skip drawing them. Eligibility
  // does not depend on L, so the sample set is unchanged.
  if (config.head.kind == ModelKind::single_frame) sc.L = 1;
  return sc;
}

std::vector<Sample> collect_samples(const Corpus& corpus, std::span<const std::size_t> scans,
                                    const SampleConfig& sc) {
  std::vector<Sample> all;
  for (std::size_t pos : scans) {
    auto part = build_samples(corpus.scans.at(pos), pos, sc);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

template <typename T>
GraphBatch<T> make_batch(const Corpus& corpus, const FeatureProvider& provider, const std::vector<Sample>& samples,
                         std::span<const std::size_t> which) {
  std::vector<AnchorSet> sets;
  sets.reserve(which.size());
  for (std::size_t i : which) {
    const auto& s = samples[i];
    sets.push_back(build_anchor_set(corpus.scans[s.scan], provider, s.current, s.anchors));
  }
  return GraphBatch<T>::pack(sets);
}

template <typename T>
void label_tensors(const std::vector<Sample>& samples, std::span<const std::size_t> which,
                   ad::Tensor<T>& labels, std::vector<T>& mask) {
  std::vector<T> lv;
  lv.reserve(which.size() * 6 * kViewCount);
  mask.clear();
  for (std::size_t i : which) {
    for (std::size_t k = 0; k < kViewCount; ++k) {
      for (double x : samples[i].labels[k].to_array()) lv.push_back(static_cast<T>(x));
      mask.push_back(samples[i].mask[k] ? T(1) : T(0));
    }
  }
  labels = ad::Tensor<T>::constant({which.size(), 6 * kViewCount}, std::move(lv));
}

void check_width(const FeatureProvider& provider, std::size_t model_dim) {
  if (provider.dim() != model_dim) {
    throw std::invalid_argument("corpus feature width C=" + std::to_string(provider.dim()) +
                                " differs from model.C=" + std::to_string(model_dim));
  }
}

template <typename T>
ExperimentResult run_typed(const RunConfig& config, const Corpus& corpus, const SplitSpec& split) {
  HeadConfig hc = config.head;
  hc.seed = config.train.seed;
  auto head = make_head<T>(hc);
  ScanFeatureProvider provider(corpus.scans);
  const auto train_scans = scans_of(corpus, split.train_subjects);
  const auto val_scans = scans_of(corpus, split.val_subjects);
  ExperimentResult r;
  r.train = train_head(*head, corpus, train_scans, provider, config);
  r.val = evaluate_head(*head, corpus, val_scans, provider, config);
  r.val.manifest_digest = corpus.manifest_digest;
  return r;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

Corpus load_configured_corpus(const RunConfig& config) {
  const auto path = config.manifest_path();
  if (!fs::exists(path)) throw std::invalid_argument("corpus manifest not found: " + path.string());
  return load_corpus(path);
}

}  // namespace

std::vector<std::size_t> scans_of(const Corpus& corpus, std::span<const int> subjects) {
  const std::set<int> wanted(subjects.begin(), subjects.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.scans.size(); ++i) {
    if (wanted.contains(corpus.scans[i].subject)) out.push_back(i);
  }
  return out;
}

std::uint64_t training_sampler_seed(const RunConfig& config, std::size_t epoch) {
  return Rng::derive(config.data.sampler.seed, {config.train.seed, epoch, 0x616e63686f72ULL}).next_u64();
}

template <typename T>
TrainOutcome train_head(NavigationHead<T>& head, const Corpus& corpus, std::span<const std::size_t> scans,
                        const FeatureProvider& provider, const RunConfig& config) {
  const TrainConfig& tc = config.train;
  tc.validate();
  check_width(provider, head.config().dim);
  if (scans.empty()) throw std::invalid_argument("no training scans");
  const kernels::FlushDenormals ftz;

  TrainOutcome out;
  out.provider_digest_before = provider.digest();
  auto samples = collect_samples(corpus, scans, sample_config_for(config, training_sampler_seed(config, 0)));
  if (samples.empty()) throw std::runtime_error("training scans yield no eligible samples");
  out.samples_per_epoch = samples.size();
  const std::size_t per_epoch = (samples.size() + tc.batch_size - 1) / tc.batch_size;
  out.total_steps = per_epoch * tc.epochs;

  auto& params = head.store().params();
  std::size_t step = 0;
  ad::Tensor<T> labels;
  std::vector<T> mask;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (epoch > 0) samples = collect_samples(corpus, scans, sample_config_for(config, training_sampler_seed(config, epoch)));
    const auto batches =
        batch_iter(samples.size(), tc.batch_size, Rng::derive(tc.seed, {epoch, 0x6261746368ULL}).next_u64());
    double epoch_total = 0.0;
    for (const auto& batch : batches) {
      const auto g = make_batch<T>(corpus, provider, samples, batch);
      label_tensors(samples, batch, labels, mask);
      const auto loss = multi_view_loss(head.forward(g), labels, std::span<const T>(mask));
      head.store().zero_grad();
      loss.backward();
      const double lr = cosine_lr(step, out.total_steps, tc.learning_rate);
      adamw_step(std::span(params), tc, lr);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) throw std::runtime_error("training diverged at step " + std::to_string(step));
      out.log.push_back({step, lr, lv});
      epoch_total += lv;
      ++step;
    }
    out.epoch_loss.push_back(epoch_total / static_cast<double>(batches.size()));
  }
  out.provider_digest_after = provider.digest();
  return out;
}

template <typename T>
MetricsReport evaluate_head(const NavigationHead<T>& head, const Corpus& corpus, std::span<const std::size_t> scans,
                            const FeatureProvider& provider, const RunConfig& config) {
  check_width(provider, head.config().dim);
  const kernels::FlushDenormals ftz;
  const auto samples = collect_samples(corpus, scans, sample_config_for(config, config.eval_seed));
  if (samples.empty()) throw std::runtime_error("evaluation scans yield no eligible samples");

  std::array<std::vector<Action6>, kViewCount> pred, gt;
  std::vector<std::size_t> chunk;
  for (std::size_t start = 0; start < samples.size(); start += config.eval_batch) {
    chunk.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + config.eval_batch); ++i) chunk.push_back(i);
    const auto out = head.forward(make_batch<T>(corpus, provider, samples, chunk));
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto row = prediction_row(out, b);
      const auto& s = samples[chunk[b]];
      for (std::size_t k = 0; k < kViewCount; ++k) {
        if (!s.mask[k]) continue;
        pred[k].push_back(row[k]);
        gt[k].push_back(s.labels[k]);
      }
    }
  }
  MetricsReport r;
  for (std::size_t k = 0; k < kViewCount; ++k) {
    if (pred[k].empty()) throw std::runtime_error("no labels for view " + std::to_string(k));
    r.per_view[k] = action_mae(pred[k], gt[k]);
    r.counts[k] = pred[k].size();
  }
  finalize_groups(r);
  r.samples = samples.size();
  r.config_digest = config.digest();
  r.model = to_string(head.config().kind);
  r.sampler = to_string(config.data.sampler.kind);
  r.L = config.data.L;
  r.split = config.eval_split;
  return r;
}

ExperimentResult run_experiment(const RunConfig& config, const Corpus& corpus, const SplitSpec& split) {
  config.validate();
  return config.train.precision == Precision::f64 ? run_typed<double>(config, corpus, split)
                                                  : run_typed<float>(config, corpus, split);
}

std::vector<ScanTrajectory> simulate_corpus(const RunConfig& config, std::vector<LatentAnatomy>* anatomies) {
  config.sim.validate();
  std::vector<ScanTrajectory> scans;
  if (anatomies) anatomies->clear();
  for (std::size_t s = 0; s < config.subjects; ++s) {
    const auto anatomy = generate_anatomy(config.sim.seed, static_cast<int>(s), config.sim);
    for (std::size_t k = 0; k < config.scans_per_subject; ++k) {
      const int scan_id = static_cast<int>(s * config.scans_per_subject + k);
      const auto scan_seed = Rng::derive(config.sim.seed, {s, k, 0x7363616eULL}).next_u64();
      scans.push_back(generate_trajectory(anatomy, config.sim, scan_id, scan_seed));
    }
    if (anatomies) anatomies->push_back(anatomy);
  }
  return scans;
}

std::string checkpoint_metadata(const RunConfig& config) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : config.entries()) {
    if (k.rfind("model.", 0) == 0 || k == "train.precision" || k == "train.seed") j[k] = v;
  }
  return j.dump();
}

HeadConfig head_from_metadata(const std::string& metadata, Precision* precision) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(metadata);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("checkpoint metadata: ") + e.what());
  }
  RunConfig c;
  for (auto& [k, v] : j.items()) c.set(k, v.get<std::string>());
  HeadConfig h = c.head;
  h.seed = c.train.seed;
  h.validate();
  if (precision) *precision = c.train.precision;
  return h;
}

SplitSpec load_or_make_split(const RunConfig& config, const Corpus& corpus) {
  if (fs::exists(config.split_path())) return parse_split(read_text_file(config.split_path()));
  return split_by_subject(corpus.manifest, config.val_fraction, config.split_seed);
}

void cmd_simulate(const RunConfig& config) {
  config.validate();
  const fs::path dir = config.corpus_dir;
  const auto scans = simulate_corpus(config);
  CorpusManifest manifest;
  for (const auto& scan : scans) {
    char name[48];
    std::snprintf(name, sizeof name, "scans/scan_%04d.jsonl", scan.scan);
    write_scan(scan, dir / name);
    manifest.scans.push_back({name, scan.subject});
  }
  write_manifest(manifest, config.manifest_path());
  write_text_file(config.split_path(), format_split(split_by_subject(manifest, config.val_fraction, config.split_seed)));
}

namespace {

template <typename T>
TrainOutcome train_to_disk(const RunConfig& config, const Corpus& corpus, const SplitSpec& split) {
  HeadConfig hc = config.head;
  hc.seed = config.train.seed;
  auto head = make_head<T>(hc);
  ScanFeatureProvider provider(corpus.scans);
  const auto out = train_head(*head, corpus, scans_of(corpus, split.train_subjects), provider, config);
  save_checkpoint(config.checkpoint_path(), head->store(), config.digest(), checkpoint_metadata(config));
  write_text_file(fs::path(config.out_dir) / "loss_log.csv", loss_log_csv(out.log));
  return out;
}

template <typename T>
MetricsReport eval_from_disk(const RunConfig& config, const HeadConfig& hc, const Corpus& corpus,
                             const SplitSpec& split) {
  auto head = make_head<T>(hc);
  load_checkpoint(config.checkpoint_path(), head->store());
  ScanFeatureProvider provider(corpus.scans);
  const auto& subjects = config.eval_split == "train" ? split.train_subjects : split.val_subjects;
  RunConfig effective = config;
  effective.head = hc;
  auto report = evaluate_head(*head, corpus, scans_of(corpus, subjects), provider, effective);
  report.config_digest = config.digest();
  report.manifest_digest = corpus.manifest_digest;
  return report;
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& config) {
  config.validate();
  const auto corpus = load_configured_corpus(config);
  const auto split = load_or_make_split(config, corpus);
  return config.train.precision == Precision::f64 ? train_to_disk<double>(config, corpus, split)
                                                  : train_to_disk<float>(config, corpus, split);
}

MetricsReport cmd_eval(const RunConfig& config) {
  config.validate();
  const auto ckpt = config.checkpoint_path();
  if (!fs::exists(ckpt)) throw std::invalid_argument("checkpoint not found: " + ckpt.string());
  Precision precision = Precision::f32;
  const auto hc = head_from_metadata(read_checkpoint_header(ckpt).metadata, &precision);
  const auto corpus = load_configured_corpus(config);
  const auto split = load_or_make_split(config, corpus);
  auto report = precision == Precision::f64 ? eval_from_disk<double>(config, hc, corpus, split)
                                            : eval_from_disk<float>(config, hc, corpus, split);
  RunConfig shown = config;
  shown.head = hc;
  std::vector<std::pair<std::string, std::string>> entries;
  for (auto& e : shown.entries()) {
    if (!RunConfig::is_path_key(e.first)) entries.push_back(e);
  }
  write_text_file(fs::path(config.out_dir) / "metrics.csv", metrics_csv(report));
  write_text_file(fs::path(config.out_dir) / "metrics.json", metrics_json(report, entries));
  return report;
}

std::vector<CurvePoint> cmd_scale_curve(const RunConfig& config) {
  config.validate();
  if (config.scale_L.empty()) throw std::invalid_argument("scale.L_list must not be empty");
  const auto corpus = load_configured_corpus(config);
  const auto split = load_or_make_split(config, corpus);
  const fs::path csv = fs::path(config.out_dir) / "scale_curve.csv";
  std::string text = "L,trans_mae_mm,rot_mae_deg,seeds\n";
  write_text_file(csv, text);
  std::vector<CurvePoint> points;
  for (std::size_t L : config.scale_L) {
    std::vector<double> tr, rot;
    for (std::uint64_t seed : config.sweep_seeds) {
      RunConfig run = config;
      run.data.L = L;
      run.train.seed = seed;
      const auto r = run_experiment(run, corpus, split);
      tr.push_back(r.val.overall.trans_mm);
      rot.push_back(r.val.overall.rot_deg);
    }
    points.push_back({static_cast<double>(L), mean_of(tr), mean_of(rot)});
    text += std::to_string(L) + "," + format_number(points.back().trans_mae) + "," +
            format_number(points.back().rot_mae) + "," + std::to_string(tr.size()) + "\n";
    write_text_file(csv, text);
  }
  write_text_file(fs::path(config.out_dir) / "curve.svg", curve_svg(points, "graph size L"));
  return points;
}

std::vector<AblationCell> cmd_ablate(const RunConfig& config) {
  config.validate();
  const auto corpus = load_configured_corpus(config);
  const auto split = load_or_make_split(config, corpus);
  const fs::path runs_csv = fs::path(config.out_dir) / "ablation_runs.csv";
  std::string runs_text = "model,sampler,seed,trans_mae_mm,rot_mae_deg\n";
  write_text_file(runs_csv, runs_text);
  std::vector<AblationCell> cells;
  for (ModelKind model : config.ablate_models) {
    for (SamplerKind sampler : config.ablate_samplers) {
      AblationCell cell;
      cell.model = to_string(model);
      cell.sampler = to_string(sampler);
      std::vector<double> tr, rot;
      for (std::uint64_t seed : config.sweep_seeds) {
        RunConfig run = config;
        run.head.kind = model;
        run.data.sampler.kind = sampler;
        run.train.seed = seed;
        const auto r = run_experiment(run, corpus, split);
        tr.push_back(r.val.overall.trans_mm);
        rot.push_back(r.val.overall.rot_deg);
        runs_text += cell.model + "," + cell.sampler + "," + std::to_string(seed) + "," +
                     format_number(tr.back()) + "," + format_number(rot.back()) + "\n";
        write_text_file(runs_csv, runs_text);
      }
      cell.trans_mean = mean_of(tr);
      cell.trans_spread = sample_sd(tr);
      cell.rot_mean = mean_of(rot);
      cell.rot_spread = sample_sd(rot);
      cell.runs = tr.size();
      cells.push_back(cell);
    }
  }
  std::string text = "model,sampler,trans_mae_mm,trans_sd,rot_mae_deg,rot_sd,runs\n";
  for (const auto& c : cells) {
    text += c.model + "," + c.sampler + "," + format_number(c.trans_mean) + "," + format_number(c.trans_spread) + "," +
            format_number(c.rot_mean) + "," + format_number(c.rot_spread) + "," + std::to_string(c.runs) + "\n";
  }
  write_text_file(fs::path(config.out_dir) / "ablation.csv", text);
  return cells;
}

#define USTAR_INSTANTIATE(T)                                                                          \
  template TrainOutcome train_head<T>(NavigationHead<T>&, const Corpus&, std::span<const std::size_t>, \
                                      const FeatureProvider&, const RunConfig&);                      \
  template MetricsReport evaluate_head<T>(const NavigationHead<T>&, const Corpus&,                    \
                                          std::span<const std::size_t>, const FeatureProvider&,       \
                                          const RunConfig&);

USTAR_INSTANTIATE(float)
USTAR_INSTANTIATE(double)

#undef USTAR_INSTANTIATE

}  // namespace ustar
