// Acceptance suite: one [PASS]/[FAIL] line per criterion. Tolerances and run
// sizes are fixed here; training runs are shared between the criteria that
// need the same (model, sampler, L, seed) cell.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "support.hpp"
#include "ustar/config.hpp"
#include "ustar/pipeline.hpp"
#include "ustar/sampling.hpp"
#include "ustar/scan_io.hpp"

using namespace ustar;
using namespace ustar::testing;
namespace fs = std::filesystem;

namespace {

// --- tolerances ----------------------------------------------------------------

constexpr double kPoseTol = 1e-6;          // mm and deg per component
constexpr double kHomogeneousTol = 1e-9;
constexpr double kGradTol = 1e-4;          // max relative error
constexpr double kGradStep = 1e-5;
constexpr double kStarPermTol = 1e-6;
constexpr double kChainPermWitness = 1e-3;
constexpr double kSamplerScoreSlack = 1e-12;
constexpr double kStarVsSingleGain = 0.20;
constexpr double kScaleStepSlack = 0.05;
constexpr double kLossUnitTol = 1e-12;

constexpr std::size_t kPosePairs = 10000;
constexpr std::size_t kPermDraws = 100;
constexpr std::size_t kSamplerPools = 500;
const std::vector<std::uint64_t> kSeeds = {0, 1, 2};
const std::vector<std::size_t> kScaleL = {2, 4, 8, 16};

// --- reporting -------------------------------------------------------------------

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail, double seconds) {
  std::printf("[%s] %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// --- exact-math criteria ------------------------------------------------------------

void pose_round_trip() {
  Timer timer;
  Rng rng(20240501);
  double worst_pos = 0.0, worst_rot = 0.0, worst_h = 0.0;
  for (std::size_t i = 0; i < kPosePairs; ++i) {
    const Pose6 a = random_pose(rng, 100.0, 88.9), b = random_pose(rng, 100.0, 88.9);
    const Pose6 back = apply_action(a, relative_action(a, b));
    for (int j = 0; j < 3; ++j) {
      worst_pos = std::max(worst_pos, std::abs(back.pos[j] - b.pos[j]));
      worst_rot = std::max(worst_rot, angle_gap(back.rot[j], b.rot[j]));
    }
    worst_h = std::max(worst_h, homogeneous_gap(a, b));
  }
  const double t = timer.seconds();
  report(worst_pos < kPoseTol && worst_rot < kPoseTol && worst_h < kHomogeneousTol && t < 5.0, "pose round trip",
         fmt("%zu pairs, max |dpos| %.3g mm, max |drot| %.3g deg, homogeneous gap %.3g", kPosePairs, worst_pos,
             worst_rot, worst_h),
         t);
}

HeadConfig tiny_head(ModelKind kind, std::uint64_t seed) {
  HeadConfig c;
  c.kind = kind;
  c.dim = 8;
  c.heads = 2;
  c.seed = seed;
  return c;
}

const ModelKind kAllKinds[] = {ModelKind::star, ModelKind::chain, ModelKind::fully_connected,
                               ModelKind::single_frame};

void gradient_fidelity() {
  Timer timer;
  Rng rng(11);
  std::string detail;
  bool pass = true;
  for (ModelKind kind : kAllKinds) {
    auto head = make_head<double>(tiny_head(kind, 3));
    // L = 4: three anchors per sample; a second sample with two exercises ragged batches.
    const std::vector<AnchorSet> sets = {random_anchor_set(rng, 8, 3), random_anchor_set(rng, 8, 2)};
    const auto batch = GraphBatch<double>::pack(sets);
    const auto labels = labels_clear_of_kink(head->forward(batch), rng);
    const std::vector<double> mask(2 * kViewCount, 1.0);
    const auto check = check_gradients(
        head->store(), [&] { return multi_view_loss(head->forward(batch), labels, std::span<const double>(mask)); },
        kGradStep);
    pass = pass && check.max_rel_error < kGradTol && check.checked == head->store().scalar_count();
    detail += fmt("%s %.2g over %zu; ", to_string(kind).c_str(), check.max_rel_error, check.checked);
  }
  const double t = timer.seconds();
  report(pass && t < 120.0, "gradient fidelity", detail + fmt("tolerance %.0e", kGradTol), t);
}

std::vector<double> predict(const NavigationHead<double>& head, const AnchorSet& set) {
  const std::vector<AnchorSet> sets = {set};
  const auto out = head.forward(GraphBatch<double>::pack(sets));
  return {out.value().begin(), out.value().end()};
}

double max_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, std::abs(a[i] - b[i]));
  return g;
}

void permutation_invariance() {
  Timer timer;
  Rng rng(12);
  double star_worst = 0.0, chain_best = 0.0;
  for (std::size_t draw = 0; draw < kPermDraws; ++draw) {
    const std::size_t n = 2 + rng.below(7);
    const auto set = random_anchor_set(rng, 8, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    const auto permuted = permute_anchors(set, perm);
    const auto star = make_head<double>(tiny_head(ModelKind::star, draw));
    star_worst = std::max(star_worst, max_gap(predict(*star, set), predict(*star, permuted)));
    const auto chain = make_head<double>(tiny_head(ModelKind::chain, draw));
    chain_best = std::max(chain_best, max_gap(predict(*chain, set), predict(*chain, permuted)));
  }
  report(star_worst < kStarPermTol && chain_best > kChainPermWitness, "star permutation invariance",
         fmt("%zu draws, star max change %.3g (< %.0e), chain witness %.3g (> %.0e)", kPermDraws, star_worst,
             kStarPermTol, chain_best, kChainPermWitness),
         timer.seconds());
}

ViewDistribution random_dist(Rng& rng) {
  ViewDistribution z{};
  double s = 0.0;
  for (auto& v : z) {
    v = rng.uniform() < 0.4 ? 0.0 : rng.uniform();
    s += v;
  }
  if (s == 0.0) {
    z[rng.below(kViewCount)] = 1.0;
    s = 1.0;
  }
  for (auto& v : z) v /= s;
  return z;
}

void sampler_oracle() {
  Timer timer;
  Rng rng(13);
  std::size_t semantic_bad = 0, segmental_bad = 0, steps = 0;
  for (std::size_t trial = 0; trial < kSamplerPools; ++trial) {
    const std::size_t m = 1 + rng.below(64), stride = 1 + rng.below(3);
    std::vector<std::size_t> pool(m);
    for (std::size_t i = 0; i < m; ++i) pool[i] = 5 + stride * i;
    std::vector<ViewDistribution> zs(m);
    for (auto& z : zs) z = random_dist(rng);
    for (std::size_t i = 1; i < m; i += 5) zs[i] = zs[i - 1];
    const auto current = random_dist(rng);
    const std::size_t n = 1 + rng.below(m), K = 1 + rng.below(m + 2);

    std::vector<std::size_t> order;
    const auto pick = semantic_sample(pool, zs, current, n, K, rng, &order);
    if (m <= n) {
      semantic_bad += pick != pool;
    } else {
      std::vector<bool> taken(m, false);
      std::vector<ViewDistribution> selected;
      for (std::size_t chosen : order) {
        ++steps;
        std::vector<double> scores;
        for (std::size_t i = 0; i < m; ++i)
          if (!taken[i]) scores.push_back(redundancy_score(zs[i], current, selected));
        std::sort(scores.begin(), scores.end());
        const double cutoff = scores[std::min(K, scores.size()) - 1] + kSamplerScoreSlack;
        const auto pos = static_cast<std::size_t>(std::lower_bound(pool.begin(), pool.end(), chosen) - pool.begin());
        if (pos >= m || pool[pos] != chosen || taken[pos] ||
            redundancy_score(zs[pos], current, selected) > cutoff) {
          ++semantic_bad;
          break;
        }
        taken[pos] = true;
        selected.push_back(zs[pos]);
      }
    }

    const auto seg = segmental_sample(pool, n, rng);
    bool seg_ok = seg.size() == std::min(n, m);
    std::size_t begin = 0;
    const std::size_t parts = std::min(n, m);
    for (std::size_t s = 0; seg_ok && s < parts; ++s) {
      const std::size_t len = m / parts + (s < m % parts ? 1 : 0);
      seg_ok = seg[s] >= pool[begin] && seg[s] <= pool[begin + len - 1] &&
               std::binary_search(pool.begin(), pool.end(), seg[s]) && (s == 0 || seg[s] > seg[s - 1]);
      begin += len;
    }
    segmental_bad += !seg_ok;
  }
  const double t = timer.seconds();
  report(semantic_bad == 0 && segmental_bad == 0 && t < 30.0, "sampler oracle equivalence",
         fmt("%zu pools, %zu greedy steps checked, semantic violations %zu, segmental violations %zu", kSamplerPools,
             steps, semantic_bad, segmental_bad),
         t);
}

void loss_unit_contract() {
  Timer timer;
  Rng rng(14);
  double worst = 0.0;
  std::array<bool, kViewCount> mask{};
  mask.fill(true);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<Action6, kViewCount> zero{}, trans{}, rot{};
    for (std::size_t k = 0; k < kViewCount; ++k) {
      for (int j = 0; j < 3; ++j) {
        const double e = rng.uniform(-4.0, 4.0);  // spans both Smooth L1 branches
        trans[k].dpos[j] = e;
        rot[k].drot[j] = e;
      }
      mask[k] = rng.uniform() < 0.8 || k == 0;
    }
    worst = std::max(worst, std::abs(multi_view_loss(trans, zero, mask) - multi_view_loss(rot, zero, mask)));
  }
  report(worst < kLossUnitTol, "loss-unit contract",
         fmt("1000 samples, max |L(translation) - L(rotation)| %.3g (< %.0e)", worst, kLossUnitTol), timer.seconds());
}

// --- determinism ---------------------------------------------------------------------

std::string file_bytes(const fs::path& p) { return read_text_file(p); }

bool same_tree(const fs::path& a, const fs::path& b, std::size_t* files) {
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    if (!fs::exists(b / rel) || file_bytes(entry.path()) != file_bytes(b / rel)) return false;
    ++*files;
  }
  return true;
}

void determinism(const fs::path& work) {
  Timer timer;
  RunConfig base;
  base.subjects = 4;
  base.scans_per_subject = 1;
  base.sim.feature_dim = 16;
  base.head.dim = 16;
  base.train.epochs = 1;
  base.val_fraction = 0.5;
  base.sim.seed = 5;

  auto at = [&](const std::string& tag) {
    RunConfig c = base;
    c.corpus_dir = (work / ("det_corpus_" + tag)).string();
    c.out_dir = (work / ("det_run_" + tag)).string();
    fs::remove_all(c.corpus_dir);
    fs::remove_all(c.out_dir);
    return c;
  };
  const RunConfig a = at("a"), b = at("b");
  bool pass = true;
  std::string detail;
  try {
    cmd_simulate(a);
    cmd_simulate(b);
    std::size_t files = 0;
    const bool corpus_same = same_tree(a.corpus_dir, b.corpus_dir, &files);
    for (const auto& c : {a, b}) cmd_train(c);
    const bool log_same = file_bytes(fs::path(a.out_dir) / "loss_log.csv") == file_bytes(fs::path(b.out_dir) / "loss_log.csv");
    const bool ckpt_same = file_bytes(a.checkpoint_path()) == file_bytes(b.checkpoint_path());
    for (const auto& c : {a, b}) cmd_eval(c);
    const bool csv_same = file_bytes(fs::path(a.out_dir) / "metrics.csv") == file_bytes(fs::path(b.out_dir) / "metrics.csv");
    pass = corpus_same && log_same && ckpt_same && csv_same;
    detail = fmt("corpus %s (%zu files), loss log %s, checkpoint %s, metrics.csv %s", corpus_same ? "identical" : "DIFFERS",
                 files, log_same ? "identical" : "DIFFERS", ckpt_same ? "identical" : "DIFFERS",
                 csv_same ? "identical" : "DIFFERS");
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("threw: ") + e.what();
  }
  report(pass, "determinism suite", detail, timer.seconds());
}

// --- desk-scale training criteria -------------------------------------------------------

struct Cell {
  double trans = 0.0, rot = 0.0, seconds = 0.0;
};

class Runs {
 public:
  Runs(RunConfig base, Corpus corpus, SplitSpec split, fs::path log)
      : base_(std::move(base)), corpus_(std::move(corpus)), split_(std::move(split)), log_(std::move(log)) {
    write_text_file(log_, text_);
  }

  const Cell& get(ModelKind model, SamplerKind sampler, std::size_t L, std::uint64_t seed) {
    const auto key = std::make_tuple(model, sampler, L, seed);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    RunConfig c = base_;
    c.head.kind = model;
    c.data.sampler.kind = sampler;
    c.data.L = L;
    c.train.seed = seed;
    Timer timer;
    const auto r = run_experiment(c, corpus_, split_);
    Cell cell{r.val.overall.trans_mm, r.val.overall.rot_deg, timer.seconds()};
    text_ += to_string(model) + "," + to_string(sampler) + "," + std::to_string(L) + "," + std::to_string(seed) + "," +
             format_number(cell.trans) + "," + format_number(cell.rot) + "," + fmt("%.1f", cell.seconds) + "\n";
    write_text_file(log_, text_);
    return cache_.emplace(key, cell).first->second;
  }

  /// Seed-averaged (translation, rotation) MAE.
  std::pair<double, double> mean(ModelKind model, SamplerKind sampler, std::size_t L) {
    std::vector<double> t, r;
    for (auto seed : kSeeds) {
      const auto& cell = get(model, sampler, L, seed);
      t.push_back(cell.trans);
      r.push_back(cell.rot);
    }
    return {mean_of(t), mean_of(r)};
  }

 private:
  RunConfig base_;
  Corpus corpus_;
  SplitSpec split_;
  fs::path log_;
  std::string text_ = "model,sampler,L,seed,trans_mae_mm,rot_mae_deg,seconds\n";
  std::map<std::tuple<ModelKind, SamplerKind, std::size_t, std::uint64_t>, Cell> cache_;
};

/// Default run settings for the training criteria (see README: lr 1e-3).
RunConfig desk_config() {
  RunConfig c;
  c.train.learning_rate = 1e-3;
  return c;
}

void table1(Runs& runs) {
  Timer timer;
  const auto star = runs.mean(ModelKind::star, SamplerKind::semantic, 8);
  const auto single = runs.mean(ModelKind::single_frame, SamplerKind::semantic, 8);
  const auto chain = runs.mean(ModelKind::chain, SamplerKind::semantic, 8);
  const auto fc = runs.mean(ModelKind::fully_connected, SamplerKind::semantic, 8);
  const double gain = (single.first - star.first) / single.first;
  const double t = timer.seconds();
  const bool pass = gain >= kStarVsSingleGain && star.first <= chain.first && star.first <= fc.first && t < 1800.0;
  report(pass, "Table 1 ordering",
         fmt("trans MAE mm (rot deg): star %.3f (%.3f), chain %.3f (%.3f), fc %.3f (%.3f), single %.3f (%.3f); "
             "star vs single %.1f%% (>= %.0f%%); soft fc < chain: %s",
             star.first, star.second, chain.first, chain.second, fc.first, fc.second, single.first, single.second,
             100.0 * gain, 100.0 * kStarVsSingleGain, fc.first < chain.first ? "yes" : "no"),
         t);
}

void scaling(Runs& runs) {
  Timer timer;
  std::vector<std::pair<double, double>> m;
  std::string detail;
  for (std::size_t L : kScaleL) {
    m.push_back(runs.mean(ModelKind::star, SamplerKind::semantic, L));
    detail += fmt("L=%zu %.3f mm / %.3f deg; ", L, m.back().first, m.back().second);
  }
  bool pass = m.back().first < m.front().first && m.back().second < m.front().second;
  for (std::size_t i = 1; i < m.size(); ++i) {
    pass = pass && m[i].first <= (1.0 + kScaleStepSlack) * m[i - 1].first &&
           m[i].second <= (1.0 + kScaleStepSlack) * m[i - 1].second;
  }
  const double t = timer.seconds();
  report(pass && t < 1200.0, "scalability trend", detail + fmt("step slack %.0f%%", 100.0 * kScaleStepSlack), t);
}

void sampling_ablation(Runs& runs) {
  Timer timer;
  std::size_t segmental_wins = 0;
  for (auto seed : kSeeds) {
    segmental_wins += runs.get(ModelKind::star, SamplerKind::segmental, 8, seed).trans <
                      runs.get(ModelKind::star, SamplerKind::semantic, 8, seed).trans;
  }
  const auto semantic = runs.mean(ModelKind::star, SamplerKind::semantic, 8);
  const auto segmental = runs.mean(ModelKind::star, SamplerKind::segmental, 8);
  report(semantic.first <= segmental.first, "sampling ablation",
         fmt("star trans MAE semantic %.3f vs segmental %.3f mm (rot %.3f vs %.3f deg); segmental wins %zu of %zu seeds",
             semantic.first, segmental.first, semantic.second, segmental.second, segmental_wins, kSeeds.size()),
         timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string work = "acceptance";
  std::vector<std::string> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only the named groups: exact, determinism, training");
  CLI11_PARSE(app, argc, argv);
  auto enabled = [&](const std::string& g) { return only.empty() || std::find(only.begin(), only.end(), g) != only.end(); };
  fs::create_directories(work);

  if (enabled("exact")) {
    pose_round_trip();
    gradient_fidelity();
    permutation_invariance();
    sampler_oracle();
    loss_unit_contract();
  }
  if (enabled("determinism")) determinism(work);
  if (enabled("training")) {
    Timer timer;
    const RunConfig base = desk_config();
    Corpus corpus;
    corpus.scans = simulate_corpus(base);
    for (const auto& s : corpus.scans) corpus.manifest.scans.push_back({"scan_" + std::to_string(s.scan), s.subject});
    const SplitSpec split = split_by_subject(corpus.manifest, base.val_fraction, base.split_seed);
    std::printf("corpus: %zu scans, %zu train / %zu val subjects (%.1f s)\n", corpus.scans.size(),
                split.train_subjects.size(), split.val_subjects.size(), timer.seconds());
    Runs runs(base, std::move(corpus), split, fs::path(work) / "runs.csv");
    table1(runs);
    scaling(runs);
    sampling_ablation(runs);
  }
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
