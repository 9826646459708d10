// ustar: simulate | train | eval | scale-curve | ablate
//
// Configuration precedence: built-in defaults, then --config file, then
// --set key=value flags, then the dedicated flags (--seed, --out, --model,
// --sampler, --L, --corpus, --checkpoint). For simulate, --out names the
// corpus directory it writes.
//
// Exit status: 0 success, 1 validation error, 2 runtime failure. Errors are
// also reported on stderr as one JSON object.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ustar/config.hpp"
#include "ustar/pipeline.hpp"
#include "ustar/report.hpp"

namespace {

struct Flags {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, model, sampler, corpus, checkpoint;
  std::optional<std::size_t> L;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "key = value config file");
  cmd->add_option("--set", f.sets, "override any config key (key=value), repeatable");
  cmd->add_option("--seed", f.seed, "sim.seed for simulate, train.seed otherwise");
  cmd->add_option("--out", f.out, "output directory (corpus.dir for simulate, out.dir otherwise)");
  cmd->add_option("--corpus", f.corpus, "corpus directory (corpus.dir)");
  cmd->add_option("--model", f.model, "star | chain | fc | single");
  cmd->add_option("--sampler", f.sampler, "semantic | segmental");
  cmd->add_option("--L", f.L, "graph size (anchors + current frame)");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint path (eval)");
}

ustar::RunConfig resolve(const Flags& f, const std::string& verb) {
  ustar::RunConfig c;
  if (!f.config_file.empty()) ustar::apply_config_file(c, f.config_file);
  for (const auto& s : f.sets) {
    const auto [k, v] = ustar::split_assignment(s);
    c.set(k, v);
  }
  if (f.seed) c.set(verb == "simulate" ? "sim.seed" : "train.seed", std::to_string(*f.seed));
  if (f.out) c.set(verb == "simulate" ? "corpus.dir" : "out.dir", *f.out);
  if (f.corpus) c.set("corpus.dir", *f.corpus);
  if (f.model) c.set("model.kind", *f.model);
  if (f.sampler) c.set("sampler.strategy", *f.sampler);
  if (f.L) c.set("model.L", std::to_string(*f.L));
  if (f.checkpoint) c.set("checkpoint", *f.checkpoint);
  c.validate();
  return c;
}

void fail(const char* kind, const std::string& message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
}

int run(const std::string& verb, const ustar::RunConfig& c) {
  using ustar::format_number;
  if (verb == "simulate") {
    ustar::cmd_simulate(c);
    std::cout << "wrote " << c.subjects * c.scans_per_subject << " scans to " << c.corpus_dir << "\n";
  } else if (verb == "train") {
    const auto out = ustar::cmd_train(c);
    std::cout << "trained " << ustar::to_string(c.head.kind) << " for " << out.total_steps << " steps on "
              << out.samples_per_epoch << " samples/epoch\n";
    for (std::size_t e = 0; e < out.epoch_loss.size(); ++e) {
      std::cout << "epoch " << e + 1 << " mean loss " << format_number(out.epoch_loss[e]) << "\n";
    }
  } else if (verb == "eval") {
    const auto r = ustar::cmd_eval(c);
    std::cout << r.model << " on " << r.split << " (" << r.samples << " samples): trans "
              << format_number(r.overall.trans_mm) << " mm, rot " << format_number(r.overall.rot_deg) << " deg\n";
  } else if (verb == "scale-curve") {
    for (const auto& p : ustar::cmd_scale_curve(c)) {
      std::cout << "L=" << p.x << " trans " << format_number(p.trans_mae) << " mm, rot " << format_number(p.rot_mae)
                << " deg\n";
    }
  } else if (verb == "ablate") {
    for (const auto& cell : ustar::cmd_ablate(c)) {
      std::cout << cell.model << "/" << cell.sampler << ": trans " << format_number(cell.trans_mean) << " +- "
                << format_number(cell.trans_spread) << " mm, rot " << format_number(cell.rot_mean) << " +- "
                << format_number(cell.rot_spread) << " deg\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-based probe navigation: simulate, train, evaluate, sweep"};
  app.require_subcommand(1, 1);
  Flags flags;
  for (const char* verb : {"simulate", "train", "eval", "scale-curve", "ablate"}) {
    add_common(app.add_subcommand(verb), flags);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("validation", e.what());
    return 1;
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return run(verb, resolve(flags, verb));
  } catch (const std::invalid_argument& e) {
    fail("validation", e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("runtime", e.what());
    return 2;
  }
}
