// Drives the ustar binary end to end on a tiny corpus.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#ifndef USTAR_CLI_PATH
#error "USTAR_CLI_PATH must name the ustar binary"
#endif

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run_cli(const fs::path& work, const std::string& args) {
  const fs::path out = work / "stdout.txt", err = work / "stderr.txt";
  const std::string cmd = std::string(USTAR_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kTiny = "--set sim.subjects=2 --set sim.scans_per_subject=1 --set sim.C=16 --set model.C=16 "
                    "--set train.epochs=1 --set train.batch_size=64 --set split.val_fraction=0.5";

}  // namespace

TEST_CASE("cli: simulate, train and eval succeed and write their artifacts") {
  const auto work = fresh_dir("ustar_cli_ok");
  const std::string corpus = (work / "corpus").string(), run = (work / "run").string();

  auto r = run_cli(work, std::string("simulate ") + kTiny + " --seed 3 --out " + corpus);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(fs::exists(work / "corpus" / "manifest.json"));
  CHECK(fs::exists(work / "corpus" / "split.json"));

  r = run_cli(work, std::string("train ") + kTiny + " --model single --corpus " + corpus + " --out " + run);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("epoch 1 mean loss") != std::string::npos);
  CHECK(fs::exists(work / "run" / "model.ckpt"));
  CHECK(fs::exists(work / "run" / "loss_log.csv"));

  r = run_cli(work, std::string("eval ") + kTiny + " --model single --corpus " + corpus + " --out " + run);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto metrics = nlohmann::json::parse(slurp(work / "run" / "metrics.json"));
  CHECK(metrics["model"] == "single");
  CHECK(metrics["overall"]["trans_mae_mm"].get<double>() > 0.0);
  const std::string first = slurp(work / "run" / "metrics.json");

  // Re-evaluating the same checkpoint gives identical bytes.
  r = run_cli(work, std::string("eval ") + kTiny + " --model single --corpus " + corpus + " --out " + run);
  REQUIRE(r.status == 0);
  CHECK(slurp(work / "run" / "metrics.json") == first);
  fs::remove_all(work);
}

TEST_CASE("cli: validation errors exit 1 with a JSON message") {
  const auto work = fresh_dir("ustar_cli_bad");
  for (const std::string& args : std::vector<std::string>{"train --set no.such.key=1", "train --model transformer", "train --set model.L=0",
                                 "simulate --nonsense", "eval --corpus " + (work / "missing").string()}) {
    CAPTURE(args);
    const auto r = run_cli(work, args);
    CHECK(r.status == 1);
    const auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
    CHECK(j["error"] == "validation");
    CHECK(!j["message"].get<std::string>().empty());
  }
  std::ofstream(work / "bad.cfg") << "model.L = 4\nbogus\n";
  const auto r = run_cli(work, "train --config " + (work / "bad.cfg").string());
  CHECK(r.status == 1);
  CHECK(r.err.find("bad.cfg:2:") != std::string::npos);
  fs::remove_all(work);
}

TEST_CASE("cli: runtime failures exit 2") {
  const auto work = fresh_dir("ustar_cli_fail");
  std::ofstream(work / "blocker") << "a file, not a directory\n";
  const auto r = run_cli(work, std::string("simulate ") + kTiny + " --out " + (work / "blocker" / "corpus").string());
  CHECK(r.status == 2);
  CHECK(nlohmann::json::parse(r.err.substr(0, r.err.find('\n')))["error"] == "runtime");
  fs::remove_all(work);
}
