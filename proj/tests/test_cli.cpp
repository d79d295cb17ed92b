#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "cwm/toy/corpus.hpp"
#include "cwm/wav.hpp"

using namespace cwm;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kHex = "0123456789abcdeffedcba9876543210";

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cwm_cli_" + std::to_string(::getpid()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun cli(const std::string& args) const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(CWM_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
  }

  std::string utterance_wav(std::uint64_t seed, const std::string& name = "in.wav") const {
    const auto path = dir_ / name;
    save_wav(toy::synth_utterance(4.5, 16000, seed), path);
    return path.string();
  }

  std::string write_config(const json& j, const std::string& name = "config.json") const {
    const auto path = dir_ / name;
    std::ofstream(path) << j.dump();
    return path.string();
  }

  /// Small toy experiment settings so training runs finish in seconds.
  json small_toy(std::size_t steps) const {
    return {{"toy",
             {{"steps", steps},
              {"augment", {false}},
              {"utterances", 20},
              {"seconds", 0.6},
              {"crop", 4096},
              {"noise_clips", 10},
              {"seeds", {0}},
              {"eval_rounds", 1},
              {"checkpoint_every", 5}}}};
  }

  fs::path dir_;
};

std::string line_value(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind(key + ": ", 0) == 0) return line.substr(key.size() + 2);
  return {};
}

}  // namespace

TEST_F(Cli, EmbedThenDetectRecoversPayload) {
  const auto in = utterance_wav(1);
  const auto out = (dir_ / "marked.wav").string();
  auto e = cli("embed --in " + in + " --out " + out + " --key-seed 9 --payload " + kHex);
  ASSERT_EQ(e.status, 0) << e.err;
  EXPECT_FALSE(line_value(e.out, "strength").empty());
  auto d = cli("detect --in " + out + " --key-seed 9 --payload " + kHex);
  ASSERT_EQ(d.status, 0) << d.err;
  EXPECT_EQ(line_value(d.out, "payload"), kHex);
  EXPECT_EQ(line_value(d.out, "decision"), "true");
  EXPECT_EQ(line_value(d.out, "bit_errors"), "0");
  EXPECT_TRUE(fs::exists(out + ".config.json"));
}

TEST_F(Cli, UnwatermarkedFileIsRejected) {
  const auto in = utterance_wav(2);
  auto d = cli("detect --in " + in + " --key-seed 9 --payload " + kHex + " --no-speed-search");
  ASSERT_EQ(d.status, 0) << d.err;
  EXPECT_EQ(line_value(d.out, "decision"), "false");
  auto bare = cli("detect --in " + in + " --key-seed 9 --no-speed-search");
  ASSERT_EQ(bare.status, 0);
  EXPECT_EQ(line_value(bare.out, "decision").rfind("n/a", 0), 0u);
}

TEST_F(Cli, SearchStrengthPrintsGridValue) {
  const auto in = utterance_wav(3);
  auto r = cli("search-strength --in " + in + " --key-seed 4 --payload " + kHex);
  ASSERT_EQ(r.status, 0) << r.err;
  const double d = std::stod(r.out);
  EXPECT_GE(d, 0.01);
  EXPECT_LE(d, 0.2);
  auto silent = dir_ / "silent.wav";
  save_wav(AudioClip(std::vector<double>(72000, 0.0), 16000), silent);
  auto f = cli("search-strength --in " + silent.string() + " --payload " + kHex);
  EXPECT_EQ(f.status, 1);
  EXPECT_EQ(f.out, "FAILED\n");
}

TEST_F(Cli, ExitCodes) {
  const auto in = utterance_wav(4);
  EXPECT_EQ(cli("embed --in " + in + " --out " + (dir_ / "o.wav").string() + " --payload xyz").status, 2);
  EXPECT_EQ(cli("detect --in " + (dir_ / "missing.wav").string()).status, 1);
  EXPECT_EQ(cli("detect --bogus-flag").status, 2);
  EXPECT_EQ(cli("").status, 2);
  EXPECT_EQ(cli("detect --in " + in + " --config " + write_config({{"no_such_key", 1}})).status, 2);
  EXPECT_EQ(cli("augment --in " + in + " --out " + (dir_ / "a.wav").string() + " --conditions noise,stretch").status, 2);
}

TEST_F(Cli, AugmentAppliesOneCondition) {
  const auto in = utterance_wav(5);
  const auto out = (dir_ / "aug.wav").string();
  auto r = cli("augment --in " + in + " --out " + out + " --conditions stretch --seed 3");
  ASSERT_EQ(r.status, 0) << r.err;
  const double f = std::stod(line_value(r.out, "factor"));
  EXPECT_GE(f, 0.9);
  EXPECT_LE(f, 1.1);
  EXPECT_EQ(load_wav(out).size(), static_cast<std::size_t>(std::llround(72000 * f)));
}

TEST_F(Cli, SmallEvalIsQuickDeterministicAndHasFourColumns) {
  const std::string args = " --utterances 3 --rounds 1 --seed 5";
  const auto start = std::chrono::steady_clock::now();
  auto a = cli("eval --out-dir " + (dir_ / "a").string() + args);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_LT(seconds, 30.0);
  auto b = cli("eval --out-dir " + (dir_ / "b").string() + args);
  ASSERT_EQ(b.status, 0) << b.err;
  for (const char* f : {"report.csv", "rounds.csv", "report.md"}) EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  const auto csv = slurp(dir_ / "a" / "report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "system,training,augmentation,role,clean,stretch,noise,s+n");
}

TEST_F(Cli, ConfigPrecedenceAndSidecar) {
  const auto cfg = write_config({{"rounds", 3}, {"key_seed", 5}, {"grid", {{"max", 0.1}}}});
  const auto out = dir_ / "ev";
  auto r = cli("eval --config " + cfg + " --rounds 1 --utterances 2 --out-dir " + out.string());
  ASSERT_EQ(r.status, 0) << r.err;
  std::ifstream is(out / "eval.config.json");
  json sidecar;
  is >> sidecar;
  const auto& c = sidecar.at("config");
  EXPECT_EQ(c.at("rounds"), 1);           // flag beats file
  EXPECT_EQ(c.at("key_seed"), 5);         // file beats default
  EXPECT_EQ(c.at("grid").at("max"), 0.1);
  EXPECT_EQ(c.at("grid").at("min"), 0.01);  // default kept beside a file override
  EXPECT_EQ(c.at("eval").at("utterances"), 2);
}

TEST_F(Cli, TrainToyRunsBothRolesFromOneCommand) {
  const auto cfg = write_config(small_toy(4));
  const auto out = dir_ / "train";
  auto r = cli("train-toy --config " + cfg + " --out-dir " + out.string());
  ASSERT_EQ(r.status, 0) << r.err;
  for (const char* run : {"collaborator-none-seed0", "observer-none-seed0"}) {
    EXPECT_TRUE(fs::exists(out / run / "result.json")) << run;
    EXPECT_TRUE(fs::exists(out / run / "checkpoint.json")) << run;
    EXPECT_TRUE(fs::exists(out / run / "loss.csv")) << run;
  }
  for (const char* f : {"table.md", "table.csv", "seeds.csv", "train-toy.config.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_NE(r.out.find("collaborator"), std::string::npos);
  EXPECT_NE(r.out.find("observer"), std::string::npos);

  const auto table = slurp(out / "table.md");
  auto rep = cli("report --config " + cfg + " --out-dir " + out.string());
  ASSERT_EQ(rep.status, 0) << rep.err;
  EXPECT_EQ(slurp(out / "table.md"), table);
}

TEST_F(Cli, ZeroStepRunWritesInitialCheckpoint) {
  const auto cfg = write_config(small_toy(0));
  const auto out = dir_ / "zero";
  auto r = cli("train-toy --config " + cfg + " --roles observer --out-dir " + out.string());
  ASSERT_EQ(r.status, 0) << r.err;
  std::ifstream is(out / "observer-none-seed0" / "checkpoint.json");
  json ck;
  is >> ck;
  EXPECT_EQ(ck.at("step"), 0);
  EXPECT_EQ(ck.at("role"), "observer");
  EXPECT_FALSE(ck.at("generator").empty());
  EXPECT_FALSE(fs::exists(out / "collaborator-none-seed0"));
}

TEST_F(Cli, KilledRunResumesToTheUninterruptedResult) {
  const std::size_t steps = 200;
  const auto cfg = write_config(small_toy(steps));
  const std::string common = "--config " + cfg + " --roles collaborator --out-dir ";

  auto ref = cli("train-toy " + common + (dir_ / "ref").string());
  ASSERT_EQ(ref.status, 0) << ref.err;

  const auto killed = dir_ / "killed";
  const auto log = killed / "collaborator-none-seed0" / "loss.csv";
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const std::string out = killed.string();
    ::execl(CWM_CLI_PATH, CWM_CLI_PATH, "train-toy", "--config", cfg.c_str(), "--roles", "collaborator", "--out-dir",
            out.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  // wait until training is well past the first periodic checkpoint, then kill hard
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  bool exited = false;
  while (std::chrono::steady_clock::now() < deadline) {
    int status = 0;
    if (::waitpid(pid, &status, WNOHANG) == pid) {
      exited = true;
      break;
    }
    const auto text = slurp(log);
    if (std::count(text.begin(), text.end(), '\n') > 13) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ASSERT_FALSE(exited) << "training finished before it could be interrupted";
  ::kill(pid, SIGKILL);
  ::waitpid(pid, nullptr, 0);

  // whatever the kill left behind must be a loadable checkpoint
  std::ifstream is(killed / "collaborator-none-seed0" / "checkpoint.json");
  json ck;
  ASSERT_NO_THROW(is >> ck);
  EXPECT_LT(ck.at("step").get<std::size_t>(), steps);
  EXPECT_FALSE(fs::exists(killed / "collaborator-none-seed0" / "result.json"));

  auto resumed = cli("train-toy " + common + killed.string());
  ASSERT_EQ(resumed.status, 0) << resumed.err;
  for (const char* f : {"loss.csv", "checkpoint.json"})
    EXPECT_EQ(slurp(killed / "collaborator-none-seed0" / f), slurp(dir_ / "ref" / "collaborator-none-seed0" / f)) << f;
  EXPECT_EQ(slurp(killed / "table.csv"), slurp(dir_ / "ref" / "table.csv"));
}
