#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(IFTX_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct Workdir {
  fs::path dir = fs::temp_directory_path() / "iftx_cli_test";
  Workdir() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit non-zero") {
  CHECK(run("").code != 0);
  CHECK(run("no-such-command").code != 0);
  CHECK(run("--help").code == 0);
  CHECK(run("gen-synthetic").code == 2);
  CHECK(run("eval --data /nonexistent --agent gpt").code == 2);
  CHECK(run("serve").code == 2);
  CHECK(run("serve --checkpoint /nonexistent/model.ckpt").code == 1);
}

TEST_CASE("the pipeline runs end to end and simulate is reproducible") {
  Workdir w;
  {
    std::ofstream cfg(w / "gen.json");
    cfg << R"({"train": 120, "test": 30, "channels": 4})";
    std::ofstream pre(w / "pre.json");
    pre << R"({"lam": {"epochs": 1}, "sup": {"epochs": 1}})";
    std::ofstream tr(w / "train.json");
    tr << R"({"batch": 16, "validation_every": 2, "validation_size": 10, "log_every": 1})";
  }
  const auto data = w / "data";
  REQUIRE(run("gen-synthetic --out " + data + " --seed 4 --config " + w / "gen.json").code == 0);
  CHECK(fs::exists(data + "/train.jsonl"));
  REQUIRE(run("build-bank --data " + data).code == 0);
  CHECK(fs::exists(data + "/bank.jsonl"));
  const auto pre = w / "pre.ckpt";
  REQUIRE(run("pretrain --data " + data + " --out " + pre + " --config " + w / "pre.json").code == 0);
  const auto model = w / "model.ckpt";
  REQUIRE(run("train --agent hrl --episodes 32 --data " + data + " --checkpoint " + pre + " --out " + model +
              " --config " + w / "train.json" + " --metrics " + w / "metrics.jsonl")
              .code == 0);
  std::ifstream metrics(w / "metrics.jsonl");
  std::string line;
  REQUIRE(std::getline(metrics, line));
  CHECK(nlohmann::json::parse(line).contains("episode"));

  const auto ev = run("eval --agent hrl --runs 2 --data " + data + " --checkpoint " + model + " --out " +
                      w / "report.json");
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("C+F Acc") != std::string::npos);
  std::ifstream report(w / "report.json");
  CHECK(nlohmann::json::parse(report)["runs"] == 2);
  CHECK(run("eval --agent hrl --split nope --data " + data + " --checkpoint " + model).code == 2);
  CHECK(run("eval --agent hrl-fixed --data " + data + " --checkpoint " + model).code == 1);

  const std::string sim = "simulate --agent hrl --recipe-id 3 --seed 11 --data " + data + " --checkpoint " + model;
  const auto a = run(sim);
  const auto b = run(sim);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto j = nlohmann::json::parse(a.out);
  CHECK(j["transcript"][0]["speaker"] == "user");
  CHECK(j["prediction"].size() == 4);
  CHECK(run("simulate --agent hrl --recipe-id 999 --data " + data + " --checkpoint " + model).code == 2);
}
