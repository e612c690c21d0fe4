#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qsonn/audio.hpp"
#include "qsonn/dataset.hpp"
#include "qsonn/rng.hpp"

using namespace qsonn;
namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "qsonn_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const auto out = work() / "stdout.txt", err = work() / "stderr.txt";
  const std::string cmd = std::string("\"") + QSONN_CLI_PATH + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// Two train clips per command, one val clip and one test clip.
fs::path tiny_gsc() {
  const auto root = work() / "gsc";
  if (fs::exists(root)) return root;
  std::uint64_t seed = 1;
  fs::create_directories(root);
  std::ofstream val(root / "validation_list.txt"), test(root / "testing_list.txt");
  for (const char* label : kCommandLabels) {
    fs::create_directories(root / label);
    for (int i = 0; i < 4; ++i) {
      Rng rng(seed++);
      std::vector<float> s(16000);
      for (auto& v : s) v = static_cast<float>(rng.uniform(-0.2, 0.2));
      const std::string name = std::string(label) + "/c" + std::to_string(i) + ".wav";
      write_wav(root / name, s, 16000);
      if (i == 2) val << name << "\n";
      if (i == 3) test << name << "\n";
    }
  }
  return root;
}

std::uint64_t total_macs(const std::string& bench_out) {
  std::istringstream in(bench_out);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("total", 0) == 0) {
      std::istringstream row(line);
      std::string word;
      std::uint64_t params = 0, macs = 0;
      row >> word >> params >> macs;
      return macs;
    }
  }
  return 0;
}

}  // namespace

TEST_CASE("gradcheck passes on this build") {
  const auto r = cli("gradcheck");
  CHECK(r.code == 0);
  CHECK(r.out.find("worst relative error") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("train --lr abc").code == 1);
  CHECK(cli("frobnicate").code == 1);
}

TEST_CASE("eval with a missing checkpoint fails without output") {
  const auto r = cli("eval --checkpoint \"" + (work() / "missing.ckpt").string() + "\"");
  CHECK(r.code == 1);
  CHECK(r.out.empty());
  CHECK(r.err.find("missing.ckpt") != std::string::npos);
}

TEST_CASE("bench reports more MACs for qselfonn than conv") {
  const auto none = " --cache-dir \"" + (work() / "no_cache").string() + "\" --bench-samples 2";
  const auto q = cli("bench --layer qselfonn --q 2" + none);
  const auto c = cli("bench --layer conv --q 1" + none);
  REQUIRE(q.code == 0);
  REQUIRE(c.code == 0);
  CHECK(total_macs(q.out) > total_macs(c.out));
  CHECK(total_macs(c.out) > 0);
  CHECK(c.out.find("20630") != std::string::npos);
  CHECK(q.out.find("ms per utterance") != std::string::npos);
}

TEST_CASE("config files: unknown keys rejected, flags take precedence") {
  const auto bad = work() / "bad.json";
  std::ofstream(bad) << R"({"learning_rate": 0.1})";
  const auto r = cli("train --config \"" + bad.string() + "\"");
  CHECK(r.code == 1);
  CHECK(r.err.find("learning_rate") != std::string::npos);

  const auto wrong_type = work() / "wrong_type.json";
  std::ofstream(wrong_type) << R"({"max_epochs": "many"})";
  CHECK(cli("train --config \"" + wrong_type.string() + "\"").code == 1);
}

TEST_CASE("preprocess, train, eval and sweep on a tiny tree") {
  const auto root = tiny_gsc();
  const auto cache = work() / "cache";
  const std::string data = " --data-root \"" + root.string() + "\" --cache-dir \"" +
                           cache.string() + "\"";

  const auto pre = cli("preprocess" + data);
  REQUIRE(pre.code == 0);
  CHECK(pre.out.find("train 20, val 10, test 10") != std::string::npos);

  const auto cfg = work() / "run.json";
  std::ofstream(cfg) << R"({"max_epochs": 3, "patience": 1, "lr": 0.005, "layer": "selfonn",
                          "q": 2})";
  const auto out_a = work() / "run_a", out_b = work() / "run_b";
  const std::string common = " --config \"" + cfg.string() + "\" --cache-dir \"" +
                             cache.string() + "\" --max-epochs 2 --no-record-time";
  const auto a = cli("train" + common + " --output-dir \"" + out_a.string() + "\"");
  REQUIRE(a.code == 0);
  const auto b = cli("train" + common + " --output-dir \"" + out_b.string() + "\"");
  REQUIRE(b.code == 0);
  for (const char* f : {"config.echo", "report.csv", "report.json", "best.ckpt", "last.ckpt"}) {
    CHECK(fs::exists(out_a / f));
  }
  CHECK(slurp(out_a / "report.json") == slurp(out_b / "report.json"));
  CHECK(slurp(out_a / "report.csv") == slurp(out_b / "report.csv"));

  const auto echo = slurp(out_a / "config.echo");
  CHECK(echo.find("\"max_epochs\": 2") != std::string::npos);
  CHECK(echo.find("\"lr\": 0.005") != std::string::npos);
  CHECK(echo.find("\"seed\": 0") != std::string::npos);
  const auto csv = slurp(out_a / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') <= 3);
  CHECK(csv.rfind("epoch,train_loss,train_acc,val_acc,seconds\n", 0) == 0);

  const std::string ckpt = " --checkpoint \"" + (out_a / "best.ckpt").string() + "\"";
  const auto ev = cli("eval" + ckpt + " --cache-dir \"" + cache.string() + "\"");
  CHECK(ev.code == 0);
  CHECK(ev.out.find("test accuracy") != std::string::npos);
  const auto mismatch = cli("eval" + ckpt + " --layer selfonn --q 4 --cache-dir \"" +
                            cache.string() + "\"");
  CHECK(mismatch.code == 1);
  CHECK(mismatch.out.empty());

  const auto stale = cli("eval" + ckpt + " --mel-filters 32 --cache-dir \"" + cache.string() + "\"");
  CHECK(stale.code == 1);

  const auto sweep_dir = work() / "sweep";
  const auto sw = cli("sweep-q --cache-dir \"" + cache.string() + "\" --output-dir \"" +
                      sweep_dir.string() +
                      "\" --q-max 2 --sweep-layers conv,selfonn --max-epochs 1 --patience 1");
  REQUIRE(sw.code == 0);
  const auto table = slurp(sweep_dir / "sweep.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
  CHECK(table.find("selfonn,2,") != std::string::npos);
  CHECK(fs::exists(sweep_dir / "selfonn_q2" / "best.ckpt"));
}
