#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path kSmoke = fs::path(ADVREG_CONFIG_DIR) / "smoke.ini";

int run(const std::string& args) {
  const std::string cmd = std::string(ADVREG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advreg_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "c.ini";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Cli, SmokeRunWritesArtifactsAndIsReproducible) {
  const fs::path out = fresh("smoke");
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(run("train --config " + kSmoke.string() + " --out " + out.string() + " -q"), 0);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
  for (const char* f : {"checkpoint.bin", "training_log.jsonl", "report.json", "tables.md"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const std::string first = slurp(out / "report.json");
  const std::string ckpt = slurp(out / "checkpoint.bin");
  ASSERT_EQ(run("train --config " + kSmoke.string() + " --out " + out.string() + " -q"), 0);
  EXPECT_EQ(slurp(out / "report.json"), first);
  EXPECT_EQ(slurp(out / "checkpoint.bin"), ckpt);

  // evaluation only: the checkpoint and training log stay untouched
  const auto log_time = fs::last_write_time(out / "training_log.jsonl");
  ASSERT_EQ(run("evaluate --config " + kSmoke.string() + " --out " + out.string() + " -q"), 0);
  EXPECT_EQ(fs::last_write_time(out / "training_log.jsonl"), log_time);
  EXPECT_EQ(slurp(out / "report.json"), first);

  EXPECT_EQ(run("report " + out.string() + " --format csv"), 0);
  EXPECT_EQ(run("probe --config " + kSmoke.string() + " --out " + out.string() + " -q"), 0);
  EXPECT_TRUE(fs::exists(out / "probe.json"));
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh("codes");
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("train --config " + write_config(dir, "[threat]\nepsilonn = 0.1\n").string()), 1);
  EXPECT_EQ(run("train --config " + write_config(dir, "[objective]\ndefense = alp\n").string()), 1);
  EXPECT_EQ(run("train --config /nonexistent.ini"), 1);
  EXPECT_EQ(run("train --config " + kSmoke.string() + " --format html"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("evaluate --config " + kSmoke.string() + " --out " + dir.string() + " --checkpoint " +
                (dir / "missing.bin").string() + " -q"),
            2);
  EXPECT_EQ(run("report " + (dir / "empty").string()), 2);
}
