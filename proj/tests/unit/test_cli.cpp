#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
  if (const char* env = std::getenv("CSST_CLI_PATH"); env && *env) return env;
  return CSST_CLI_PATH;
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("csst_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Small enough to run the whole pipeline in a few seconds.
fs::path tiny_config() {
  const fs::path p = scratch_dir() / "tiny.json";
  if (!fs::exists(p)) {
    const json j = {
        {"seed", 3},
        {"synth", {{"n_pois", 160}, {"n_labeled", 60}, {"extent_km", 5.0}}},
        {"graph", {{"k", 8}, {"cutoff_m", 1000.0}}},
        {"backbone", {{"variant", "msfnet"}, {"hidden", 32}}},
        {"pretrain",
         {{"positives", 3}, {"prototypes", 16}, {"prototype_dim", 24}, {"batch_size", 16}, {"max_steps", 4}}},
        {"finetune", {{"optimizer", "adam"}, {"max_epochs", 3}, {"batch_size", 16}}},
        {"ablate", {{"fractions", {0.3}}, {"fold_indices", {0, 1}}, {"variants", {"mlp", "msfnet"}}}}};
    std::ofstream(p) << j.dump(2);
  }
  return p;
}

int run(const std::string& args) {
  const std::string cmd = "\"" + cli_path() + "\" -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string cfg() { return "-c " + tiny_config().string(); }

}  // namespace

TEST(Cli, Pipeline) {
  const fs::path d = scratch_dir() / "pipeline";
  ASSERT_EQ(run(cfg() + " -o " + (d / "gen").string() + " generate"), 0);
  for (const char* f : {"pois.csv", "reports.csv", "labels.csv", "summary.json", "run.json", "config.json"})
    EXPECT_TRUE(fs::exists(d / "gen" / f)) << f;

  // Load the generated CSVs instead of regenerating.
  const std::string data = " --data " + (d / "gen").string();
  ASSERT_EQ(run(cfg() + data + " -o " + (d / "pre").string() + " pretrain"), 0);
  ASSERT_TRUE(fs::exists(d / "pre" / "pretrain.ckpt"));
  EXPECT_TRUE(fs::exists(d / "pre" / "loss.csv"));

  ASSERT_EQ(run(cfg() + data + " -o " + (d / "fin").string() + " finetune --checkpoint " +
                (d / "pre" / "pretrain.ckpt").string()),
            0);
  const json fm = read_json(d / "fin" / "metrics.json");
  EXPECT_TRUE(fm["pretrained"].get<bool>());
  EXPECT_GT(fm["test"]["n"].get<int>(), 0);
  EXPECT_EQ(fm["variant"], "msfnet");

  ASSERT_EQ(run(cfg() + data + " -o " + (d / "eval").string() + " evaluate --model " +
                (d / "fin" / "model.ckpt").string()),
            0);
  const json em = read_json(d / "eval" / "metrics.json");
  EXPECT_EQ(em["split"], "test");
  // Evaluating the same split reproduces the fine-tuning test metrics.
  EXPECT_DOUBLE_EQ(em["acc"].get<double>(), fm["test"]["acc"].get<double>());
  EXPECT_DOUBLE_EQ(em["mape"].get<double>(), fm["test"]["mape"].get<double>());
  EXPECT_TRUE(fs::exists(d / "eval" / "predictions.csv"));
}

TEST(Cli, FinetuneWithoutCheckpointIsScratch) {
  const fs::path d = scratch_dir() / "scratch";
  ASSERT_EQ(run(cfg() + " -o " + d.string() + " finetune"), 0);
  EXPECT_FALSE(read_json(d / "metrics.json")["pretrained"].get<bool>());
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch_dir() / "codes";
  EXPECT_EQ(run(cfg() + " -o " + d.string() + " --set graph.radius=3 finetune"), 2);
  EXPECT_EQ(run(cfg() + " -o " + d.string() + " --set graph.k=abc finetune"), 2);
  EXPECT_EQ(run("nosuchcommand"), 2);
  EXPECT_EQ(run(cfg() + " -o " + d.string() + " --data " + (scratch_dir() / "missing").string() + " finetune"), 3);

  fs::create_directories(d / "bad");
  std::ofstream(d / "bad" / "pois.csv") << "id,lon,lat\nP1,abc,1\n";
  std::ofstream(d / "bad" / "reports.csv") << "id,r1\nP1,1\n";
  EXPECT_EQ(run(cfg() + " -o " + d.string() + " --data " + (d / "bad").string() + " finetune"), 3);
}

TEST(Cli, CheckpointFromOtherConfigRejected) {
  const fs::path d = scratch_dir() / "mismatch";
  ASSERT_EQ(run(cfg() + " -o " + (d / "pre").string() + " pretrain"), 0);
  const std::string ckpt = (d / "pre" / "pretrain.ckpt").string();
  EXPECT_EQ(run(cfg() + " --set graph.k=6 -o " + (d / "a").string() + " finetune --checkpoint " + ckpt), 2);
  EXPECT_EQ(run(cfg() + " --set graph.k=6 -o " + (d / "b").string() + " finetune --allow-hash-mismatch --checkpoint " +
                ckpt),
            0);
  // A different backbone variant cannot be loaded at all.
  EXPECT_EQ(run(cfg() + " --set backbone.variant=mlp -o " + (d / "c").string() +
                " finetune --allow-hash-mismatch --checkpoint " + ckpt),
            2);
}

TEST(Cli, AblateWritesOneRowPerCell) {
  const fs::path d = scratch_dir() / "ablate";
  ASSERT_EQ(run(cfg() + " -o " + d.string() + " ablate"), 0);
  const json m = read_json(d / "metrics.json");
  ASSERT_TRUE(m.contains("cells"));
  // 2 variants x {scratch, pretrained} x 1 fraction x 2 folds.
  EXPECT_EQ(m["cells"].size(), 8u);
  std::ifstream csv(d / "metrics.csv");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 9u);
  EXPECT_TRUE(fs::exists(d / "pretrain-mlp.ckpt"));
  EXPECT_TRUE(fs::exists(d / "pretrain-msfnet.ckpt"));
}
