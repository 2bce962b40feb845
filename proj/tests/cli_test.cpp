// Command-line driver: argument handling, exit codes, artifact layout, and
// the end-to-end simulate/train/eval pipeline on a tiny configuration.
#include "fairrec/cli.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fairrec {
namespace {

int run(const std::vector<std::string>& args) { return run_cli(args); }

// Fresh scratch root per process: rerunning the suite must not trip the
// overwrite guard on a previous run's outputs.
std::string scratch(const std::string& name) {
  static std::string root = testing::TempDir() + "cli" + std::to_string(getpid()) + "_";
  return root + name;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

// Small corpus and model so each train run takes well under a second.
std::vector<std::string> tiny_sim_args(const std::string& out, const std::string& seed) {
  return {"simulate", "--out", out,          "--seed",        seed,
          "--set",    "sim_users=40",        "--set",         "sim_news=60",
          "--set",    "sim_providers=6",     "--set",         "sim_topics=4",
          "--set",    "sim_impressions=4",   "--set",         "sim_candidates=6"};
}

std::vector<std::string> tiny_model_args() {
  return {"--set", "word_dim=8",     "--set", "heads=2",       "--set", "head_dim=4",
          "--set", "provider_dim=6", "--set", "attn_hidden=6", "--set", "disc_hidden=8",
          "--set", "num_classes=4",  "--set", "title_len=8",   "--set", "history_len=6",
          "--set", "batch_size=16",  "--set", "lr=0.003"};
}

std::vector<std::string> tiny_train_args(const std::string& data, const std::string& out,
                                         const std::string& seed) {
  std::vector<std::string> args = {"train", "--data", data, "--out", out,
                                   "--seed", seed, "--epochs", "1"};
  for (const std::string& a : tiny_model_args()) args.push_back(a);
  return args;
}

class CliPipeline : public ::testing::Test {
 protected:
  // One shared simulated corpus for the pipeline tests.
  static std::string sim_dir() {
    static std::string dir = [] {
      std::string d = scratch("sim");
      if (run(tiny_sim_args(d, "5")) != 0) throw std::runtime_error("tiny simulate failed");
      return d;
    }();
    return dir;
  }
};

TEST(CliUsage, HelpAndBadInvocationsUseDocumentedExitCodes) {
  EXPECT_EQ(run({"help"}), 0);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"conquer"}), 2);
  EXPECT_EQ(run({"train", "--out", "x"}), 2);                      // missing --data
  EXPECT_EQ(run({"train", "--data", "x", "--out", "y", "--what"}), 2);
  EXPECT_EQ(run({"simulate", "--out"}), 2);                        // flag without value
  EXPECT_EQ(run({"simulate", "--out", "x", "extra"}), 2);
}

TEST(CliUsage, BadOptionValuesExitTwo) {
  std::string out = scratch("badopt");
  EXPECT_EQ(run({"simulate", "--out", out, "--set", "epochs=soon"}), 2);
  EXPECT_EQ(run({"simulate", "--out", out, "--set", "no_equals_sign"}), 2);
  EXPECT_EQ(run({"simulate", "--out", out, "--seed", "-1"}), 2);
  EXPECT_EQ(run({"simulate", "--out", out, "--set", "mystery=1"}), 2);
  EXPECT_EQ(run({"simulate", "--out", out, "--backbone", "rnn"}), 2);
}

TEST_F(CliPipeline, SimulateWritesLoadableCorpusAndManifest) {
  std::string dir = sim_dir();
  Corpus corpus = load_corpus(dir);
  EXPECT_EQ(corpus.news.size(), 60u);
  EXPECT_EQ(corpus.providers.size(), 6u);
  EXPECT_EQ(corpus.valid.size(), 40u);
  EXPECT_TRUE(exists(dir + "/ground_truth.tsv"));
  std::string manifest = slurp(dir + "/manifest.json");
  EXPECT_NE(manifest.find("\"command\": \"simulate\""), std::string::npos);
  EXPECT_NE(manifest.find("\"sim_users\": \"40\""), std::string::npos);
}

TEST_F(CliPipeline, OverwriteNeedsForce) {
  std::string dir = sim_dir();
  EXPECT_EQ(run(tiny_sim_args(dir, "5")), 1);
  std::vector<std::string> forced = tiny_sim_args(dir, "5");
  forced.push_back("--force");
  EXPECT_EQ(run(forced), 0);
}

TEST_F(CliPipeline, TrainProducesSelectedCheckpointAndLog) {
  std::string out = scratch("train");
  ASSERT_EQ(run(tiny_train_args(sim_dir(), out, "5")), 0);
  EXPECT_TRUE(exists(out + "/best.ckpt"));
  EXPECT_TRUE(exists(out + "/epoch_1.ckpt"));
  ParameterStore store = load_checkpoint(out + "/best.ckpt");
  EXPECT_GT(store.size(), 0u);
  std::string log = slurp(out + "/train_log.csv");
  EXPECT_NE(log.find("epoch,l_click,l_disc,l_adv"), std::string::npos);
  std::string manifest = slurp(out + "/manifest.json");
  EXPECT_NE(manifest.find("\"command\": \"train\""), std::string::npos);
  EXPECT_NE(manifest.find("news.tsv"), std::string::npos);
}

TEST_F(CliPipeline, SameSeedTrainingIsByteIdentical) {
  std::string a = scratch("train_a");
  std::string b = scratch("train_b");
  std::string c = scratch("train_c");
  ASSERT_EQ(run(tiny_train_args(sim_dir(), a, "7")), 0);
  ASSERT_EQ(run(tiny_train_args(sim_dir(), b, "7")), 0);
  ASSERT_EQ(run(tiny_train_args(sim_dir(), c, "8")), 0);
  EXPECT_EQ(slurp(a + "/best.ckpt"), slurp(b + "/best.ckpt"));
  EXPECT_EQ(slurp(a + "/train_log.csv"), slurp(b + "/train_log.csv"));
  EXPECT_NE(slurp(a + "/best.ckpt"), slurp(c + "/best.ckpt"));
}

TEST_F(CliPipeline, EvalWritesFairnessReportsWithProbe) {
  std::string train_out = scratch("train_for_eval");
  ASSERT_EQ(run(tiny_train_args(sim_dir(), train_out, "5")), 0);
  std::string out = scratch("eval");
  std::vector<std::string> args = {"eval",  "--data",  sim_dir(), "--model",
                                   train_out + "/best.ckpt", "--out", out, "--seed", "5"};
  for (const std::string& a : tiny_model_args()) args.push_back(a);
  ASSERT_EQ(run(args), 0);
  std::string csv = slurp(out + "/fairness.csv");
  EXPECT_NE(csv.find("r,k,er,rnd"), std::string::npos);
  EXPECT_NE(csv.find("# exposure ratio:"), std::string::npos);
  std::string longcsv = slurp(out + "/fairness_long.csv");
  EXPECT_NE(longcsv.find("probe_accuracy"), std::string::npos);
  EXPECT_FALSE(slurp(out + "/fairness.txt").empty());
  std::string manifest = slurp(out + "/manifest.json");
  EXPECT_NE(manifest.find("best.ckpt"), std::string::npos);
}

TEST_F(CliPipeline, EvalWithoutModelFileFails) {
  std::string out = scratch("eval_missing");
  std::vector<std::string> args = {"eval", "--data", sim_dir(), "--model",
                                   testing::TempDir() + "absent.ckpt", "--out", out};
  EXPECT_EQ(run(args), 1);
}

TEST_F(CliPipeline, ConfigFileAppliesAndFlagsWin) {
  std::string cfg_path = scratch("cfg.txt");
  {
    std::ofstream os(cfg_path);
    os << "sim_users = 30\nsim_news = 60\nsim_providers = 6\nsim_topics = 4\n"
       << "sim_impressions = 4\nsim_candidates = 6\n";
  }
  std::string dir = scratch("sim_cfg");
  ASSERT_EQ(run({"simulate", "--out", dir, "--config", cfg_path, "--set", "sim_users=20"}), 0);
  Corpus corpus = load_corpus(dir);
  EXPECT_EQ(corpus.valid.size(), 20u);  // one valid impression per user
  EXPECT_EQ(corpus.news.size(), 60u);   // from the file, not the desk preset
}

TEST_F(CliPipeline, EnvVarSuppliesDefaultOutputRoot) {
  std::string root = scratch("envroot");
  ASSERT_EQ(setenv("FAIRREC_OUT", root.c_str(), 1), 0);
  std::vector<std::string> args = tiny_sim_args("", "5");
  args.erase(args.begin() + 1, args.begin() + 3);  // drop --out and its value
  EXPECT_EQ(run(args), 0);
  unsetenv("FAIRREC_OUT");
  EXPECT_TRUE(exists(root + "/simulate/news.tsv"));
}

TEST_F(CliPipeline, AblateWritesOneRowPerVariant) {
  std::string out = scratch("ablate");
  std::vector<std::string> args = {"ablate", "--data", sim_dir(), "--out", out,
                                   "--seed", "5", "--epochs", "1"};
  for (const std::string& a : tiny_model_args()) args.push_back(a);
  ASSERT_EQ(run(args), 0);
  std::string summary = slurp(out + "/summary.csv");
  EXPECT_NE(summary.find("variant,"), std::string::npos);
  for (const char* name : {"full", "no_adversary", "no_orthogonality", "no_decomposition"}) {
    EXPECT_NE(summary.find(name), std::string::npos) << name;
    EXPECT_TRUE(exists(out + "/" + name + "/best.ckpt")) << name;
    EXPECT_TRUE(exists(out + "/" + name + "/fairness.csv")) << name;
  }
}

TEST_F(CliPipeline, SweepWritesOneRowPerLambda) {
  std::string out = scratch("sweep");
  std::vector<std::string> args = {"sweep", "--data", sim_dir(), "--out", out,
                                   "--seed", "5", "--epochs", "1"};
  for (const std::string& a : tiny_model_args()) args.push_back(a);
  ASSERT_EQ(run(args), 0);
  std::string summary = slurp(out + "/summary.csv");
  EXPECT_NE(summary.find("lambda_adv,"), std::string::npos);
  int rows = 0;
  for (char ch : summary) rows += ch == '\n';
  EXPECT_EQ(rows, 6);  // header + five lambda values
  EXPECT_TRUE(exists(out + "/lambda_0.016/fairness.csv"));
}

}  // namespace
}  // namespace fairrec
