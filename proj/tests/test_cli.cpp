#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "gcib/io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using testutil::TempDir;

namespace {

const std::string kCli = GCIB_CLI_PATH;

int run(const std::string& args, const std::string& log_path = "/dev/null") {
  const std::string cmd = kCli + " " + args + " >" + log_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string synth_spec_text() {
  return "users=25\nitems=30\nbehaviors=3\nlatent_dim=3\n"
         "target_density=0.08\naux_density=0.1\nnoise_fraction=0.4\nseed=5\n";
}

std::string config_text() {
  return "d=4\nlayers_global=2\nlayers_domain=2\nbeta=1\nlambda=0.1\ngamma=1e-5\n"
         "tau=0.2\nconcrete_temp=0.2\nrbf_sigma=0.25\nlr=0.01\nbatch_size=16\n"
         "hsic_batch=16\nepochs=2\nseed=11\neval_cutoffs=10,20\neval_every=2\n";
}

}  // namespace

TEST_CASE("cli end-to-end: synth, train, eval, retention, noise, embeddings") {
  TempDir dir("cli");
  testutil::write_file(dir.file("spec.txt"), synth_spec_text());
  testutil::write_file(dir.file("config.txt"), config_text());
  const std::string data = dir.file("data");
  const std::string run1 = dir.file("run1");
  const std::string run2 = dir.file("run2");

  REQUIRE(run("synth --spec " + dir.file("spec.txt") + " --out " + data) == 0);
  CHECK(fs::exists(data + "/meta.txt"));
  CHECK(fs::exists(data + "/test.txt"));
  CHECK(fs::exists(data + "/train_target.txt"));
  CHECK(fs::exists(data + "/noise_aux1.txt"));

  REQUIRE(run("train --config " + dir.file("config.txt") + " --data " + data + " --out " + run1) ==
          0);
  CHECK(fs::exists(run1 + "/final.ckpt"));
  CHECK(fs::exists(run1 + "/best.ckpt"));
  CHECK(fs::exists(run1 + "/metrics.csv"));

  // identical inputs give identical logs and checkpoints
  REQUIRE(run("train --config " + dir.file("config.txt") + " --data " + data + " --out " + run2) ==
          0);
  CHECK(testutil::slurp(run1 + "/metrics.csv") == testutil::slurp(run2 + "/metrics.csv"));
  CHECK(testutil::slurp(run1 + "/final.ckpt") == testutil::slurp(run2 + "/final.ckpt"));

  // eval emits exactly the requested cutoffs
  const std::string eval_csv = dir.file("eval.csv");
  REQUIRE(run("eval --checkpoint " + run1 + "/final.ckpt --data " + data + " --k 10,20 --out " +
              eval_csv) == 0);
  const auto lines = gcib::split(gcib::trim(testutil::slurp(eval_csv)), '\n');
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "metric,K,value");
  CHECK(lines[1].rfind("hr,10,", 0) == 0);
  CHECK(lines[2].rfind("hr,20,", 0) == 0);
  CHECK(lines[3].rfind("ndcg,10,", 0) == 0);
  CHECK(lines[4].rfind("ndcg,20,", 0) == 0);

  // retention CSV with precision/recall columns on labeled data
  const std::string ret_csv = dir.file("retention.csv");
  REQUIRE(run("report-retention --checkpoint " + run1 + "/final.ckpt --data " + data + " --out " +
              ret_csv) == 0);
  const auto ret_lines = gcib::split(gcib::trim(testutil::slurp(ret_csv)), '\n');
  CHECK(ret_lines[0] == "behavior,mean_gate,hard_retention,precision,recall");
  CHECK(ret_lines.size() == 3);  // two auxiliary behaviors

  // noise injection: audit size is floor(ratio * |E|)
  const auto aux_edges = gcib::split(gcib::trim(testutil::slurp(data + "/train_aux1.txt")), '\n');
  const std::string noisy = dir.file("noisy");
  REQUIRE(run("inject-noise --data " + data + " --behavior aux1 --ratio 0.2 --seed 3 --out " +
              noisy) == 0);
  const auto audit = gcib::split(gcib::trim(testutil::slurp(noisy + "/injected_edges.txt")), '\n');
  CHECK(audit.size() == aux_edges.size() / 5);

  REQUIRE(run("export-embeddings --checkpoint " + run1 + "/final.ckpt --data " + data + " --out " +
              dir.file("emb.csv")) == 0);
  CHECK(fs::exists(dir.file("emb.csv")));
}

TEST_CASE("cli exit codes distinguish usage errors from runtime failures") {
  TempDir dir("cli_err");
  CHECK(run("--definitely-not-a-flag") == 2);
  CHECK(run("synth --spec nope.txt") == 2);      // missing required --out
  CHECK(run("bogus-subcommand") == 2);
  CHECK(run("synth --spec " + dir.file("missing.txt") + " --out " + dir.file("d")) == 1);
  CHECK(run("eval --checkpoint " + dir.file("no.ckpt") + " --data " + dir.file("nodir")) == 1);
  CHECK(run("--help") == 0);
  CHECK(run("train --help") == 0);
}

TEST_CASE("cli robustness command writes the table-shaped report") {
  TempDir dir("cli_rob");
  testutil::write_file(dir.file("spec.txt"), synth_spec_text());
  testutil::write_file(dir.file("config.txt"), config_text());
  const std::string data = dir.file("data");
  REQUIRE(run("synth --spec " + dir.file("spec.txt") + " --out " + data) == 0);
  const std::string report = dir.file("robustness.csv");
  REQUIRE(run("robustness --config " + dir.file("config.txt") + " --data " + data +
              " --seeds 1 --out " + report) == 0);
  const auto lines = gcib::split(gcib::trim(testutil::slurp(report)), '\n');
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "variant,setting,hr@10,ndcg@10,hr@20,ndcg@20");
  CHECK(lines[3].rfind("gcib,rel_change,", 0) == 0);
}
