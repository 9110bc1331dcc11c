#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "vbsgpr/csv.hpp"
#include "vbsgpr/model_io.hpp"
#include "vbsgpr/synthetic.hpp"

using namespace vbsgpr;

namespace {

std::string g_dir;  // scratch workspace shared by the cases

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunResult run_cli(const std::string& args) {
  static int call = 0;
  const std::string out = g_dir + "/stdout." + std::to_string(call);
  const std::string err = g_dir + "/stderr." + std::to_string(call);
  ++call;
  const std::string cmd =
      std::string(VBSGPR_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Writes rows [begin, end) of the synthetic sample as x0,...,y CSV.
void write_slice(const std::string& path, const SyntheticData& data, Index begin,
                 Index end, bool with_target) {
  CsvTable t;
  for (Index j = 0; j < data.X.cols(); ++j)
    t.columns.push_back("x" + std::to_string(j));
  if (with_target) t.columns.push_back("y");
  for (Index i = begin; i < end; ++i) {
    std::vector<std::string> row;
    for (Index j = 0; j < data.X.cols(); ++j) row.push_back(fmt17(data.X(i, j)));
    if (with_target) row.push_back(fmt17(data.y[i]));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

SyntheticData make_sample() {
  SyntheticConfig c;
  c.count = 130;
  c.dim = 2;
  c.kernel.inverted_lengthscales = Eigen::VectorXd::Ones(2);
  c.kernel.signal_std = 1.0;
  c.noise.noise_std = 0.3;
  c.seed = 404;
  return synth_gp_dataset(c);
}

struct Workspace {
  std::string train_csv, test_csv;
  Workspace() {
    if (g_dir.empty()) {
      char tmpl[] = "/tmp/vbsgpr_cli_XXXXXX";
      REQUIRE(mkdtemp(tmpl) != nullptr);
      g_dir = tmpl;
    }
    train_csv = g_dir + "/train.csv";
    test_csv = g_dir + "/test.csv";
    const SyntheticData data = make_sample();
    write_slice(train_csv, data, 0, 100, true);
    write_slice(test_csv, data, 100, 130, true);
  }
};

// Trace rows with the wall-time column blanked, for run-to-run comparison.
std::vector<std::vector<std::string>> trace_without_seconds(const std::string& path) {
  CsvTable t = read_csv(path);
  const Index sec = t.column_index("seconds");
  REQUIRE(sec >= 0);
  for (auto& row : t.rows) row[static_cast<std::size_t>(sec)] = "";
  return t.rows;
}

}  // namespace

TEST_CASE("usage errors and help") {
  Workspace ws;
  CHECK(run_cli("").status != 0);
  CHECK(run_cli("--help").status == 0);
  CHECK(run_cli("train --data missing.csv").status != 0);  // --target required
}

TEST_CASE("train writes a loadable model and an optimization trace") {
  Workspace ws;
  const std::string model = g_dir + "/smoke_model.txt";
  const std::string trace = g_dir + "/smoke_trace.csv";
  const RunResult r = run_cli(
      "train --data " + ws.train_csv + " --target y --variant fitc --blocks 5 "
      "--inducing 10 --iters 50 --batch 2 --seed 3 --adaptive "
      "--model " + model + " --trace " + trace);
  INFO(r.err);
  REQUIRE(r.status == 0);
  CHECK(r.out.find("model written to") != std::string::npos);
  CHECK(r.out.find("final bound") != std::string::npos);

  const ModelArtifact a = load_model(model);
  CHECK(a.variant == Variant::FITC);
  CHECK(a.dim == 2);
  CHECK(a.inducing_inputs.rows() == 10);
  CHECK(a.blocks == 5);
  CHECK(a.seed == 3);
  CHECK(a.norm.active);
  CHECK(a.train_blocks.empty());  // only pic stores its blocks

  const CsvTable t = read_csv(trace);
  CHECK(t.columns.front() == "iter");
  CHECK(t.column_index("elbo_estimate") >= 0);
  CHECK(t.rows.size() >= 2);
}

TEST_CASE("same seed reproduces the model file and trace byte for byte") {
  Workspace ws;
  const std::string base =
      "train --data " + ws.train_csv + " --target y --variant dtc --blocks 4 "
      "--inducing 8 --iters 40 --batch 2 --seed 11 ";
  const RunResult r1 = run_cli(base + "--model " + g_dir + "/det_a.txt --trace " +
                               g_dir + "/det_a_trace.csv");
  const RunResult r2 = run_cli(base + "--model " + g_dir + "/det_b.txt --trace " +
                               g_dir + "/det_b_trace.csv");
  REQUIRE(r1.status == 0);
  REQUIRE(r2.status == 0);
  CHECK(slurp(g_dir + "/det_a.txt") == slurp(g_dir + "/det_b.txt"));
  CHECK(trace_without_seconds(g_dir + "/det_a_trace.csv") ==
        trace_without_seconds(g_dir + "/det_b_trace.csv"));

  const RunResult r3 = run_cli(
      "train --data " + ws.train_csv + " --target y --variant dtc --blocks 4 "
      "--inducing 8 --iters 40 --batch 2 --seed 12 --model " + g_dir + "/det_c.txt");
  REQUIRE(r3.status == 0);
  CHECK(slurp(g_dir + "/det_a.txt") != slurp(g_dir + "/det_c.txt"));
}

TEST_CASE("predict writes one mean and variance per input row") {
  Workspace ws;
  const std::string model = g_dir + "/pred_model.txt";
  REQUIRE(run_cli("train --data " + ws.train_csv + " --target y --blocks 4 "
                  "--inducing 8 --iters 30 --seed 5 --model " + model)
              .status == 0);

  const std::string out = g_dir + "/pred.csv";
  const RunResult r =
      run_cli("predict --model " + model + " --data " + ws.test_csv + " --out " + out);
  INFO(r.err);
  REQUIRE(r.status == 0);
  CHECK(r.out.find("wrote 30 predictions") != std::string::npos);

  const CsvTable t = read_csv(out);
  REQUIRE(t.columns == std::vector<std::string>{"mean", "variance"});
  REQUIRE(t.rows.size() == 30);
  for (const auto& row : t.rows) {
    const double mean = std::stod(row[0]);
    const double var = std::stod(row[1]);
    CHECK(std::isfinite(mean));
    CHECK(var > 0);
  }

  // Observation noise only widens the variance.
  const std::string out_obs = g_dir + "/pred_obs.csv";
  REQUIRE(run_cli("predict --model " + model + " --data " + ws.test_csv +
                  " --observation-noise --out " + out_obs)
              .status == 0);
  const CsvTable tobs = read_csv(out_obs);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CHECK(std::stod(tobs.rows[i][0]) == std::stod(t.rows[i][0]));
    CHECK(std::stod(tobs.rows[i][1]) > std::stod(t.rows[i][1]));
  }

  // A feature-only file works: the target column is not required to predict.
  const std::string unlabeled = g_dir + "/unlabeled.csv";
  write_slice(unlabeled, make_sample(), 100, 110, false);
  const RunResult r2 = run_cli("predict --model " + model + " --data " + unlabeled +
                               " --out " + g_dir + "/pred2.csv");
  REQUIRE(r2.status == 0);
  CHECK(read_csv(g_dir + "/pred2.csv").rows.size() == 10);

  // An empty input produces just the header.
  const std::string empty = g_dir + "/empty.csv";
  {
    std::ofstream f(empty, std::ios::binary);
    f << "x0,x1\n";
  }
  const RunResult r3 = run_cli("predict --model " + model + " --data " + empty +
                               " --out " + g_dir + "/pred3.csv");
  REQUIRE(r3.status == 0);
  CHECK(slurp(g_dir + "/pred3.csv") == "mean,variance\n");
}

TEST_CASE("predict failures exit with status 2 and a named cause") {
  Workspace ws;
  const std::string model = g_dir + "/err_model.txt";
  REQUIRE(run_cli("train --data " + ws.train_csv + " --target y --blocks 3 "
                  "--inducing 6 --iters 10 --seed 1 --model " + model)
              .status == 0);

  // Missing feature column.
  const std::string narrow = g_dir + "/narrow.csv";
  {
    std::ofstream f(narrow, std::ios::binary);
    f << "x0\n0.5\n";
  }
  const RunResult r1 =
      run_cli("predict --model " + model + " --data " + narrow + " --out " +
              g_dir + "/x.csv");
  CHECK(r1.status == 2);
  CHECK(r1.err.find("missing feature column 'x1'") != std::string::npos);

  // Unreadable model.
  const RunResult r2 = run_cli("predict --model " + g_dir +
                               "/no_such_model.txt --data " + ws.test_csv);
  CHECK(r2.status == 2);
  CHECK(r2.err.find("cannot open") != std::string::npos);

  // Non-numeric cell, reported with its row.
  const std::string junk = g_dir + "/junk.csv";
  {
    std::ofstream f(junk, std::ios::binary);
    f << "x0,x1\n0.5,0.5\nmoose,0.1\n";
  }
  const RunResult r3 = run_cli("predict --model " + model + " --data " + junk +
                               " --out " + g_dir + "/x2.csv");
  CHECK(r3.status == 2);
  CHECK(r3.err.find("row 3") != std::string::npos);
  CHECK(r3.err.find("moose") != std::string::npos);
}

TEST_CASE("evaluate reports metrics on labeled data") {
  Workspace ws;
  const std::string model = g_dir + "/eval_model.txt";
  REQUIRE(run_cli("train --data " + ws.train_csv + " --target y --blocks 5 "
                  "--inducing 12 --iters 100 --batch 2 --seed 9 --adaptive "
                  "--model " + model)
              .status == 0);

  const std::string metrics = g_dir + "/metrics.csv";
  const RunResult r = run_cli("evaluate --model " + model + " --data " +
                              ws.test_csv + " --observation-noise --out " + metrics);
  INFO(r.err);
  REQUIRE(r.status == 0);
  CHECK(r.out.find("n_test 30") != std::string::npos);
  CHECK(r.out.find("rmse ") != std::string::npos);
  CHECK(r.out.find("mnlp ") != std::string::npos);

  const CsvTable t = read_csv(metrics);
  REQUIRE(t.columns ==
          std::vector<std::string>{"n_test", "rmse", "mnlp", "seconds"});
  REQUIRE(t.rows.size() == 1);
  CHECK(std::stod(t.rows[0][0]) == 30);
  const double rmse_val = std::stod(t.rows[0][1]);
  CHECK(rmse_val > 0);
  CHECK(rmse_val < 5.0);  // outputs have unit-ish scale
  CHECK(std::isfinite(std::stod(t.rows[0][2])));

  // Evaluating against an absent target fails cleanly.
  const RunResult r2 = run_cli("evaluate --model " + model + " --data " +
                               ws.test_csv + " --target nope");
  CHECK(r2.status == 2);
  CHECK(r2.err.find("'nope' not found") != std::string::npos);
}

TEST_CASE("pic prediction honors the sample count and seed") {
  Workspace ws;
  const std::string model = g_dir + "/pic_model.txt";
  REQUIRE(run_cli("train --data " + ws.train_csv + " --target y --variant pic "
                  "--blocks 4 --inducing 8 --iters 30 --seed 2 --model " + model)
              .status == 0);
  const ModelArtifact a = load_model(model);
  CHECK(a.variant == Variant::PIC);
  CHECK(a.train_blocks.size() == 4);  // pic ships its blocks

  const std::string one = g_dir + "/pic_one.csv";
  const std::string many = g_dir + "/pic_many.csv";
  const std::string again = g_dir + "/pic_again.csv";
  REQUIRE(run_cli("predict --model " + model + " --data " + ws.test_csv +
                  " --samples 1 --seed 1 --out " + one)
              .status == 0);
  REQUIRE(run_cli("predict --model " + model + " --data " + ws.test_csv +
                  " --samples 256 --seed 1 --out " + many)
              .status == 0);
  REQUIRE(run_cli("predict --model " + model + " --data " + ws.test_csv +
                  " --samples 256 --seed 1 --out " + again)
              .status == 0);
  CHECK(slurp(one) != slurp(many));
  CHECK(slurp(many) == slurp(again));

  const RunResult other =
      run_cli("predict --model " + model + " --data " + ws.test_csv +
              " --samples 256 --seed 7 --out " + g_dir + "/pic_seed7.csv");
  REQUIRE(other.status == 0);
  CHECK(slurp(g_dir + "/pic_seed7.csv") != slurp(many));
}

TEST_CASE("diagnose writes the divergence study") {
  Workspace ws;
  const std::string out = g_dir + "/study.csv";
  const RunResult r = run_cli(
      "diagnose --data " + ws.train_csv + " --target y --blocks 3 --inducing 6 "
      "--iters 40 --seed 13 --adaptive --log-every 10 --ref-iters 30 --out " + out);
  INFO(r.err);
  REQUIRE(r.status == 0);
  CHECK(r.out.find("reference bound") != std::string::npos);
  CHECK(r.out.find("slope log kl_inducing") != std::string::npos);

  const CsvTable t = read_csv(out);
  REQUIRE(t.columns == std::vector<std::string>{"iter", "kl_inducing", "kl_hyper",
                                                "kl_to_qstar", "elbo"});
  CHECK(t.rows.size() >= 3);
  for (const auto& row : t.rows) {
    CHECK(std::stod(row[1]) >= 0);
    CHECK(std::stod(row[2]) >= 0);
  }
}
