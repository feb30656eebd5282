#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "fenlo/csv.hpp"

using namespace fenlo;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  std::string out_path = "cli_stdout_" + std::to_string(counter) + ".txt";
  std::string err_path = "cli_stderr_" + std::to_string(counter) + ".txt";
  ++counter;
  std::string cmd = std::string(FENLO_BIN) + " " + args + " >" + out_path + " 2>" + err_path;
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return r;
}

}  // namespace

TEST_CASE("cli: invalid rho is a config error with a clear message") {
  RunResult r = run_cli("mi gaussian --rho 1.0 --steps 5 --k 8");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("rho must satisfy |rho| < 1") != std::string::npos);
}

TEST_CASE("cli: seeded gaussian runs are byte-identical") {
  const std::string args =
      "mi gaussian --kind flo --d 1 --rho 0.5 --k 8 --steps 10 --lr 1e-3 "
      "--log-interval 5 --eval-n 16 --eval-n-final 32 --critic bilinear --seed 3";
  RunResult r1 = run_cli(args + " --out cli_trace_a.csv");
  RunResult r2 = run_cli(args + " --out cli_trace_b.csv");
  CHECK(r1.exit_code == 0);
  CHECK(r2.exit_code == 0);
  std::string a = slurp("cli_trace_a.csv");
  CHECK(!a.empty());
  CHECK(a == slurp("cli_trace_b.csv"));
  CHECK(a.find("# kind = flo\n") != std::string::npos);
  CHECK(a.find(kTraceHeader) != std::string::npos);

  CsvData data = read_csv("cli_trace_a.csv");
  CHECK(data.rows.size() == 2);  // steps 5 and 10
  int c_wall = column_index(data, "wall_ms");
  for (size_t i = 0; i < data.rows.size(); ++i) {
    CHECK(cell_double(data, i, c_wall) == 0.0);  // timing off by default
  }
  std::remove("cli_trace_b.csv");
}

TEST_CASE("cli: sweep emits one row per cell and infonce respects ln K") {
  RunResult r = run_cli(
      "mi sweep --rho 0.0 0.5 --kinds flo infonce --d 1 --k 8 --steps 5 --trials 2 "
      "--lr 1e-3 --eval-n-final 16 --seed 4 --critic bilinear --out cli_sweep.csv");
  CHECK(r.exit_code == 0);
  CsvData data = read_csv("cli_sweep.csv");
  CHECK(data.rows.size() == 8);  // 2 rho x 2 kinds x 2 trials
  int c_kind = column_index(data, "kind");
  int c_est = column_index(data, "estimate_nats");
  int c_failed = column_index(data, "failed");
  for (size_t i = 0; i < data.rows.size(); ++i) {
    CHECK(data.rows[i][c_failed] == "0");
    if (data.rows[i][c_kind] == "infonce") {
      CHECK(cell_double(data, i, c_est) <= std::log(8.0) + 1e-9);
    }
  }
}

TEST_CASE("cli: oracle reports exact tightness and exits 0") {
  RunResult r = run_cli("oracle --seed 11 --random 3");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("builtin-2x2: mi=0.19274") != std::string::npos);
  CHECK(r.out.find("independent-2x2: mi=0") != std::string::npos);
  CHECK(r.out.find("random-3x4-2") != std::string::npos);
  CHECK(r.out.find("oracle: PASS") != std::string::npos);
}

TEST_CASE("cli: oracle rejects a user table that does not sum to 1") {
  write_text_file("cli_bad_table.txt", "0.5 0.2\n0.2 0.2\n");
  RunResult r = run_cli("oracle --table cli_bad_table.txt");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("table must sum to 1") != std::string::npos);
  std::remove("cli_bad_table.txt");

  write_text_file("cli_good_table.txt", "# comment\n0.4 0.1\n0.1 0.4\n");
  RunResult ok = run_cli("oracle --table cli_good_table.txt --random 0");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("user-table: mi=0.19274") != std::string::npos);
  std::remove("cli_good_table.txt");
}

TEST_CASE("cli: lambda = 0 assertion passes") {
  RunResult r = run_cli(
      "meta train --assert-lambda0 --episode-size 8 --d-xi 2 --d-e 6 --seed 6");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("cli: meta training produces a checkpoint; training lowers query MSE") {
  const std::string common =
      " --m 3 --q 2 --episode-size 8 --d-xi 2 --d-e 6 --seed 8 --log-interval 50";
  RunResult fresh = run_cli("meta train --steps 1 --lr 1e-9 --checkpoint cli_fresh.ckpt" +
                            common + " --out cli_fresh_train.csv");
  CHECK(fresh.exit_code == 0);
  RunResult trained = run_cli("meta train --steps 200 --lr 1e-3 --checkpoint cli_trained.ckpt" +
                              common + " --out cli_trained_train.csv");
  CHECK(trained.exit_code == 0);

  auto mean_mse = [&](const std::string& ckpt, const std::string& out) {
    RunResult r = run_cli("meta eval --checkpoint " + ckpt +
                          " --tasks 40 --seed 1000 --out " + out);
    REQUIRE(r.exit_code == 0);
    CsvData data = read_csv(out);
    int c = column_index(data, "query_mse");
    double s = 0.0;
    for (size_t i = 0; i < data.rows.size(); ++i) s += cell_double(data, i, c);
    return s / data.rows.size();
  };
  double untrained = mean_mse("cli_fresh.ckpt", "cli_eval_fresh.csv");
  double after = mean_mse("cli_trained.ckpt", "cli_eval_trained.csv");
  CHECK(after < untrained);

  // Evaluation is deterministic for a fixed checkpoint and seed.
  RunResult e1 = run_cli(
      "meta eval --checkpoint cli_trained.ckpt --tasks 20 --seed 7 --out cli_eval_a.csv");
  RunResult e2 = run_cli(
      "meta eval --checkpoint cli_trained.ckpt --tasks 20 --seed 7 --out cli_eval_b.csv");
  CHECK(e1.exit_code == 0);
  CHECK(e2.exit_code == 0);
  CHECK(slurp("cli_eval_a.csv") == slurp("cli_eval_b.csv"));
  std::remove("cli_eval_a.csv");
  std::remove("cli_eval_b.csv");
  std::remove("cli_fresh.ckpt");
  std::remove("cli_fresh_train.csv");
  std::remove("cli_eval_fresh.csv");
  std::remove("cli_eval_trained.csv");
}

TEST_CASE("cli: fomaml baseline trains, evaluates, and refuses adaptation output") {
  RunResult r = run_cli(
      "meta train --baseline fomaml --steps 20 --m 3 --q 2 --episode-size 8 "
      "--inner-lr 1e-3 --lr 1e-3 --seed 9 --checkpoint cli_fomaml.ckpt "
      "--out cli_fomaml_train.csv");
  CHECK(r.exit_code == 0);
  RunResult e = run_cli(
      "meta eval --checkpoint cli_fomaml.ckpt --tasks 10 --out cli_fomaml_eval.csv");
  CHECK(e.exit_code == 0);
  CsvData data = read_csv("cli_fomaml_eval.csv");
  CHECK(data.rows.size() == 10);
  RunResult bad = run_cli(
      "meta eval --checkpoint cli_fomaml.ckpt --tasks 2 --adapt-out cli_nope.csv");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("adaptation output requires a meta checkpoint") != std::string::npos);
  std::remove("cli_fomaml.ckpt");
  std::remove("cli_fomaml_train.csv");
  std::remove("cli_fomaml_eval.csv");
}

TEST_CASE("cli: plots render for every kind; schema mismatches fail clearly") {
  // trace plot from the gaussian CSV produced earlier
  RunResult t = run_cli("plot --input cli_trace_a.csv --kind trace --out cli_trace.svg");
  CHECK(t.exit_code == 0);
  std::string trace_svg = slurp("cli_trace.svg");
  CHECK(trace_svg.find("<svg") != std::string::npos);
  CHECK(trace_svg.find("stroke-dasharray") != std::string::npos);  // truth line

  RunResult q = run_cli("plot --input cli_sweep.csv --kind quantile-band --out cli_band.svg");
  CHECK(q.exit_code == 0);
  CHECK(slurp("cli_band.svg").find("<polygon") != std::string::npos);

  RunResult a = run_cli(
      "meta eval --checkpoint cli_trained.ckpt --tasks 2 --adapt-out cli_adapt.csv "
      "--adapt-task 1 --out cli_adapt_eval.csv");
  CHECK(a.exit_code == 0);
  CsvData adapt = read_csv("cli_adapt.csv");
  CHECK(adapt.rows.size() == 201 + 3);  // grid plus support markers
  RunResult p = run_cli("plot --input cli_adapt.csv --kind adaptation --out cli_adapt.svg");
  CHECK(p.exit_code == 0);
  CHECK(slurp("cli_adapt.svg").find("<circle") != std::string::npos);

  // Wrong schema for the requested plot kind names the missing column.
  RunResult wrong = run_cli("plot --input cli_trace_a.csv --kind quantile-band");
  CHECK(wrong.exit_code == 1);
  CHECK(wrong.err.find("missing column 'rho'") != std::string::npos);

  // A header-only CSV has no rows to plot.
  write_text_file("cli_empty.csv", std::string(kTraceHeader) + "\n");
  RunResult empty = run_cli("plot --input cli_empty.csv --kind trace");
  CHECK(empty.exit_code == 1);
  CHECK(empty.err.find("no rows") != std::string::npos);

  std::remove("cli_empty.csv");
  std::remove("cli_trace.svg");
  std::remove("cli_band.svg");
  std::remove("cli_adapt.svg");
  std::remove("cli_adapt.csv");
  std::remove("cli_adapt_eval.csv");
  std::remove("cli_trace_a.csv");
  std::remove("cli_sweep.csv");
  std::remove("cli_trained.ckpt");
  std::remove("cli_trained_train.csv");
}

TEST_CASE("cli: config files are honored and unknown keys rejected") {
  write_text_file("cli_run.cfg", "kind = dv\nd = 1\nk = 8\nsteps = 6\nlr = 1e-3\n"
                                 "log-interval = 3\neval-n = 16\neval-n-final = 16\n"
                                 "critic = bilinear\nseed = 5\n");
  RunResult r = run_cli("mi gaussian --config cli_run.cfg --out cli_cfg.csv");
  CHECK(r.exit_code == 0);
  std::string csv = slurp("cli_cfg.csv");
  CHECK(csv.find("# kind = dv\n") != std::string::npos);
  CHECK(csv.find("# steps = 6\n") != std::string::npos);

  // Flags override config values.
  RunResult o = run_cli("mi gaussian --config cli_run.cfg --kind nwj --out cli_cfg2.csv");
  CHECK(o.exit_code == 0);
  CHECK(slurp("cli_cfg2.csv").find("# kind = nwj\n") != std::string::npos);

  write_text_file("cli_bad.cfg", "kind = dv\nnot_a_key = 1\n");
  RunResult bad = run_cli("mi gaussian --config cli_bad.cfg");
  CHECK(bad.exit_code == 1);

  std::remove("cli_run.cfg");
  std::remove("cli_bad.cfg");
  std::remove("cli_cfg.csv");
  std::remove("cli_cfg2.csv");
}

TEST_CASE("cli: help exits 0, missing subcommand exits 1") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("").exit_code == 1);
  CHECK(run_cli("mi gaussian --kind bogus --steps 2 --k 4").exit_code == 1);
}
