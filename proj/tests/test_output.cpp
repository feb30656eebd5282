#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "fenlo/csv.hpp"
#include "fenlo/svg.hpp"

using namespace fenlo;

namespace {

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  size_t n = 0;
  for (size_t pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("format_double: shortest round-trip decimals") {
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(1.5) == "1.5");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-3.0) == "-3");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "nan");
}

TEST_CASE("csv golden headers") {
  CHECK(std::string(kTraceHeader) ==
        "step,kind,K,estimate_nats,q10,q20,q30,q40,q50,q60,q70,q80,q90,truth_nats,wall_ms");
  CHECK(std::string(kSweepHeader) ==
        "rho,d,kind,trial,K,estimate_nats,q10,q20,q30,q40,q50,q60,q70,q80,q90,truth_nats,"
        "wall_ms,failed");
  CHECK(std::string(kMetaTrainHeader) == "step,loss_total,loss_r,loss_flo_estimate,wall_ms");
  CHECK(std::string(kMetaEvalHeader) == "task_id,kappa,gamma,query_mse");
  CHECK(std::string(kAdaptHeader) == "x,y_true,y_pred,is_support");
}

TEST_CASE("csv writers: config echo, schema, and round trip through read_csv") {
  ConfigEcho echo = {{"kind", "flo"}, {"seed", "7"}};
  MetricRecord rec;
  rec.step = 500;
  rec.kind = "flo";
  rec.k = 128;
  rec.estimate = 0.25;
  rec.quantiles = {0.1, 0.12, 0.14, 0.16, 0.18, 0.2, 0.22, 0.24, 0.26};
  rec.truth = 0.28768;
  rec.wall_ms = 0.0;
  std::string trace = csv_mi_trace(echo, {rec});
  CHECK(trace.find("# kind = flo\n") != std::string::npos);
  CHECK(trace.find("# seed = 7\n") != std::string::npos);
  CHECK(trace.find(kTraceHeader) != std::string::npos);

  const std::string path = "test_output_trace.csv";
  write_text_file(path, trace);
  CsvData data = read_csv(path);
  std::remove(path.c_str());
  CHECK(data.columns.size() == 15);
  REQUIRE(data.rows.size() == 1);
  CHECK(cell_double(data, 0, column_index(data, "step")) == 500.0);
  CHECK(data.rows[0][column_index(data, "kind")] == "flo");
  CHECK(cell_double(data, 0, column_index(data, "estimate_nats")) == 0.25);
  CHECK(cell_double(data, 0, column_index(data, "q50")) == 0.18);
  CHECK(cell_double(data, 0, column_index(data, "truth_nats")) == 0.28768);
  CHECK_THROWS_WITH_AS(column_index(data, "bogus"), "csv: missing column 'bogus'",
                       std::runtime_error);

  // nan cells survive a round trip.
  MetricRecord failed = rec;
  failed.failed = true;
  failed.estimate = std::numeric_limits<double>::quiet_NaN();
  failed.quantiles.fill(std::numeric_limits<double>::quiet_NaN());
  std::string sweep = csv_mi_sweep(echo, {failed});
  write_text_file(path, sweep);
  CsvData sdata = read_csv(path);
  std::remove(path.c_str());
  CHECK(std::isnan(cell_double(sdata, 0, column_index(sdata, "estimate_nats"))));
  CHECK(cell_double(sdata, 0, column_index(sdata, "failed")) == 1.0);
}

TEST_CASE("csv writers: meta train, meta eval, adaptation") {
  ConfigEcho echo;
  std::string train = csv_meta_train(echo, {{100, 1.5, 1.4, 0.01, 0.0}});
  CHECK(train.find(kMetaTrainHeader) != std::string::npos);
  CHECK(train.find("100,1.5,1.4,0.01,0") != std::string::npos);

  TaskEval te;
  te.task_id = 3;
  te.kappa = 2.0;
  te.gamma = 0.5;
  te.query_mse = 0.125;
  std::string eval = csv_meta_eval(echo, {te});
  CHECK(eval.find(kMetaEvalHeader) != std::string::npos);
  CHECK(eval.find("3,2,0.5,0.125") != std::string::npos);

  std::string adapt = csv_adaptation(echo, {{-5.0, 1.0, 0.9, 1}});
  CHECK(adapt.find(kAdaptHeader) != std::string::npos);
  CHECK(adapt.find("-5,1,0.9,1") != std::string::npos);
}

TEST_CASE("render_svg: structure, bands, markers, dashed truth") {
  PlotSpec spec;
  spec.title = "demo";
  spec.x_label = "step";
  spec.y_label = "nats";
  Series line;
  line.label = "flo";
  line.x = {0.0, 1.0, 2.0};
  line.y = {0.1, 0.2, 0.3};
  spec.lines.push_back(line);
  Series dots;
  dots.label = "support";
  dots.x = {0.5, 1.5};
  dots.y = {0.15, 0.25};
  dots.markers = true;
  spec.lines.push_back(dots);
  Band band;
  band.label = "q10-q90";
  band.x = {0.0, 1.0, 2.0};
  band.lo = {0.05, 0.15, 0.25};
  band.hi = {0.15, 0.25, 0.35};
  spec.bands.push_back(band);
  spec.truth = 0.28768;

  std::string svg = render_svg(spec);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("demo") != std::string::npos);
  CHECK(svg.find("<polygon") != std::string::npos);          // the band
  CHECK(svg.find("stroke-dasharray") != std::string::npos);  // the truth line
  CHECK(count_occurrences(svg, "<circle") == 2);             // one per marker point
  CHECK(render_svg(spec) == svg);  // byte-deterministic

  PlotSpec empty;
  empty.title = "empty";
  Series nans;
  nans.label = "x";
  nans.x = {0.0};
  nans.y = {std::numeric_limits<double>::quiet_NaN()};
  empty.lines.push_back(nans);
  CHECK_THROWS_WITH_AS(render_svg(empty), "render_svg: no rows", std::invalid_argument);
}
