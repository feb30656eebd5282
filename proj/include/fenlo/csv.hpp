#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fenlo/meta.hpp"
#include "fenlo/metrics.hpp"

namespace fenlo {

// Documented schemas, golden-file tested.
inline constexpr const char* kTraceHeader =
    "step,kind,K,estimate_nats,q10,q20,q30,q40,q50,q60,q70,q80,q90,truth_nats,wall_ms";
inline constexpr const char* kSweepHeader =
    "rho,d,kind,trial,K,estimate_nats,q10,q20,q30,q40,q50,q60,q70,q80,q90,truth_nats,"
    "wall_ms,failed";
inline constexpr const char* kMetaTrainHeader =
    "step,loss_total,loss_r,loss_flo_estimate,wall_ms";
inline constexpr const char* kMetaEvalHeader = "task_id,kappa,gamma,query_mse";
inline constexpr const char* kAdaptHeader = "x,y_true,y_pred,is_support";

/// Shortest round-trip decimal form; non-finite values become the literal
/// string "nan".
std::string format_double(double v);

/// Resolved run configuration echoed into every output header as
/// `# key = value` lines, in insertion order.
using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

std::string csv_header_comment(const ConfigEcho& config);

std::string csv_mi_trace(const ConfigEcho& config, const std::vector<MetricRecord>& rows);
std::string csv_mi_sweep(const ConfigEcho& config, const std::vector<MetricRecord>& rows);

struct MetaTrainRow {
  long step = 0;
  double loss_total = 0.0, loss_r = 0.0, loss_flo_estimate = 0.0, wall_ms = 0.0;
};

std::string csv_meta_train(const ConfigEcho& config, const std::vector<MetaTrainRow>& rows);
std::string csv_meta_eval(const ConfigEcho& config, const std::vector<TaskEval>& rows);

struct AdaptRow {
  double x = 0.0, y_true = 0.0, y_pred = 0.0;
  int is_support = 0;
};

std::string csv_adaptation(const ConfigEcho& config, const std::vector<AdaptRow>& rows);

void write_text_file(const std::string& path, const std::string& content);

/// Parsed CSV: `#` comment lines are skipped, the first remaining line is the
/// header. Cells are kept as strings; numeric access goes through cell_double.
struct CsvData {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

CsvData read_csv(const std::string& path);

/// Index of a named column; throws naming the missing column.
int column_index(const CsvData& data, const std::string& name);

/// Numeric cell value; the literal "nan" parses to quiet NaN.
double cell_double(const CsvData& data, size_t row, int col);

}  // namespace fenlo
