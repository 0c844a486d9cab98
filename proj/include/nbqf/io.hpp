#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nbqf/gmrf.hpp"
#include "nbqf/health_stage.hpp"
#include "nbqf/quantile_stage.hpp"
#include "nbqf/simkit.hpp"

namespace nbqf::io {

using nlohmann::json;
namespace fs = std::filesystem;

/// Shortest decimal form that reads back to the same double (17 significant digits).
std::string format_double(double v);

struct CsvTable {
  fs::path path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // 1-based source line of each row

  /// Index of a header column; DataError naming the file when absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
  std::int64_t integer(std::size_t row, std::size_t col) const;
};

/// Reads a comma-separated file with a header row. Malformed rows raise
/// DataError with "path:line".
CsvTable read_csv(const fs::path& path);

/// Buffered CSV writer; throws DataError when the file cannot be written.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter& cell(double v);
  CsvWriter& cell(std::int64_t v);
  CsvWriter& cell(const std::string& v);
  void end_row();
  void close();

 private:
  fs::path path_;
  std::string buffer_;
  bool first_ = true;
  bool closed_ = false;
};

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);
void ensure_directory(const fs::path& dir);

// --- data files -------------------------------------------------------------

/// Long format: group_id,x. Groups keep the order of first appearance.
ExposurePanel read_exposures(const fs::path& path);
void write_exposures(const fs::path& path, const ExposurePanel& panel);

/// group_id,y
struct CountData {
  std::vector<std::int64_t> ids;
  std::vector<std::int64_t> y;
};
CountData read_counts(const fs::path& path);
void write_counts(const fs::path& path, const std::vector<std::int64_t>& ids,
                  const std::vector<std::int64_t>& y);

/// group_id followed by numeric columns, reordered to `ids`. Every id must be
/// present exactly once.
Eigen::MatrixXd read_group_table(const fs::path& path, const std::vector<std::int64_t>& ids,
                                 std::vector<std::string>* names = nullptr);
void write_group_table(const fs::path& path, const std::vector<std::int64_t>& ids,
                       const std::vector<std::string>& names, const Eigen::MatrixXd& values);

/// "chain:n" builds the path graph on n groups; anything else is an edge-list
/// CSV with columns from,to holding group ids.
GmrfSpec read_adjacency(const std::string& spec, const std::vector<std::int64_t>& ids);

// --- stage outputs ----------------------------------------------------------

void write_quantile_chain(const fs::path& path, const QuantileChain& chain,
                          const std::vector<std::int64_t>& ids);

json summaries_to_json(const std::vector<ThetaSummary>& s, const std::vector<std::int64_t>& ids,
                       const QuantilePieceBasis& basis);
/// Summaries reordered to `ids`.
std::vector<ThetaSummary> summaries_from_json(const json& j, const std::vector<std::int64_t>& ids);

void write_health_chain(const fs::path& path, const HealthChain& chain,
                        const std::vector<std::int64_t>& ids);
/// Reads the columns needed for effects and WAIC. Mean-mode chains are
/// recognised by their single "alpha" coefficient column.
HealthChain read_health_chain(const fs::path& path, std::vector<std::int64_t>* ids = nullptr);

json waic_to_json(const WaicResult& w);
json interval_to_json(const Interval& v);
json effects_to_json(const EffectSummary& e);
void write_beta_curve(const fs::path& path, const EffectSummary& e);

// --- configuration ----------------------------------------------------------

/// Each reader rejects unknown keys and wrong types with ConfigError.
ScenarioSpec scenario_from_json(const json& j, ScenarioSpec base = {});
QuantileModelConfig quantile_config_from_json(const json& j, QuantileModelConfig base = {});
HealthConfig health_config_from_json(const json& j, HealthConfig base = {});

json scenario_to_json(const ScenarioSpec& s);
json metrics_to_json(const StudyReport& report);
void write_table1(const fs::path& path, const StudyReport& report);

}  // namespace nbqf::io
