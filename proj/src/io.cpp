#include "nbqf/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "nbqf/errors.hpp"

namespace nbqf::io {

namespace {

std::string where(const fs::path& path, int line) { return path.string() + ":" + std::to_string(line); }

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  for (auto& s : out) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t");
    s = a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  }
  return out;
}

std::unordered_map<std::int64_t, std::size_t> index_of(const std::vector<std::int64_t>& ids) {
  std::unordered_map<std::int64_t, std::size_t> m;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (!m.emplace(ids[k], k).second) throw DataError("duplicate group id " + std::to_string(ids[k]));
  }
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw DataError("failed writing " + path.string());
}

// Typed field access with unknown-key detection.
class Fields {
 public:
  Fields(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw ConfigError(what_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw ConfigError("");
        if constexpr (std::is_integral_v<T>) {
          if (!it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(what_ + ": field '" + key + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(what_ + ": unknown field '" + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- CSV ----------------------------------------------------------------------

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return k;
  }
  throw DataError(path.string() + ": missing column '" + name + "'");
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(where(path, lines[row]) + ": '" + s + "' is not a number (column " + header[col] + ")");
  }
  return v;
}

std::int64_t CsvTable::integer(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  std::int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(where(path, lines[row]) + ": '" + s + "' is not an integer (column " + header[col] + ")");
  }
  return v;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable t;
  t.path = path;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw DataError(where(path, number) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.lines.push_back(number);
  }
  if (t.header.empty()) throw DataError(path.string() + ": empty file");
  return t;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header) : path_(path) {
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter::~CsvWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }

CsvWriter& CsvWriter::cell(std::int64_t v) { return cell(std::to_string(v)); }

CsvWriter& CsvWriter::cell(const std::string& v) {
  if (!first_) buffer_.push_back(',');
  buffer_ += v;
  first_ = false;
  return *this;
}

void CsvWriter::end_row() {
  buffer_.push_back('\n');
  first_ = true;
}

void CsvWriter::close() {
  closed_ = true;
  write_text(path_, buffer_);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

// --- data files ---------------------------------------------------------------

ExposurePanel read_exposures(const fs::path& path) {
  const auto t = read_csv(path);
  const auto gc = t.column("group_id");
  const auto xc = t.column("x");
  ExposurePanel p;
  std::unordered_map<std::int64_t, std::size_t> slot;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto id = t.integer(r, gc);
    const double x = t.number(r, xc);
    if (!std::isfinite(x)) throw DataError(where(path, t.lines[r]) + ": exposure is not finite");
    auto [it, inserted] = slot.emplace(id, p.ids.size());
    if (inserted) {
      p.ids.push_back(id);
      p.x.emplace_back();
    }
    p.x[it->second].push_back(x);
  }
  if (p.ids.empty()) throw DataError(path.string() + ": no exposure rows");
  return p;
}

void write_exposures(const fs::path& path, const ExposurePanel& panel) {
  CsvWriter w(path, {"group_id", "x"});
  for (int i = 0; i < panel.groups(); ++i) {
    const std::int64_t id = panel.ids.empty() ? i : panel.ids[i];
    for (double x : panel.x[i]) {
      w.cell(id).cell(x);
      w.end_row();
    }
  }
  w.close();
}

CountData read_counts(const fs::path& path) {
  const auto t = read_csv(path);
  const auto gc = t.column("group_id");
  const auto yc = t.column("y");
  CountData c;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    c.ids.push_back(t.integer(r, gc));
    const auto y = t.integer(r, yc);
    if (y < 0) throw DataError(where(path, t.lines[r]) + ": negative count");
    c.y.push_back(y);
  }
  if (c.ids.empty()) throw DataError(path.string() + ": no count rows");
  index_of(c.ids);
  return c;
}

void write_counts(const fs::path& path, const std::vector<std::int64_t>& ids,
                  const std::vector<std::int64_t>& y) {
  CsvWriter w(path, {"group_id", "y"});
  for (std::size_t i = 0; i < y.size(); ++i) {
    w.cell(ids[i]).cell(y[i]);
    w.end_row();
  }
  w.close();
}

Eigen::MatrixXd read_group_table(const fs::path& path, const std::vector<std::int64_t>& ids,
                                 std::vector<std::string>* names) {
  const auto t = read_csv(path);
  const auto gc = t.column("group_id");
  std::vector<std::size_t> cols;
  if (names) names->clear();
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    if (k == gc) continue;
    cols.push_back(k);
    if (names) names->push_back(t.header[k]);
  }
  const auto slot = index_of(ids);
  Eigen::MatrixXd out(ids.size(), cols.size());
  std::vector<bool> filled(ids.size(), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto id = t.integer(r, gc);
    const auto it = slot.find(id);
    if (it == slot.end()) continue;
    if (filled[it->second]) throw DataError(where(path, t.lines[r]) + ": duplicate group id " + std::to_string(id));
    filled[it->second] = true;
    for (std::size_t c = 0; c < cols.size(); ++c) out(it->second, c) = t.number(r, cols[c]);
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (!filled[k]) throw DataError(path.string() + ": no row for group id " + std::to_string(ids[k]));
  }
  return out;
}

void write_group_table(const fs::path& path, const std::vector<std::int64_t>& ids,
                       const std::vector<std::string>& names, const Eigen::MatrixXd& values) {
  std::vector<std::string> header{"group_id"};
  header.insert(header.end(), names.begin(), names.end());
  CsvWriter w(path, header);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    w.cell(ids[i]);
    for (Eigen::Index c = 0; c < values.cols(); ++c) w.cell(values(i, c));
    w.end_row();
  }
  w.close();
}

GmrfSpec read_adjacency(const std::string& spec, const std::vector<std::int64_t>& ids) {
  if (spec.rfind("chain:", 0) == 0) {
    int n = 0;
    const char* b = spec.data() + 6;
    const auto r = std::from_chars(b, spec.data() + spec.size(), n);
    if (r.ec != std::errc() || r.ptr != spec.data() + spec.size()) {
      throw ConfigError("adjacency '" + spec + "': expected chain:<groups>");
    }
    if (n != static_cast<int>(ids.size())) {
      throw ConfigError("adjacency '" + spec + "' does not match the " + std::to_string(ids.size()) + " groups");
    }
    return GmrfSpec::chain(n);
  }
  const auto t = read_csv(spec);
  const auto fc = t.column("from");
  const auto tc = t.column("to");
  const auto slot = index_of(ids);
  std::vector<std::pair<int, int>> edges;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto a = slot.find(t.integer(r, fc));
    const auto b = slot.find(t.integer(r, tc));
    if (a == slot.end() || b == slot.end()) throw DataError(where(spec, t.lines[r]) + ": unknown group id");
    edges.emplace_back(static_cast<int>(a->second), static_cast<int>(b->second));
  }
  return GmrfSpec::from_edges(static_cast<int>(ids.size()), edges);
}

// --- stage outputs --------------------------------------------------------------

void write_quantile_chain(const fs::path& path, const QuantileChain& chain,
                          const std::vector<std::int64_t>& ids) {
  std::vector<std::string> header{"draw", "hyper_median"};
  for (int l = 1; l <= chain.pieces; ++l) header.push_back("hyper_shape_" + std::to_string(l));
  for (const char* h : {"sigma0_sq", "sigma1_sq", "rho0", "rho1"}) header.push_back(h);
  for (auto id : ids) header.push_back("median_" + std::to_string(id));
  for (int l = 1; l <= chain.pieces; ++l) {
    for (auto id : ids) header.push_back("shape" + std::to_string(l) + "_" + std::to_string(id));
  }
  CsvWriter w(path, header);
  for (int s = 0; s < chain.draws(); ++s) {
    w.cell(static_cast<std::int64_t>(s)).cell(chain.hyper_median(s));
    for (int l = 0; l < chain.pieces; ++l) w.cell(chain.hyper_shape(s, l));
    w.cell(chain.sigma0_sq(s)).cell(chain.sigma1_sq(s)).cell(chain.rho0(s)).cell(chain.rho1(s));
    for (int i = 0; i < chain.groups; ++i) w.cell(chain.median(s, i));
    for (int l = 0; l < chain.pieces; ++l) {
      for (int i = 0; i < chain.groups; ++i) w.cell(chain.shape[l](s, i));
    }
    w.end_row();
  }
  w.close();
}

json summaries_to_json(const std::vector<ThetaSummary>& s, const std::vector<std::int64_t>& ids,
                       const QuantilePieceBasis& basis) {
  json groups = json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    json cov = json::array();
    for (Eigen::Index r = 0; r < s[i].cov.rows(); ++r) {
      std::vector<double> row(s[i].cov.cols());
      for (Eigen::Index c = 0; c < s[i].cov.cols(); ++c) row[c] = s[i].cov(r, c);
      cov.push_back(row);
    }
    groups.push_back({{"group_id", ids[i]},
                      {"mean", std::vector<double>(s[i].mean.data(), s[i].mean.data() + s[i].mean.size())},
                      {"cov", cov}});
  }
  return {{"family", basis.family() == BaseFamily::gamma ? "gamma" : "gaussian"},
          {"pieces", basis.pieces()},
          {"groups", groups}};
}

std::vector<ThetaSummary> summaries_from_json(const json& j, const std::vector<std::int64_t>& ids) {
  const auto slot = index_of(ids);
  std::vector<ThetaSummary> out(ids.size());
  std::vector<bool> filled(ids.size(), false);
  try {
    for (const auto& g : j.at("groups")) {
      const auto it = slot.find(g.at("group_id").get<std::int64_t>());
      if (it == slot.end()) continue;
      const auto mean = g.at("mean").get<std::vector<double>>();
      const auto cov = g.at("cov").get<std::vector<std::vector<double>>>();
      ThetaSummary s;
      s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
      s.cov.resize(mean.size(), mean.size());
      if (cov.size() != mean.size()) throw DataError("summary covariance has the wrong size");
      for (std::size_t r = 0; r < cov.size(); ++r) {
        if (cov[r].size() != mean.size()) throw DataError("summary covariance has the wrong size");
        for (std::size_t c = 0; c < cov[r].size(); ++c) s.cov(r, c) = cov[r][c];
      }
      out[it->second] = std::move(s);
      filled[it->second] = true;
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed stage-1 summary: ") + e.what());
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (!filled[k]) throw DataError("stage-1 summary has no entry for group id " + std::to_string(ids[k]));
  }
  return out;
}

void write_health_chain(const fs::path& path, const HealthChain& chain,
                        const std::vector<std::int64_t>& ids) {
  std::vector<std::string> header{"draw"};
  if (chain.mode == ExposureMode::mean) {
    header.push_back("alpha");
  } else {
    for (Eigen::Index k = 0; k < chain.beta.cols(); ++k) header.push_back("beta_" + std::to_string(k));
  }
  header.push_back("intercept");
  for (Eigen::Index k = 1; k < chain.gamma.cols(); ++k) header.push_back("gamma_" + std::to_string(k));
  header.push_back("xi");
  const bool re = chain.sigma_eps_sq.size() > 0;
  if (re) header.push_back("sigma_eps_sq");
  header.push_back("integral");
  for (auto id : ids) header.push_back("exposure_" + std::to_string(id));
  for (auto id : ids) header.push_back("loglik_" + std::to_string(id));
  CsvWriter w(path, header);
  for (int s = 0; s < chain.draws(); ++s) {
    w.cell(static_cast<std::int64_t>(s));
    for (Eigen::Index k = 0; k < chain.beta.cols(); ++k) w.cell(chain.beta(s, k));
    for (Eigen::Index k = 0; k < chain.gamma.cols(); ++k) w.cell(chain.gamma(s, k));
    w.cell(chain.xi(s));
    if (re) w.cell(chain.sigma_eps_sq(s));
    w.cell(chain.integral(s));
    for (Eigen::Index i = 0; i < chain.exposure_term.cols(); ++i) w.cell(chain.exposure_term(s, i));
    for (Eigen::Index i = 0; i < chain.loglik.cols(); ++i) w.cell(chain.loglik(s, i));
    w.end_row();
  }
  w.close();
}

HealthChain read_health_chain(const fs::path& path, std::vector<std::int64_t>* ids) {
  const auto t = read_csv(path);
  HealthChain c;
  std::vector<std::size_t> beta, gamma, exposure, loglik;
  std::vector<std::int64_t> exposure_ids;
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    const auto& h = t.header[k];
    if (h == "alpha") {
      c.mode = ExposureMode::mean;
      beta.push_back(k);
    } else if (h.rfind("beta_", 0) == 0) {
      beta.push_back(k);
    } else if (h == "intercept" || h.rfind("gamma_", 0) == 0) {
      gamma.push_back(k);
    } else if (h.rfind("exposure_", 0) == 0) {
      exposure.push_back(k);
      exposure_ids.push_back(std::stoll(h.substr(9)));
    } else if (h.rfind("loglik_", 0) == 0) {
      loglik.push_back(k);
    }
  }
  if (beta.empty() || gamma.empty() || exposure.size() != loglik.size()) {
    throw DataError(path.string() + ": not a stage-2 chain file");
  }
  const auto xc = t.column("xi");
  const auto ic = t.column("integral");
  const Eigen::Index S = static_cast<Eigen::Index>(t.rows.size());
  c.degree = c.mode == ExposureMode::mean ? 0 : static_cast<int>(beta.size()) - 1;
  c.beta.resize(S, beta.size());
  c.gamma.resize(S, gamma.size());
  c.xi.resize(S);
  c.integral.resize(S);
  c.exposure_term.resize(S, exposure.size());
  c.loglik.resize(S, loglik.size());
  const bool re = std::find(t.header.begin(), t.header.end(), "sigma_eps_sq") != t.header.end();
  if (re) c.sigma_eps_sq.resize(S);
  const std::size_t rc = re ? t.column("sigma_eps_sq") : 0;
  for (Eigen::Index s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < beta.size(); ++k) c.beta(s, k) = t.number(s, beta[k]);
    for (std::size_t k = 0; k < gamma.size(); ++k) c.gamma(s, k) = t.number(s, gamma[k]);
    c.xi(s) = t.number(s, xc);
    c.integral(s) = t.number(s, ic);
    if (re) c.sigma_eps_sq(s) = t.number(s, rc);
    for (std::size_t k = 0; k < exposure.size(); ++k) c.exposure_term(s, k) = t.number(s, exposure[k]);
    for (std::size_t k = 0; k < loglik.size(); ++k) c.loglik(s, k) = t.number(s, loglik[k]);
  }
  if (ids) *ids = exposure_ids;
  return c;
}

json waic_to_json(const WaicResult& w) {
  return {{"waic", w.waic}, {"lppd", w.lppd}, {"p_waic", w.p_waic}};
}

json interval_to_json(const Interval& v) {
  return {{"mean", v.mean}, {"lower95", v.lower}, {"upper95", v.upper}};
}

json effects_to_json(const EffectSummary& e) {
  return {{"integral_beta", interval_to_json(e.integral)},
          {"percent_increase", interval_to_json(e.percent_increase)},
          {"attributable_events", interval_to_json(e.attributable)}};
}

void write_beta_curve(const fs::path& path, const EffectSummary& e) {
  CsvWriter w(path, {"tau", "mean", "lo95", "hi95"});
  for (std::size_t k = 0; k < e.tau.size(); ++k) {
    w.cell(e.tau[k]).cell(e.beta_curve[k].mean).cell(e.beta_curve[k].lower).cell(e.beta_curve[k].upper);
    w.end_row();
  }
  w.close();
}

// --- configuration ------------------------------------------------------------

ScenarioSpec scenario_from_json(const json& j, ScenarioSpec base) {
  Fields f(j, "scenario");
  std::string id;
  f.get("id", id);
  if (!id.empty()) base.scenario = parse_scenario(id);
  f.get("groups", base.groups);
  f.get("individuals", base.individuals);
  f.get("median_mean", base.median_mean);
  f.get("shape_mean", base.shape_mean);
  f.get("sigma0_sq", base.sigma0_sq);
  f.get("rho0", base.rho0);
  f.get("sigma1_sq", base.sigma1_sq);
  f.get("rho1", base.rho1);
  f.get("beta0", base.beta0);
  f.get("xi_true", base.xi_true);
  f.get("pieces", base.pieces);
  f.get("floor", base.floor);
  f.get("replicates", base.replicates);
  f.get("shared_world", base.shared_world);
  f.get("seed", base.seed);
  f.finish();
  base.validate();
  return base;
}

QuantileModelConfig quantile_config_from_json(const json& j, QuantileModelConfig base) {
  Fields f(j, "quantile");
  std::string mode;
  f.get("mode", mode);
  if (mode == "gmrf") {
    base.mode = QuantileMode::gmrf;
  } else if (mode == "independent") {
    base.mode = QuantileMode::independent;
  } else if (!mode.empty()) {
    throw ConfigError("quantile: mode must be 'gmrf' or 'independent'");
  }
  f.get("prior_variance", base.prior_variance);
  f.get("ig_shape", base.ig_shape);
  f.get("ig_rate", base.ig_rate);
  f.get("iterations", base.iterations);
  f.get("burn_in", base.burn_in);
  f.get("thin", base.thin);
  f.get("median_step", base.median_step);
  f.get("shape_step", base.shape_step);
  f.get("target_acceptance", base.target_acceptance);
  f.get("floor", base.floor);
  f.get("rho_points", base.rho_points);
  f.get("seed", base.seed);
  f.finish();
  base.validate();
  return base;
}

HealthConfig health_config_from_json(const json& j, HealthConfig base) {
  Fields f(j, "health");
  std::string mode;
  f.get("mode", mode);
  if (!mode.empty()) base.mode = parse_mode(mode);
  f.get("degree", base.degree);
  f.get("prior_variance", base.prior_variance);
  f.get("xi_max", base.xi_max);
  f.get("xi_initial", base.xi_initial);
  f.get("xi_proposal_variance", base.xi_proposal_variance);
  f.get("xi_target_acceptance", base.xi_target_acceptance);
  f.get("random_intercepts", base.random_intercepts);
  f.get("ig_shape", base.ig_shape);
  f.get("ig_rate", base.ig_rate);
  f.get("iterations", base.iterations);
  f.get("burn_in", base.burn_in);
  f.get("thin", base.thin);
  f.get("pg_truncation", base.pg_truncation);
  f.get("store_latent", base.store_latent);
  f.get("seed", base.seed);
  f.finish();
  base.validate();
  return base;
}

json scenario_to_json(const ScenarioSpec& s) {
  return {{"id", scenario_name(s.scenario)},
          {"groups", s.groups},
          {"individuals", s.individuals},
          {"median_mean", s.median_mean},
          {"shape_mean", s.shape_mean},
          {"sigma0_sq", s.sigma0_sq},
          {"rho0", s.rho0},
          {"sigma1_sq", s.sigma1_sq},
          {"rho1", s.rho1},
          {"beta0", s.beta0},
          {"xi_true", s.xi_true},
          {"pieces", s.pieces},
          {"floor", s.floor},
          {"replicates", s.replicates},
          {"shared_world", s.shared_world},
          {"seed", s.seed}};
}

namespace {

json target_json(const TargetMetrics& m) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"relative_bias", num(m.relative_bias)},
          {"bias", num(m.bias)},
          {"mse", num(m.mse)},
          {"relative_mse", num(m.relative_mse)},
          {"coverage_95", num(m.coverage)},
          {"count", m.count}};
}

}  // namespace

json metrics_to_json(const StudyReport& report) {
  json modes = json::array();
  for (const auto& m : report.metrics) {
    modes.push_back({{"mode", mode_name(m.mode)},
                     {"integral_beta", target_json(m.integral)},
                     {"beta_curve", target_json(m.beta_curve)},
                     {"predictive", target_json(m.predictive)},
                     {"attributable", target_json(m.attributable)},
                     {"failures", m.failures}});
  }
  json replicates = json::array();
  for (const auto& r : report.records) {
    json e = {{"replicate", r.replicate}, {"mode", mode_name(r.mode)}, {"failed", r.failed}};
    if (r.failed) {
      e["error"] = r.error;
    } else {
      e["integral_beta"] = interval_to_json(r.integral);
      e["integral_sd"] = r.integral_sd;
      e["attributable"] = interval_to_json(r.attributable);
      e["waic"] = waic_to_json(r.waic);
    }
    replicates.push_back(e);
  }
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"scenario", scenario_to_json(report.spec)},
          {"modes", modes},
          {"waic_prefers_mean_over_quantile", num(report.mean_preferred_known)},
          {"waic_prefers_mean_over_quantile_with_errors", num(report.mean_preferred_estimated)},
          {"stage1_fits", report.stage1_fits},
          {"replicates", replicates}};
}

void write_table1(const fs::path& path, const StudyReport& report) {
  CsvWriter w(path, {"scenario", "covariate", "integral_relative_bias", "integral_relative_mse",
                     "integral_cp", "beta_bias", "beta_mse", "beta_cp", "predictive_relative_bias",
                     "predictive_relative_mse", "predictive_cp", "attributable_relative_bias",
                     "attributable_relative_mse", "attributable_cp"});
  auto put = [&](double v) {
    if (std::isfinite(v)) {
      w.cell(v);
    } else {
      w.cell(std::string("-"));
    }
  };
  for (const auto& m : report.metrics) {
    w.cell(scenario_name(report.spec.scenario)).cell(mode_name(m.mode));
    put(m.integral.relative_bias);
    put(m.integral.relative_mse);
    put(m.integral.coverage);
    const bool curve = m.beta_curve.count > 0;
    put(curve ? m.beta_curve.bias : NAN);
    put(curve ? m.beta_curve.mse : NAN);
    put(curve ? m.beta_curve.coverage : NAN);
    put(m.predictive.relative_bias);
    put(m.predictive.relative_mse);
    put(m.predictive.coverage);
    put(m.attributable.relative_bias);
    put(m.attributable.relative_mse);
    put(m.attributable.coverage);
    w.end_row();
  }
  w.close();
}

}  // namespace nbqf::io
