#include "nbqf/commands.hpp"

#include <cstdio>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "nbqf/errors.hpp"
#include "nbqf/io.hpp"

namespace nbqf {

namespace {

using io::json;
namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool desk_scale = false;
};

struct Context {
  json cfg = json::object();
  fs::path base;
  Options opt;

  void allow(std::initializer_list<const char*> keys) const {
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& item : cfg.items()) {
      if (!ok.count(item.key())) throw ConfigError("config: unknown field '" + item.key() + "'");
    }
  }

  json section(const char* key) const {
    if (!cfg.contains(key) || cfg.at(key).is_null()) return json::object();
    return cfg.at(key);
  }

  std::optional<std::string> text(const char* key) const {
    if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
    if (!cfg.at(key).is_string()) throw ConfigError("config: field '" + std::string(key) + "' must be a string");
    return cfg.at(key).get<std::string>();
  }

  fs::path path(const char* key) const {
    const auto v = text(key);
    if (!v) throw ConfigError("config: missing input path '" + std::string(key) + "'");
    const fs::path p(*v);
    const fs::path full = p.is_absolute() ? p : base / p;
    if (!fs::exists(full)) throw ConfigError("config: input '" + std::string(key) + "' not found: " + full.string());
    return full;
  }

  int integer(const char* key, int fallback) const {
    if (!cfg.contains(key)) return fallback;
    if (!cfg.at(key).is_number_integer()) throw ConfigError("config: field '" + std::string(key) + "' must be an integer");
    return cfg.at(key).get<int>();
  }

  bool flag(const char* key) const {
    if (!cfg.contains(key)) return false;
    if (!cfg.at(key).is_boolean()) throw ConfigError("config: field '" + std::string(key) + "' must be true or false");
    return cfg.at(key).get<bool>();
  }

  /// --seed wins over the config's top-level seed; one of them is required.
  std::uint64_t seed() const {
    if (opt.seed) return *opt.seed;
    if (cfg.contains("seed")) {
      if (!cfg.at("seed").is_number_unsigned() && !cfg.at("seed").is_number_integer()) {
        throw ConfigError("config: seed must be a non-negative integer");
      }
      const auto s = cfg.at("seed").get<std::int64_t>();
      if (s < 0) throw ConfigError("config: seed must be a non-negative integer");
      return static_cast<std::uint64_t>(s);
    }
    throw ConfigError("a seed is required (--seed or \"seed\" in the config)");
  }

  fs::path out() const {
    const fs::path dir(opt.out);
    io::ensure_directory(dir);
    return dir;
  }

  QuantilePieceBasis basis() const {
    const std::string family = text("family").value_or("gamma");
    if (family != "gamma" && family != "gaussian") throw ConfigError("config: family must be 'gamma' or 'gaussian'");
    const int pieces = integer("pieces", 4);
    if (pieces < 1) throw ConfigError("config: pieces must be positive");
    return QuantilePieceBasis(family == "gamma" ? BaseFamily::gamma : BaseFamily::gaussian, pieces);
  }
};

Context load(const Options& opt) {
  Context c;
  c.opt = opt;
  if (!opt.config.empty()) {
    const fs::path p(opt.config);
    if (!fs::exists(p)) throw ConfigError("config file not found: " + p.string());
    try {
      c.cfg = io::read_json(p);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (!c.cfg.is_object()) throw ConfigError("config must be a JSON object");
    c.base = p.parent_path();
  }
  return c;
}

ScenarioSpec scenario_from(const Context& c) {
  ScenarioSpec spec = io::scenario_from_json(c.section("scenario"));
  if (c.flag("full_scale")) {
    if (c.opt.desk_scale) throw ConfigError("--desk-scale conflicts with full_scale");
    const auto full = ScenarioSpec::full_scale(spec.scenario);
    spec.groups = full.groups;
    spec.replicates = full.replicates;
  }
  if (c.opt.desk_scale) {
    spec.groups = 200;
    spec.individuals = 100;
    spec.replicates = 20;
  }
  spec.seed = c.seed();
  spec.validate();
  return spec;
}

std::vector<std::int64_t> default_ids(int n) {
  std::vector<std::int64_t> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- simulate -----------------------------------------------------------------

void cmd_simulate(const Context& c, std::ostream& out) {
  c.allow({"scenario", "seed", "full_scale"});
  const ScenarioSpec spec = scenario_from(c);
  const QuantilePieceBasis basis(BaseFamily::gamma, spec.pieces);
  const fs::path dir = c.out();
  io::write_json(dir / "scenario.json", io::scenario_to_json(spec));
  const auto ids = default_ids(spec.groups);
  std::vector<std::string> theta_names;
  for (int l = 0; l <= spec.pieces; ++l) theta_names.push_back("theta_" + std::to_string(l));

  for (int d = 0; d < spec.replicates; ++d) {
    char name[32];
    std::snprintf(name, sizeof name, "replicate_%03d", d + 1);
    const fs::path rep = dir / name;
    io::ensure_directory(rep);
    const auto data = simulate_replicate(spec, basis, d);
    auto panel = data.world.panel;
    panel.ids = ids;
    io::write_exposures(rep / "exposures.csv", panel);
    io::write_counts(rep / "counts.csv", ids, data.y);
    io::write_group_table(rep / "theta.csv", ids, theta_names, data.world.theta);
    io::write_group_table(rep / "means.csv", ids, {"mean"}, data.world.mean_exposure);
    json theta = json::array();
    for (Eigen::Index i = 0; i < data.world.theta.rows(); ++i) theta.push_back(vector_json(data.world.theta.row(i)));
    io::write_json(rep / "truth.json", {{"scenario", scenario_name(spec.scenario)},
                                        {"replicate", d + 1},
                                        {"integral_beta", data.truth.integral},
                                        {"attributable_events", data.truth.attributable},
                                        {"beta0", spec.beta0},
                                        {"xi", spec.xi_true},
                                        {"exposure_term", vector_json(data.truth.exposure_term)},
                                        {"mean_exposure", vector_json(data.world.mean_exposure)},
                                        {"theta", theta}});
  }
  out << "simulated " << spec.replicates << " replicate(s) of " << scenario_name(spec.scenario) << " with "
      << spec.groups << " groups into " << dir.string() << "\n";
}

// --- fit-quantile -------------------------------------------------------------

void cmd_fit_quantile(const Context& c, std::ostream& out) {
  c.allow({"exposures", "adjacency", "family", "pieces", "quantile", "seed", "levels"});
  const QuantilePieceBasis basis = c.basis();
  QuantileModelConfig qc = io::quantile_config_from_json(c.section("quantile"));
  qc.seed = c.seed();
  std::vector<double> levels{0.1, 0.25, 0.5, 0.75, 0.9};
  if (c.cfg.contains("levels")) {
    try {
      levels = c.cfg.at("levels").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("config: levels must be a list of numbers");
    }
    for (double t : levels) {
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("config: levels must lie in (0, 1)");
    }
  }
  const auto adjacency = c.text("adjacency");
  if (qc.mode == QuantileMode::gmrf && !adjacency) {
    throw ConfigError("gmrf mode needs an adjacency (\"chain:<n>\" or an edge-list CSV)");
  }
  const ExposurePanel panel = io::read_exposures(c.path("exposures"));
  panel.validate();
  std::optional<GmrfSpec> graph;
  if (qc.mode == QuantileMode::gmrf) {
    std::string spec = *adjacency;
    if (spec.rfind("chain:", 0) != 0) spec = (fs::path(spec).is_absolute() ? fs::path(spec) : c.base / spec).string();
    graph = io::read_adjacency(spec, panel.ids);
  }

  const auto chain = run_quantile_mcmc(panel, basis, qc, graph ? &*graph : nullptr);
  const fs::path dir = c.out();
  io::write_quantile_chain(dir / "quantile_chain.csv", chain, panel.ids);
  const auto summaries = posterior_theta_summary(chain);
  json summary = io::summaries_to_json(summaries, panel.ids, basis);
  summary["acceptance"] = {{"median", chain.acceptance.row(0).mean()},
                           {"shape", chain.acceptance.bottomRows(chain.pieces).mean()}};
  if (qc.mode == QuantileMode::gmrf) {
    summary["rho0"] = io::interval_to_json(summarize(chain.rho0));
    summary["rho1"] = io::interval_to_json(summarize(chain.rho1));
    summary["sigma0_sq"] = io::interval_to_json(summarize(chain.sigma0_sq));
    summary["sigma1_sq"] = io::interval_to_json(summarize(chain.sigma1_sq));
  }
  summary["warnings"] = chain.warnings;
  io::write_json(dir / "quantile_summary.json", summary);

  const auto bands = curve_bands(chain, basis, levels);
  io::CsvWriter w(dir / "quantile_bands.csv", {"group_id", "tau", "mean", "lo95", "hi95"});
  for (int i = 0; i < chain.groups; ++i) {
    for (std::size_t k = 0; k < levels.size(); ++k) {
      w.cell(panel.ids[i]).cell(levels[k]).cell(bands.mean(i, k)).cell(bands.lower(i, k)).cell(bands.upper(i, k));
      w.end_row();
    }
  }
  w.close();

  out << "stage 1: " << chain.groups << " groups, " << chain.draws() << " retained draws\n";
  out << "acceptance median " << fixed(chain.acceptance.row(0).mean(), 3) << " [min "
      << fixed(chain.acceptance.row(0).minCoeff(), 3) << ", max " << fixed(chain.acceptance.row(0).maxCoeff(), 3)
      << "], shape " << fixed(chain.acceptance.bottomRows(chain.pieces).mean(), 3) << " [min "
      << fixed(chain.acceptance.bottomRows(chain.pieces).minCoeff(), 3) << ", max "
      << fixed(chain.acceptance.bottomRows(chain.pieces).maxCoeff(), 3) << "]\n";
  if (qc.mode == QuantileMode::gmrf) {
    out << "rho0 " << fixed(chain.rho0.mean(), 3) << ", rho1 " << fixed(chain.rho1.mean(), 3) << "\n";
  }
  for (const auto& msg : chain.warnings) out << "warning: " << msg << "\n";
}

// --- fit-health ---------------------------------------------------------------

void report_effects(std::ostream& out, const EffectSummary& e, bool mean_mode) {
  const auto line = [&](const char* name, const Interval& v) {
    out << name << " " << fixed(v.mean) << " (" << fixed(v.lower) << ", " << fixed(v.upper) << ")\n";
  };
  line(mean_mode ? "alpha" : "integral of beta", e.integral);
  line("percent increase", e.percent_increase);
  line("attributable events", e.attributable);
}

void cmd_fit_health(const Context& c, std::ostream& out) {
  c.allow({"counts", "covariates", "mode", "theta", "summary", "means", "family", "pieces", "degrees",
           "health", "seed"});
  HealthConfig hc = io::health_config_from_json(c.section("health"));
  if (const auto m = c.text("mode")) hc.mode = parse_mode(*m);
  hc.seed = c.seed();
  hc.validate();
  std::vector<int> degrees;
  if (c.cfg.contains("degrees")) {
    try {
      degrees = c.cfg.at("degrees").get<std::vector<int>>();
    } catch (const json::exception&) {
      throw ConfigError("config: degrees must be a list of integers");
    }
    if (degrees.empty()) throw ConfigError("config: degrees must not be empty");
    for (int p : degrees) {
      if (p < 0 || p > BernsteinBasis::kMaxDegree) throw ConfigError("config: degree out of range");
    }
  }

  // Resolve every input before reading data so mismatches fail fast.
  fs::path exposure_path;
  switch (hc.mode) {
    case ExposureMode::known_qf: exposure_path = c.path("theta"); break;
    case ExposureMode::estimated_qf: exposure_path = c.path("summary"); break;
    case ExposureMode::mean: exposure_path = c.path("means"); break;
  }
  const char* stray[] = {"theta", "summary", "means"};
  for (const char* key : stray) {
    const bool wanted = (hc.mode == ExposureMode::known_qf && std::string(key) == "theta") ||
                        (hc.mode == ExposureMode::estimated_qf && std::string(key) == "summary") ||
                        (hc.mode == ExposureMode::mean && std::string(key) == "means");
    if (!wanted && c.cfg.contains(key)) {
      throw ConfigError("config: '" + std::string(key) + "' does not match exposure mode " + mode_name(hc.mode));
    }
  }
  const QuantilePieceBasis basis = c.basis();
  const auto counts = io::read_counts(c.path("counts"));
  ExposurePanel panel;
  panel.ids = counts.ids;
  panel.y = counts.y;
  if (c.cfg.contains("covariates")) panel.covariates = io::read_group_table(c.path("covariates"), counts.ids);

  ExposureInputs inputs;
  switch (hc.mode) {
    case ExposureMode::known_qf: {
      Eigen::MatrixXd theta = io::read_group_table(exposure_path, counts.ids);
      if (theta.cols() != basis.pieces() + 1) {
        throw DataError(exposure_path.string() + ": expected " + std::to_string(basis.pieces() + 1) + " coefficient columns");
      }
      inputs = ExposureInputs::known(basis, std::move(theta));
      break;
    }
    case ExposureMode::estimated_qf: {
      const json j = io::read_json(exposure_path);
      if (j.contains("pieces") && j.at("pieces") != basis.pieces()) {
        throw ConfigError("stage-1 summary was fitted with a different number of pieces");
      }
      inputs = ExposureInputs::estimated(basis, io::summaries_from_json(j, counts.ids));
      break;
    }
    case ExposureMode::mean: {
      const Eigen::MatrixXd m = io::read_group_table(exposure_path, counts.ids);
      if (m.cols() != 1) throw DataError(exposure_path.string() + ": expected a single mean column");
      inputs = ExposureInputs::mean_exposure(m.col(0));
      break;
    }
  }

  HealthChain chain;
  json waic_json;
  if (!degrees.empty()) {
    auto sel = select_degree(panel, inputs, hc, degrees);
    chain = std::move(sel.chain);
    waic_json = io::waic_to_json(sel.waic);
    json cand = json::array();
    for (const auto& [p, w] : sel.candidates) {
      auto e = io::waic_to_json(w);
      e["degree"] = p;
      cand.push_back(e);
    }
    waic_json["candidates"] = cand;
  } else {
    chain = run_health_mcmc(panel, inputs, hc);
    waic_json = io::waic_to_json(waic(chain.loglik));
  }
  waic_json["degree"] = chain.degree;
  waic_json["mode"] = mode_name(chain.mode);

  const fs::path dir = c.out();
  io::write_health_chain(dir / "health_chain.csv", chain, counts.ids);
  io::write_json(dir / "waic.json", waic_json);
  const auto effects = effect_summaries(chain);
  json ej = io::effects_to_json(effects);
  ej["degree"] = chain.degree;
  ej["mode"] = mode_name(chain.mode);
  ej["xi"] = io::interval_to_json(summarize(chain.xi));
  ej["xi_acceptance"] = chain.xi_acceptance;
  io::write_json(dir / "effects.json", ej);
  io::write_beta_curve(dir / "beta_curve.csv", effects);

  out << "stage 2 (" << mode_name(chain.mode) << ", degree " << chain.degree << "): " << chain.draws()
      << " retained draws, xi acceptance " << fixed(chain.xi_acceptance, 3) << "\n";
  report_effects(out, effects, chain.mode == ExposureMode::mean);
  out << "waic " << fixed(waic_json.at("waic").get<double>(), 3) << "\n";
}

// --- effects ------------------------------------------------------------------

void cmd_effects(const Context& c, std::ostream& out) {
  c.allow({"chain", "seed"});
  const auto chain = io::read_health_chain(c.path("chain"));
  if (chain.draws() < 2) throw DataError("chain file holds fewer than two draws");
  const auto effects = effect_summaries(chain);
  const fs::path dir = c.out();
  json ej = io::effects_to_json(effects);
  ej["degree"] = chain.degree;
  ej["xi"] = io::interval_to_json(summarize(chain.xi));
  ej["waic"] = io::waic_to_json(waic(chain.loglik));
  io::write_json(dir / "effects.json", ej);
  io::write_beta_curve(dir / "beta_curve.csv", effects);
  report_effects(out, effects, chain.mode == ExposureMode::mean);
}

// --- study --------------------------------------------------------------------

void cmd_study(const Context& c, std::ostream& out) {
  c.allow({"scenario", "modes", "health", "quantile", "seed", "full_scale"});
  const ScenarioSpec spec = scenario_from(c);
  StudyOptions options;
  if (c.cfg.contains("modes")) {
    std::vector<std::string> names;
    try {
      names = c.cfg.at("modes").get<std::vector<std::string>>();
    } catch (const json::exception&) {
      throw ConfigError("config: modes must be a list of strings");
    }
    options.modes.clear();
    for (const auto& n : names) options.modes.push_back(parse_mode(n));
    if (options.modes.empty()) throw ConfigError("config: modes must not be empty");
  }
  options.health = io::health_config_from_json(c.section("health"));
  options.quantile = io::quantile_config_from_json(c.section("quantile"));
  const fs::path dir = c.out();

  const auto report = run_study(spec, options);
  io::write_table1(dir / "table1.csv", report);
  io::write_json(dir / "metrics.json", io::metrics_to_json(report));

  out << scenario_name(spec.scenario) << ": " << spec.replicates << " replicate(s), " << spec.groups << " groups\n";
  for (const auto& m : report.metrics) {
    out << std::left << std::setw(22) << mode_name(m.mode) << " integral: relative bias "
        << fixed(m.integral.relative_bias, 3) << ", relative MSE " << fixed(m.integral.relative_mse, 2) << ", CP "
        << fixed(m.integral.coverage, 0) << "%";
    if (m.failures > 0) out << " (" << m.failures << " failed fits)";
    out << "\n";
  }
  if (std::isfinite(report.mean_preferred_known)) {
    out << "WAIC prefers mean over quantile in " << fixed(100.0 * report.mean_preferred_known, 0)
        << "% of replicates\n";
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage Bayesian regression of counts on exposure quantile functions", "nbqf"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration file");
    sub->add_option("--seed", seed_value, "Random seed (overrides the config)");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_flag("--desk-scale", opt.desk_scale, "Force desk-scale sizes (200 groups, 20 replicates)");
  };
  struct Command {
    const char* name;
    const char* help;
    void (*run)(const Context&, std::ostream&);
  };
  const Command commands[] = {
      {"simulate", "Simulate exposures, counts and truth for a scenario", cmd_simulate},
      {"fit-quantile", "Fit group quantile functions to individual exposures", cmd_fit_quantile},
      {"fit-health", "Fit the count model with quantile or mean exposures", cmd_fit_health},
      {"study", "Run a replicate simulation study and report its metrics", cmd_study},
      {"effects", "Summarize effects from a saved stage-2 chain", cmd_effects},
  };
  std::vector<CLI::App*> subs;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (std::size_t k = 0; k < subs.size(); ++k) {
      if (!subs[k]->parsed()) continue;
      if (subs[k]->count("--seed") > 0) opt.seed = seed_value;
      const std::string name = commands[k].name;
      if (subs[k]->count("--desk-scale") > 0 && name != "simulate" && name != "study") {
        throw ConfigError("--desk-scale applies to simulate and study only");
      }
      const Context c = load(opt);
      commands[k].run(c, out);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const io::json::exception& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace nbqf
