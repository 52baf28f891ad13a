#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "msvar/config.hpp"
#include "msvar/csv.hpp"
#include "msvar/diagnostics.hpp"
#include "msvar/em.hpp"
#include "msvar/error.hpp"
#include "msvar/forecast.hpp"
#include "msvar/gibbs.hpp"
#include "msvar/inference.hpp"
#include "msvar/ingest.hpp"
#include "msvar/kernels.hpp"
#include "msvar/model_io.hpp"
#include "msvar/select.hpp"
#include "msvar/simulate.hpp"

namespace msvar::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::set<std::string> kCommands = {"ingest", "simulate", "fit", "classify", "report", "forecast", "select"};

// A subcommand whose settings come from defaults, then a config file, then
// flags given on the command line.
struct Command {
  std::string name;
  CLI::App* app = nullptr;
  json defaults = json::object();
  std::string config_path;
  std::vector<std::function<void(json&)>> overrides;

  template <class T>
  void option(const std::string& flags, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flags, *value, help);
    overrides.push_back([opt, value, key](json& cfg) {
      if (opt->count() > 0) cfg[json::json_pointer(pointer(key))] = *value;
    });
  }

  void flag(const std::string& flags, const std::string& key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flags, *value, help);
    overrides.push_back([opt, key](json& cfg) {
      if (opt->count() > 0) cfg[json::json_pointer(pointer(key))] = true;
    });
  }

  static std::string pointer(const std::string& key) {
    std::string p = "/" + key;
    for (auto& c : p)
      if (c == '.') c = '/';
    return p;
  }
};

json resolve(Command& cmd, std::ostream& err) {
  json cfg = cmd.defaults;
  if (!cmd.config_path.empty()) {
    json file = load_config(cmd.config_path);
    if (file.contains("manifest_version")) {
      const std::string from = file.value("command", std::string());
      if (from != cmd.name)
        throw ConfigError("manifest " + cmd.config_path + " was written by '" + from + "', not '" + cmd.name + "'");
      cfg.merge_patch(file.at("config"));
    } else {
      json top = json::object();
      for (auto it = file.begin(); it != file.end(); ++it)
        if (!kCommands.count(it.key())) top[it.key()] = it.value();
      cfg.merge_patch(top);
      if (file.contains(cmd.name)) cfg.merge_patch(file.at(cmd.name));
      for (auto it = cfg.begin(); it != cfg.end(); ++it)
        if (!cmd.defaults.contains(it.key())) err << "warning: ignoring unknown config key '" << it.key() << "'\n";
    }
  }
  for (auto& apply : cmd.overrides) apply(cfg);
  if (cfg["seed"].is_null()) {
    const char* env = std::getenv("REGIME_SWITCH_SEED");
    std::uint64_t seed = 0;
    if (env && *env) {
      try {
        seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("REGIME_SWITCH_SEED is not an unsigned integer: ") + env);
      }
    }
    cfg["seed"] = seed;
  }
  return cfg;
}

template <class T>
T get(const json& cfg, const std::string& key) {
  try {
    return cfg.at(json::json_pointer(Command::pointer(key))).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::vector<std::string> string_list(const json& cfg, const std::string& key) {
  const json& v = cfg.at(json::json_pointer(Command::pointer(key)));
  std::vector<std::string> out;
  if (v.is_null()) return out;
  if (v.is_array()) {
    for (const auto& x : v) out.push_back(x.get<std::string>());
    return out;
  }
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a list or comma-separated string");
  std::stringstream ss(v.get<std::string>());
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string range_text(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (v.is_number_integer()) return std::to_string(v.get<int>());
  if (v.is_array()) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + std::to_string(x.get<int>());
    return s;
  }
  return get<std::string>(cfg, key);
}

// Output directory plus checksums of everything read and written.
class RunRecord {
 public:
  RunRecord(std::string command, json config)
      : command_(std::move(command)), config_(std::move(config)), dir_(get<std::string>(config_, "out")) {}

  void input(const std::string& path) {
    if (path.empty()) return;
    inputs_[path] = sha256_file(path);
  }
  void series_input(const std::string& csv) {
    input(csv);
    fs::path meta = csv;
    meta.replace_extension(".json");
    if (fs::exists(meta)) input(meta.string());
  }
  void write(const std::string& name, const std::string& content) {
    write_text_file(dir_ / name, content);
    outputs_[name] = sha256_hex(content);
  }
  void write_manifest() const {
    json m;
    m["manifest_version"] = 1;
    m["tool"] = "msvar";
    m["version"] = kToolVersion;
    m["command"] = command_;
    m["config"] = config_;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    write_text_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }
  const fs::path& dir() const { return dir_; }

 private:
  std::string command_;
  json config_;
  fs::path dir_;
  json inputs_ = json::object();
  json outputs_ = json::object();
};

void add_common(Command& cmd) {
  cmd.defaults["out"] = "out";
  cmd.defaults["seed"] = nullptr;
  cmd.defaults["jobs"] = 0;
  cmd.app->add_option("--config", cmd.config_path, "TOML or JSON config file, or a manifest.json to rerun");
  cmd.option<std::string>("-o,--out", "out", "output directory");
  cmd.option<std::uint64_t>("--seed", "seed", "random seed (falls back to REGIME_SWITCH_SEED, then 0)");
  cmd.option<int>("-j,--jobs", "jobs", "worker threads (0 = all available)");
}

void add_spec_options(Command& cmd) {
  auto& d = cmd.defaults;
  d["lags"] = 1;
  d["regimes"] = 2;
  d["switch_intercept"] = true;
  d["switch_coeffs"] = true;
  d["switch_cov"] = true;
  d["diagonal_var"] = false;
  d["regression_target"] = "";
  d["regressors"] = json::array();
  d["regression_intercept"] = false;
  cmd.option<bool>("--switch-intercept", "switch_intercept", "intercepts switch with the regime (true/false)");
  cmd.option<bool>("--switch-coeffs", "switch_coeffs", "lag coefficients switch with the regime (true/false)");
  cmd.option<bool>("--switch-cov", "switch_cov", "covariances switch with the regime (true/false)");
  cmd.flag("--diagonal-var", "diagonal_var", "each channel regresses on its own lags only");
  cmd.option<std::string>("--regression-target", "regression_target", "switching regression: target channel");
  cmd.option<std::string>("--regressors", "regressors", "switching regression: comma-separated regressor channels");
  cmd.flag("--regression-intercept", "regression_intercept", "switching regression: include an intercept");
}

void add_em_options(Command& cmd) {
  auto& d = cmd.defaults;
  d["max_iters"] = 500;
  d["rel_tol"] = 1e-8;
  d["restarts"] = 5;
  d["ridge"] = 1e-8;
  d["init"] = "kmeans";
  cmd.option<int>("--max-iters", "max_iters", "EM iteration limit");
  cmd.option<double>("--tol", "rel_tol", "relative log-likelihood tolerance");
  cmd.option<int>("--restarts", "restarts", "EM restarts");
  cmd.option<double>("--ridge", "ridge", "covariance ridge");
  cmd.option<std::string>("--init", "init", "initialisation: kmeans or random");
}

ModelSpec spec_from(const json& cfg, const ObservationSeries& series, int lags, int regimes) {
  ModelSpec spec;
  spec.n_channels = series.n_channels();
  spec.lags = lags;
  spec.n_regimes = regimes;
  spec.switch_intercept = get<bool>(cfg, "switch_intercept");
  spec.switch_coeffs = get<bool>(cfg, "switch_coeffs");
  spec.switch_cov = get<bool>(cfg, "switch_cov");
  spec.diagonal_var = get<bool>(cfg, "diagonal_var");
  const auto target = get<std::string>(cfg, "regression_target");
  if (!target.empty()) {
    auto channel = [&](const std::string& name) {
      const auto idx = series.channel_index(name);
      if (!idx) throw ConfigError("unknown channel '" + name + "'");
      return *idx;
    };
    RegressionMode mode;
    mode.target = channel(target);
    for (const auto& r : string_list(cfg, "regressors")) mode.regressors.push_back(channel(r));
    mode.intercept = get<bool>(cfg, "regression_intercept");
    spec.regression = mode;
  }
  spec.require_valid();
  return spec;
}

EmConfig em_from(const json& cfg) {
  EmConfig c;
  c.max_iters = get<int>(cfg, "max_iters");
  c.rel_tol = get<double>(cfg, "rel_tol");
  c.n_restarts = get<int>(cfg, "restarts");
  c.ridge = get<double>(cfg, "ridge");
  c.seed = get<std::uint64_t>(cfg, "seed");
  const auto init = get<std::string>(cfg, "init");
  if (init == "kmeans")
    c.init = InitStrategy::kmeans_on_residuals;
  else if (init == "random")
    c.init = InitStrategy::random_responsibilities;
  else
    throw ConfigError("init must be 'kmeans' or 'random'");
  c.require_valid();
  return c;
}

void apply_jobs(const json& cfg) { kernels::set_thread_count(get<int>(cfg, "jobs")); }

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

void print_report(const RegimeReport& report, std::ostream& out) {
  out << pad("regime", 7) << pad("E[D] steps", 12) << pad("E[D] s", 10) << pad("occurrence", 12)
      << pad("observations", 14) << pad("percent", 10) << "\n";
  for (std::size_t m = 0; m < report.regimes.size(); ++m) {
    const auto& r = report.regimes[m];
    out << pad(std::to_string(m + 1), 7) << pad(format_short(r.expected_duration_steps), 12)
        << pad(format_short(r.expected_duration_seconds), 10) << pad(std::to_string(r.occurrences), 12)
        << pad(std::to_string(r.observations), 14) << pad(format_short(r.percentage), 10) << "\n";
  }
}

ModelMetadata metadata_for(const std::string& method, double ll, const ObservationSeries& series) {
  ModelMetadata meta;
  meta.fit_method = method;
  meta.log_likelihood = ll;
  meta.data_fingerprint = data_fingerprint(series);
  meta.channels = series.channels;
  return meta;
}

void check_model_matches(const ModelParams& params, const ModelMetadata& meta, const ObservationSeries& series,
                         std::ostream& err) {
  if (params.n_channels() != series.n_channels())
    throw InputError("model has " + std::to_string(params.n_channels()) + " channels, series has " +
                     std::to_string(series.n_channels()));
  if (!meta.channels.empty() && meta.channels != series.channels)
    err << "warning: series channel names differ from the ones the model was fitted on\n";
}

// ---------------------------------------------------------------- ingest

int cmd_ingest(Command& cmd, std::ostream& out, std::ostream& err) {
  const json cfg = resolve(cmd, err);
  apply_jobs(cfg);
  RunRecord run(cmd.name, cfg);
  const auto format = get<std::string>(cfg, "format");
  ObservationSeries series;
  if (format == "fcd") {
    const auto input = get<std::string>(cfg, "input");
    if (input.empty()) throw ConfigError("fcd ingest needs an input file");
    run.input(input);
    series = ingest_fcd_csv(input, FcdSchema::from_json(cfg.at("columns")));
  } else if (format == "smartphone") {
    const auto leader = get<std::string>(cfg, "leader");
    const auto follower = get<std::string>(cfg, "follower");
    if (leader.empty() || follower.empty()) throw ConfigError("smartphone ingest needs --leader and --follower");
    run.input(leader);
    run.input(follower);
    series = ingest_smartphone_pair(leader, follower, SensorLogSchema::from_json(cfg.at("sensor_columns")),
                                    AlignConfig::from_json(cfg.at("align")));
  } else {
    throw ConfigError("format must be 'fcd' or 'smartphone'");
  }
  const double new_interval = get<double>(cfg, "resample");
  if (new_interval > 0.0) series = resample(series, new_interval);

  const auto name = get<std::string>(cfg, "output");
  fs::path meta_name = name;
  meta_name.replace_extension(".json");
  run.write(name, series_to_csv(series));
  run.write(meta_name.string(), series_metadata_json(series));
  run.write_manifest();

  out << "rows " << series.length() << ", sample interval " << format_short(series.sample_interval) << " s\n";
  out << pad("channel", 8) << pad("mean", 12) << pad("sd", 12) << pad("min", 12) << pad("max", 12) << "\n";
  for (Eigen::Index n = 0; n < series.n_channels(); ++n) {
    const auto col = series.data.col(n);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    out << pad(series.channels[static_cast<std::size_t>(n)], 8) << pad(format_short(mean), 12)
        << pad(format_short(sd), 12) << pad(format_short(col.minCoeff()), 12) << pad(format_short(col.maxCoeff()), 12)
        << "\n";
  }
  for (const auto& f : series.flags) err << "flag: " << f << "\n";
  return kSuccess;
}

void setup_ingest(Command& cmd) {
  auto& d = cmd.defaults;
  d["format"] = "fcd";
  d["input"] = "";
  d["leader"] = "";
  d["follower"] = "";
  d["columns"] = {{"time", "time"}, {"v", "v"}, {"dv", "dv"}, {"h", "h"}};
  d["sensor_columns"] = {{"timestamp", "timestamp"}, {"lat", "lat"}, {"lon", "lon"}, {"speed", "speed"},
                         {"heading", "heading"}};
  d["align"] = {{"tolerance", 0.5}, {"rate_hz", 1.0}, {"smoothing_window", 1}};
  d["resample"] = 0.0;
  d["output"] = "series.csv";
  cmd.option<std::string>("--format", "format", "fcd or smartphone");
  cmd.option<std::string>("input", "input", "FCD csv file");
  cmd.option<std::string>("--leader", "leader", "leader sensor log");
  cmd.option<std::string>("--follower", "follower", "follower sensor log");
  cmd.option<std::string>("--time-col", "columns.time", "FCD time column");
  cmd.option<std::string>("--v-col", "columns.v", "FCD follower speed column");
  cmd.option<std::string>("--dv-col", "columns.dv", "FCD speed difference column");
  cmd.option<std::string>("--h-col", "columns.h", "FCD gap column");
  cmd.option<std::string>("--a-col", "columns.a", "FCD acceleration column (derived when absent)");
  cmd.option<double>("--tolerance", "align.tolerance", "leader/follower join tolerance in seconds");
  cmd.option<double>("--rate", "align.rate_hz", "aligned sampling rate in Hz");
  cmd.option<int>("--smoothing", "align.smoothing_window", "moving-average window (1 = off)");
  cmd.option<double>("--resample", "resample", "decimate to this sample interval in seconds");
  cmd.option<std::string>("--output", "output", "series file name inside the output directory");
}

// -------------------------------------------------------------- simulate

int cmd_simulate(Command& cmd, std::ostream& out, std::ostream& err) {
  const json cfg = resolve(cmd, err);
  apply_jobs(cfg);
  RunRecord run(cmd.name, cfg);
  const auto model_path = get<std::string>(cfg, "model");
  if (model_path.empty()) throw ConfigError("simulate needs --model");
  run.input(model_path);
  ModelMetadata meta;
  const ModelParams params = load_model(model_path, &meta);
  std::vector<std::string> channels = string_list(cfg, "channels");
  if (channels.empty()) channels = meta.channels;
  const auto sim = simulate(params, get<Eigen::Index>(cfg, "length"), get<std::uint64_t>(cfg, "seed"),
                            get<Eigen::Index>(cfg, "burn_in"), get<double>(cfg, "dt"), channels);
  run.write("series.csv", series_to_csv(sim.series));
  run.write("series.json", series_metadata_json(sim.series));
  run.write("states.csv", states_to_csv(sim.true_states, sim.series.timestamps));
  run.write_manifest();
  const auto stability = spectral_check(params);
  for (std::size_t m = 0; m < stability.size(); ++m)
    out << "regime " << m + 1 << ": spectral radius " << format_short(stability[m].spectral_radius)
        << (stability[m].stable ? " (stable)" : " (unstable)") << "\n";
  out << "simulated " << sim.series.length() << " rows\n";
  return kSuccess;
}

void setup_simulate(Command& cmd) {
  auto& d = cmd.defaults;
  d["model"] = "";
  d["length"] = 1000;
  d["burn_in"] = 100;
  d["dt"] = 1.0;
  d["channels"] = json::array();
  cmd.option<std::string>("-m,--model", "model", "model JSON");
  cmd.option<Eigen::Index>("-n,--length", "length", "rows to emit");
  cmd.option<Eigen::Index>("--burn-in", "burn_in", "discarded leading rows");
  cmd.option<double>("--dt", "dt", "sample interval in seconds");
  cmd.option<std::string>("--channels", "channels", "comma-separated channel names");
}

// ------------------------------------------------------------------- fit

GibbsConfig gibbs_from(const json& cfg) {
  GibbsConfig g;
  g.n_samples = get<int>(cfg, "samples");
  g.burn_in = get<int>(cfg, "burn_in");
  g.thin = get<int>(cfg, "thin");
  g.n_chains = get<int>(cfg, "chains");
  g.seed = get<std::uint64_t>(cfg, "seed");
  g.prior.coeff_mean = get<double>(cfg, "prior.coeff_mean");
  g.prior.coeff_sd = get<double>(cfg, "prior.coeff_sd");
  g.prior.gamma_shape = get<double>(cfg, "prior.gamma_shape");
  g.prior.gamma_rate = get<double>(cfg, "prior.gamma_rate");
  g.prior.dirichlet = get<double>(cfg, "prior.dirichlet");
  g.require_valid();
  return g;
}

void write_fit_outputs(RunRecord& run, const FitResult& fit, const ObservationSeries& series, const json& extra,
                       std::ostream& out) {
  json doc = model_to_json(fit.params, metadata_for(fit.method, fit.probs.log_likelihood, series));
  for (auto it = extra.begin(); it != extra.end(); ++it) doc[it.key()] = it.value();
  run.write("model.json", doc.dump(2) + "\n");
  run.write("probabilities.csv", probabilities_to_csv(fit.probs, fit.classification, series.timestamps));
  const auto report = regime_report(fit.classification, fit.params.transition, series.sample_interval);
  run.write("report.json", report_to_json(report).dump(2) + "\n");
  run.write("report.csv", report_to_csv(report));
  out << "log-likelihood " << format_short(fit.probs.log_likelihood) << "\n";
  print_report(report, out);
}

int cmd_fit(Command& cmd, std::ostream& out, std::ostream& err) {
  const json cfg = resolve(cmd, err);
  apply_jobs(cfg);
  RunRecord run(cmd.name, cfg);
  const auto input = get<std::string>(cfg, "input");
  if (input.empty()) throw ConfigError("fit needs an input series");
  run.series_input(input);
  const auto series = read_series(input);
  const auto spec = spec_from(cfg, series, get<int>(cfg, "lags"), get<int>(cfg, "regimes"));
  const auto method = get<std::string>(cfg, "method");
  FitResult fit;
  if (method == "em") {
    fit = fit_em(series, spec, em_from(cfg));
    json extra;
    extra["em_trace"] = fit.trace.log_likelihood;
    extra["em"] = trace_to_json(fit.trace);
    extra["em"].erase("log_likelihood");
    write_fit_outputs(run, fit, series, extra, out);
    out << "EM " << (fit.converged ? "converged" : "did not converge") << " after " << fit.trace.iterations
        << " iterations (best restart " << fit.trace.best_restart << ")\n";
  } else if (method == "gibbs") {
    const auto g = gibbs_from(cfg);
    auto result = fit_gibbs(series, spec, g);
    fit = std::move(result.fit);
    json extra;
    extra["gibbs"] = {{"kept_draws", result.samples.values.rows()},
                      {"chains", g.n_chains},
                      {"acceptance_rate", result.samples.acceptance_rate}};
    write_fit_outputs(run, fit, series, extra, out);
    run.write("chain.csv", chain_to_csv(result.samples));
    run.write("summary.json", summary_to_json(result.samples.summary).dump(2) + "\n");
    out << "Gibbs kept " << result.samples.values.rows() << " draws\n";
  } else {
    throw ConfigError("method must be 'em' or 'gibbs'");
  }
  run.write_manifest();
  print_warnings(fit.warnings, err);
  if (fit.degenerate) err << "warning: degenerate fit (constant channel)\n";
  if (!fit.converged) {
    err << "error: estimation did not converge; outputs were written and flagged\n";
    return kNonConvergence;
  }
  return kSuccess;
}

void setup_fit(Command& cmd) {
  auto& d = cmd.defaults;
  d["input"] = "";
  d["method"] = "em";
  d["samples"] = 5000;
  d["burn_in"] = 1000;
  d["thin"] = 2;
  d["chains"] = 1;
  d["prior"] = {{"coeff_mean", 0.0}, {"coeff_sd", 10.0}, {"gamma_shape", 2.0}, {"gamma_rate", 1.0}, {"dirichlet", 1.0}};
  cmd.option<std::string>("input", "input", "canonical series CSV");
  cmd.option<std::string>("--method", "method", "em or gibbs");
  cmd.option<int>("-p,--lags", "lags", "lag order p");
  cmd.option<int>("-M,--regimes", "regimes", "number of regimes M");
  add_spec_options(cmd);
  add_em_options(cmd);
  cmd.option<int>("--samples", "samples", "Gibbs sweeps per chain, burn-in included");
  cmd.option<int>("--burn-in", "burn_in", "Gibbs burn-in sweeps");
  cmd.option<int>("--thin", "thin", "keep every n-th sweep");
  cmd.option<int>("--chains", "chains", "independent Gibbs chains");
  cmd.option<double>("--prior-coeff-sd", "prior.coeff_sd", "prior sd of each coefficient");
  cmd.option<double>("--prior-gamma-shape", "prior.gamma_shape", "gamma prior shape on precisions");
  cmd.option<double>("--prior-gamma-rate", "prior.gamma_rate", "gamma prior rate on precisions");
  cmd.option<double>("--prior-dirichlet", "prior.dirichlet", "Dirichlet concentration of transition rows");
}

// ------------------------------------------------------ classify, report

int cmd_classify(Command& cmd, std::ostream& out, std::ostream& err) {
  const json cfg = resolve(cmd, err);
  apply_jobs(cfg);
  RunRecord run(cmd.name, cfg);
  const auto model_path = get<std::string>(cfg, "model");
  const auto input = get<std::string>(cfg, "input");
  if (model_path.empty() || input.empty()) throw ConfigError("classify needs --model and an input series");
  run.input(model_path);
  run.series_input(input);
  ModelMetadata meta;
  const auto params = load_model(model_path, &meta);
  const auto series = read_series(input);
  check_model_matches(params, meta, series, err);
  ScopedWarningSink sink;
  const auto probs = infer_regimes(series, params);
  const auto labels = classify(probs.smoothed);
  run.write("probabilities.csv", probabilities_to_csv(probs, labels, series.timestamps));
  const auto report = regime_report(labels, params.transition, series.sample_interval);
  run.write("report.json", report_to_json(report).dump(2) + "\n");
  run.write("report.csv", report_to_csv(report));
  run.write_manifest();
  out << "log-likelihood " << format_short(probs.log_likelihood) << "\n";
  print_report(report, out);
  print_warnings(sink.take(), err);
  return kSuccess;
}

void setup_classify(Command& cmd) {
  cmd.defaults["model"] = "";
  cmd.defaults["input"] = "";
  cmd.option<std::string>("-m,--model", "model", "model JSON");
  cmd.option<std::string>("input", "input", "canonical series CSV");
}

int cmd_report(Command& cmd, std::ostream& out, std::ostream& err) {
  const json cfg = resolve(cmd, err);
  apply_jobs(cfg);
  RunRecord run(cmd.name, cfg);
  const auto model_path = get<std::string>(cfg, "model");
  if (model_path.empty()) throw ConfigError("report needs --model");
  run.input(model_path);
  ModelMetadata meta;
  const auto params = load_model(model_path, &meta);
  const auto input = get<std::string>(cfg, "input");
  if (!input.empty()) {
    run.series_input(input);
    const auto series = read_series(input);
    check_model_matches(params, meta, series, err);
    const auto labels = classify(infer_regimes(series, params).smoothed);
    const auto report = regime_report(labels, params.transition, series.sample_interval);
    run.write("report.json", report_to_json(report).dump(2) + "\n");
    run.write("report.csv", report_to_csv(report));
    print_report(report, out);
  } else {
    const double dt = get<double>(cfg, "dt");
    json j;
    j["sample_interval"] = dt;
    json rows = json::array();
    out << pad("regime", 7) << pad("P_ii", 10) << pad("E[D] steps", 12) << pad("E[D] s", 10) << "\n";
    for (int m = 0; m < params.n_regimes(); ++m) {
      const double d = expected_duration(params.transition, m);
      rows.push_back({{"regime", m + 1},
                      {"stay_probability", params.transition(m, m)},
                      {"expected_duration_steps", std::isfinite(d) ? json(d) : json(nullptr)},
                      {"expected_duration_seconds", std::isfinite(d) ? json(d * dt) : json(nullptr)}});
      out << pad(std::to_string(m + 1), 7) << pad(format_short(params.transition(m, m)), 10)
          << pad(format_short(d), 12) << pad(format_short(d * dt), 10) << "\n";
    }
    j["regimes"] = rows;
    run.write("durations.json", j.dump(2) + "\n");
  }
  run.write_manifest();
  return kSuccess;
}

void setup_report(Command& cmd) {
  cmd.defaults["model"] = "";
  cmd.defaults["input"] = "";
  cmd.defaults["dt"] = 1.0;
  cmd.option<std::string>("-m,--model", "model", "model JSON");
  cmd.option<std::string>("input", "input", "canonical series CSV (optional)");
  cmd.option<double>("--dt", "dt", "sample interval for durations in seconds when no series is given");
}

// -------------------------------------------------------------- forecast

int cmd_forecast(Command& cmd, std::ostream& out, std::ostream& err) {
  const json cfg = resolve(cmd, err);
  apply_jobs(cfg);
  RunRecord run(cmd.name, cfg);
  const auto model_path = get<std::string>(cfg, "model");
  const auto input = get<std::string>(cfg, "input");
  if (model_path.empty() || input.empty()) throw ConfigError("forecast needs --model and an input series");
  run.input(model_path);
  run.series_input(input);
  ModelMetadata meta;
  const auto params = load_model(model_path, &meta);
  const auto series = read_series(input);
  check_model_matches(params, meta, series, err);
  const int steps = get<int>(cfg, "steps");
  ForecastOptions opts;
  opts.exact_mixture = get<bool>(cfg, "exact");
  opts.interval_level = get<double>(cfg, "level");
  const auto compare = string_list(cfg, "compare");
  const bool holdout = get<bool>(cfg, "holdout") || !compare.empty();
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (holdout && steps >= series.length() - params.lags())
    throw InputError("horizon " + std::to_string(steps) + " exceeds the available holdout (" +
                     std::to_string(series.length() - params.lags() - 1) + " rows)");

  const Eigen::Index origin = holdout ? series.length() - steps : series.length();
  const auto history = series.slice(0, origin);
  const auto fc = forecast(history, params, steps, opts);
  run.write("forecast.csv", forecast_to_csv(fc));
  run.write("forecast.json", forecast_to_json(fc).dump(2) + "\n");

  if (holdout) {
    std::vector<NamedModel> models{{fs::path(model_path).stem().string(), params}};
    for (const auto& path : compare) {
      run.input(path);
      ModelMetadata other_meta;
      auto other = load_model(path, &other_meta);
      check_model_matches(other, other_meta, series, err);
      std::string name = fs::path(path).stem().string();
      for (const auto& m : models)
        if (m.name == name) name = path;
      models.push_back({name, std::move(other)});
    }
    ComparisonTable table;
    if (models.size() >= 2) {
      table = compare_models(series, models, steps, opts);
    } else {
      table.horizon = steps;
      table.rows.push_back({models.front().name, evaluate_mse(fc, series.data.bottomRows(steps))});
    }
    run.write("comparison.csv", comparison_to_csv(table));
    run.write("comparison.json", comparison_to_json(table).dump(2) + "\n");
    out << "mean squared error over " << steps << " held-out steps\n" << pad("model", 16);
    for (const auto& c : table.rows.front().errors.channels) out << pad(c, 12);
    out << pad("total", 12) << "\n";
    for (const auto& row : table.rows) {
      out << pad(row.model, 16);
      for (double v : row.errors.mse) out << pad(format_short(v), 12);
      out << pad(format_short(row.errors.total()), 12) << "\n";
    }
  } else {
    out << pad("h", 4) << pad("channel", 8) << pad("point", 12) << pad("lo", 12) << pad("hi", 12) << "\n";
    for (int h = 0; h < fc.horizon(); ++h)
      for (std::size_t n = 0; n < fc.channels.size(); ++n) {
        const auto& st = fc.steps[static_cast<std::size_t>(h)];
        const auto i = static_cast<Eigen::Index>(n);
        out << pad(std::to_string(h + 1), 4) << pad(fc.channels[n], 8) << pad(format_short(st.point(i)), 12)
            << pad(format_short(st.lower(i)), 12) << pad(format_short(st.upper(i)), 12) << "\n";
      }
  }
  if (get<bool>(cfg, "emit_plot_data"))
    run.write("plot_data.csv", plot_data_csv(series, origin, fc, get<Eigen::Index>(cfg, "context")));
  run.write_manifest();
  return kSuccess;
}

void setup_forecast(Command& cmd) {
  auto& d = cmd.defaults;
  d["model"] = "";
  d["input"] = "";
  d["steps"] = 9;
  d["compare"] = json::array();
  d["holdout"] = false;
  d["exact"] = false;
  d["level"] = 0.95;
  d["emit_plot_data"] = false;
  d["context"] = 50;
  cmd.option<std::string>("-m,--model", "model", "model JSON");
  cmd.option<std::string>("input", "input", "canonical series CSV");
  cmd.option<int>("-n,--steps", "steps", "forecast horizon");
  cmd.option<std::vector<std::string>>("--compare", "compare", "further model JSON files scored on the same holdout");
  cmd.flag("--holdout", "holdout", "forecast the final `steps` rows from the prefix and score them");
  cmd.flag("--exact", "exact", "enumerate all regime paths (steps <= 6)");
  cmd.option<double>("--level", "level", "central interval level");
  cmd.flag("--emit-plot-data", "emit_plot_data", "write observed vs predicted per channel");
  cmd.option<Eigen::Index>("--context", "context", "observed rows before the forecast origin in plot data");
}

// ---------------------------------------------------------------- select

int cmd_select(Command& cmd, std::ostream& out, std::ostream& err) {
  const json cfg = resolve(cmd, err);
  apply_jobs(cfg);
  RunRecord run(cmd.name, cfg);
  const auto input = get<std::string>(cfg, "input");
  if (input.empty()) throw ConfigError("select needs an input series");
  run.series_input(input);
  const auto series = read_series(input);
  const auto lags = parse_range(range_text(cfg, "lags"));
  const auto regimes = parse_range(range_text(cfg, "regimes"));
  const auto criterion = parse_criterion(get<std::string>(cfg, "criterion"));
  const ModelSpec tmpl = spec_from(cfg, series, lags.front(), 1);
  const auto grid = grid_search(series, lags, regimes, tmpl, em_from(cfg));

  run.write("grid.csv", grid_to_csv(grid));
  run.write("loglik_table.csv", loglik_table_csv(grid));
  for (int m : regimes) {
    SelectionGrid curve;
    curve.lag_values = lags;
    curve.regime_values = {m};
    curve.t_eff = grid.t_eff;
    for (int p : lags) curve.cells.push_back(grid.at(p, m));
    run.write("lag_curve_M" + std::to_string(m) + ".csv", lag_curve_to_csv(curve));
  }
  run.write("best.json", best_cell_json(grid, criterion).dump(2) + "\n");
  const int best = grid.best(criterion);
  int code = kSuccess;
  if (best >= 0) {
    const auto& cell = grid.cells[static_cast<std::size_t>(best)];
    json doc = model_to_json(*cell.params, metadata_for("em", cell.log_likelihood,
                                                        series.slice(grid.lag_values.back() - cell.lags,
                                                                     series.length() - (grid.lag_values.back() - cell.lags))));
    run.write("best_model.json", doc.dump(2) + "\n");
    if (cell.status == CellStatus::nonconverged) code = kNonConvergence;
  }
  run.write_manifest();

  out << "log-likelihood by regimes (rows) and lags (columns), " << grid.t_eff << " shared rows\n" << pad("M", 4);
  for (int p : lags) out << pad("p=" + std::to_string(p), 12);
  out << "\n";
  for (int m : regimes) {
    out << pad(std::to_string(m), 4);
    for (int p : lags) {
      const auto& c = grid.at(p, m);
      out << pad(c.status == CellStatus::failed ? std::string("failed") : format_short(c.log_likelihood), 12);
    }
    out << "\n";
  }
  if (best >= 0) {
    const auto& cell = grid.cells[static_cast<std::size_t>(best)];
    out << "best by " << to_string(criterion) << ": p=" << cell.lags << ", M=" << cell.regimes << " ("
        << format_short(cell.score(criterion)) << ")\n";
  }
  print_warnings(grid.warnings, err);
  if (best < 0) {
    err << "error: every grid cell failed\n";
    return kNumericalError;
  }
  return code;
}

void setup_select(Command& cmd) {
  auto& d = cmd.defaults;
  d["input"] = "";
  d["criterion"] = "bic";
  cmd.option<std::string>("input", "input", "canonical series CSV");
  cmd.option<std::string>("--criterion", "criterion", "aic, bic, hqc or loglik");
  add_spec_options(cmd);
  add_em_options(cmd);
  d["lags"] = "1..5";
  d["regimes"] = "2..6";
  cmd.option<std::string>("-p,--lags", "lags", "lag range, e.g. 1..5");
  cmd.option<std::string>("-M,--regimes", "regimes", "regime range, e.g. 2..6");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Markov-switching VAR toolkit for car-following data", "msvar"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help, void (*setup)(Command&)) {
    auto cmd = std::make_unique<Command>();
    cmd->name = name;
    cmd->app = app.add_subcommand(name, help);
    add_common(*cmd);
    setup(*cmd);
    commands.push_back(std::move(cmd));
  };
  add("ingest", "convert FCD or smartphone logs to a canonical series", setup_ingest);
  add("simulate", "draw a synthetic series from a model", setup_simulate);
  add("fit", "estimate a model by EM or Gibbs sampling", setup_fit);
  add("classify", "regime probabilities and classification for a series", setup_classify);
  add("report", "regime durations and occupancy", setup_report);
  add("forecast", "multi-step mixture forecasts and holdout comparison", setup_forecast);
  add("select", "lag/regime grid search by information criteria", setup_select);

  std::vector<const char*> argv{"msvar"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInputError;
  }

  try {
    for (auto& cmd : commands) {
      if (!cmd->app->parsed()) continue;
      if (cmd->name == "ingest") return cmd_ingest(*cmd, out, err);
      if (cmd->name == "simulate") return cmd_simulate(*cmd, out, err);
      if (cmd->name == "fit") return cmd_fit(*cmd, out, err);
      if (cmd->name == "classify") return cmd_classify(*cmd, out, err);
      if (cmd->name == "report") return cmd_report(*cmd, out, err);
      if (cmd->name == "forecast") return cmd_forecast(*cmd, out, err);
      if (cmd->name == "select") return cmd_select(*cmd, out, err);
    }
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kInputError;
}

}  // namespace msvar::cli
