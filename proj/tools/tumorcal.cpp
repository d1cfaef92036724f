// tumorcal command-line front end. Every subcommand wraps one library workflow and writes
// machine-readable files only. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tumorcal/tumorcal.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tumorcal;

namespace {

// Posterior means of the wet-lab calibration; defaults for simulate and generate.
const ModelParams kEtaMeans{0.437, 0.106, 0.196, 1.731, 5.315, 0.106, 6.93};
const ModelParams kSMeans{0.435, 0.103, 0.186, 1.74, 4.731, 0.104, kUnusedAlpha};
constexpr std::pair<double, double> kDefaultSigma2{0.0355, 0.2410};

/// Bad flag values discovered after parsing (prior specs, inconsistent combinations).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------------------------
// JSON configuration

/// Top-level scalars bind to the selected subcommand unless the main app owns the option. An object
/// keyed by a subcommand name binds only when that subcommand runs. CLI11 skips options already
/// given on the command line, so flags override the file.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json out = json::object();
    auto dump = [&](const CLI::App* a, json& dst) {
      for (const CLI::Option* opt : a->get_options()) {
        if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
        const std::string& name = opt->get_lnames().front();
        if (name == "help" || name == "config" || name == "dump-config") continue;
        std::vector<std::string> values = opt->results();
        if (values.empty() && default_also && !opt->get_default_str().empty()) values = {opt->get_default_str()};
        if (values.empty()) continue;
        json v = values.size() == 1 ? scalar(values.front(), opt->get_expected_min() == 0) : json(values);
        dst[name] = v;
      }
    };
    dump(app, out);
    for (const CLI::App* sub : app->get_subcommands()) {
      json section = json::object();
      dump(sub, section);
      out[sub->get_name()] = section;
    }
    return out.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& ex) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + ex.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    const auto selected = app_->get_subcommands();
    const std::string active = selected.empty() ? std::string() : selected.front()->get_name();
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        if (app_->get_subcommand_no_throw(key) == nullptr) throw CLI::ConversionError("config section '" + key + "' names no subcommand");
        if (key != active) continue;
        for (const auto& [name, v] : value.items()) {
          require_option(selected.front(), name);
          append(items, {key}, name, v);
        }
      } else {
        std::vector<std::string> parents;
        if (!active.empty() && app_->get_option_no_throw("--" + key) == nullptr) {
          require_option(selected.front(), key);
          parents = {active};
        }
        append(items, parents, key, value);
      }
    }
    return items;
  }

 private:
  static void require_option(const CLI::App* sub, const std::string& name) {
    if (sub->get_option_no_throw("--" + name) == nullptr) {
      throw CLI::ConversionError("config key '" + name + "' is not an option of " + sub->get_name());
    }
  }

  static json scalar(const std::string& s, bool flag) {
    if (flag) return s == "true" || s == "1";
    try {
      std::size_t used = 0;
      const long long i = std::stoll(s, &used);
      if (used == s.size()) return i;
      const double x = std::stod(s, &used);
      if (used == s.size()) return x;
    } catch (const std::exception&) {
    }
    return s;
  }

  static std::string text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be strings, numbers, booleans or arrays of those");
  }

  static void append(std::vector<CLI::ConfigItem>& items, std::vector<std::string> parents, const std::string& name, const json& v) {
    if (v.is_null()) return;
    CLI::ConfigItem item;
    item.parents = std::move(parents);
    item.name = name;
    if (v.is_array()) {
      for (const auto& x : v) item.inputs.push_back(text(x));
    } else {
      item.inputs.push_back(text(v));
    }
    items.push_back(std::move(item));
  }

  const CLI::App* app_;
};

// ---------------------------------------------------------------------------------------------
// Shared option groups

struct ParamFlags {
  std::optional<double> beta, lambda, lambda_st, capacity, shape_m, s_thr, alpha_s;

  void add_to(CLI::App* sub) {
    sub->add_option("--beta", beta, "Maximal proliferation rate (1/day)");
    sub->add_option("--lambda", lambda, "Death rate (1/day)");
    sub->add_option("--lambda-st", lambda_st, "Starvation death rate (1/day)");
    sub->add_option("--K", capacity, "Carrying capacity");
    sub->add_option("--m", shape_m, "Contact-inhibition exponent");
    sub->add_option("--s-thr", s_thr, "Nutrient sensitivity threshold");
    sub->add_option("--alpha-s", alpha_s, "Stress response rate (m_eta only)");
  }

  ModelParams resolve(ModelId model) const {
    ModelParams p = model == ModelId::m_eta ? kEtaMeans : kSMeans;
    if (beta) p.beta = *beta;
    if (lambda) p.lambda = *lambda;
    if (lambda_st) p.lambda_st = *lambda_st;
    if (capacity) p.capacity = *capacity;
    if (shape_m) p.shape_m = *shape_m;
    if (s_thr) p.s_thr = *s_thr;
    if (alpha_s) p.alpha_s = *alpha_s;
    p.validate();
    return p;
  }
};

struct SmcFlags {
  SmcConfig cfg;
  std::string resampling = "multinomial";

  void add_to(CLI::App* sub) {
    sub->add_option("--particles", cfg.particle_count, "Ensemble size P")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--tau", cfg.resample_fraction, "Resample when ESS < tau P")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    sub->add_option("--mcmc-updates", cfg.mcmc_updates_per_step, "MCMC sweeps per step")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sub->add_option("--workers", cfg.workers, "Worker threads (results do not depend on it)")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--resampling", resampling, "Resampling scheme")->capture_default_str()->check(CLI::IsMember({"multinomial", "systematic"}));
  }

  SmcConfig resolve() const {
    SmcConfig c = cfg;
    c.resampling = resampling == "systematic" ? ResamplingScheme::systematic : ResamplingScheme::multinomial;
    return c;
  }
};

struct LayoutFlags {
  std::vector<std::string> priors;
  std::string fixed_sigma;

  void add_to(CLI::App* sub, bool with_sigma) {
    sub->add_option("--prior", priors,
                    "Prior override NAME=uniform:LO,HI | NAME=triangular:LO,MODE,HI | NAME=fixed:VALUE (repeatable)");
    if (with_sigma) sub->add_option("--fixed-sigma", fixed_sigma, "JSON file with sigma2_d14 and sigma2_d5 (from precalibrate)");
  }
};

std::vector<double> parse_numbers(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("cannot read number '" + tok + "' in " + what);
    }
  }
  return out;
}

void apply_prior_overrides(CalibrationLayout& layout, const std::vector<std::string>& specs) {
  for (const std::string& spec : specs) {
    const auto eq = spec.find('='), colon = spec.find(':');
    if (eq == std::string::npos || colon == std::string::npos || colon < eq) throw UsageError("malformed --prior '" + spec + "'");
    const std::string name = spec.substr(0, eq), kind = spec.substr(eq + 1, colon - eq - 1);
    const std::vector<double> args = parse_numbers(spec.substr(colon + 1), "--prior " + spec);
    Param id;
    try {
      id = parse_param(name);
    } catch (const std::invalid_argument& ex) {
      throw UsageError(ex.what());
    }
    auto slot = std::find_if(layout.free.begin(), layout.free.end(), [&](const FreeParameter& f) { return f.id == id; });
    try {
      if (kind == "fixed") {
        if (args.size() != 1) throw UsageError("--prior " + spec + ": fixed takes one value");
        if (slot != layout.free.end()) layout.free.erase(slot);
        layout.fixed[static_cast<std::size_t>(id)] = args[0];
        continue;
      }
      MarginalPrior prior;
      if (kind == "uniform" && args.size() == 2) {
        prior = MarginalPrior::uniform(args[0], args[1]);
      } else if (kind == "triangular" && args.size() == 3) {
        prior = MarginalPrior::triangular(args[0], args[1], args[2]);
      } else {
        throw UsageError("--prior " + spec + ": expected uniform:LO,HI or triangular:LO,MODE,HI");
      }
      if (slot == layout.free.end()) throw UsageError("--prior " + spec + ": " + name + " is not calibrated in this layout");
      slot->prior = prior;
    } catch (const DomainError& ex) {
      throw UsageError("--prior " + spec + ": " + ex.what());
    }
  }
}

std::pair<double, double> read_sigma_file(const std::string& path) {
  if (path.empty()) return kDefaultSigma2;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sigma file " + path);
  try {
    const json j = json::parse(in);
    return {j.at("sigma2_d14").get<double>(), j.at("sigma2_d5").get<double>()};
  } catch (const json::exception& ex) {
    throw DataError("sigma file " + path + ": " + ex.what());
  }
}

// ---------------------------------------------------------------------------------------------
// File helpers

fs::path sidecar_path(const std::string& csv) { return fs::path(csv).replace_extension(".json"); }

Dataset load_dataset(const std::string& path) {
  if (path.empty()) throw UsageError("--data is required");
  Dataset ds = load_csv(path);
  const fs::path side = sidecar_path(path);
  if (fs::exists(side)) {
    std::ifstream in(side);
    try {
      ds.provenance = provenance_from_json(json::parse(in));
    } catch (const json::exception& ex) {
      throw DataError("provenance " + side.string() + ": " + ex.what());
    }
  }
  return ds;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(12);
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
}

std::vector<double> time_grid(double horizon, double dt) {
  if (!(horizon > 0.0) || !(dt > 0.0)) throw UsageError("time horizon and step must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  std::vector<double> t(n + 1);
  for (std::size_t i = 0; i <= n; ++i) t[i] = horizon * static_cast<double>(i) / static_cast<double>(n);
  return t;
}

/// q-quantile of a weighted sample: smallest value whose cumulative weight reaches q.
double weighted_quantile(std::vector<std::pair<double, double>> vw, double q) {
  std::sort(vw.begin(), vw.end());
  double total = 0.0;
  for (const auto& [_, w] : vw) total += w;
  double acc = 0.0;
  for (const auto& [v, w] : vw) {
    acc += w;
    if (acc >= q * total) return v;
  }
  return vw.back().first;
}

struct Logger {
  bool quiet = false;
  template <class... A>
  void operator()(const char* fmt, A... args) const {
    if (quiet) return;
    if constexpr (sizeof...(A) == 0) {
      std::fputs(fmt, stderr);
    } else {
      std::fprintf(stderr, fmt, args...);
    }
    std::fputc('\n', stderr);
  }
};

// ---------------------------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string model = "m_eta";
  double s0 = 1.0, v0 = 1.0, eta0 = 0.0, days = 7.0, dt = 0.1;
  ParamFlags params;
  bool list_steady_states = false;
  std::string out = "-";
};

void write_simulation(std::ostream& out, const Trajectory& tr) {
  out << std::setprecision(12) << "t,V,eta\n";
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    out << tr.times[i] << ',' << tr.v_values[i] << ',';
    if (tr.eta_values) out << (*tr.eta_values)[i];
    out << '\n';
  }
}

int cmd_simulate(const SimulateOptions& o) {
  const ModelId model = parse_model_id(o.model);
  const ModelParams p = o.params.resolve(model);
  const ExperimentCondition c{o.s0, o.v0, o.eta0, o.days};
  c.validate();
  std::ofstream file;
  if (o.out != "-") file = open_out(o.out);
  std::ostream& out = o.out == "-" ? std::cout : file;
  if (o.list_steady_states) {
    json states = json::array();
    for (const auto& s : steady_states(model, p, c).states) {
      json j{{"V", s.v_bar}, {"stability", s.stability == Stability::stable ? "stable" : "unstable"}};
      if (s.eta_bar) j["eta"] = *s.eta_bar;
      states.push_back(j);
    }
    out << json{{"model", o.model}, {"s0", o.s0}, {"states", states}}.dump(2) << "\n";
    return 0;
  }
  const std::vector<double> times = time_grid(o.days, o.dt);
  write_simulation(out, solve(model, p, c, times));
  return 0;
}

// ---------------------------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string model = "m_eta";
  ParamFlags params;
  double n_d14 = 0.243, n_d5 = 0.182;
  double sigma2_d14 = kDefaultSigma2.first, sigma2_d5 = kDefaultSigma2.second;
  std::uint64_t seed = 1;
  bool no_d6 = false;
  int replicates = kReplicates;
  std::string out;
};

int cmd_generate(const GenerateOptions& o, const Logger& log) {
  SyntheticSpec spec;
  spec.model = parse_model_id(o.model);
  spec.params = o.params.resolve(spec.model);
  spec.d14 = {{o.n_d14}, {o.sigma2_d14}};
  spec.d5 = {{o.n_d5}, {o.sigma2_d5}};
  for (const auto* g : {&spec.d14, &spec.d5}) {
    g->map.validate();
    g->noise.validate();
  }
  spec.seed = o.seed;
  spec.include_d6 = !o.no_d6;
  spec.replicates = o.replicates;
  const Dataset ds = generate_synthetic(spec);
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  write_csv(o.out, ds);
  write_json(sidecar_path(o.out), provenance_json(ds.provenance));
  log("generated %zu measurements into %s", ds.size(), o.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------------------------
// calibrate

struct CalibrateOptions {
  std::string model = "m_eta";
  SmcFlags smc;
  LayoutFlags layout;
  std::string data, out;
  std::string schedule = "standard";
  std::size_t repeats = 1;
  std::string checkpoint;
  std::size_t stop_after = 0;
  std::size_t bins = 40;
  std::size_t scatter_points = 1000;
  std::size_t band_particles = 500;
  double band_dt = 0.25;
};

SchedulePlan parse_plan(const std::string& s) { return s == "by_time_only" ? SchedulePlan::by_time_only : SchedulePlan::standard; }

/// Per-particle values of every summarized quantity (free components, then derived ones).
struct QuantityTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
  std::vector<std::optional<std::pair<double, double>>> support;
};

QuantityTable quantity_table(const CalibrationLayout& layout, const ParticleEnsemble& e) {
  QuantityTable t;
  for (const auto& f : layout.free) {
    t.names.emplace_back(param_name(f.id));
    t.support.emplace_back(std::make_pair(f.prior.lower, f.prior.upper));
  }
  for (const char* d : {"lambda", "lambda_st", "n_d5"}) {
    t.names.emplace_back(d);
    t.support.emplace_back(std::nullopt);
  }
  t.values.assign(t.names.size(), std::vector<double>(e.count));
  for (std::size_t p = 0; p < e.count; ++p) {
    const auto x = e.position(p);
    for (std::size_t j = 0; j < layout.dim(); ++j) t.values[j][p] = x[j];
    const Realization r = realize(layout.expand(x));
    t.values[layout.dim()][p] = r.params.lambda;
    t.values[layout.dim() + 1][p] = r.params.lambda_st;
    t.values[layout.dim() + 2][p] = r.d5.map.n_scale;
  }
  return t;
}

void write_posterior(const fs::path& dir, const CalibrationLayout& layout, const ParticleEnsemble& e) {
  std::ofstream out = open_out(dir / "posterior.csv");
  out << "particle,weight,log_likelihood";
  for (const auto& f : layout.free) out << ',' << param_name(f.id);
  out << '\n';
  const auto w = e.weights();
  for (std::size_t p = 0; p < e.count; ++p) {
    out << p << ',' << w[p] << ',' << e.log_likelihood[p];
    for (double x : e.position(p)) out << ',' << x;
    out << '\n';
  }
}

void write_evidence(const fs::path& dir, const SmcRun& run, const std::vector<DataBatch>& schedule) {
  std::ofstream ev = open_out(dir / "evidence.csv");
  ev << "step,batch,log_evidence_increment,log_evidence\n";
  for (std::size_t k = 0; k < run.evidence.size(); ++k) {
    ev << k + 1 << ",\"" << (k < schedule.size() ? schedule[k].label : "") << "\"," << run.evidence.increments[k] << ','
       << run.evidence.cumulative[k] << '\n';
  }
  std::ofstream dg = open_out(dir / "diagnostics.csv");
  dg << "step,ess,resampled,acceptance,rho,log_evidence\n";
  for (const auto& d : run.diagnostics) {
    dg << d.step << ',' << d.ess << ',' << (d.resampled ? 1 : 0) << ',' << d.acceptance << ',' << d.rho << ',' << d.log_evidence << '\n';
  }
}

void write_histograms(const fs::path& dir, const QuantityTable& t, const std::vector<double>& w, std::size_t bins) {
  std::ofstream out = open_out(dir / "histograms.csv");
  out << "parameter,bin,lower,upper,density\n";
  for (std::size_t q = 0; q < t.names.size(); ++q) {
    const auto& v = t.values[q];
    double lo, hi;
    if (t.support[q]) {
      std::tie(lo, hi) = *t.support[q];
    } else {
      lo = *std::min_element(v.begin(), v.end());
      hi = *std::max_element(v.begin(), v.end());
      if (!(hi > lo)) hi = lo + 1.0;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<double> mass(bins, 0.0);
    for (std::size_t p = 0; p < v.size(); ++p) {
      const auto b = static_cast<std::size_t>(std::clamp((v[p] - lo) / width, 0.0, static_cast<double>(bins - 1)));
      mass[b] += w[p];
    }
    for (std::size_t b = 0; b < bins; ++b) {
      out << t.names[q] << ',' << b << ',' << lo + width * b << ',' << lo + width * (b + 1) << ',' << mass[b] / width << '\n';
    }
  }
}

void write_scatter(const fs::path& dir, const CalibrationLayout& layout, const ParticleEnsemble& e, std::size_t points) {
  std::ofstream out = open_out(dir / "scatter.csv");
  for (std::size_t j = 0; j < layout.dim(); ++j) out << (j ? "," : "") << param_name(layout.free[j].id);
  out << '\n';
  std::vector<std::size_t> idx(e.count);
  std::iota(idx.begin(), idx.end(), 0);
  if (points > 0 && points < e.count) {
    Rng rng = make_stream(e.seed, e.step, 1, StreamTag::predictive);
    idx = resample_indices(e.weights(), points, ResamplingScheme::systematic, rng);
  }
  for (std::size_t p : idx) {
    const auto x = e.position(p);
    for (std::size_t j = 0; j < x.size(); ++j) out << (j ? "," : "") << x[j];
    out << '\n';
  }
}

/// Noise-free intensity bands n V(t) per calibration condition.
void write_bands(const fs::path& dir, const CalibrationLayout& layout, const ParticleEnsemble& e, const CalibrateOptions& o) {
  std::ofstream out = open_out(dir / "bands.csv");
  out << "dataset,s0,v0,t,mean,q05,q50,q95\n";
  const std::vector<double> times = time_grid(7.0, o.band_dt);
  for (const auto& row : standard_design()) {
    if (!is_calibration_set(row.id)) continue;
    for (double v0 : row.v0s) {
      const PredictiveSample s = posterior_predictive(layout, e, layout.model, row.id, v0, times, {}, o.band_particles, o.smc.cfg.workers);
      for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<std::pair<double, double>> vw;
        double mean = 0.0, total = 0.0;
        for (std::size_t p = 0; p < s.weights.size(); ++p) {
          vw.emplace_back(s.values[k][p], s.weights[p]);
          mean += s.weights[p] * s.values[k][p];
          total += s.weights[p];
        }
        out << to_string(row.id) << ',' << row.s0 << ',' << v0 << ',' << times[k] << ',' << mean / total << ','
            << weighted_quantile(vw, 0.05) << ',' << weighted_quantile(vw, 0.50) << ',' << weighted_quantile(vw, 0.95) << '\n';
      }
    }
  }
}

json summary_json(const PosteriorSummary& s, const SmcRun& run) {
  json params = json::object();
  for (std::size_t i = 0; i < s.names.size(); ++i) params[s.names[i]] = {{"mean", s.mean[i]}, {"sd", std::sqrt(s.variance[i])}};
  return {{"log_evidence", run.evidence.log_evidence()}, {"ess", s.ess}, {"steps", run.ensemble.step}, {"parameters", params}};
}

json smc_json(const SmcConfig& c) {
  return {{"particles", c.particle_count},
          {"tau", c.resample_fraction},
          {"mcmc_updates", c.mcmc_updates_per_step},
          {"seed", c.seed},
          {"resampling", c.resampling == ResamplingScheme::systematic ? "systematic" : "multinomial"}};
}

/// One SMC run with optional checkpointing. A present checkpoint must match seed, size and layout.
SmcRun run_with_checkpoint(const CalibrationLayout& layout, const TumorLikelihood& lik, const SmcConfig& cfg, std::size_t steps,
                           const std::string& checkpoint, const Logger& log, const std::string& tag,
                           std::optional<SmcRun> start = std::nullopt) {
  if (!checkpoint.empty() && fs::exists(checkpoint)) {
    SmcRun saved = load_checkpoint(checkpoint);
    const ParticleEnsemble& e = saved.ensemble;
    if (e.seed != cfg.seed || e.count != cfg.particle_count || e.dim != layout.dim()) {
      throw DataError("checkpoint " + checkpoint + " was written by a run with a different seed, particle count or layout");
    }
    log("[%s] resuming from %s at step %zu", tag.c_str(), checkpoint.c_str(), e.step);
    start = std::move(saved);
  }
  const auto priors = layout.priors();
  const auto began = std::chrono::steady_clock::now();
  auto on_step = [&](const SmcRun& s) {
    const StepDiagnostics& d = s.diagnostics.back();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - began).count();
    log("[%s] step %zu/%zu ess=%.0f acc=%.3f logZ=%.4f (%.1fs)", tag.c_str(), d.step, steps, d.ess, d.acceptance, d.log_evidence, secs);
    if (!checkpoint.empty()) save_checkpoint(checkpoint, s);
  };
  return run(priors, lik, steps, cfg, std::move(start), on_step);
}

struct RepeatStats {
  std::vector<std::string> names;
  std::vector<std::vector<double>> per_run;  // [quantity][run]
};

void write_repeats(const fs::path& dir, const RepeatStats& r, json& summary) {
  std::ofstream out = open_out(dir / "repeats.csv");
  out << "quantity,mean,sd,lower,upper";
  for (std::size_t k = 0; k < r.per_run.front().size(); ++k) out << ",run_" << k + 1;
  out << '\n';
  json js = json::object();
  for (std::size_t q = 0; q < r.names.size(); ++q) {
    const auto& v = r.per_run[q];
    const double n = static_cast<double>(v.size());
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    out << r.names[q] << ',' << mu << ',' << sd << ',' << mu - 1.96 * sd << ',' << mu + 1.96 * sd;
    for (double x : v) out << ',' << x;
    out << '\n';
    js[r.names[q]] = {{"mean", mu}, {"sd", sd}, {"lower", mu - 1.96 * sd}, {"upper", mu + 1.96 * sd}};
  }
  summary["repeats"] = js;
}

int cmd_calibrate(const CalibrateOptions& o, const Logger& log) {
  const ModelId model = parse_model_id(o.model);
  if (o.repeats == 0) throw UsageError("--repeats must be at least 1");
  CalibrationLayout layout = default_layout(model, false, read_sigma_file(o.layout.fixed_sigma));
  apply_prior_overrides(layout, o.layout.priors);
  const Dataset data = load_dataset(o.data);
  const std::vector<DataBatch> schedule = build_schedule(data, parse_plan(o.schedule));
  const TumorLikelihood lik(layout, schedule);
  const std::size_t steps = o.stop_after > 0 ? std::min(o.stop_after, schedule.size()) : schedule.size();
  const fs::path dir(o.out);
  fs::create_directories(dir);

  const SmcConfig base = o.smc.resolve();
  RepeatStats stats;
  std::optional<SmcRun> primary;
  for (std::size_t r = 0; r < o.repeats; ++r) {
    SmcConfig cfg = base;
    cfg.seed = base.seed + r;
    const std::string ck = o.checkpoint.empty() || o.repeats == 1 ? o.checkpoint : o.checkpoint + "." + std::to_string(r + 1);
    SmcRun result = run_with_checkpoint(layout, lik, cfg, steps, ck, log, o.model + " seed " + std::to_string(cfg.seed));
    const PosteriorSummary s = summarize(layout, result.ensemble);
    if (stats.names.empty()) {
      stats.names = s.names;
      stats.names.push_back("log_evidence");
      stats.per_run.resize(stats.names.size());
    }
    for (std::size_t q = 0; q < s.names.size(); ++q) stats.per_run[q].push_back(s.mean[q]);
    stats.per_run.back().push_back(result.evidence.log_evidence());
    if (r == 0) primary = std::move(result);
  }

  const ParticleEnsemble& e = primary->ensemble;
  const PosteriorSummary s = summarize(layout, e);
  write_posterior(dir, layout, e);
  write_evidence(dir, *primary, schedule);
  write_histograms(dir, quantity_table(layout, e), e.weights(), std::max<std::size_t>(o.bins, 1));
  write_scatter(dir, layout, e, o.scatter_points);
  write_bands(dir, layout, e, o);
  json summary = summary_json(s, *primary);
  summary["model"] = o.model;
  if (o.repeats > 1) write_repeats(dir, stats, summary);
  write_json(dir / "summary.json", summary);
  save_checkpoint((dir / "ensemble.json").string(), *primary);
  write_json(dir / "run.json", {{"schema", "tumorcal.run.v1"},
                                {"command", "calibrate"},
                                {"layout", layout_to_json(layout)},
                                {"smc", smc_json(base)},
                                {"data", o.data},
                                {"schedule", o.schedule},
                                {"repeats", o.repeats}});
  log("log evidence %.4f, ESS %.0f; outputs in %s", primary->evidence.log_evidence(), s.ess, o.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------------------------
// precalibrate

struct PrecalibrateOptions {
  SmcFlags smc;
  LayoutFlags layout;
  std::string data, out;
  std::size_t repeats = 1;
};

int cmd_precalibrate(const PrecalibrateOptions& o, const Logger& log) {
  if (o.repeats == 0) throw UsageError("--repeats must be at least 1");
  const Dataset data = load_dataset(o.data);
  const std::vector<DataBatch> schedule = build_schedule(data);
  CalibrationLayout eta = default_layout(ModelId::m_eta, true), ms = default_layout(ModelId::m_s, true);
  apply_prior_overrides(eta, o.layout.priors);
  apply_prior_overrides(ms, o.layout.priors);
  const TumorLikelihood lik_eta(eta, schedule), lik_s(ms, schedule);
  const auto alpha = eta.index_of(Param::alpha_s);
  // Both models start from one prior sample when their layouts differ only by alpha_s.
  bool shared = alpha.has_value() && eta.dim() == ms.dim() + 1;
  for (std::size_t j = 0, k = 0; shared && j < eta.dim(); ++j) {
    if (j == *alpha) continue;
    shared = eta.free[j].id == ms.free[k].id && eta.free[j].prior.lower == ms.free[k].prior.lower &&
             eta.free[j].prior.upper == ms.free[k].prior.upper && eta.free[j].prior.mode == ms.free[k].prior.mode &&
             eta.free[j].prior.kind == ms.free[k].prior.kind;
    ++k;
  }

  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::ofstream csv = open_out(dir / "precalibration.csv");
  csv << "model,seed,sigma2_d14,sigma2_d5,log_evidence\n";
  json runs = json::array();
  double sum14 = 0.0, sum5 = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < o.repeats; ++r) {
    SmcConfig cfg = o.smc.resolve();
    cfg.seed += r;
    SmcRun start_eta;
    start_eta.ensemble = initialize(eta.priors(), cfg);
    std::optional<SmcRun> start_s;
    if (shared) {
      start_s.emplace();
      start_s->ensemble = drop_component(start_eta.ensemble, *alpha);
    }
    const std::string seed = std::to_string(cfg.seed);
    const SmcRun run_eta = run_with_checkpoint(eta, lik_eta, cfg, schedule.size(), "", log, "m_eta seed " + seed, start_eta);
    const SmcRun run_s = run_with_checkpoint(ms, lik_s, cfg, schedule.size(), "", log, "m_s seed " + seed, start_s);
    for (const auto& [name, layout, result] : {std::tuple{"m_eta", &eta, &run_eta}, std::tuple{"m_s", &ms, &run_s}}) {
      const PosteriorSummary s = summarize(*layout, result->ensemble);
      const double s14 = summary_value(s, "sigma2_d14"), s5 = summary_value(s, "sigma2_d5");
      sum14 += s14;
      sum5 += s5;
      ++n;
      csv << name << ',' << cfg.seed << ',' << s14 << ',' << s5 << ',' << result->evidence.log_evidence() << '\n';
      runs.push_back({{"model", name}, {"seed", cfg.seed}, {"sigma2_d14", s14}, {"sigma2_d5", s5}, {"log_evidence", result->evidence.log_evidence()}});
    }
  }
  const double avg14 = sum14 / static_cast<double>(n), avg5 = sum5 / static_cast<double>(n);
  write_json(dir / "sigma.json", {{"sigma2_d14", avg14}, {"sigma2_d5", avg5}, {"runs", runs}});
  log("averaged sigma^2: D1:4 %.5f, D5 %.5f", avg14, avg5);
  return 0;
}

// ---------------------------------------------------------------------------------------------
// compare and validate

struct LoadedRun {
  CalibrationLayout layout;
  SmcRun run;
};

LoadedRun load_run(const std::string& dir) {
  const json meta = read_json(fs::path(dir) / "run.json");
  LoadedRun r;
  try {
    r.layout = layout_from_json(meta.at("layout"));
  } catch (const json::exception& ex) {
    throw DataError(dir + "/run.json: " + ex.what());
  }
  r.run = load_checkpoint((fs::path(dir) / "ensemble.json").string());
  if (r.run.ensemble.dim != r.layout.dim()) throw DataError(dir + ": ensemble does not match its layout");
  return r;
}

struct CompareOptions {
  std::string eta, s, data, out;
  std::size_t predictive_particles = 1000;
  std::size_t workers = 1;
};

/// Per-time validation metrics between replicate data and the noisy posterior predictive.
MetricGrid metric_grid(const LoadedRun& r, const Dataset& data, std::size_t particles, std::size_t workers) {
  std::map<std::pair<DatasetId, double>, std::map<double, std::vector<double>>> cells;
  for (const auto& m : data.measurements) {
    if (is_calibration_set(m.dataset)) cells[{m.dataset, m.v0}][m.t].push_back(m.intensity);
  }
  MetricGrid grid;
  for (const auto& [key, by_time] : cells) {
    std::vector<double> times;
    for (const auto& [t, _] : by_time) times.push_back(t);
    const PredictiveSample s =
        posterior_predictive(r.layout, r.run.ensemble, r.layout.model, key.first, key.second, times, {}, particles, workers, true);
    auto& metrics = grid[key];
    for (std::size_t k = 0; k < times.size(); ++k) {
      metrics.push_back(validation_metric(make_ecdf_pair(by_time.at(times[k]), s.values[k], s.weights)));
    }
  }
  return grid;
}

std::string opt_cell(const std::optional<double>& x) {
  if (!x) return "";
  std::ostringstream s;
  s << std::setprecision(12) << *x;
  return s.str();
}

int cmd_compare(const CompareOptions& o, const Logger& log) {
  const LoadedRun eta = load_run(o.eta), ms = load_run(o.s);
  const Dataset data = load_dataset(o.data);
  const fs::path dir(o.out);
  fs::create_directories(dir);

  const auto steps = bayes_factor(eta.run.evidence, ms.run.evidence);
  std::ofstream bf = open_out(dir / "bayes_factor.csv");
  bf << "step,log10_factor,strength,verdict\n";
  for (const auto& st : steps) bf << st.step << ',' << st.log10_factor << ',' << to_string(st.strength) << ',' << st.label() << '\n';

  const MetricGrid ge = metric_grid(eta, data, o.predictive_particles, o.workers);
  const MetricGrid gs = metric_grid(ms, data, o.predictive_particles, o.workers);
  std::ofstream mc = open_out(dir / "metrics.csv");
  mc << "dataset,v0,t,metric_eta,metric_s\n";
  for (const auto& [key, me] : ge) {
    std::vector<double> times;
    for (const auto& m : data.measurements) {
      if (m.dataset == key.first && m.v0 == key.second) times.push_back(m.t);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const auto& msv = gs.at(key);
    for (std::size_t k = 0; k < me.size(); ++k) mc << to_string(key.first) << ',' << key.second << ',' << times[k] << ',' << me[k] << ',' << msv[k] << '\n';
  }

  const RatioTable t = metric_ratio_table(ge, gs);
  std::ofstream rt = open_out(dir / "ratio_table.csv");
  rt << "dataset";
  for (double c : t.columns) rt << ",v0=" << c;
  rt << ",average\n";
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    rt << to_string(t.rows[r]);
    json cells = json::array();
    for (const auto& c : t.cells[r]) {
      rt << ',' << opt_cell(c);
      cells.push_back(c ? json(*c) : json(nullptr));
    }
    rt << ',' << opt_cell(t.row_average[r]) << '\n';
    rows.push_back({{"dataset", to_string(t.rows[r])}, {"cells", cells}, {"average", t.row_average[r] ? json(*t.row_average[r]) : json(nullptr)}});
  }
  rt << "average";
  json col_avg = json::array();
  for (const auto& c : t.column_average) {
    rt << ',' << opt_cell(c);
    col_avg.push_back(c ? json(*c) : json(nullptr));
  }
  rt << ',' << opt_cell(t.overall) << '\n';
  write_json(dir / "ratio_table.json",
             {{"columns", t.columns}, {"rows", rows}, {"column_average", col_avg}, {"overall", t.overall ? json(*t.overall) : json(nullptr)}});

  const BayesFactorStep& last = steps.back();
  write_json(dir / "summary.json", {{"log10_bayes_factor", last.log10_factor},
                                    {"strength", to_string(last.strength)},
                                    {"verdict", last.label()},
                                    {"model_1", "m_eta"},
                                    {"model_2", "m_s"},
                                    {"metric_ratio_overall", t.overall ? json(*t.overall) : json(nullptr)}});
  log("log10 Z(m_eta:m_s) = %.3f (%s)", last.log10_factor, last.label().c_str());
  return 0;
}

struct ValidateOptions {
  std::string run, data, out;
  double dt = 0.1;
};

json coverage_json(const CoverageCounts& c) {
  return {{"count", c.total()}, {"below", c.percent_below()}, {"within", c.percent_within()}, {"above", c.percent_above()}};
}

int cmd_validate(const ValidateOptions& o, const Logger& log) {
  const LoadedRun r = load_run(o.run);
  const Dataset data = load_dataset(o.data);
  const Realization mean = posterior_mean_realization(r.layout, r.run.ensemble);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  json report;

  // Calibration data against the calibrated model at the posterior mean.
  const Dataset calibration = filter(data, {DatasetId::d1, DatasetId::d2, DatasetId::d3, DatasetId::d4, DatasetId::d5});
  if (calibration.size() == 0) throw DataError("data set has no D1-D5 measurements");
  const auto cov = coverage_report(calibration, predict_density(r.layout.model, mean.params, calibration.measurements), mean.d14, mean.d5);
  std::ofstream cc = open_out(dir / "coverage.csv");
  cc << "dataset,v0,t,below,within,above\n";
  for (const auto& [key, c] : cov.cells) {
    cc << to_string(std::get<0>(key)) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << c.below << ',' << c.within << ','
       << c.above << '\n';
  }
  json per = json::object();
  for (const auto& [id, c] : cov.per_dataset) per[to_string(id)] = coverage_json(c);
  report["calibration_coverage"] = {{"model", std::string(to_string(r.layout.model))}, {"per_dataset", per}, {"overall", coverage_json(cov.overall)}};

  // D6 against the limit model with the posterior-mean beta, lambda, K, m.
  const Dataset d6 = filter(data, {DatasetId::d6});
  if (d6.size() > 0) {
    const ModelParams& p = mean.params;
    const double n = mean.d14.map.n_scale;
    std::ofstream lm = open_out(dir / "limit_model.csv");
    lm << "v0,t,V,lower,upper\n";
    for (double v0 : design_row(DatasetId::d6).v0s) {
      const std::vector<double> times = time_grid(static_cast<double>(design_row(DatasetId::d6).last_day), o.dt);
      const Trajectory tr = solve(ModelId::m_opt, p, ExperimentCondition{1.0, v0, 0.0, times.back()}, times);
      for (std::size_t k = 0; k < times.size(); ++k) {
        const Interval range = uncertainty_range(tr.v_values[k], ObservationMap{1.0}, mean.d14.noise);
        lm << v0 << ',' << times[k] << ',' << tr.v_values[k] << ',' << range.lower << ',' << range.upper << '\n';
      }
    }
    std::ofstream dd = open_out(dir / "d6_data.csv");
    dd << "v0,t,replicate,intensity,scaled\n";
    for (const auto& m : d6.measurements) dd << m.v0 << ',' << m.t << ',' << m.replicate << ',' << m.intensity << ',' << m.intensity / n << '\n';
    const auto d6cov = coverage_report(d6, predict_density(ModelId::m_opt, p, d6.measurements), mean.d14, mean.d5);
    report["d6_coverage"] = coverage_json(d6cov.overall);
    report["limit_model"] = {{"beta", p.beta}, {"lambda", p.lambda}, {"K", p.capacity}, {"m", p.shape_m}, {"n_d14", n}};
  } else {
    log("no D6 measurements; skipping the limit-model comparison");
  }
  write_json(dir / "validation.json", report);
  log("calibration coverage within 90%% range: %.1f%%", cov.overall.percent_within());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian calibration of tumor spheroid growth models"};
  app.fallthrough();
  app.allow_config_extras(false);
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON configuration file; command-line flags take precedence");
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config, "Print the effective configuration as JSON and exit")->configurable(false);
  Logger log;
  app.add_flag("-q,--quiet", log.quiet, "Suppress progress messages");

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Solve one growth model and write t,V,eta");
  c_sim->add_option("--model", sim.model, "Growth model")->capture_default_str()->check(CLI::IsMember({"m_opt", "m_s", "m_eta"}));
  c_sim->add_option("--s0", sim.s0, "Nutrient saturation")->capture_default_str();
  c_sim->add_option("--v0", sim.v0, "Initial density")->capture_default_str();
  c_sim->add_option("--eta0", sim.eta0, "Initial stress level (m_eta)")->capture_default_str();
  c_sim->add_option("--days", sim.days, "Time horizon")->capture_default_str();
  c_sim->add_option("--dt", sim.dt, "Output spacing")->capture_default_str();
  c_sim->add_flag("--list-steady-states", sim.list_steady_states, "Write the steady states as JSON instead of a trajectory");
  c_sim->add_option("--out", sim.out, "Output file, - for stdout")->capture_default_str();
  sim.params.add_to(c_sim);

  GenerateOptions gen;
  auto* c_gen = app.add_subcommand("generate", "Draw a synthetic data set over the standard design");
  c_gen->add_option("--model", gen.model, "Generating model")->capture_default_str()->check(CLI::IsMember({"m_opt", "m_s", "m_eta"}));
  gen.params.add_to(c_gen);
  c_gen->add_option("--n-d14", gen.n_d14, "Intensity scale for D1-D4 and D6")->capture_default_str();
  c_gen->add_option("--n-d5", gen.n_d5, "Intensity scale for D5")->capture_default_str();
  c_gen->add_option("--sigma2-d14", gen.sigma2_d14, "Noise variance for D1-D4 and D6")->capture_default_str();
  c_gen->add_option("--sigma2-d5", gen.sigma2_d5, "Noise variance for D5")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  c_gen->add_flag("--no-d6", gen.no_d6, "Omit the D6 validation set");
  c_gen->add_option("--replicates", gen.replicates, "Replicates per cell")->capture_default_str()->check(CLI::PositiveNumber);
  c_gen->add_option("--out", gen.out, "Output CSV; provenance goes next to it as .json")->required();

  PrecalibrateOptions pre;
  auto* c_pre = app.add_subcommand("precalibrate", "Calibrate both models with the noise variances free and average them");
  pre.smc.add_to(c_pre);
  pre.layout.add_to(c_pre, false);
  c_pre->add_option("--data", pre.data, "Measurement CSV")->required();
  c_pre->add_option("--out", pre.out, "Output directory")->required();
  c_pre->add_option("--repeats", pre.repeats, "Runs per model (seeds seed..seed+R-1)")->capture_default_str();

  CalibrateOptions cal;
  auto* c_cal = app.add_subcommand("calibrate", "Run SMC calibration and write posterior, evidence and plot data");
  c_cal->add_option("--model", cal.model, "Model to calibrate")->capture_default_str()->check(CLI::IsMember({"m_s", "m_eta"}));
  cal.smc.add_to(c_cal);
  cal.layout.add_to(c_cal, true);
  c_cal->add_option("--data", cal.data, "Measurement CSV")->required();
  c_cal->add_option("--out", cal.out, "Output directory")->required();
  c_cal->add_option("--schedule", cal.schedule, "Batch schedule")->capture_default_str()->check(CLI::IsMember({"standard", "by_time_only"}));
  c_cal->add_option("--repeats", cal.repeats, "Independent runs (seeds seed..seed+R-1); reports mean +/- 1.96 sd")->capture_default_str();
  c_cal->add_option("--checkpoint", cal.checkpoint, "Checkpoint file; resumed when present, rewritten after every step");
  c_cal->add_option("--stop-after", cal.stop_after, "Stop after this many steps (0 runs the whole schedule)")->capture_default_str();
  c_cal->add_option("--bins", cal.bins, "Histogram bins per parameter")->capture_default_str();
  c_cal->add_option("--scatter-points", cal.scatter_points, "Particles drawn for the pairwise scatter file")->capture_default_str();
  c_cal->add_option("--band-particles", cal.band_particles, "Particles drawn for trajectory bands")->capture_default_str();
  c_cal->add_option("--band-dt", cal.band_dt, "Time spacing of trajectory bands")->capture_default_str();

  CompareOptions cmp;
  auto* c_cmp = app.add_subcommand("compare", "Bayes factor per step and validation-metric ratios of two calibrations");
  c_cmp->add_option("--eta", cmp.eta, "calibrate output directory for m_eta")->required();
  c_cmp->add_option("--s", cmp.s, "calibrate output directory for m_s")->required();
  c_cmp->add_option("--data", cmp.data, "Measurement CSV")->required();
  c_cmp->add_option("--out", cmp.out, "Output directory")->required();
  c_cmp->add_option("--predictive-particles", cmp.predictive_particles, "Particles drawn for predictive ECDFs")->capture_default_str();
  c_cmp->add_option("--workers", cmp.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  ValidateOptions val;
  auto* c_val = app.add_subcommand("validate", "Limit-model check against D6 and coverage of the calibration data");
  c_val->add_option("--run", val.run, "calibrate output directory")->required();
  c_val->add_option("--data", val.data, "Measurement CSV")->required();
  c_val->add_option("--out", val.out, "Output directory")->required();
  c_val->add_option("--dt", val.dt, "Time spacing of the limit-model curve")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (dump_config) {
    std::cout << app.config_to_str(true, false);
    return 0;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_gen->parsed()) return cmd_generate(gen, log);
    if (c_pre->parsed()) return cmd_precalibrate(pre, log);
    if (c_cal->parsed()) return cmd_calibrate(cal, log);
    if (c_cmp->parsed()) return cmd_compare(cmp, log);
    if (c_val->parsed()) return cmd_validate(val, log);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
