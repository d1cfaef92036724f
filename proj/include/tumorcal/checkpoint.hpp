#pragma once

// JSON persistence of an SMC run. Random streams are derived from (seed, step, particle, tag),
// so seed and step fully determine the generator state on resume. -inf is stored as null.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "tumorcal/error.hpp"
#include "tumorcal/priors.hpp"
#include "tumorcal/smc.hpp"

namespace tumorcal {

inline constexpr const char* kCheckpointSchema = "tumorcal.smc-checkpoint.v1";

namespace detail {

inline nlohmann::json encode_doubles(const std::vector<double>& xs) {
  nlohmann::json out = nlohmann::json::array();
  for (double x : xs) {
    if (std::isfinite(x)) {
      out.push_back(x);
    } else if (x == -std::numeric_limits<double>::infinity()) {
      out.push_back(nullptr);
    } else {
      throw DomainError("checkpoint: cannot encode non-finite value");
    }
  }
  return out;
}

inline std::vector<double> decode_doubles(const nlohmann::json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(x.is_null() ? -std::numeric_limits<double>::infinity() : x.get<double>());
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const SmcRun& run) {
  const ParticleEnsemble& e = run.ensemble;
  nlohmann::json j;
  j["schema"] = kCheckpointSchema;
  j["count"] = e.count;
  j["dim"] = e.dim;
  j["step"] = e.step;
  j["seed"] = e.seed;
  j["rho"] = e.rho;
  j["last_acceptance"] = e.last_acceptance ? nlohmann::json(*e.last_acceptance) : nlohmann::json(nullptr);
  j["positions"] = detail::encode_doubles(e.positions);
  j["log_weights"] = detail::encode_doubles(e.log_weights);
  j["log_likelihood"] = detail::encode_doubles(e.log_likelihood);
  j["scales"] = detail::encode_doubles(e.scales);
  j["evidence_increments"] = detail::encode_doubles(run.evidence.increments);
  nlohmann::json diag = nlohmann::json::array();
  for (const auto& d : run.diagnostics) {
    diag.push_back({{"step", d.step},
                    {"ess", d.ess},
                    {"resampled", d.resampled},
                    {"acceptance", d.acceptance},
                    {"rho", d.rho},
                    {"log_evidence_increment", d.log_evidence_increment},
                    {"log_evidence", d.log_evidence}});
  }
  j["diagnostics"] = diag;
  return j;
}

inline SmcRun run_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != kCheckpointSchema) throw DataError("checkpoint: unknown schema");
    SmcRun run;
    ParticleEnsemble& e = run.ensemble;
    e.count = j.at("count").get<std::size_t>();
    e.dim = j.at("dim").get<std::size_t>();
    e.step = j.at("step").get<std::size_t>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.rho = j.at("rho").get<double>();
    if (!j.at("last_acceptance").is_null()) e.last_acceptance = j.at("last_acceptance").get<double>();
    e.positions = detail::decode_doubles(j.at("positions"));
    e.log_weights = detail::decode_doubles(j.at("log_weights"));
    e.log_likelihood = detail::decode_doubles(j.at("log_likelihood"));
    e.scales = detail::decode_doubles(j.at("scales"));
    if (e.positions.size() != e.count * e.dim || e.log_weights.size() != e.count || e.log_likelihood.size() != e.count) {
      throw DataError("checkpoint: array sizes do not match count and dim");
    }
    for (double inc : detail::decode_doubles(j.at("evidence_increments"))) run.evidence.push(inc);
    for (const auto& d : j.at("diagnostics")) {
      run.diagnostics.push_back({d.at("step").get<std::size_t>(), d.at("ess").get<double>(), d.at("resampled").get<bool>(),
                                 d.at("acceptance").get<double>(), d.at("rho").get<double>(),
                                 d.at("log_evidence_increment").get<double>(), d.at("log_evidence").get<double>()});
    }
    return run;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("checkpoint: ") + ex.what());
  }
}

inline nlohmann::json layout_to_json(const CalibrationLayout& layout) {
  nlohmann::json j;
  j["model"] = std::string(to_string(layout.model));
  nlohmann::json free = nlohmann::json::array();
  for (const auto& f : layout.free) {
    free.push_back({{"name", std::string(param_name(f.id))},
                    {"kind", f.prior.kind == MarginalPrior::Kind::uniform ? "uniform" : "triangular"},
                    {"lower", f.prior.lower},
                    {"mode", f.prior.mode},
                    {"upper", f.prior.upper}});
  }
  j["free"] = free;
  nlohmann::json fixed = nlohmann::json::object();
  for (std::size_t i = 0; i < kParamCount; ++i) fixed[std::string(kParamNames[i])] = layout.fixed[i];
  j["fixed"] = fixed;
  return j;
}

inline CalibrationLayout layout_from_json(const nlohmann::json& j) {
  try {
    CalibrationLayout layout;
    layout.model = parse_model_id(j.at("model").get<std::string>());
    for (const auto& f : j.at("free")) {
      const std::string kind = f.at("kind").get<std::string>();
      const double lo = f.at("lower").get<double>(), hi = f.at("upper").get<double>();
      MarginalPrior prior;
      if (kind == "uniform") {
        prior = MarginalPrior::uniform(lo, hi);
      } else if (kind == "triangular") {
        prior = MarginalPrior::triangular(lo, f.at("mode").get<double>(), hi);
      } else {
        throw DataError("layout: unknown prior kind '" + kind + "'");
      }
      layout.free.push_back({parse_param(f.at("name").get<std::string>()), prior});
    }
    for (std::size_t i = 0; i < kParamCount; ++i) layout.fixed[i] = j.at("fixed").at(std::string(kParamNames[i])).get<double>();
    return layout;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("layout: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw DataError(std::string("layout: ") + ex.what());
  }
}

inline void save_checkpoint(const std::string& path, const SmcRun& run) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write checkpoint " + tmp);
    out << to_json(run).dump();
    if (!out) throw DataError("failed writing checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move checkpoint into place at " + path);
}

inline SmcRun load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("checkpoint " + path + ": " + ex.what());
  }
  return run_from_json(j);
}

}  // namespace tumorcal
