#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tumorcal/error.hpp"
#include "tumorcal/growth_models.hpp"
#include "tumorcal/noise_model.hpp"
#include "tumorcal/priors.hpp"
#include "tumorcal/random.hpp"

namespace tumorcal {

enum class DatasetId : std::uint8_t { d1 = 1, d2, d3, d4, d5, d6 };

inline std::string to_string(DatasetId id) { return "D" + std::to_string(static_cast<int>(id)); }

inline DatasetId parse_dataset_id(std::string_view s) {
  if (s.size() == 2 && (s[0] == 'D' || s[0] == 'd') && s[1] >= '1' && s[1] <= '6') return static_cast<DatasetId>(s[1] - '0');
  throw std::invalid_argument("unknown dataset id '" + std::string(s) + "'");
}

/// Experimental design per data set: nutrient saturation, seeding densities, last measurement day.
struct DesignRow {
  DatasetId id;
  double s0;
  std::vector<double> v0s;
  int last_day;
};

inline const std::vector<DesignRow>& standard_design() {
  static const std::vector<DesignRow> rows = {
      {DatasetId::d1, 1.00, {1.00, 0.50, 0.25}, 7},
      {DatasetId::d2, 0.75, {1.00, 0.50, 0.25}, 7},
      {DatasetId::d3, 0.50, {1.00, 0.50, 0.25}, 7},
      {DatasetId::d4, 0.25, {1.00, 0.50, 0.25}, 7},
      {DatasetId::d5, 0.00, {1.00, 0.50, 0.25}, 7},
      {DatasetId::d6, 1.00, {1.00, 0.50, 0.25, 0.10, 0.05}, 21},
  };
  return rows;
}

inline const DesignRow& design_row(DatasetId id) {
  for (const auto& r : standard_design()) {
    if (r.id == id) return r;
  }
  throw std::invalid_argument("no design row for " + to_string(id));
}

inline constexpr int kReplicates = 4;
inline constexpr std::array<double, 3> kCalibrationSeedings = {1.00, 0.50, 0.25};

inline bool is_calibration_set(DatasetId id) { return id != DatasetId::d6; }
/// D5 (no nutrients) has its own noise variance and proportionality constant.
inline bool uses_d5_group(DatasetId id) { return id == DatasetId::d5; }

/// One background-corrected fluorescence intensity.
struct Measurement {
  DatasetId dataset = DatasetId::d1;
  double s0 = 1.0;
  double v0 = 1.0;
  double t = 0.0;
  int replicate = 1;
  double intensity = 1.0;

  bool operator==(const Measurement&) const = default;
};

struct Provenance {
  std::string units = "V in 1e5 cells/mL; S as fraction of 10% FBS; t in days";
  std::optional<std::string> model;
  std::optional<ModelParams> params;
  std::optional<double> sigma2_d14, sigma2_d5, n_d14, n_d5;
  std::optional<std::uint64_t> seed;
};

struct Dataset {
  std::vector<Measurement> measurements;
  Provenance provenance;

  std::size_t size() const { return measurements.size(); }
};

struct DataBatch {
  std::string label;
  std::vector<Measurement> measurements;
};

namespace detail {

inline bool close(double a, double b) { return std::abs(a - b) < 1e-9; }

inline double parse_double(std::string_view s, std::size_t row, const char* column) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DataError(std::string("cannot parse ") + column + " '" + std::string(s) + "'", row);
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

}  // namespace detail

inline constexpr std::string_view kCsvHeader = "dataset,s0,v0,t,replicate,intensity";

/// Checks the design consistency of one measurement; `row` is used for error messages.
inline void validate_measurement(const Measurement& m, std::size_t row = 0) {
  if (!(m.intensity > 0.0)) throw DataError("intensity must be positive", row);
  const auto& d = design_row(m.dataset);
  if (!detail::close(m.s0, d.s0)) throw DataError("s0 does not match design of " + to_string(m.dataset), row);
  if (std::none_of(d.v0s.begin(), d.v0s.end(), [&](double v) { return detail::close(v, m.v0); })) {
    throw DataError("v0 does not match design of " + to_string(m.dataset), row);
  }
  if (!(m.t >= 0.0)) throw DataError("t must be non-negative", row);
  if (m.replicate < 1) throw DataError("replicate index must be >= 1", row);
}

inline Dataset parse_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: missing header");
  if (detail::trim(line) != kCsvHeader) throw DataError("header mismatch: expected '" + std::string(kCsvHeader) + "'", 1);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto cols = detail::split(text, ',');
    if (cols.size() != 6) throw DataError("expected 6 columns", row);
    Measurement m;
    try {
      m.dataset = parse_dataset_id(detail::trim(cols[0]));
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what(), row);
    }
    m.s0 = detail::parse_double(detail::trim(cols[1]), row, "s0");
    m.v0 = detail::parse_double(detail::trim(cols[2]), row, "v0");
    m.t = detail::parse_double(detail::trim(cols[3]), row, "t");
    m.replicate = static_cast<int>(detail::parse_double(detail::trim(cols[4]), row, "replicate"));
    m.intensity = detail::parse_double(detail::trim(cols[5]), row, "intensity");
    validate_measurement(m, row);
    ds.measurements.push_back(m);
  }
  return ds;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  out << kCsvHeader << '\n';
  out.precision(17);
  for (const auto& m : ds.measurements) {
    out << to_string(m.dataset) << ',' << m.s0 << ',' << m.v0 << ',' << m.t << ',' << m.replicate << ',' << m.intensity << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(out, ds);
}

inline nlohmann::json provenance_json(const Provenance& p) {
  nlohmann::json j;
  j["units"] = p.units;
  if (p.model) j["model"] = *p.model;
  if (p.params) {
    j["params"] = {{"beta", p.params->beta},     {"lambda", p.params->lambda}, {"lambda_st", p.params->lambda_st},
                   {"K", p.params->capacity},    {"m", p.params->shape_m},     {"s_thr", p.params->s_thr},
                   {"alpha_s", p.params->alpha_s}};
  }
  if (p.sigma2_d14) j["sigma2_d14"] = *p.sigma2_d14;
  if (p.sigma2_d5) j["sigma2_d5"] = *p.sigma2_d5;
  if (p.n_d14) j["n_d14"] = *p.n_d14;
  if (p.n_d5) j["n_d5"] = *p.n_d5;
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.units = j.value("units", p.units);
  if (j.contains("model")) p.model = j.at("model").get<std::string>();
  if (j.contains("params")) {
    const auto& q = j.at("params");
    auto at = [&](const char* key) { return q.at(key).get<double>(); };
    p.params = ModelParams{at("beta"), at("lambda"), at("lambda_st"), at("K"), at("m"), at("s_thr"), at("alpha_s")};
  }
  auto opt = [&](const char* key, std::optional<double>& dst) {
    if (j.contains(key)) dst = j.at(key).get<double>();
  };
  opt("sigma2_d14", p.sigma2_d14);
  opt("sigma2_d5", p.sigma2_d5);
  opt("n_d14", p.n_d14);
  opt("n_d5", p.n_d5);
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

enum class SchedulePlan {
  /// Outer loop over V0 in {1.00, 0.50, 0.25}, inner loop over days 0..7; D1-D5 only.
  standard,
  /// One batch per measurement day (ascending) over all measurements of the selected data set(s).
  by_time_only,
};

/// Splits the dataset into ordered, pairwise disjoint batches. For `by_time_only`, `only` restricts
/// the measurements to one data set.
inline std::vector<DataBatch> build_schedule(const Dataset& ds, SchedulePlan plan = SchedulePlan::standard,
                                             std::optional<DatasetId> only = std::nullopt) {
  std::vector<DataBatch> batches;
  if (plan == SchedulePlan::standard) {
    std::vector<std::string> missing;
    for (double v0 : kCalibrationSeedings) {
      for (int day = 0; day <= 7; ++day) {
        DataBatch b;
        std::ostringstream label;
        label << "V0=" << v0 << ",t=" << day;
        b.label = label.str();
        for (const auto& m : ds.measurements) {
          if (is_calibration_set(m.dataset) && detail::close(m.v0, v0) && detail::close(m.t, day)) b.measurements.push_back(m);
        }
        for (int id = 1; id <= 5; ++id) {
          const auto did = static_cast<DatasetId>(id);
          if (std::none_of(b.measurements.begin(), b.measurements.end(), [&](const Measurement& m) { return m.dataset == did; })) {
            missing.push_back(to_string(did) + "@" + b.label);
          }
        }
        batches.push_back(std::move(b));
      }
    }
    if (!missing.empty()) {
      std::string msg = "incomplete coverage for the default schedule; missing cells:";
      for (const auto& s : missing) msg += " " + s;
      throw DataError(msg);
    }
    return batches;
  }

  std::map<double, DataBatch> by_day;
  for (const auto& m : ds.measurements) {
    if (only && m.dataset != *only) continue;
    auto& b = by_day[m.t];
    b.measurements.push_back(m);
  }
  if (by_day.empty()) throw DataError("no measurements selected for the schedule");
  for (auto& [t, b] : by_day) {
    std::ostringstream label;
    label << "t=" << t;
    b.label = label.str();
    batches.push_back(std::move(b));
  }
  return batches;
}

struct DesignCell {
  DatasetId dataset;
  double s0;
  double v0;
  double t;
  int replicate;
};

/// Every (data set, V0, day, replicate) cell of the standard design for the chosen data sets.
inline std::vector<DesignCell> design_cells(bool include_d6 = true, int replicates = kReplicates) {
  std::vector<DesignCell> cells;
  for (const auto& row : standard_design()) {
    if (row.id == DatasetId::d6 && !include_d6) continue;
    for (double v0 : row.v0s) {
      for (int day = 0; day <= row.last_day; ++day) {
        for (int r = 1; r <= replicates; ++r) cells.push_back({row.id, row.s0, v0, static_cast<double>(day), r});
      }
    }
  }
  return cells;
}

struct SyntheticSpec {
  ModelId model = ModelId::m_eta;
  ModelParams params;
  ObservationGroup d14{{0.243}, {0.0355}};
  ObservationGroup d5{{0.182}, {0.2410}};
  std::uint64_t seed = 1;
  bool include_d6 = true;
  int replicates = kReplicates;
  SolverConfig solver{};
};

/// Draws I = n_group V_model(t; S0, V0) eps with eps ~ Gamma(1/sigma^2, 1/sigma^2) for every
/// design cell. Cells are generated in design order from one seeded stream.
inline Dataset generate_synthetic(const SyntheticSpec& spec, const std::vector<DesignCell>& cells) {
  spec.params.validate();
  Dataset ds;
  ds.provenance.model = std::string(to_string(spec.model));
  ds.provenance.params = spec.params;
  ds.provenance.sigma2_d14 = spec.d14.noise.sigma_sq;
  ds.provenance.sigma2_d5 = spec.d5.noise.sigma_sq;
  ds.provenance.n_d14 = spec.d14.map.n_scale;
  ds.provenance.n_d5 = spec.d5.map.n_scale;
  ds.provenance.seed = spec.seed;

  // Model solutions per (s0, v0) condition over all required days.
  std::map<std::pair<double, double>, std::map<double, double>> solutions;
  for (const auto& c : cells) solutions[{c.s0, c.v0}][c.t] = 0.0;
  for (auto& [key, values] : solutions) {
    std::vector<double> times;
    for (const auto& [t, _] : values) times.push_back(t);
    const ExperimentCondition cond{key.first, key.second, 0.0, times.back()};
    const Trajectory tr = solve(spec.model, spec.params, cond, times, spec.solver);
    for (std::size_t i = 0; i < times.size(); ++i) values[times[i]] = tr.v_values[i];
  }

  Rng rng = make_stream(spec.seed, 0, 0, StreamTag::generate);
  for (const auto& c : cells) {
    const ObservationGroup& g = uses_d5_group(c.dataset) ? spec.d5 : spec.d14;
    const double v = solutions[{c.s0, c.v0}][c.t];
    const double eps = sample_noise(g.noise, rng);
    double intensity = g.map.n_scale * v * eps;
    if (!(intensity > 0.0)) intensity = std::numeric_limits<double>::min();
    ds.measurements.push_back({c.dataset, c.s0, c.v0, c.t, c.replicate, intensity});
  }
  return ds;
}

inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  return generate_synthetic(spec, design_cells(spec.include_d6, spec.replicates));
}

/// Restricts a dataset to the given data sets, keeping row order.
inline Dataset filter(const Dataset& ds, const std::set<DatasetId>& keep) {
  Dataset out;
  out.provenance = ds.provenance;
  for (const auto& m : ds.measurements) {
    if (keep.count(m.dataset)) out.measurements.push_back(m);
  }
  return out;
}

}  // namespace tumorcal
