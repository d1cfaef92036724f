#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "tumorcal/calibration.hpp"
#include "tumorcal/dataset.hpp"

using namespace tumorcal;

namespace {

SyntheticSpec reference_spec(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.params = {0.437, 0.106, 0.196, 1.731, 5.315, 0.106, 6.93};
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST(Design, StandardTable) {
  const auto& d = standard_design();
  ASSERT_EQ(d.size(), 6u);
  EXPECT_EQ(design_row(DatasetId::d4).s0, 0.25);
  EXPECT_EQ(design_row(DatasetId::d5).s0, 0.0);
  EXPECT_EQ(design_row(DatasetId::d6).v0s.size(), 5u);
  EXPECT_EQ(design_row(DatasetId::d6).last_day, 21);
  EXPECT_EQ(design_cells(false).size(), 5u * 3 * 8 * 4);
  EXPECT_EQ(design_cells(true).size(), 5u * 3 * 8 * 4 + 5 * 22 * 4);
  EXPECT_EQ(parse_dataset_id("D3"), DatasetId::d3);
  EXPECT_THROW(parse_dataset_id("D7"), std::invalid_argument);
}

TEST(Schedule, DefaultPlanHasTwentyFourBatchesOfTwenty) {
  const Dataset ds = generate_synthetic(reference_spec());
  const auto batches = build_schedule(ds);
  ASSERT_EQ(batches.size(), 24u);
  for (const auto& b : batches) EXPECT_EQ(b.measurements.size(), 20u);
  for (const auto& m : batches[0].measurements) {
    EXPECT_EQ(m.v0, 1.0);
    EXPECT_EQ(m.t, 0.0);
  }
  EXPECT_EQ(batches[8].measurements[0].v0, 0.5);
  EXPECT_EQ(batches[23].measurements[0].t, 7.0);
}

TEST(Schedule, BatchesAreDisjointAndCoverCalibrationData) {
  const Dataset ds = generate_synthetic(reference_spec());
  std::set<std::tuple<int, double, double, int>> seen;
  for (const auto& b : build_schedule(ds)) {
    for (const auto& m : b.measurements) {
      EXPECT_NE(m.dataset, DatasetId::d6);
      EXPECT_TRUE(seen.insert({static_cast<int>(m.dataset), m.v0, m.t, m.replicate}).second);
    }
  }
  EXPECT_EQ(seen.size(), filter(ds, {DatasetId::d1, DatasetId::d2, DatasetId::d3, DatasetId::d4, DatasetId::d5}).size());
}

TEST(Schedule, TimeOnlyPlanForValidationSet) {
  const Dataset ds = generate_synthetic(reference_spec());
  const auto batches = build_schedule(ds, SchedulePlan::by_time_only, DatasetId::d6);
  ASSERT_EQ(batches.size(), 22u);
  for (const auto& b : batches) EXPECT_EQ(b.measurements.size(), 20u);
}

TEST(Schedule, MissingCellsAreReported) {
  Dataset ds = generate_synthetic(reference_spec());
  ds.measurements.erase(std::remove_if(ds.measurements.begin(), ds.measurements.end(),
                                       [](const Measurement& m) { return m.dataset == DatasetId::d3 && m.v0 == 0.5 && m.t == 4; }),
                        ds.measurements.end());
  try {
    build_schedule(ds);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("D3@V0=0.5,t=4"), std::string::npos) << e.what();
  }
}

TEST(Synthetic, DeterministicAndPositive) {
  const Dataset a = generate_synthetic(reference_spec(5));
  const Dataset b = generate_synthetic(reference_spec(5));
  const Dataset c = generate_synthetic(reference_spec(6));
  EXPECT_EQ(a.measurements, b.measurements);
  EXPECT_NE(a.measurements, c.measurements);
  for (const auto& m : a.measurements) EXPECT_GT(m.intensity, 0.0);
}

TEST(Synthetic, VanishingNoiseReproducesScaledModel) {
  SyntheticSpec spec = reference_spec();
  spec.d14.noise.sigma_sq = 1e-6;
  spec.d5.noise.sigma_sq = 1e-6;
  const Dataset ds = generate_synthetic(spec);
  const auto v = predict_density(spec.model, spec.params, ds.measurements);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double n = ds.measurements[i].dataset == DatasetId::d5 ? 0.182 : 0.243;
    EXPECT_NEAR(ds.measurements[i].intensity / (n * v[i]), 1.0, 0.005);
  }
}

TEST(Synthetic, CoverageOfNinetyPercentRange) {
  SyntheticSpec spec = reference_spec();
  double within = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    spec.seed = seed;
    const Dataset ds = generate_synthetic(spec);
    const auto v = predict_density(spec.model, spec.params, ds.measurements);
    const auto report = coverage_report(ds, v, spec.d14, spec.d5);
    within += report.overall.within;
    total += report.overall.total();
  }
  EXPECT_NEAR(within / total, 0.90, 0.005);
}

TEST(Csv, RoundTripIsExact) {
  const Dataset ds = generate_synthetic(reference_spec());
  std::stringstream s;
  write_csv(s, ds);
  const Dataset back = parse_csv(s);
  EXPECT_EQ(back.measurements, ds.measurements);
}

TEST(Csv, RowNumberedErrors) {
  auto expect_error = [](const std::string& text, const std::string& fragment) {
    std::istringstream in(text);
    try {
      parse_csv(in);
      FAIL() << text;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  const std::string h = "dataset,s0,v0,t,replicate,intensity\n";
  expect_error("", "header");
  expect_error("a,b\n", "header");
  expect_error(h + "D1,1,1,0,1,0.2\nD1,1,1,0,1\n", "row 3");
  expect_error(h + "D1,1,1,0,1,-0.2\n", "row 2");
  expect_error(h + "D1,0.5,1,0,1,0.2\n", "s0");
  expect_error(h + "D9,1,1,0,1,0.2\n", "row 2");
  expect_error(h + "D1,1,1,x,1,0.2\n", "row 2");
  std::istringstream ok(h + "D5,0,0.25,3,2,0.05\n\n");
  EXPECT_EQ(parse_csv(ok).size(), 1u);
  EXPECT_THROW(load_csv("/nonexistent/data.csv"), DataError);
}

TEST(Provenance, JsonRoundTrip) {
  const Dataset ds = generate_synthetic(reference_spec(9));
  const Provenance p = provenance_from_json(provenance_json(ds.provenance));
  ASSERT_TRUE(p.params.has_value());
  EXPECT_EQ(p.params->shape_m, 5.315);
  EXPECT_EQ(*p.seed, 9u);
  EXPECT_EQ(*p.n_d5, 0.182);
  EXPECT_EQ(*p.model, "m_eta");
}
