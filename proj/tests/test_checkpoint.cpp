#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "tumorcal/checkpoint.hpp"

using namespace tumorcal;

namespace {

double toy(std::span<const double> theta, std::size_t begin, std::size_t end) {
  double s = 0;
  for (std::size_t k = begin; k < end; ++k) s -= 8.0 * (theta[0] - 0.1 * k) * (theta[0] - 0.1 * k) + theta[1];
  return s;
}

}  // namespace

TEST(Checkpoint, JsonRoundTripIsExact) {
  const std::vector<MarginalPrior> priors = {MarginalPrior::uniform(0, 1), MarginalPrior::triangular(0, 0, 1)};
  SmcConfig cfg;
  cfg.particle_count = 64;
  SmcRun run = tumorcal::run(priors, toy, 3, cfg);
  run.ensemble.log_weights[5] = -std::numeric_limits<double>::infinity();
  const SmcRun back = run_from_json(nlohmann::json::parse(to_json(run).dump()));
  EXPECT_EQ(back.ensemble.positions, run.ensemble.positions);
  EXPECT_EQ(back.ensemble.log_weights, run.ensemble.log_weights);
  EXPECT_EQ(back.ensemble.log_likelihood, run.ensemble.log_likelihood);
  EXPECT_EQ(back.ensemble.scales, run.ensemble.scales);
  EXPECT_EQ(back.ensemble.rho, run.ensemble.rho);
  EXPECT_EQ(back.ensemble.last_acceptance, run.ensemble.last_acceptance);
  EXPECT_EQ(back.evidence.cumulative, run.evidence.cumulative);
  ASSERT_EQ(back.diagnostics.size(), 3u);
  EXPECT_EQ(back.diagnostics[2].log_evidence, run.diagnostics[2].log_evidence);
}

TEST(Checkpoint, ResumeFromFileMatchesUninterruptedRun) {
  const std::vector<MarginalPrior> priors = {MarginalPrior::uniform(0, 1), MarginalPrior::triangular(0, 0, 1)};
  SmcConfig cfg;
  cfg.particle_count = 128;
  cfg.seed = 77;
  const auto path = (std::filesystem::temp_directory_path() / "tumorcal_checkpoint_test.json").string();
  save_checkpoint(path, tumorcal::run(priors, toy, 2, cfg));
  const SmcRun resumed = tumorcal::run(priors, toy, 5, cfg, load_checkpoint(path));
  const SmcRun full = tumorcal::run(priors, toy, 5, cfg);
  EXPECT_EQ(resumed.ensemble.positions, full.ensemble.positions);
  EXPECT_EQ(resumed.evidence.cumulative, full.evidence.cumulative);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsCorruptInput) {
  EXPECT_THROW(run_from_json(nlohmann::json{{"schema", "other"}}), DataError);
  EXPECT_THROW(run_from_json(nlohmann::json{{"schema", kCheckpointSchema}}), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), DataError);
}
