#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "roomsonde/errors.hpp"
#include "roomsonde/eval.hpp"
#include "roomsonde/rir_analysis.hpp"
#include "support/helpers.hpp"

using namespace roomsonde;

namespace {

EvalExample ex(const std::string& id, std::array<double, 6> pred, std::array<double, 6> truth,
               uint32_t flags = 0) {
  EvalExample e;
  e.id = id;
  e.pred = pred;
  e.truth = truth;
  e.flags = flags;
  return e;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("mae arithmetic") {
  CHECK(mae({1.0, 2.0, 3.0}, {2.0, 2.0, 1.0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(mae({1.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(mae({}, {}), Error);
}

TEST_CASE("binned mae uses right-closed snr bins") {
  // edges {-6,-1,4,9,14,19,24}: value -6 falls outside, -1 in the first bin
  const std::vector<double> err{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> snr{-6.0, -1.0, 0.0, 25.0};
  const auto bins = binned_mae(err, snr);
  REQUIRE(bins.size() == 6);
  CHECK(bins[0].lo == -6.0);
  CHECK(bins[0].hi == -1.0);
  CHECK(bins[0].n == 1);  // only the -1 sample; -6 is excluded, 25 is out of range
  CHECK(bins[0].mae == doctest::Approx(2.0));
  CHECK(bins[1].n == 1);
  CHECK(bins[1].mae == doctest::Approx(3.0));
  for (size_t b = 2; b < bins.size(); ++b) {
    CHECK(bins[b].n == 0);
    CHECK(std::isnan(bins[b].mae));
  }
}

TEST_CASE("target_valid honors exclusion flags") {
  CHECK(target_valid(0, 0));
  CHECK_FALSE(target_valid(kFlagRt60Invalid, 0));
  CHECK(target_valid(kFlagRt60Invalid, 1));  // drr unaffected by rt60 flag
  CHECK_FALSE(target_valid(kFlagDrrCapped, 1));
  CHECK_FALSE(target_valid(kFlagC50Capped, 2));
  CHECK_FALSE(target_valid(kFlagC80Capped, 3));
  CHECK_FALSE(target_valid(kFlagStiBandSilent, 4));
  CHECK_FALSE(target_valid(kFlagSnrClean, 5));
  for (int t = 0; t < 6; ++t) CHECK_FALSE(target_valid(kFlagSilentChunk, t));
}

TEST_CASE("evaluate filters flagged targets") {
  std::vector<EvalExample> exs;
  exs.push_back(ex("a", {1.0, 0, 0, 0, 0, 10.0}, {0.5, 0, 0, 0, 0, 10.0}));
  exs.push_back(ex("b", {2.0, 0, 0, 0, 0, 20.0}, {1.0, 0, 0, 0, 0, 20.0}, kFlagRt60Invalid));
  const EvalReport r = evaluate(exs);
  CHECK(r.n == 2);
  CHECK(r.targets[0].n_filtered == 1);
  CHECK(r.targets[0].mae_filtered == doctest::Approx(0.5));
  CHECK(r.targets[0].mae_all == doctest::Approx(0.75));
  CHECK(r.targets[5].n_filtered == 2);

  CHECK_THROWS_AS(evaluate({}), Error);
}

TEST_CASE("evaluate bins filtered errors by true snr") {
  std::vector<EvalExample> exs;
  exs.push_back(ex("a", {0, 0, 0, 0, 0.2, 0.0}, {0, 0, 0, 0, 0.5, 0.0}));   // snr 0 -> bin 1
  exs.push_back(ex("b", {0, 0, 0, 0, 0.9, 22.0}, {0, 0, 0, 0, 0.8, 22.0}));  // snr 22 -> bin 5
  const EvalReport r = evaluate(exs);
  const auto& sti = r.targets[4];
  CHECK(sti.snr_bins[1].n == 1);
  CHECK(sti.snr_bins[1].mae == doctest::Approx(0.3));
  CHECK(sti.snr_bins[5].n == 1);
  CHECK(sti.snr_bins[5].mae == doctest::Approx(0.1));
  CHECK(r.any_empty_bin);
}

TEST_CASE("report json parses and carries per-target metrics") {
  testutil::TempDir tmp("report");
  std::vector<EvalExample> exs;
  exs.push_back(ex("a", {1, 2, 3, 4, 0.5, 6}, {1, 2, 3, 4, 0.5, 6}));
  const EvalReport r = evaluate(exs);
  save_report(tmp / "r.json", r, exs, {{"model", "crnn"}});

  std::ifstream in(tmp / "r.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["meta"]["model"] == "crnn");
  CHECK(j["n"] == 1);
  CHECK(j["targets"].contains("rt60"));
  CHECK(j["targets"]["rt60"]["mae_filtered"] == doctest::Approx(0.0));
  REQUIRE(j["examples"].size() == 1);
  CHECK(j["examples"][0]["id"] == "a");
}

TEST_CASE("calibration csv has 20 bins per target") {
  testutil::TempDir tmp("cal");
  std::vector<EvalExample> exs;
  for (int i = 0; i < 40; ++i) {
    const double v = double(i) / 39.0;
    exs.push_back(ex("e" + std::to_string(i), {v, v, v, v, v, v}, {v, v, v, v, v, v}));
  }
  export_calibration(tmp / "c.csv", exs);

  std::ifstream in(tmp / "c.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "param,bin_lo,bin_hi,n,mean_pred,std_pred");
  int rows = 0, rt60_rows = 0;
  int64_t n_sum = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("rt60,", 0) == 0) {
      ++rt60_rows;
      std::stringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');  // param
      std::getline(ss, cell, ',');  // lo
      std::getline(ss, cell, ',');  // hi
      std::getline(ss, cell, ',');  // n
      n_sum += std::stoll(cell);
    }
  }
  CHECK(rows == 6 * 20);
  CHECK(rt60_rows == 20);
  CHECK(n_sum == 40);  // every example lands in exactly one bin
}

TEST_SUITE_END();
