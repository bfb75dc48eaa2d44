#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace roomsonde::nn {

struct GradCheckResult {
  std::string name;
  double max_rel;
  double tol;
  bool pass;
};

// central-difference checks in double precision: dense head, fused
// conv/batchnorm/elu/pool block, and a two-layer GRU over seven timesteps
std::vector<GradCheckResult> run_gradient_checks(uint64_t seed);

}  // namespace roomsonde::nn
