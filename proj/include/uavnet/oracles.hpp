#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "uavnet/gp.hpp"

namespace uavnet::oracles {

struct OracleResult {
  std::string name;
  std::size_t cases = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct OracleReport {
  std::vector<OracleResult> results;
  double seconds = 0.0;

  bool passed() const;
  nlohmann::json to_json() const;
};

struct OracleOptions {
  std::uint64_t seed = 7;
  gp::KernelFn kernel = gp::kernel;  // swapped out by mutation tests
  std::size_t ei_draws = 1'000'000;
  std::size_t gradient_seeds = 10;
};

/// GP posterior against a dense Gaussian-elimination solve, 20 random
/// histories of up to 8 samples; relative error with a 1e-6 floor.
OracleResult check_gp_dense(const OracleOptions& opt);

/// Closed-form EI against Monte Carlo at 10 (mean, sd, f*) triples.
OracleResult check_ei_monte_carlo(const OracleOptions& opt);

/// Backprop against central differences (h = 1e-5) for the actor and critic
/// layer shapes of a 3-UAV run, in double precision.
OracleResult check_mlp_gradients(const OracleOptions& opt);

/// validate_alloc against a direct evaluation of the per-UAV in/out sums on
/// every matrix with N <= 3, K <= 2.
OracleResult check_alloc_enumerator(const OracleOptions& opt);

/// brute_force_formation against an independent enumerator that re-derives
/// rates, transfers and the slot objective on small random worlds.
OracleResult check_brute_force(const OracleOptions& opt);

OracleReport run_oracle_checks(const OracleOptions& opt = {});

}  // namespace uavnet::oracles
