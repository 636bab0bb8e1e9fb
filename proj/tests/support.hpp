#pragma once

// Hand-rolled generators for property tests. Everything is driven by an
// explicit seed so a failing case can be replayed.

#include <random>
#include <vector>

#include "uavnet/channel.hpp"
#include "uavnet/formation.hpp"
#include "uavnet/world.hpp"

namespace testing {

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  uavnet::Vec2 unit_dir() {
    const double a = uniform(-3.141592653589793, 3.141592653589793);
    return {std::cos(a), std::sin(a)};
  }
};

/// Desk-sized scenario: 10 s slots, wide coverage so sensing actually happens.
inline uavnet::ScenarioConfig desk_scenario(std::size_t uavs = 3, std::size_t gus = 8) {
  uavnet::ScenarioConfig sc;
  sc.num_uavs = uavs;
  sc.num_gus = gus;
  sc.coverage_snr_db = -10.0;
  sc.protocol.slot_len = 10.0;
  sc.protocol.t_fly = 3.0;
  sc.protocol.t_sense = 3.0;
  sc.protocol.t_offload = 4.0;
  return sc;
}

inline std::shared_ptr<const uavnet::Environment> desk_env(std::size_t uavs = 3, std::size_t gus = 8, int K = 3) {
  uavnet::channel::ChannelParams ch;
  ch.num_subchannels = K;
  return uavnet::make_environment(desk_scenario(uavs, gus), ch);
}

/// A random formation that satisfies the sub-channel constraint: links are
/// proposed at random and kept only while the matrix stays valid.
inline uavnet::channel::FormationMatrix random_valid_formation(Gen& g, std::size_t n, int K) {
  uavnet::channel::FormationMatrix phi(n, K);
  const int tries = g.integer(0, static_cast<int>(2 * n * K));
  for (int t = 0; t < tries; ++t) {
    const std::size_t tx = static_cast<std::size_t>(g.integer(1, static_cast<int>(n)));
    std::size_t rx = static_cast<std::size_t>(g.integer(0, static_cast<int>(n)));
    if (rx == tx) rx = 0;
    const int k = g.integer(0, K - 1);
    auto trial = phi;
    trial.set(tx, rx, k);
    if (uavnet::channel::validate_alloc(trial).ok()) phi = trial;
  }
  return phi;
}

inline std::vector<uavnet::UavAction> random_actions(Gen& g, std::size_t n, double v_max) {
  std::vector<uavnet::UavAction> a(n);
  for (auto& x : a) {
    x.dir = g.unit_dir();
    x.speed = g.coin(0.1) ? 0.0 : g.uniform(0.0, 1.5 * v_max);
  }
  return a;
}

/// Random CostReport plus positions, used by the formation properties.
struct FormationCase {
  uavnet::formation::CostReport report;
  uavnet::channel::NodePositions pos;
  std::vector<double> buffers;
  int K = 3;
};

inline FormationCase random_formation_case(Gen& g) {
  FormationCase c;
  const std::size_t n = static_cast<std::size_t>(g.integer(1, 6));
  c.K = g.integer(1, 4);
  c.pos.push_back({1000.0, 1000.0, 25.0});
  for (std::size_t i = 0; i < n; ++i) {
    c.pos.push_back({g.uniform(-1000, 1000), g.uniform(-1000, 1000), 100.0});
    c.report.b.push_back(g.uniform(-5, 5));
    c.report.c.push_back(g.coin(0.2) ? 1.0 : g.uniform(0, 1e7));
    c.report.capped.push_back(false);
    c.buffers.push_back(g.uniform(0, 2e7));
  }
  return c;
}

}  // namespace testing
