#include "doctest.h"

#include <cmath>

#include "properties.hpp"
#include "support.hpp"
#include "uavnet/world.hpp"

using namespace uavnet;

TEST_CASE("distance examples") {
  const Position a{300, 400, 100};
  CHECK(distance(a, a) == 0.0);
  CHECK(distance({0, 0, 100}, {0, 0, 10}) == doctest::Approx(90.0));
  CHECK(distance(a, {0, 0, 100}) == doctest::Approx(500.0));
}

TEST_CASE("move_uav examples") {
  UavState u;
  u.pos = {10, 20, 100};
  u.v_max = 20.0;
  const Bounds b{1000.0};
  CHECK(move_uav(u, {1, 0}, 0.0, 0.3, b) == u.pos);

  const auto p = move_uav(u, {1, 0}, 20.0, 0.3, b);
  CHECK(p.x == doctest::Approx(16.0));
  CHECK(p.y == 20.0);
  CHECK(p.z == 100.0);

  const auto fast = move_uav(u, {0, 1}, 40.0, 0.3, b);
  CHECK(horizontal_distance(fast, u.pos) == doctest::Approx(6.0));

  u.pos = {998, 0, 100};
  CHECK(move_uav(u, {1, 0}, 20.0, 0.3, b).x == 1000.0);

  CHECK_THROWS_AS(move_uav(u, {1, 1}, 1.0, 0.3, b), ContractViolation);
  CHECK_THROWS_AS(move_uav(u, {1, 0}, -1.0, 0.3, b), ContractViolation);
}

TEST_CASE("select_gu examples") {
  UavState u;
  u.pos = {0, 0, 100};
  std::vector<GroundUser> gus(2);
  gus[0] = {0, {200, 0, 0}, 5.0, 10.0};
  gus[1] = {1, {0, 100, 0}, 5.0, 10.0};
  CHECK_FALSE(select_gu(u, gus, 50.0).has_value());
  CHECK(select_gu(u, gus, 1000.0) == 1u);

  std::vector<GroundUser> one{gus[0]};
  CHECK(select_gu(u, one, 1000.0) == 0u);

  gus[1].remaining = 0.0;
  CHECK(select_gu(u, gus, 1000.0) == 0u);

  gus[1].remaining = 5.0;
  const bool claimed[2] = {false, true};
  CHECK(select_gu(u, gus, 1000.0, claimed) == 0u);

  // equidistant: lowest id
  gus[0].pos = {0, -100, 0};
  CHECK(select_gu(u, gus, 1000.0) == 0u);
}

TEST_CASE("sense examples") {
  ScenarioConfig sc;
  channel::ChannelParams ch;
  ch.q_gu_w = 1.0;
  ch.beta_s = 3e4;  // SNR 3 at 100 m
  const auto env = make_environment(sc, ch);
  UavState u;
  u.pos = {0, 0, 100};
  GroundUser g{0, {0, 0, 0}, 10e6, 10e6};
  CHECK(sense(u, g, *env) == doctest::Approx(0.6e6));

  g.remaining = 0.1e6;
  CHECK(sense(u, g, *env) == doctest::Approx(0.1e6));

  g.remaining = 0.0;
  CHECK(sense(u, g, *env) == 0.0);

  g.remaining = 10e6;
  u.buffer = sc.d_max;
  CHECK(sense(u, g, *env) == 0.0);
  u.buffer = sc.d_max - 1000.0;
  CHECK(sense(u, g, *env) == doctest::Approx(1000.0));
}

TEST_CASE("queue updates") {
  GroundUser g{0, {}, 10e6, 10e6};
  CHECK(gu_queue_step(g, 0.0).remaining == 10e6);
  CHECK(gu_queue_step(g, 3e6).remaining == doctest::Approx(7e6));
  g.remaining = 5;
  CHECK(gu_queue_step(g, 8).remaining == 0.0);

  CHECK(uav_buffer_step(0, 0, 0, 20e6) == 0.0);
  CHECK(uav_buffer_step(5, 2, 4, 6) == 6.0);
  CHECK(uav_buffer_step(5, 2, 1, 100) == 4.0);
  CHECK(uav_buffer_step(5, 9, 1, 100) == 1.0);
}

TEST_CASE("propulsion energy examples") {
  EnergyParams e;
  e.c1 = 1e-3;
  e.c2 = 100.0;
  e.hover_power = 0.0;
  ProtocolConfig p;
  CHECK(propulsion_power(10.0, e) == doctest::Approx(11.0));
  CHECK(propulsion_energy(10.0, p, e) == doctest::Approx(3.3));

  EnergyParams d;
  CHECK(propulsion_energy(0.0, p, d) ==
        doctest::Approx(d.hover_power * (p.slot_len - p.t_fly) + propulsion_power(d.v_floor, d) * p.t_fly));
  CHECK(propulsion_power(0.0, d) == propulsion_power(1.0, d));

  ProtocolConfig longer = p;
  longer.t_offload *= 2.0;
  CHECK(propulsion_energy(7.0, longer, d) - propulsion_energy(7.0, p, d) == doctest::Approx(d.hover_power * p.t_offload));
}

TEST_CASE("objective_slot examples") {
  auto env = testing::desk_env(2, 1);
  auto w = make_world(env, 3);
  StepReport rep;
  rep.uavs.resize(2);
  rep.uavs[0].energy = 1.0;
  rep.uavs[1].energy = 1.0;
  w.uavs[0].buffer = 2.0;
  w.uavs[1].buffer = 4.0;
  w.gus[0].remaining = 10.0;
  const double lambda[2] = {0.5, 0.5};
  CHECK(objective_slot(w, rep, lambda) == doctest::Approx(15.0));

  const double zero[2] = {0.0, 0.0};
  CHECK(objective_slot(w, rep, zero) == doctest::Approx(12.0));

  w.uavs[0].buffer = w.uavs[1].buffer = 0.0;
  w.gus[0].remaining = 0.0;
  rep.uavs[0].energy = rep.uavs[1].energy = 0.0;
  CHECK(objective_slot(w, rep, lambda) == 0.0);
}

TEST_CASE("inert slot only accrues energy") {
  auto sc = testing::desk_scenario(2, 1);
  sc.gu_positions = {{900, 900}};
  sc.uav_starts = {{-900, -900}, {-800, -900}};
  sc.coverage_snr_db = 20.0;
  const auto env = make_environment(sc, {});
  auto w = make_world(env, 1);
  const std::vector<UavAction> a(2);
  const auto rep = step(w, a, channel::FormationMatrix(2, 3));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(w.uavs[i].buffer == 0.0);
    CHECK(w.uavs[i].energy_used > 0.0);
    CHECK(rep.uavs[i].sensed == 0.0);
  }
  CHECK(w.gus[0].remaining == sc.gu_demand);
}

TEST_CASE("one UAV over one GU, direct link") {
  auto sc = testing::desk_scenario(1, 1);
  sc.gu_positions = {{0, 0}};
  sc.uav_starts = {{0, 0}};
  const auto env = make_environment(sc, {});
  auto w = make_world(env, 1);
  channel::FormationMatrix phi(1, 3);
  phi.set(1, 0, 0);
  const std::vector<UavAction> a(1);

  const double rate = channel::g2u_rate(w.gus[0].pos, w.uavs[0].pos, env->channel);
  const double expect_sensed = std::min(sc.gu_demand, rate * sc.protocol.t_sense);
  auto r1 = step(w, a, phi);
  CHECK(r1.uavs[0].sensed == doctest::Approx(expect_sensed));
  CHECK(r1.uavs[0].delivered_to_bs == 0.0);  // empty at sub-slot start
  CHECK(w.gus[0].remaining == doctest::Approx(sc.gu_demand - expect_sensed));

  const double before = w.uavs[0].buffer;
  auto r2 = step(w, a, phi);
  CHECK(r2.uavs[0].delivered_to_bs > 0.0);
  CHECK(w.uavs[0].buffer == doctest::Approx(before + r2.uavs[0].sensed - r2.uavs[0].delivered_to_bs));
}

TEST_CASE("malformed formation rejected before mutation") {
  auto w = make_world(testing::desk_env(2, 4), 5);
  const auto snapshot_pos = w.uavs[0].pos;
  const auto snapshot_t = w.t;
  channel::FormationMatrix bad(2, 3);
  bad.set(1, 2, 0);
  bad.set(2, 0, 0);
  const std::vector<UavAction> a(2, UavAction{{1, 0}, 20.0});
  CHECK_THROWS_AS(step(w, a, bad), ContractViolation);
  CHECK(w.uavs[0].pos == snapshot_pos);
  CHECK(w.t == snapshot_t);
  CHECK(w.uavs[0].energy_used == 0.0);

  CHECK_THROWS_AS(step(w, a, channel::FormationMatrix(3, 3)), ContractViolation);
  const std::vector<UavAction> one(1);
  CHECK_THROWS_AS(step(w, one, channel::FormationMatrix(2, 3)), ContractViolation);
}

TEST_CASE("safety violations count close pairs") {
  auto sc = testing::desk_scenario(3, 0);
  sc.uav_starts = {{0, 0}, {5, 0}, {500, 0}};
  auto w = make_world(make_environment(sc, {}), 1);
  const std::vector<UavAction> a(3);
  const auto rep = step(w, a, channel::FormationMatrix(3, 3));
  CHECK(rep.safety_violations == 1);
  CHECK(rep.uavs[0].near_neighbors == 1);
  CHECK(rep.uavs[2].near_neighbors == 0);
}

TEST_CASE("same seed, same trajectory") {
  auto run = [](std::uint64_t seed) {
    auto w = make_world(testing::desk_env(3, 8), seed);
    testing::Gen g(seed);
    for (int t = 0; t < 40; ++t) step(w, testing::random_actions(g, 3, 20.0), testing::random_valid_formation(g, 3, 3));
    return w;
  };
  const auto a = run(9), b = run(9);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.uavs[i].pos == b.uavs[i].pos);
    CHECK(a.uavs[i].buffer == b.uavs[i].buffer);
    CHECK(a.uavs[i].energy_used == b.uavs[i].energy_used);
  }
  CHECK(a.gu_backlog() == b.gu_backlog());
}

TEST_CASE("simulator invariants on random slots") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = testing::sweep_world_invariants(seed, 1000);
    INFO(r.first);
    CHECK(r.cases == 1000);
    CHECK(r.violations == 0);
  }
}
