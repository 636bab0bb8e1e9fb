#include "doctest.h"

#include "properties.hpp"
#include "support.hpp"
#include "uavnet/formation.hpp"

using namespace uavnet;
using namespace uavnet::formation;
using channel::FormationMatrix;

namespace {

const Position kBs{1000, 1000, 25};

channel::NodePositions two_uavs(Position a, Position b) { return {kBs, a, b}; }

CostReport report_of(std::vector<double> b, std::vector<double> c) {
  CostReport r;
  r.b = std::move(b);
  r.c = std::move(c);
  r.capped.assign(r.b.size(), false);
  return r;
}

}  // namespace

TEST_CASE("load_balance examples") {
  const std::vector<double> caps{1, 1, 1};
  const std::vector<double> equal{3, 3, 3};
  for (double b : load_balance(equal, caps, 1e9).b) CHECK(b == 0.0);

  const std::vector<double> two{4, 2}, c2{1, 1};
  const auto r2 = load_balance(two, c2, 1e9);
  CHECK(r2.b[0] == doctest::Approx(2.0));
  CHECK(r2.b[1] == doctest::Approx(-2.0));

  const std::vector<double> three{6, 2, 2};
  const auto r3 = load_balance(three, caps, 1e9);
  CHECK(r3.b[0] == doctest::Approx(4.0));
  CHECK(r3.b[1] == doctest::Approx(-2.0));
  CHECK(r3.b[2] == doctest::Approx(-2.0));

  // ratio = buffer / capacity
  const std::vector<double> bufs{8, 2}, caps2{2, 1};
  CHECK(load_balance(bufs, caps2, 1e9).b[0] == doctest::Approx(2.0));
}

TEST_CASE("load_balance caps a dead link") {
  const std::vector<double> bufs{1, 1}, caps{0, 1};
  const auto r = load_balance(bufs, caps, 100.0);
  CHECK(r.capped[0]);
  CHECK_FALSE(r.capped[1]);
  CHECK(r.b[0] == doctest::Approx(99.0));
  const std::vector<double> one{1};
  CHECK_THROWS_AS(load_balance(one, one, 1.0), std::invalid_argument);
}

TEST_CASE("cost examples") {
  CHECK(cost(0, 0, 0, 0.5) == 0.0);
  CHECK(cost(2, 4, 1, 0.0) == 3.0);
  CHECK(cost(2, 4, 1, 0.5) == doctest::Approx(5.0));
}

TEST_CASE("non-cooperative formation") {
  const auto one = baseline_noncoop(1, 3);
  CHECK(one.links() == std::vector<channel::Link>{{1, 0, 0}});
  const auto three = baseline_noncoop(3, 3);
  CHECK(three.links() == std::vector<channel::Link>{{1, 0, 0}, {2, 0, 1}, {3, 0, 2}});
  CHECK(channel::validate_alloc(baseline_noncoop(5, 2)).ok());
}

TEST_CASE("eda_nf examples") {
  const channel::ChannelParams ch;
  FormationPolicy fp;
  const auto pos = two_uavs({0, 0, 100}, {500, 500, 100});

  CHECK(eda_nf(report_of({-1, -2}, {1, 1}), pos, fp, ch) == baseline_noncoop(2, 3));

  const auto phi = eda_nf(report_of({1, -1}, {1, 1}), pos, fp, ch);
  CHECK(phi.linked(1, 2));
  CHECK_FALSE(phi.linked(1, 0));
  CHECK(phi.linked(2, 0));
  CHECK(channel::validate_alloc(phi).ok());

  fp.pairing_distance = 500.0;  // d_12 ~ 707 m
  CHECK(eda_nf(report_of({1, -1}, {1, 1}), pos, fp, ch) == baseline_noncoop(2, 3));
}

TEST_CASE("eda_nf sub-channel choice starts at the freed direct channel") {
  const channel::ChannelParams ch;  // K = 3
  const FormationPolicy fp;
  // UAV 2 (index 1, direct on k=1) relays through UAV 3 (direct on k=2)
  const channel::NodePositions pos{kBs, {900, 900, 100}, {0, 0, 100}, {400, 400, 100}};
  const auto phi = eda_nf(report_of({-1, 1, -1}, {1, 5, 2}), pos, fp, ch);
  CHECK(phi.channel_of(2, 3) == 1);
  CHECK(phi.linked(3, 0));
  CHECK(phi.linked(1, 0));
}

TEST_CASE("eda_nf pairs the costliest sender with the cheapest relay") {
  const channel::ChannelParams ch;
  const FormationPolicy fp;
  // two candidate relays near the BS; the cheaper one wins
  const channel::NodePositions pos{kBs, {0, 0, 100}, {500, 500, 100}, {520, 480, 100}};
  const auto phi = eda_nf(report_of({2, -1, -1}, {9, 5, 3}), pos, fp, ch);
  CHECK(phi.linked(1, 3));
  CHECK_FALSE(phi.linked(1, 2));
}

TEST_CASE("rate guard variants") {
  const channel::ChannelParams ch;
  // sender is closer to the BS than the would-be relay
  const auto pos = two_uavs({800, 800, 100}, {700, 800, 100});
  const auto rep = report_of({1, -1}, {1, 1});
  FormationPolicy fp;
  CHECK(eda_nf(rep, pos, fp, ch) == baseline_noncoop(2, 3));
  fp.min_rate_rule = MinRateRule::sender_u2b;
  CHECK(eda_nf(rep, pos, fp, ch).linked(1, 2));
  fp.min_rate_rule = MinRateRule::fixed;
  fp.min_rate = 1e12;
  CHECK(eda_nf(rep, pos, fp, ch) == baseline_noncoop(2, 3));
  fp.min_rate = 0.0;
  CHECK(eda_nf(rep, pos, fp, ch).linked(1, 2));
}

TEST_CASE("buffer baseline examples") {
  const channel::ChannelParams ch;
  FormationPolicy fp;
  const auto pos = two_uavs({0, 0, 100}, {500, 500, 100});
  const std::vector<double> low{1e6, 1e6}, high{9e6, 1e6}, both{9e6, 9e6};
  CHECK(baseline_buffer(low, pos, fp, ch) == baseline_noncoop(2, 3));
  const auto phi = baseline_buffer(high, pos, fp, ch);
  CHECK(phi.linked(1, 2));
  CHECK(phi.linked(2, 0));
  CHECK(baseline_buffer(both, pos, fp, ch) == baseline_noncoop(2, 3));

  // relay farther from the BS than the sender: path guard refuses
  const auto back = two_uavs({500, 500, 100}, {0, 0, 100});
  CHECK(baseline_buffer(high, back, fp, ch) == baseline_noncoop(2, 3));
  fp.baseline_path_guard = false;
  CHECK(baseline_buffer(high, back, fp, ch).linked(1, 2));
}

TEST_CASE("dynamic-NF baseline examples") {
  const channel::ChannelParams ch;
  FormationPolicy fp;
  fp.dynamic_margin = 0.0;
  const auto pos = two_uavs({0, 0, 100}, {500, 500, 100});
  CHECK(baseline_dynamic_nf(report_of({0, 0}, {5, 5}), pos, fp, ch) == baseline_noncoop(2, 3));
  CHECK(baseline_dynamic_nf(report_of({0, 0}, {10, 1}), pos, fp, ch).linked(1, 2));
  fp.pairing_distance = 100.0;
  CHECK(baseline_dynamic_nf(report_of({0, 0}, {10, 1}), pos, fp, ch) == baseline_noncoop(2, 3));
}

TEST_CASE("no two-UAV bounce under the default guard") {
  // An overloaded pair: whichever direction is chosen, the reverse is refused
  // at the same positions, so a buffer cannot ping-pong.
  const channel::ChannelParams ch;
  const FormationPolicy fp;
  testing::Gen g(4);
  for (int t = 0; t < 500; ++t) {
    const auto pos = two_uavs({g.uniform(-1e3, 1e3), g.uniform(-1e3, 1e3), 100},
                              {g.uniform(-1e3, 1e3), g.uniform(-1e3, 1e3), 100});
    const bool fwd = eda_nf(report_of({1, -1}, {1, 1}), pos, fp, ch).linked(1, 2);
    const bool rev = eda_nf(report_of({-1, 1}, {1, 1}), pos, fp, ch).linked(2, 1);
    CHECK_FALSE((fwd && rev));
  }
}

TEST_CASE("EDA-NF structural properties") {
  double worst = 0.0;
  const auto r = testing::sweep_eda_properties(21, 1000, &worst);
  INFO(r.first);
  CHECK(r.violations == 0);
  CHECK(worst <= 1e-9);
}

TEST_CASE("eda_nf is stable under repeated evaluation") {
  testing::Gen g(5);
  const FormationPolicy fp;
  for (int t = 0; t < 200; ++t) {
    const auto c = testing::random_formation_case(g);
    channel::ChannelParams ch;
    ch.num_subchannels = c.K;
    CHECK(eda_nf(c.report, c.pos, fp, ch) == eda_nf(c.report, c.pos, fp, ch));
  }
}

TEST_CASE("brute force on one UAV") {
  auto sc = testing::desk_scenario(1, 0);
  sc.uav_starts = {{0, 0}};
  channel::ChannelParams ch;
  ch.num_subchannels = 1;
  auto w = make_world(make_environment(sc, ch), 1);
  const double lambda[1] = {1.0};

  w.uavs[0].buffer = 5e6;
  const auto best = brute_force_formation(w, lambda);
  CHECK(best.feasible_count == 2);
  CHECK(best.phi.links() == std::vector<channel::Link>{{1, 0, 0}});

  w.uavs[0].buffer = 0.0;
  const auto tie = brute_force_formation(w, lambda);
  CHECK(tie.phi.empty());

  auto big = make_world(testing::desk_env(4, 0, 1), 1);
  const double l4[4] = {1, 1, 1, 1};
  CHECK_THROWS_AS(brute_force_formation(big, l4), std::invalid_argument);
}

TEST_CASE("apply_policy dispatch") {
  auto w = make_world(testing::desk_env(3, 8), 2);
  const double lambda[3] = {0.5, 0.5, 0.5};
  FormationPolicy fp;
  fp.kind = PolicyKind::non_cooperative;
  CHECK(apply_policy(fp, w, lambda) == baseline_noncoop(3, 3));
  for (auto k : {PolicyKind::eda_nf, PolicyKind::buffer_threshold, PolicyKind::dynamic_nf}) {
    fp.kind = k;
    CHECK(channel::validate_alloc(apply_policy(fp, w, lambda)).ok());
  }
  CHECK(policy_kind_from_string("dynamic_nf") == PolicyKind::dynamic_nf);
  CHECK_THROWS_AS(policy_kind_from_string("nope"), std::invalid_argument);
}
