#include "uavnet/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace uavnet {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

void ProtocolConfig::validate() const {
  require(slot_len > 0 && t_fly > 0 && t_sense > 0 && t_offload > 0,
          "scenario.protocol: sub-slot durations must be > 0");
  require(std::abs(t_fly + t_sense + t_offload - slot_len) <= 1e-9 * slot_len,
          "scenario.protocol: t_fly + t_sense + t_offload must equal slot_len");
  require(d_min >= 0, "scenario.protocol.d_min: must be >= 0");
}

void ScenarioConfig::validate() const {
  require(half_width > 0, "scenario.half_width: must be > 0");
  require(num_uavs >= 1, "scenario.num_uavs: must be >= 1");
  require(gu_positions.empty() || gu_positions.size() == num_gus,
          "scenario.gu_positions: length must equal num_gus");
  require(uav_starts.empty() || uav_starts.size() == num_uavs,
          "scenario.uav_starts: length must equal num_uavs");
  require(gu_demand >= 0, "scenario.gu_demand: must be >= 0");
  require(d_max > 0, "scenario.d_max: must be > 0");
  require(v_max > 0, "scenario.v_max: must be > 0");
  require(energy.hover_power > 0, "scenario.energy.hover_power: must be > 0");
  require(energy.v_floor > 0, "scenario.energy.v_floor: must be > 0");
  protocol.validate();
}

std::shared_ptr<const Environment> make_environment(ScenarioConfig scenario, channel::ChannelParams params) {
  scenario.validate();
  params.validate();
  auto env = std::make_shared<Environment>();
  env->coverage_radius = channel::coverage_radius(params, scenario.coverage_snr_db);
  env->scenario = std::move(scenario);
  env->channel = params;
  return env;
}

channel::NodePositions WorldState::node_positions() const {
  channel::NodePositions pos;
  pos.reserve(uavs.size() + 1);
  pos.push_back(env->bs_position());
  for (const auto& u : uavs) pos.push_back(u.pos);
  return pos;
}

double WorldState::gu_backlog() const {
  return std::accumulate(gus.begin(), gus.end(), 0.0, [](double s, const GroundUser& g) { return s + g.remaining; });
}

double WorldState::buffered() const {
  return std::accumulate(uavs.begin(), uavs.end(), 0.0, [](double s, const UavState& u) { return s + u.buffer; });
}

WorldState make_world(std::shared_ptr<const Environment> env, std::uint64_t seed) {
  WorldState w;
  w.env = std::move(env);
  w.rng.seed(seed);
  const auto& sc = w.env->scenario;

  std::uniform_real_distribution<double> coord(-0.9 * sc.half_width, 0.9 * sc.half_width);
  for (std::size_t m = 0; m < sc.num_gus; ++m) {
    GroundUser g;
    g.id = m;
    if (!sc.gu_positions.empty()) {
      g.pos = {sc.gu_positions[m].x, sc.gu_positions[m].y, 0.0};
    } else {
      const double x = coord(w.rng);
      const double y = coord(w.rng);
      g.pos = {x, y, 0.0};
    }
    g.demand = sc.gu_demand;
    g.remaining = sc.gu_demand;
    w.gus.push_back(g);
  }
  w.uavs.resize(sc.num_uavs);
  for (std::size_t i = 0; i < sc.num_uavs; ++i) {
    w.uavs[i].id = channel::uav_node(i);
    w.uavs[i].v_max = sc.v_max;
  }
  reset_episode(w);
  return w;
}

void reset_episode(WorldState& w) {
  const auto& sc = w.env->scenario;
  w.t = 0;
  for (auto& g : w.gus) g.remaining = g.demand;
  std::uniform_real_distribution<double> coord(-sc.half_width, sc.half_width);
  for (std::size_t i = 0; i < w.uavs.size(); ++i) {
    auto& u = w.uavs[i];
    u.buffer = 0.0;
    u.energy_used = 0.0;
    u.last_energy = 0.0;
    if (!sc.uav_starts.empty()) {
      u.pos = {sc.uav_starts[i].x, sc.uav_starts[i].y, sc.uav_altitude};
    } else {
      const double x = coord(w.rng);
      const double y = coord(w.rng);
      u.pos = {x, y, sc.uav_altitude};
    }
  }
  w.formation = channel::FormationMatrix(w.uavs.size(), w.env->channel.num_subchannels);
}

Position move_uav(const UavState& u, Vec2 dir, double speed, double t_fly, const Bounds& bounds) {
  if (std::abs(dir.norm() - 1.0) > 1e-9) throw ContractViolation("move_uav: direction must be a unit vector");
  if (!(speed >= 0.0)) throw ContractViolation("move_uav: speed must be >= 0");
  const double step = std::min(speed, u.v_max) * t_fly;
  Position next = u.pos;
  next.x += step * dir.x;
  next.y += step * dir.y;
  return bounds.clamp(next);
}

std::optional<std::size_t> select_gu(const UavState& u, std::span<const GroundUser> gus, double coverage_radius,
                                     std::span<const bool> claimed) {
  std::optional<std::size_t> best;
  double best_d = 0.0;
  for (std::size_t m = 0; m < gus.size(); ++m) {
    if (gus[m].remaining <= 0.0) continue;
    if (!claimed.empty() && claimed[m]) continue;
    const double d = distance(u.pos, gus[m].pos);
    if (d > coverage_radius) continue;
    if (!best || d < best_d) {
      best = m;
      best_d = d;
    }
  }
  return best;
}

double sense(const UavState& u, const GroundUser& g, const Environment& env) {
  const double capacity = env.scenario.protocol.t_sense * channel::g2u_rate(g.pos, u.pos, env.channel);
  const double free_space = std::max(0.0, env.scenario.d_max - u.buffer);
  return std::max(0.0, std::min({capacity, g.remaining, free_space}));
}

GroundUser gu_queue_step(GroundUser g, double drained) {
  g.remaining = std::max(0.0, g.remaining - drained);
  return g;
}

double uav_buffer_step(double d, double outgoing, double incoming, double d_max) {
  return std::min(std::max(0.0, d - outgoing) + incoming, d_max);
}

double propulsion_power(double speed, const EnergyParams& e) {
  // below v_floor the UAV is treated as flying at v_floor
  const double v = std::max(speed, e.v_floor);
  return e.c1 * v * v * v + e.c2 / v;
}

double propulsion_energy(double speed, const ProtocolConfig& p, const EnergyParams& e) {
  return propulsion_power(speed, e) * p.t_fly + e.hover_power * (p.t_sense + p.t_offload);
}

StepReport step(WorldState& w, std::span<const UavAction> actions, const channel::FormationMatrix& phi) {
  const Environment& env = *w.env;
  const auto& sc = env.scenario;
  const std::size_t N = w.uavs.size();

  if (actions.size() != N) throw ContractViolation("step: expected one action per UAV");
  for (const auto& a : actions) {
    if (std::abs(a.dir.norm() - 1.0) > 1e-9) throw ContractViolation("step: direction must be a unit vector");
    if (!(a.speed >= 0.0)) throw ContractViolation("step: speed must be >= 0");
  }
  if (phi.num_uavs() != N || phi.num_subchannels() != env.channel.num_subchannels)
    throw ContractViolation("step: formation has the wrong shape");
  if (!channel::validate_alloc(phi).ok()) throw ContractViolation("step: formation violates the sub-channel constraint");

  StepReport report;
  report.uavs.resize(N);
  report.gu_drained.assign(w.gus.size(), 0.0);

  // Flying sub-slot.
  for (std::size_t i = 0; i < N; ++i) {
    auto& u = w.uavs[i];
    u.pos = move_uav(u, actions[i].dir, actions[i].speed, sc.protocol.t_fly, env.bounds());
    const double e = propulsion_energy(std::min(actions[i].speed, u.v_max), sc.protocol, sc.energy);
    report.uavs[i].energy = e;
  }

  // Sensing sub-slot: one GU per UAV, one UAV per GU, lower ids choose first.
  const std::size_t M = w.gus.size();
  auto claimed = std::make_unique<bool[]>(M);  // value-initialized to false
  for (std::size_t i = 0; i < N; ++i) {
    const auto pick = select_gu(w.uavs[i], w.gus, env.coverage_radius, std::span<const bool>(claimed.get(), M));
    if (!pick) continue;
    claimed[*pick] = true;
    const double bits = sense(w.uavs[i], w.gus[*pick], env);
    report.uavs[i].sensed = bits;
    report.uavs[i].served_gu = *pick;
    report.gu_drained[*pick] += bits;
  }

  // Offloading sub-slot: relays accept only what fits next to their own
  // buffer and fresh sensing data.
  std::vector<double> buffers(N), headroom(N);
  for (std::size_t i = 0; i < N; ++i) {
    buffers[i] = w.uavs[i].buffer;
    headroom[i] = std::max(0.0, sc.d_max - w.uavs[i].buffer - report.uavs[i].sensed);
  }
  const auto off = channel::offload(phi, w.node_positions(), buffers, env.channel, sc.protocol.t_offload,
                                    std::span<const double>(headroom));

  for (std::size_t m = 0; m < M; ++m) w.gus[m] = gu_queue_step(w.gus[m], report.gu_drained[m]);
  for (std::size_t i = 0; i < N; ++i) {
    auto& u = w.uavs[i];
    auto& r = report.uavs[i];
    r.delivered_to_bs = off.delivered_to_bs[i];
    r.relayed_out = off.outgoing[i] - off.delivered_to_bs[i];
    r.relayed_in = off.incoming[i];
    u.buffer = uav_buffer_step(u.buffer, off.outgoing[i], r.sensed + r.relayed_in, sc.d_max);
    u.energy_used += r.energy;
    u.last_energy = r.energy;
    r.pos = u.pos;
  }
  report.transfers = off.transfers;

  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      if (distance(w.uavs[i].pos, w.uavs[j].pos) < sc.protocol.d_min) {
        ++report.safety_violations;
        ++report.uavs[i].near_neighbors;
        ++report.uavs[j].near_neighbors;
      }
    }
  }

  w.formation = phi;
  ++w.t;
  return report;
}

double objective_slot(const WorldState& w, const StepReport& report, std::span<const double> lambda) {
  if (lambda.size() != w.uavs.size()) throw ContractViolation("objective_slot: one weight per UAV required");
  double total = 0.0;
  for (std::size_t i = 0; i < w.uavs.size(); ++i) total += report.uavs[i].energy + lambda[i] * w.uavs[i].buffer;
  return total + w.gu_backlog();
}

}  // namespace uavnet
