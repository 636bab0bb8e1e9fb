#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "uavnet/channel.hpp"
#include "uavnet/geometry.hpp"

namespace uavnet {

/// Raised when a caller breaks an operation's documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fly-Sense-Offload slot layout. Durations are seconds.
struct ProtocolConfig {
  double slot_len = 1.0;
  double t_fly = 0.3;
  double t_sense = 0.3;
  double t_offload = 0.4;
  double d_min = 20.0;  // safety separation, m

  void validate() const;
};

/// Propulsion model P(v) = c1 v^3 + c2 / v evaluated at max(v, v_floor) while flying, plus
/// constant hover power for the sensing and offloading sub-slots.
struct EnergyParams {
  double c1 = 9.26e-4;
  double c2 = 2250.0;
  double hover_power = 170.0;  // W
  double v_floor = 1.0;        // m/s
};

struct ScenarioConfig {
  double half_width = 1000.0;  // m
  std::size_t num_uavs = 3;
  std::size_t num_gus = 8;
  std::vector<Vec2> gu_positions;  // explicit layout (m); empty => drawn from the seed
  std::vector<Vec2> uav_starts;    // explicit start points (m); empty => random each episode
  double gu_demand = 10e6;         // bits, D_m
  double d_max = 20e6;             // bits
  double uav_altitude = 100.0;     // H, m
  double bs_height = 25.0;         // H_b, m
  Vec2 bs_xy{1000.0, 1000.0};      // upper-right corner of the default area
  double v_max = 20.0;             // m/s
  double coverage_snr_db = 0.0;
  ProtocolConfig protocol;
  EnergyParams energy;

  void validate() const;
};

/// Immutable per-run environment shared by every WorldState copy.
struct Environment {
  ScenarioConfig scenario;
  channel::ChannelParams channel;
  double coverage_radius = 0.0;  // m, derived from the SNR threshold

  Bounds bounds() const { return Bounds{scenario.half_width}; }
  Position bs_position() const { return {scenario.bs_xy.x, scenario.bs_xy.y, scenario.bs_height}; }
};

std::shared_ptr<const Environment> make_environment(ScenarioConfig scenario, channel::ChannelParams params);

struct GroundUser {
  std::size_t id = 0;
  Position pos;
  double remaining = 0.0;  // W_m
  double demand = 0.0;     // D_m
};

struct UavState {
  std::size_t id = 0;  // node id, 1-based
  Position pos;
  double buffer = 0.0;       // D_i
  double energy_used = 0.0;  // cumulative J
  double last_energy = 0.0;  // energy of the latest slot, J
  double v_max = 0.0;
};

struct UavAction {
  Vec2 dir{1.0, 0.0};
  double speed = 0.0;
};

struct WorldState {
  std::shared_ptr<const Environment> env;
  int t = 0;
  std::vector<UavState> uavs;
  std::vector<GroundUser> gus;
  channel::FormationMatrix formation;
  std::mt19937_64 rng;

  channel::NodePositions node_positions() const;
  double gu_backlog() const;
  double buffered() const;
  bool drained() const { return gu_backlog() <= 0.0 && buffered() <= 0.0; }
};

/// Builds the world for a run: places GUs (explicit or seeded), then resets
/// the first episode.
WorldState make_world(std::shared_ptr<const Environment> env, std::uint64_t seed);

/// Restores demands, empties buffers and energy, and places UAVs at their
/// configured or freshly drawn start points. The formation is cleared.
void reset_episode(WorldState& w);

struct UavSlotReport {
  double sensed = 0.0;
  double delivered_to_bs = 0.0;
  double relayed_out = 0.0;
  double relayed_in = 0.0;
  double energy = 0.0;
  std::size_t near_neighbors = 0;  // other UAVs closer than d_min
  std::optional<std::size_t> served_gu;
  Position pos;
};

struct StepReport {
  std::vector<UavSlotReport> uavs;
  std::vector<double> gu_drained;
  std::size_t safety_violations = 0;  // unordered pairs closer than d_min
  std::vector<channel::LinkTransfer> transfers;
};

/// Flying sub-slot kinematics: displacement min(speed, v_max) * t_fly along
/// `dir`, clamped to the scenario bounds. Throws ContractViolation if `dir`
/// is not a unit vector or speed is negative.
Position move_uav(const UavState& u, Vec2 dir, double speed, double t_fly, const Bounds& bounds);

/// Strongest-signal GU in coverage with data left. Equal transmit powers make
/// this the nearest one; ties go to the lowest id. `claimed` (per GU) marks
/// GUs already serving another UAV this slot.
std::optional<std::size_t> select_gu(const UavState& u, std::span<const GroundUser> gus, double coverage_radius,
                                     std::span<const bool> claimed = {});

/// Bits collected in one sensing sub-slot, capped by the GU's remaining data
/// and the UAV's free buffer.
double sense(const UavState& u, const GroundUser& g, const Environment& env);

GroundUser gu_queue_step(GroundUser g, double drained);

/// min{[d - outgoing]^+ + incoming, d_max}
double uav_buffer_step(double d, double outgoing, double incoming, double d_max);

double propulsion_power(double speed, const EnergyParams& e);
double propulsion_energy(double speed, const ProtocolConfig& p, const EnergyParams& e);

/// Advances one Fly-Sense-Offload slot under formation `phi`, which becomes
/// the world's current formation. Validation happens before any mutation.
StepReport step(WorldState& w, std::span<const UavAction> actions, const channel::FormationMatrix& phi);

/// Per-slot objective: sum_i (e_i + lambda_i D_i) + sum_m W_m, with e_i from
/// the report and queues from the post-step world.
double objective_slot(const WorldState& w, const StepReport& report, std::span<const double> lambda);

}  // namespace uavnet
