#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uavnet/channel.hpp"
#include "uavnet/world.hpp"

namespace uavnet::formation {

struct CostReport {
  std::vector<double> b;  // load balance coefficient per UAV
  std::vector<double> c;  // cost per UAV
  std::vector<bool> capped;  // U2B rate was zero and the ratio was capped
};

enum class PolicyKind { eda_nf, non_cooperative, buffer_threshold, dynamic_nf };

std::string_view to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(std::string_view name);  // throws std::invalid_argument

/// Rate guard for a U2U pairing i -> j (isolated rates at current positions):
///   path: min(U2U, U2B of j) must exceed i's own U2B rate
///   sender_u2b: U2U must reach i's own U2B rate
///   fixed: U2U must reach min_rate
enum class MinRateRule { path, sender_u2b, fixed };

struct FormationPolicy {
  PolicyKind kind = PolicyKind::eda_nf;
  double b_threshold = 0.0;         // b_o, slots
  double buffer_threshold = 5e6;    // bits, buffer-based baseline
  double pairing_distance = 1000.0; // d_k, m
  MinRateRule min_rate_rule = MinRateRule::path;
  double min_rate = 0.0;            // bit/s, used with MinRateRule::fixed
  double dynamic_margin = 1e6;      // dynamic-NF cost margin
  double ratio_cap = 1e9;           // drain-time cap (slots) when the U2B rate is zero
  // Buffer and dynamic-NF baselines only pair with a relay whose onward path
  // beats the sender's direct link. Without it both baselines can bounce a
  // buffer between two UAVs forever.
  bool baseline_path_guard = true;

  void validate() const;
};

struct BalanceResult {
  std::vector<double> b;
  std::vector<bool> capped;
};

/// b_i = D_i / o_i0 - mean_{j != i} D_j / o_j0. Rates are per-slot U2B
/// capacities, so ratios read as expected drain times in slots. A zero rate
/// replaces the ratio with `ratio_cap` and flags the UAV. Requires N >= 2.
BalanceResult load_balance(std::span<const double> buffers, std::span<const double> u2b_capacity, double ratio_cap);

/// c = energy + lambda * buffer + gu_backlog
double cost(double energy, double buffer, double gu_backlog, double lambda);

/// Interference-free U2B capacity of each UAV for one offloading sub-slot (bits).
std::vector<double> u2b_capacities(const WorldState& w);

/// Remaining demand of the GUs inside each UAV's sensing coverage.
std::vector<double> covered_backlog(const WorldState& w);

/// b and c for every UAV from the post-slot world; energies are the latest
/// slot's.
CostReport build_cost_report(const WorldState& w, std::span<const double> lambda, double ratio_cap);

/// Every UAV on a direct U2B link, sub-channels assigned round-robin.
channel::FormationMatrix baseline_noncoop(std::size_t num_uavs, int num_subchannels);

/// Energy- and delay-aware formation: overloaded UAVs (b > b_o, highest cost
/// first) relay through the cheapest in-range UAV with b <= b_o, which keeps
/// its direct link. Pairings that fail the distance guard, the rate guard or
/// sub-channel assignment are skipped.
channel::FormationMatrix eda_nf(const CostReport& report, const channel::NodePositions& pos,
                                const FormationPolicy& policy, const channel::ChannelParams& params);

/// UAVs above the buffer threshold relay through the nearest in-range UAV at
/// or below it.
channel::FormationMatrix baseline_buffer(std::span<const double> buffers, const channel::NodePositions& pos,
                                         const FormationPolicy& policy, const channel::ChannelParams& params);

/// Cost-only variant: a UAV relays through its cheapest in-range neighbour
/// if that neighbour's cost is lower by more than the configured margin.
channel::FormationMatrix baseline_dynamic_nf(const CostReport& report, const channel::NodePositions& pos,
                                             const FormationPolicy& policy, const channel::ChannelParams& params);

/// Dispatches on policy.kind using the current world.
channel::FormationMatrix apply_policy(const FormationPolicy& policy, const WorldState& w,
                                      std::span<const double> lambda);

struct BruteForceResult {
  channel::FormationMatrix phi;
  double cost = 0.0;
  std::size_t feasible_count = 0;
};

/// Exhaustive search over every allocation satisfying the sub-channel
/// constraint for N <= 3, K <= 2. Each candidate is scored by running one
/// offloading sub-slot on the current buffers and evaluating the slot
/// objective; the first minimum in enumeration order wins. Larger instances
/// are refused with std::invalid_argument.
BruteForceResult brute_force_formation(const WorldState& w, std::span<const double> lambda);

/// Slot objective after one offloading sub-slot under phi (the scoring used by
/// brute_force_formation).
double offload_objective(const WorldState& w, const channel::FormationMatrix& phi, std::span<const double> lambda);

}  // namespace uavnet::formation
