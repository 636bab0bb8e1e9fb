#include "uavnet/formation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace uavnet::formation {

using channel::FormationMatrix;
using channel::kBaseStation;
using channel::NodeId;
using channel::uav_node;

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::eda_nf: return "eda_nf";
    case PolicyKind::non_cooperative: return "non_cooperative";
    case PolicyKind::buffer_threshold: return "buffer_threshold";
    case PolicyKind::dynamic_nf: return "dynamic_nf";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(std::string_view name) {
  for (auto k : {PolicyKind::eda_nf, PolicyKind::non_cooperative, PolicyKind::buffer_threshold, PolicyKind::dynamic_nf})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown formation policy '" + std::string(name) + "'");
}

void FormationPolicy::validate() const {
  if (buffer_threshold < 0) throw std::invalid_argument("formation.buffer_threshold: must be >= 0");
  if (pairing_distance < 0) throw std::invalid_argument("formation.d_k: must be >= 0");
  if (min_rate < 0) throw std::invalid_argument("formation.min_rate: must be >= 0");
  if (dynamic_margin < 0) throw std::invalid_argument("formation.dynamic_margin: must be >= 0");
  if (!(ratio_cap > 0)) throw std::invalid_argument("formation.ratio_cap: must be > 0");
}

BalanceResult load_balance(std::span<const double> buffers, std::span<const double> u2b_capacity, double ratio_cap) {
  const std::size_t n = buffers.size();
  if (n < 2) throw std::invalid_argument("load_balance: needs at least two UAVs");
  if (u2b_capacity.size() != n) throw std::invalid_argument("load_balance: size mismatch");

  BalanceResult out;
  out.capped.assign(n, false);
  std::vector<double> ratio(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (u2b_capacity[i] > 0.0) {
      ratio[i] = buffers[i] / u2b_capacity[i];
    } else {
      ratio[i] = ratio_cap;
      out.capped[i] = true;
    }
  }
  const double total = std::accumulate(ratio.begin(), ratio.end(), 0.0);
  out.b.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.b[i] = ratio[i] - (total - ratio[i]) / static_cast<double>(n - 1);
  return out;
}

double cost(double energy, double buffer, double gu_backlog, double lambda) {
  return energy + lambda * buffer + gu_backlog;
}

std::vector<double> u2b_capacities(const WorldState& w) {
  const auto bs = w.env->bs_position();
  std::vector<double> cap;
  cap.reserve(w.uavs.size());
  for (const auto& u : w.uavs)
    cap.push_back(channel::isolated_rate(u.pos, bs, w.env->channel) * w.env->scenario.protocol.t_offload);
  return cap;
}

std::vector<double> covered_backlog(const WorldState& w) {
  std::vector<double> out(w.uavs.size(), 0.0);
  for (std::size_t i = 0; i < w.uavs.size(); ++i)
    for (const auto& g : w.gus)
      if (distance(w.uavs[i].pos, g.pos) <= w.env->coverage_radius) out[i] += g.remaining;
  return out;
}

CostReport build_cost_report(const WorldState& w, std::span<const double> lambda, double ratio_cap) {
  const std::size_t n = w.uavs.size();
  if (lambda.size() != n) throw std::invalid_argument("build_cost_report: one weight per UAV required");
  CostReport report;
  std::vector<double> buffers(n);
  for (std::size_t i = 0; i < n; ++i) buffers[i] = w.uavs[i].buffer;
  if (n >= 2) {
    auto bal = load_balance(buffers, u2b_capacities(w), ratio_cap);
    report.b = std::move(bal.b);
    report.capped = std::move(bal.capped);
  } else {
    report.b.assign(n, 0.0);
    report.capped.assign(n, false);
  }
  const auto backlog = covered_backlog(w);
  report.c.resize(n);
  for (std::size_t i = 0; i < n; ++i) report.c[i] = cost(w.uavs[i].last_energy, buffers[i], backlog[i], lambda[i]);
  return report;
}

FormationMatrix baseline_noncoop(std::size_t num_uavs, int num_subchannels) {
  FormationMatrix phi(num_uavs, num_subchannels);
  for (std::size_t u = 0; u < num_uavs; ++u)
    phi.set(uav_node(u), kBaseStation, static_cast<int>(u % static_cast<std::size_t>(num_subchannels)));
  return phi;
}

namespace {

bool node_idle_on(const FormationMatrix& phi, NodeId node, int k) {
  for (NodeId other = 0; other < phi.num_nodes(); ++other)
    if (phi.get(node, other, k) || phi.get(other, node, k)) return false;
  return true;
}

/// Replaces tx's direct link by tx -> rx. Sub-channels are tried round-robin
/// starting from the one tx's direct link used. Leaves phi untouched and
/// returns false when no sub-channel keeps the constraint satisfied.
bool relay_through(FormationMatrix& phi, NodeId tx, NodeId rx) {
  const int K = phi.num_subchannels();
  const int start = phi.channel_of(tx, kBaseStation).value_or(0);
  FormationMatrix trial = phi;
  trial.clear_link(tx, kBaseStation);
  for (int step = 0; step < K; ++step) {
    const int k = (start + step) % K;
    if (node_idle_on(trial, tx, k) && node_idle_on(trial, rx, k)) {
      trial.set(tx, rx, k);
      phi = std::move(trial);
      return true;
    }
  }
  return false;
}

double pair_distance(const channel::NodePositions& pos, std::size_t i, std::size_t j) {
  return distance(pos[uav_node(i)], pos[uav_node(j)]);
}

bool path_improves(const channel::NodePositions& pos, std::size_t i, std::size_t j,
                   const channel::ChannelParams& params) {
  const double u2u = channel::isolated_rate(pos[uav_node(i)], pos[uav_node(j)], params);
  const double onward = channel::isolated_rate(pos[uav_node(j)], pos[kBaseStation], params);
  return std::min(u2u, onward) > channel::isolated_rate(pos[uav_node(i)], pos[kBaseStation], params);
}

bool rate_guard(const channel::NodePositions& pos, std::size_t i, std::size_t j, const FormationPolicy& policy,
                const channel::ChannelParams& params) {
  const double u2u = channel::isolated_rate(pos[uav_node(i)], pos[uav_node(j)], params);
  switch (policy.min_rate_rule) {
    case MinRateRule::path:
      return path_improves(pos, i, j, params);
    case MinRateRule::sender_u2b:
      return u2u >= channel::isolated_rate(pos[uav_node(i)], pos[kBaseStation], params);
    case MinRateRule::fixed:
      return u2u >= policy.min_rate;
  }
  return false;
}

}  // namespace

FormationMatrix eda_nf(const CostReport& report, const channel::NodePositions& pos, const FormationPolicy& policy,
                       const channel::ChannelParams& params) {
  const std::size_t n = report.b.size();
  FormationMatrix phi = baseline_noncoop(n, params.num_subchannels);

  std::vector<std::size_t> g1, g2;
  for (std::size_t i = 0; i < n; ++i) (report.b[i] > policy.b_threshold ? g1 : g2).push_back(i);
  std::stable_sort(g1.begin(), g1.end(), [&](auto a, auto b) { return report.c[a] > report.c[b]; });
  std::stable_sort(g2.begin(), g2.end(), [&](auto a, auto b) { return report.c[a] < report.c[b]; });

  std::vector<bool> relay_taken(n, false);
  for (std::size_t i : g1) {
    for (std::size_t j : g2) {
      if (relay_taken[j]) continue;
      if (!(pair_distance(pos, i, j) < policy.pairing_distance)) continue;
      if (!rate_guard(pos, i, j, policy, params)) continue;
      if (relay_through(phi, uav_node(i), uav_node(j))) {
        relay_taken[j] = true;
        break;
      }
    }
  }
  return phi;
}

FormationMatrix baseline_buffer(std::span<const double> buffers, const channel::NodePositions& pos,
                                const FormationPolicy& policy, const channel::ChannelParams& params) {
  const std::size_t n = buffers.size();
  FormationMatrix phi = baseline_noncoop(n, params.num_subchannels);

  std::vector<std::size_t> loaded;
  std::vector<bool> available(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (buffers[i] > policy.buffer_threshold)
      loaded.push_back(i);
    else
      available[i] = true;
  }
  std::stable_sort(loaded.begin(), loaded.end(), [&](auto a, auto b) { return buffers[a] > buffers[b]; });

  for (std::size_t i : loaded) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < n; ++j) {
      if (!available[j]) continue;
      const double d = pair_distance(pos, i, j);
      if (!(d < policy.pairing_distance)) continue;
      if (policy.baseline_path_guard && !path_improves(pos, i, j, params)) continue;
      if (!best || d < pair_distance(pos, i, *best)) best = j;
    }
    if (best && relay_through(phi, uav_node(i), uav_node(*best))) available[*best] = false;
  }
  return phi;
}

FormationMatrix baseline_dynamic_nf(const CostReport& report, const channel::NodePositions& pos,
                                    const FormationPolicy& policy, const channel::ChannelParams& params) {
  const std::size_t n = report.c.size();
  FormationMatrix phi = baseline_noncoop(n, params.num_subchannels);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return report.c[a] > report.c[b]; });

  std::vector<bool> sender(n, false), receiver(n, false);
  for (std::size_t i : order) {
    if (receiver[i]) continue;
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || sender[j] || receiver[j]) continue;
      if (!(pair_distance(pos, i, j) < policy.pairing_distance)) continue;
      if (!(report.c[j] < report.c[i] - policy.dynamic_margin)) continue;
      if (policy.baseline_path_guard && !path_improves(pos, i, j, params)) continue;
      if (!best || report.c[j] < report.c[*best]) best = j;
    }
    if (best && relay_through(phi, uav_node(i), uav_node(*best))) {
      sender[i] = true;
      receiver[*best] = true;
    }
  }
  return phi;
}

FormationMatrix apply_policy(const FormationPolicy& policy, const WorldState& w, std::span<const double> lambda) {
  const auto& params = w.env->channel;
  switch (policy.kind) {
    case PolicyKind::non_cooperative:
      return baseline_noncoop(w.uavs.size(), params.num_subchannels);
    case PolicyKind::buffer_threshold: {
      std::vector<double> buffers;
      for (const auto& u : w.uavs) buffers.push_back(u.buffer);
      return baseline_buffer(buffers, w.node_positions(), policy, params);
    }
    case PolicyKind::dynamic_nf:
      return baseline_dynamic_nf(build_cost_report(w, lambda, policy.ratio_cap), w.node_positions(), policy, params);
    case PolicyKind::eda_nf:
      return eda_nf(build_cost_report(w, lambda, policy.ratio_cap), w.node_positions(), policy, params);
  }
  throw std::logic_error("apply_policy: unhandled policy kind");
}

double offload_objective(const WorldState& w, const FormationMatrix& phi, std::span<const double> lambda) {
  const std::size_t n = w.uavs.size();
  const double d_max = w.env->scenario.d_max;
  std::vector<double> buffers(n), headroom(n);
  for (std::size_t i = 0; i < n; ++i) {
    buffers[i] = w.uavs[i].buffer;
    headroom[i] = std::max(0.0, d_max - buffers[i]);
  }
  const auto off = channel::offload(phi, w.node_positions(), buffers, w.env->channel,
                                    w.env->scenario.protocol.t_offload, std::span<const double>(headroom));
  double total = w.gu_backlog();
  for (std::size_t i = 0; i < n; ++i) {
    const double next = uav_buffer_step(buffers[i], off.outgoing[i], off.incoming[i], d_max);
    total += w.uavs[i].last_energy + lambda[i] * next;
  }
  return total;
}

BruteForceResult brute_force_formation(const WorldState& w, std::span<const double> lambda) {
  const std::size_t n = w.uavs.size();
  const int K = w.env->channel.num_subchannels;
  if (n > 3 || K > 2) throw std::invalid_argument("brute_force_formation: instance too large (N <= 3, K <= 2)");
  if (lambda.size() != n) throw std::invalid_argument("brute_force_formation: one weight per UAV required");

  // Free entries: every UAV transmitter, every other node as receiver, every k.
  std::vector<channel::Link> slots;
  for (NodeId tx = 1; tx <= n; ++tx)
    for (NodeId rx = 0; rx <= n; ++rx)
      if (rx != tx)
        for (int k = 0; k < K; ++k) slots.push_back({tx, rx, k});

  BruteForceResult best;
  bool have = false;
  const std::uint64_t combos = std::uint64_t{1} << slots.size();
  for (std::uint64_t mask = 0; mask < combos; ++mask) {
    FormationMatrix phi(n, K);
    for (std::size_t s = 0; s < slots.size(); ++s)
      if (mask >> s & 1U) phi.set(slots[s].tx, slots[s].rx, slots[s].k);
    if (!channel::validate_alloc(phi).ok()) continue;
    ++best.feasible_count;
    const double value = offload_objective(w, phi, lambda);
    if (!have || value < best.cost) {
      best.phi = std::move(phi);
      best.cost = value;
      have = true;
    }
  }
  return best;
}

}  // namespace uavnet::formation
