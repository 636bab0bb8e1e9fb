#include "uavnet/marl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace uavnet::marl {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

Position scaled(const Position& p, double half_width) { return {p.x / half_width, p.y / half_width, 0.0}; }

nn::Mat<Real> column(std::span<const double> v) {
  nn::Mat<Real> m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<Real>(v[i]);
  return m;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double max_slot_energy(const Environment& env) {
  const auto& e = env.scenario.energy;
  const auto& p = env.scenario.protocol;
  const double peak = std::max(propulsion_power(e.v_floor, e), propulsion_power(env.scenario.v_max, e));
  return peak * p.t_fly + e.hover_power * (p.t_sense + p.t_offload);
}

std::vector<double> observe(const WorldState& w, std::size_t i) {
  const auto& env = *w.env;
  const auto& sc = env.scenario;
  const auto& u = w.uavs.at(i);
  const std::size_t N = w.uavs.size();
  std::vector<double> o;
  o.reserve(static_cast<std::size_t>(obs_dim(N)));

  o.push_back(u.pos.x / sc.half_width);
  o.push_back(u.pos.y / sc.half_width);
  o.push_back(u.buffer / sc.d_max);
  o.push_back(std::min(1.0, u.last_energy / max_slot_energy(env)));
  const auto node = channel::uav_node(i);
  for (channel::NodeId j = 0; j <= N; ++j) o.push_back(w.formation.num_uavs() == N && w.formation.linked(node, j) ? 1.0 : 0.0);

  double signal = 0.0, bx = 0.0, by = 0.0, frac = 0.0;
  if (const auto pick = select_gu(u, w.gus, env.coverage_radius)) {
    const auto& g = w.gus[*pick];
    const Position overhead{g.pos.x, g.pos.y, u.pos.z};
    signal = std::clamp(channel::g2u_rate(g.pos, u.pos, env.channel) / channel::g2u_rate(g.pos, overhead, env.channel),
                        0.0, 1.0);
    const double hd = horizontal_distance(u.pos, g.pos);
    if (hd > 1e-9) {
      bx = (g.pos.x - u.pos.x) / hd;
      by = (g.pos.y - u.pos.y) / hd;
    }
    frac = g.demand > 0.0 ? g.remaining / g.demand : 0.0;
  }
  o.push_back(signal);
  o.push_back(bx);
  o.push_back(by);
  o.push_back(frac);
  return o;
}

UavAction decode(const Action& a, double v_max) {
  const double angle = std::numbers::pi * a.a1;
  UavAction u;
  u.dir = {std::cos(angle), std::sin(angle)};
  u.speed = std::clamp(v_max * (a.a2 + 1.0) / 2.0, 0.0, v_max);
  return u;
}

Action encode(const UavAction& u, double v_max) {
  Action a;
  a.a1 = std::atan2(u.dir.y, u.dir.x) / std::numbers::pi;
  a.a2 = 2.0 * std::clamp(u.speed, 0.0, v_max) / v_max - 1.0;
  return a;
}

Action act(const Net& actor, std::span<const double> obs, double noise_scale, std::mt19937_64& rng) {
  const nn::Mat<Real> y = actor.forward(column(obs));
  double raw[2] = {static_cast<double>(y(0, 0)), static_cast<double>(y(1, 0))};
  if (noise_scale > 0.0) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (double& r : raw) r += noise_scale * n01(rng);
  }
  for (double& r : raw) r = std::clamp(r, -kRawLimit, kRawLimit);
  return {raw[0], raw[1]};
}

void RewardWeights::validate() const {
  require(energy >= 0 && data >= 0 && sensing >= 0 && safety >= 0, "training.reward: weights must be >= 0");
  require(discount >= 0 && discount < 1, "training.reward.discount: must be in [0, 1)");
  require(energy_unit > 0 && data_unit > 0, "training.reward: units must be > 0");
}

RewardParts reward(std::size_t i, const StepReport& report, const RewardWeights& wt) {
  const auto& r = report.uavs.at(i);
  RewardParts p;
  p.energy = -wt.energy * r.energy / wt.energy_unit;
  p.data = wt.data * (r.delivered_to_bs + r.relayed_out) / wt.data_unit;
  p.sensing = wt.sensing * r.sensed / wt.data_unit;
  p.penalty = wt.safety * static_cast<double>(r.near_neighbors);
  p.total = p.energy + p.data + p.sensing - p.penalty;
  return p;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t num_agents, int obs_dim)
    : capacity_(capacity), num_agents_(num_agents), obs_dim_(obs_dim) {
  require(capacity >= 1, "training.replay_capacity: must be >= 1");
  const auto n = static_cast<Eigen::Index>(num_agents);
  const auto cap = static_cast<Eigen::Index>(capacity);
  obs_.resize(n * obs_dim, cap);
  next_obs_.resize(n * obs_dim, cap);
  actions_.resize(n * kActionDim, cap);
  rewards_.resize(n, cap);
  terminal_.assign(capacity, 0);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.obs.size() != static_cast<std::size_t>(obs_.rows()) || t.next_obs.size() != t.obs.size() ||
      t.actions.size() != static_cast<std::size_t>(actions_.rows()) || t.rewards.size() != num_agents_)
    throw std::invalid_argument("ReplayBuffer::push: transition has the wrong shape");
  const auto c = static_cast<Eigen::Index>(next_);
  obs_.col(c) = column(t.obs);
  next_obs_.col(c) = column(t.next_obs);
  actions_.col(c) = column(t.actions);
  rewards_.col(c) = column(t.rewards);
  terminal_[next_] = t.terminal ? 1 : 0;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t index) const {
  if (index >= size_) throw std::out_of_range("ReplayBuffer::at");
  const auto c = static_cast<Eigen::Index>(index);
  auto to_vec = [&](const nn::Mat<Real>& m) {
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) v[static_cast<std::size_t>(r)] = m(r, c);
    return v;
  };
  return {to_vec(obs_), to_vec(actions_), to_vec(rewards_), to_vec(next_obs_), terminal_[index] != 0};
}

Batch<Real> ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng, std::vector<std::size_t>* picked) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
  const auto B = static_cast<Eigen::Index>(batch_size);
  Batch<Real> b;
  b.obs.resize(obs_.rows(), B);
  b.next_obs.resize(next_obs_.rows(), B);
  b.actions.resize(actions_.rows(), B);
  b.rewards.resize(rewards_.rows(), B);
  b.terminal.resize(batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  if (picked) picked->clear();
  for (Eigen::Index k = 0; k < B; ++k) {
    const std::size_t idx = pick(rng);
    if (picked) picked->push_back(idx);
    const auto c = static_cast<Eigen::Index>(idx);
    b.obs.col(k) = obs_.col(c);
    b.next_obs.col(k) = next_obs_.col(c);
    b.actions.col(k) = actions_.col(c);
    b.rewards.col(k) = rewards_.col(c);
    b.terminal[static_cast<std::size_t>(k)] = terminal_[idx];
  }
  return b;
}

double critic_q(const Net& critic, std::span<const double> obs_joint, std::span<const double> act_joint) {
  if (static_cast<int>(obs_joint.size() + act_joint.size()) != critic.input_dim())
    throw std::invalid_argument("critic_q: joint input has the wrong dimension");
  nn::Mat<Real> x(critic.input_dim(), 1);
  Eigen::Index r = 0;
  for (double v : obs_joint) x(r++, 0) = static_cast<Real>(v);
  for (double v : act_joint) x(r++, 0) = static_cast<Real>(v);
  return static_cast<double>(critic.forward(x)(0, 0));
}

UavAction bo_to_action(const Position& current, const Position& proposed, double v_max, double t_fly) {
  const double dx = proposed.x - current.x;
  const double dy = proposed.y - current.y;
  const double dist = std::hypot(dx, dy);
  UavAction u;
  if (dist <= 1e-12) {
    u.dir = {1.0, 0.0};
    u.speed = 0.0;
    return u;
  }
  u.dir = {dx / dist, dy / dist};
  u.speed = std::min(dist / t_fly, v_max);
  return u;
}

Arbitration arbitrate(const Action& actor, const std::optional<Action>& bo, double q_actor, double q_bo,
                      double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (u01(rng) < epsilon) {
    std::uniform_real_distribution<double> raw(-kRawLimit, kRawLimit);
    const double a1 = raw(rng);
    const double a2 = raw(rng);
    return {{a1, a2}, ActionSource::random};
  }
  if (bo && q_bo > q_actor) return {*bo, ActionSource::bo};
  return {actor, ActionSource::actor};
}

void TrainConfig::validate() const {
  require(horizon >= 1, "training.horizon: must be >= 1");
  require(batch_size >= 1, "training.batch_size: must be >= 1");
  require(replay_capacity >= 1, "training.replay_capacity: must be >= 1");
  require(tau > 0 && tau <= 1, "training.tau: must be in (0, 1]");
  require(lr_actor > 0, "training.lr_actor: must be > 0");
  require(lr_critic > 0, "training.lr_critic: must be > 0");
  require(!hidden.empty(), "training.hidden: need at least one hidden layer");
  for (int h : hidden) require(h >= 1, "training.hidden: layer sizes must be >= 1");
  require(noise >= 0, "training.noise: must be >= 0");
  require(epsilon >= 0 && epsilon <= 1, "training.epsilon: must be in [0, 1]");
  require(actor_preact_reg >= 0, "training.actor_preact_reg: must be >= 0");
  require(bo_stride >= 1, "training.bo_stride: must be >= 1");
  require(lambda >= 0, "training.lambda: must be >= 0");
  require(gp_value_unit > 0, "training.gp_value_unit: must be > 0");
  reward.validate();
}

RolloutResult rollout(WorldState& w, const ActionFn& policy, const formation::FormationPolicy& fp,
                      const RewardWeights& weights, double lambda, int max_slots, const SlotSink& sink,
                      std::size_t episode) {
  const std::size_t N = w.uavs.size();
  const std::vector<double> lambdas(N, lambda);
  RolloutResult res;
  for (int t = 0; t < max_slots && !w.drained(); ++t) {
    const auto costs = formation::build_cost_report(w, lambdas, fp.ratio_cap);
    const auto phi = formation::apply_policy(fp, w, lambdas);
    const auto actions = policy(w);
    std::vector<Position> start;
    if (sink)
      for (const auto& u : w.uavs) start.push_back(u.pos);
    const auto report = step(w, actions, phi);

    SlotRecord rec;
    if (sink) {
      rec.start_positions = start;
      rec.episode = episode;
      rec.slot = t;
      rec.formation = phi;
      rec.actions = actions;
      rec.gu_backlog = w.gu_backlog();
    }
    double slot_reward = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const auto r = reward(i, report, weights);
      slot_reward += r.total;
      res.sensed += report.uavs[i].sensed;
      res.energy += report.uavs[i].energy;
      res.max_buffer = std::max(res.max_buffer, w.uavs[i].buffer);
      if (sink)
        rec.uavs.push_back({i, w.uavs[i].pos, w.uavs[i].buffer, report.uavs[i].energy, r, costs.b[i], costs.c[i],
                            ActionSource::actor, report.uavs[i].sensed});
    }
    res.reward += slot_reward;
    res.reward_curve.push_back(slot_reward);
    res.backlog_curve.push_back(w.gu_backlog() + w.buffered());
    ++res.slots;
    if (sink) sink(rec);
  }
  res.drained = w.drained();
  return res;
}

ActionFn actor_policy(const std::vector<Net>& actors) {
  return [actors](const WorldState& w) {
    if (actors.size() != w.uavs.size()) throw std::invalid_argument("actor_policy: one actor per UAV required");
    std::vector<UavAction> out;
    std::mt19937_64 unused;
    for (std::size_t i = 0; i < w.uavs.size(); ++i)
      out.push_back(decode(act(actors[i], observe(w, i), 0.0, unused), w.uavs[i].v_max));
    return out;
  };
}

ActionFn scripted_policy() {
  return [](const WorldState& w) {
    std::vector<UavAction> out;
    std::vector<bool> claimed(w.gus.size(), false);
    for (const auto& u : w.uavs) {
      std::optional<std::size_t> target;
      for (int pass = 0; pass < 2 && !target; ++pass) {
        double best = 0.0;
        for (std::size_t m = 0; m < w.gus.size(); ++m) {
          if (w.gus[m].remaining <= 0.0 || (pass == 0 && claimed[m])) continue;
          const double d = horizontal_distance(u.pos, w.gus[m].pos);
          if (!target || d < best) {
            target = m;
            best = d;
          }
        }
      }
      UavAction a;
      a.speed = u.v_max;
      a.dir = {w.t % 2 == 0 ? 1.0 : -1.0, 0.0};
      if (target) {
        claimed[*target] = true;
        const double dx = w.gus[*target].pos.x - u.pos.x;
        const double dy = w.gus[*target].pos.y - u.pos.y;
        const double d = std::hypot(dx, dy);
        if (d > 1e-9) a.dir = {dx / d, dy / d};
      }
      out.push_back(a);
    }
    return out;
  };
}

Trainer::Trainer(std::shared_ptr<const Environment> env, TrainConfig cfg, formation::FormationPolicy fp,
                 gp::GpConfig gp_cfg, std::uint64_t seed)
    : env_(std::move(env)),
      cfg_(std::move(cfg)),
      fp_(fp),
      gp_cfg_(gp_cfg),
      world_(make_world(env_, derive_seed(seed, 1))),
      rng_(derive_seed(seed, 2)),
      replay_(cfg_.replay_capacity, env_->scenario.num_uavs, obs_dim(env_->scenario.num_uavs)) {
  cfg_.validate();
  fp_.validate();
  gp_cfg_.validate();
  const std::size_t N = world_.uavs.size();
  for (std::size_t i = 0; i < N; ++i)
    agents_.push_back(make_agent<Real>(N, cfg_.hidden, cfg_.lr_actor, cfg_.lr_critic, rng_));
  histories_.assign(N, gp::SampleHistory(gp_cfg_.window));
}

std::vector<Net> Trainer::actors() const {
  std::vector<Net> out;
  for (const auto& a : agents_) out.push_back(a.actor);
  return out;
}

EpisodeStats Trainer::run_episode(const SlotSink& sink) {
  const auto& sc = env_->scenario;
  const std::size_t N = world_.uavs.size();
  const std::vector<double> lambdas(N, cfg_.lambda);
  const double reach = sc.v_max * sc.protocol.t_fly / sc.half_width;
  const Bounds unit_box{1.0};

  reset_episode(world_);
  EpisodeStats st;
  st.episode = episode_;

  std::vector<std::vector<double>> obs(N);
  for (std::size_t i = 0; i < N; ++i) obs[i] = observe(world_, i);

  double loss_sum = 0.0;
  for (int t = 0; t < cfg_.horizon; ++t) {
    const auto costs = formation::build_cost_report(world_, lambdas, fp_.ratio_cap);
    const auto phi = formation::apply_policy(fp_, world_, lambdas);

    std::vector<Position> start;
    if (sink)
      for (const auto& u : world_.uavs) start.push_back(u.pos);

    Transition tr;
    for (const auto& o : obs) tr.obs.insert(tr.obs.end(), o.begin(), o.end());
    std::vector<Action> proposed(N);
    std::vector<double> joint_actor;
    for (std::size_t i = 0; i < N; ++i) {
      proposed[i] = act(agents_[i].actor, obs[i], cfg_.noise, rng_);
      joint_actor.push_back(proposed[i].a1);
      joint_actor.push_back(proposed[i].a2);
    }

    std::vector<Arbitration> chosen(N);
    std::vector<UavAction> decoded(N);
    const bool bo_slot = cfg_.bo_enabled && t % cfg_.bo_stride == 0;
    for (std::size_t i = 0; i < N; ++i) {
      std::optional<Action> bo;
      double q_actor = 0.0, q_bo = 0.0;
      if (bo_slot) {
        const auto& u = world_.uavs[i];
        const Position target = gp::propose_point(histories_[i], scaled(u.pos, sc.half_width), reach, gp_cfg_, unit_box);
        const Position target_m{target.x * sc.half_width, target.y * sc.half_width, u.pos.z};
        bo = encode(bo_to_action(u.pos, target_m, u.v_max, sc.protocol.t_fly), u.v_max);
        q_actor = critic_q(agents_[i].critic, tr.obs, joint_actor);
        std::vector<double> joint_bo = joint_actor;
        joint_bo[2 * i] = bo->a1;
        joint_bo[2 * i + 1] = bo->a2;
        q_bo = critic_q(agents_[i].critic, tr.obs, joint_bo);
      }
      chosen[i] = arbitrate(proposed[i], bo, q_actor, q_bo, cfg_.epsilon, rng_);
      if (chosen[i].source == ActionSource::bo) ++st.bo_chosen;
      if (chosen[i].source == ActionSource::random) ++st.random_chosen;
      decoded[i] = decode(chosen[i].action, world_.uavs[i].v_max);
      tr.actions.push_back(chosen[i].action.a1);
      tr.actions.push_back(chosen[i].action.a2);
    }

    const auto report = step(world_, decoded, phi);

    SlotRecord rec;
    if (sink) {
      rec.start_positions = start;
      rec.episode = episode_;
      rec.slot = t;
      rec.formation = phi;
      rec.actions = decoded;
      rec.gu_backlog = world_.gu_backlog();
    }
    for (std::size_t i = 0; i < N; ++i) {
      const auto r = reward(i, report, cfg_.reward);
      tr.rewards.push_back(r.total);
      st.reward += r.total;
      st.sensed += report.uavs[i].sensed;
      st.delivered += report.uavs[i].delivered_to_bs;
      st.energy += report.uavs[i].energy;
      st.max_buffer = std::max(st.max_buffer, world_.uavs[i].buffer);
      histories_[i].push(scaled(world_.uavs[i].pos, sc.half_width), report.uavs[i].sensed / cfg_.gp_value_unit);
      obs[i] = observe(world_, i);
      if (sink)
        rec.uavs.push_back({i, world_.uavs[i].pos, world_.uavs[i].buffer, report.uavs[i].energy, r, costs.b[i],
                            costs.c[i], chosen[i].source, report.uavs[i].sensed});
    }
    st.safety_violations += report.safety_violations;
    for (const auto& o : obs) tr.next_obs.insert(tr.next_obs.end(), o.begin(), o.end());
    const bool drained = world_.drained();
    tr.terminal = drained || t + 1 == cfg_.horizon;
    replay_.push(tr);

    if (replay_.size() >= cfg_.effective_warmup()) {
      const auto batch = replay_.sample(cfg_.batch_size, rng_);
      const auto next_actions = target_actions(agents_, batch.next_obs);
      for (std::size_t i = 0; i < N; ++i) {
        const auto u = update_agent(i, batch, next_actions, agents_, cfg_.reward.discount, cfg_.tau, cfg_.actor_preact_reg);
        loss_sum += u.critic_loss;
        ++st.updates;
      }
    }
    ++st.slots;
    if (sink) sink(rec);
    if (drained) {
      st.drained = true;
      break;
    }
  }
  st.critic_loss = st.updates ? loss_sum / static_cast<double>(st.updates) : 0.0;
  ++episode_;
  return st;
}

}  // namespace uavnet::marl
