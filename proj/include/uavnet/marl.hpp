#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "uavnet/formation.hpp"
#include "uavnet/gp.hpp"
#include "uavnet/nn.hpp"
#include "uavnet/world.hpp"

namespace uavnet::marl {

using Real = float;  // training precision
using Net = nn::Mlp<Real>;

inline constexpr int kActionDim = 2;
/// Noisy raw actions are clamped strictly inside the tanh range.
inline constexpr double kRawLimit = 1.0 - 1e-9;

/// pos (2), buffer fraction, slot energy, formation row (N + 1), GU signal,
/// GU bearing (2), GU remaining fraction.
inline int obs_dim(std::size_t num_uavs) { return static_cast<int>(num_uavs) + 9; }
inline int critic_input_dim(std::size_t num_uavs) { return static_cast<int>(num_uavs) * (obs_dim(num_uavs) + kActionDim); }

/// Largest propulsion-plus-hover energy one slot can cost.
double max_slot_energy(const Environment& env);

/// Local observation of UAV i (0-based); every component lies in [-1, 1].
std::vector<double> observe(const WorldState& w, std::size_t i);

/// Raw actor output: angle = pi * a1, speed = v_max * (a2 + 1) / 2.
struct Action {
  double a1 = 0.0;
  double a2 = 0.0;
};

UavAction decode(const Action& a, double v_max);
/// Inverse of decode for speeds in [0, v_max].
Action encode(const UavAction& u, double v_max);

/// Actor output plus Gaussian noise of the given scale, clamped.
Action act(const Net& actor, std::span<const double> obs, double noise_scale, std::mt19937_64& rng);

struct RewardWeights {
  double energy = 1.0;    // gamma1, per kJ
  double data = 1.0;      // gamma2, per Mbit
  double sensing = 1.0;   // gamma3, per Mbit
  double safety = 10.0;   // mu, per close neighbour
  double discount = 0.95;
  double energy_unit = 1e3;  // J
  double data_unit = 1e6;    // bits

  void validate() const;
};

/// Weighted components; total = energy + data + sensing - penalty exactly.
struct RewardParts {
  double total = 0.0;
  double energy = 0.0;
  double data = 0.0;
  double sensing = 0.0;
  double penalty = 0.0;
};

RewardParts reward(std::size_t i, const StepReport& report, const RewardWeights& weights);

/// One joint transition; vectors are flattened over agents.
struct Transition {
  std::vector<double> obs;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> next_obs;
  bool terminal = false;
};

template <class T>
struct Batch {
  nn::Mat<T> obs;       // N * obs_dim x B
  nn::Mat<T> actions;   // N * 2 x B
  nn::Mat<T> rewards;   // N x B
  nn::Mat<T> next_obs;  // N * obs_dim x B
  std::vector<std::uint8_t> terminal;
};

/// Fixed-capacity ring of transitions, stored column-wise in training
/// precision. Sampling is uniform with replacement.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t num_agents, int obs_dim);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  Transition at(std::size_t index) const;  // index in [0, size)
  Batch<Real> sample(std::size_t batch_size, std::mt19937_64& rng, std::vector<std::size_t>* picked = nullptr) const;

 private:
  std::size_t capacity_;
  std::size_t num_agents_;
  int obs_dim_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  nn::Mat<Real> obs_, actions_, rewards_, next_obs_;
  std::vector<std::uint8_t> terminal_;
};

/// Q_i(o_1..o_N, a_1..a_N) for a single joint sample.
double critic_q(const Net& critic, std::span<const double> obs_joint, std::span<const double> act_joint);

/// Heading and speed that reach `proposed` from `current` in one flying
/// sub-slot; speed is capped at v_max when the point is out of reach.
UavAction bo_to_action(const Position& current, const Position& proposed, double v_max, double t_fly);

enum class ActionSource { actor, bo, random };

struct Arbitration {
  Action action;
  ActionSource source = ActionSource::actor;
};

/// Greedy choice between the actor and BO actions (ties keep the actor's);
/// with probability epsilon both are overridden by a uniform random action.
/// The uniform draw happens on every call so the RNG stream does not depend
/// on the outcome of the comparison.
Arbitration arbitrate(const Action& actor, const std::optional<Action>& bo, double q_actor, double q_bo,
                      double epsilon, std::mt19937_64& rng);

template <class T>
struct Agent {
  nn::Mlp<T> actor, critic, target_actor, target_critic;
  nn::OptState<T> actor_opt, critic_opt;
};

/// Actor obs_dim -> hidden -> 2 (tanh), critic N*(obs_dim+2) -> hidden -> 1.
template <class T>
Agent<T> make_agent(std::size_t num_agents, const std::vector<int>& hidden, double lr_actor, double lr_critic,
                    std::mt19937_64& rng) {
  const int od = obs_dim(num_agents);
  std::vector<int> a_dims{od}, c_dims{critic_input_dim(num_agents)};
  a_dims.insert(a_dims.end(), hidden.begin(), hidden.end());
  c_dims.insert(c_dims.end(), hidden.begin(), hidden.end());
  a_dims.push_back(kActionDim);
  c_dims.push_back(1);
  Agent<T> ag;
  ag.actor = nn::Mlp<T>(a_dims, nn::Activation::tanh, rng);
  ag.critic = nn::Mlp<T>(c_dims, nn::Activation::identity, rng);
  if (ag.critic.input_dim() != static_cast<int>(num_agents) * (od + kActionDim))
    throw std::logic_error("make_agent: critic input dimension mismatch");
  ag.target_actor = ag.actor;
  ag.target_critic = ag.critic;
  ag.actor_opt = nn::make_opt_state(ag.actor, lr_actor);
  ag.critic_opt = nn::make_opt_state(ag.critic, lr_critic);
  return ag;
}

/// Stacks [obs; actions] into critic inputs.
template <class T>
nn::Mat<T> joint_input(const nn::Mat<T>& obs, const nn::Mat<T>& actions) {
  nn::Mat<T> x(obs.rows() + actions.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

/// Next joint action from every agent's target actor, no noise.
template <class T>
nn::Mat<T> target_actions(const std::vector<Agent<T>>& agents, const nn::Mat<T>& next_obs) {
  const auto n = static_cast<Eigen::Index>(agents.size());
  const Eigen::Index od = next_obs.rows() / n;
  nn::Mat<T> a(n * kActionDim, next_obs.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    a.middleRows(i * kActionDim, kActionDim) = agents[i].target_actor.forward(next_obs.middleRows(i * od, od));
  return a;
}

/// y = r_i + discount * Q'_i(o', a'), with y = r_i on terminal transitions.
template <class T>
nn::Mat<T> td_target(std::size_t i, const Batch<T>& b, const nn::Mat<T>& next_actions, const nn::Mlp<T>& target_critic,
                     double discount) {
  const nn::Mat<T> q_next = target_critic.forward(joint_input(b.next_obs, next_actions));
  nn::Mat<T> y = b.rewards.row(static_cast<Eigen::Index>(i));
  for (Eigen::Index c = 0; c < y.cols(); ++c)
    if (!b.terminal[static_cast<std::size_t>(c)]) y(0, c) += static_cast<T>(discount) * q_next(0, c);
  return y;
}

template <class T>
struct CriticStep {
  nn::Grads<T> grads;
  double loss = 0.0;
};

/// Gradient of mean (Q - y)^2 with respect to the critic parameters.
template <class T>
CriticStep<T> critic_gradient(const nn::Mlp<T>& critic, const Batch<T>& b, const nn::Mat<T>& y) {
  nn::ForwardCache<T> cache;
  const nn::Mat<T> q = critic.forward(joint_input(b.obs, b.actions), cache);
  const nn::Mat<T> err = q - y;
  const T scale = T(2) / static_cast<T>(q.cols());
  CriticStep<T> out;
  out.loss = static_cast<double>(err.squaredNorm()) / static_cast<double>(q.cols());
  out.grads = critic.backward(cache, (scale * err).eval(), true, false);
  return out;
}

template <class T>
struct ActorStep {
  nn::Grads<T> grads;
  double mean_q = 0.0;
};

/// Gradient of -mean Q_i with agent i's action replaced by its online
/// actor's output; the other agents' actions stay as sampled. preact_reg
/// adds preact_reg * mean_batch |z|^2 on the actor's pre-tanh output, which
/// keeps it out of saturation.
template <class T>
ActorStep<T> actor_gradient(std::size_t i, const nn::Mlp<T>& actor, const nn::Mlp<T>& critic, const Batch<T>& b,
                            double preact_reg = 0.0) {
  const auto n = b.actions.rows() / kActionDim;
  const Eigen::Index od = b.obs.rows() / n;
  const auto ii = static_cast<Eigen::Index>(i);
  nn::ForwardCache<T> actor_cache, critic_cache;
  const nn::Mat<T> own = actor.forward(b.obs.middleRows(ii * od, od), actor_cache);
  nn::Mat<T> actions = b.actions;
  actions.middleRows(ii * kActionDim, kActionDim) = own;
  const nn::Mat<T> q = critic.forward(joint_input(b.obs, actions), critic_cache);
  const auto B = q.cols();
  const nn::Mat<T> dq = nn::Mat<T>::Constant(1, B, T(-1) / static_cast<T>(B));
  const auto cg = critic.backward(critic_cache, dq, false, true);
  const nn::Mat<T> da = cg.dx.middleRows(b.obs.rows() + ii * kActionDim, kActionDim);
  ActorStep<T> out;
  out.mean_q = static_cast<double>(q.mean());
  if (preact_reg > 0.0) {
    const nn::Mat<T> dz = (static_cast<T>(2 * preact_reg) / static_cast<T>(B)) * actor.pre_output(actor_cache);
    out.grads = actor.backward(actor_cache, da, true, false, &dz);
  } else {
    out.grads = actor.backward(actor_cache, da, true, false);
  }
  return out;
}

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_q = 0.0;
};

/// One critic step on the TD error, one actor step on the sampled policy
/// gradient (using the freshly updated critic), then soft target updates.
template <class T>
UpdateStats update_agent(std::size_t i, const Batch<T>& b, const nn::Mat<T>& next_actions, std::vector<Agent<T>>& agents,
                         double discount, double tau, double preact_reg = 0.0) {
  Agent<T>& ag = agents[i];
  const nn::Mat<T> y = td_target(i, b, next_actions, ag.target_critic, discount);
  auto cs = critic_gradient(ag.critic, b, y);
  nn::opt_step(ag.critic, cs.grads, ag.critic_opt);
  auto as = actor_gradient(i, ag.actor, ag.critic, b, preact_reg);
  nn::opt_step(ag.actor, as.grads, ag.actor_opt);
  nn::soft_update(ag.target_critic, ag.critic, tau);
  nn::soft_update(ag.target_actor, ag.actor, tau);
  return {cs.loss, as.mean_q};
}

struct TrainConfig {
  std::size_t episodes = 20000;
  int horizon = 60;  // T, slots
  std::size_t batch_size = 256;
  std::size_t replay_capacity = 100000;
  std::size_t warmup = 0;  // 0 => batch_size
  double tau = 0.01;
  double lr_actor = 1e-3;
  double lr_critic = 1e-4;
  std::vector<int> hidden{64, 64};
  double noise = 0.1;
  double epsilon = 0.1;
  double actor_preact_reg = 1e-3;  // penalty on the actor's pre-tanh output
  bool bo_enabled = true;
  int bo_stride = 1;  // run the GP proposal every bo_stride slots
  double lambda = 0.5;
  double gp_value_unit = 1e6;  // sensed bits are stored in Mbit
  RewardWeights reward;

  std::size_t effective_warmup() const { return warmup == 0 ? batch_size : warmup; }
  void validate() const;
};

/// Per-UAV values of one slot, as reported to a metrics sink.
struct UavSlotRecord {
  std::size_t uav = 0;  // 0-based
  Position pos;
  double buffer = 0.0;
  double energy = 0.0;
  RewardParts reward;
  double b = 0.0;
  double c = 0.0;
  ActionSource source = ActionSource::actor;
  double sensed = 0.0;
};

struct SlotRecord {
  std::size_t episode = 0;
  int slot = 0;  // 0-based slot index within the episode
  std::vector<UavSlotRecord> uavs;
  std::vector<Position> start_positions;  // UAV positions before the slot
  channel::FormationMatrix formation;      // formation used during the slot
  std::vector<UavAction> actions;      // decoded actions applied
  double gu_backlog = 0.0;
};

using SlotSink = std::function<void(const SlotRecord&)>;

struct EpisodeStats {
  std::size_t episode = 0;
  int slots = 0;
  bool drained = false;
  double reward = 0.0;  // summed over agents and slots
  double sensed = 0.0;
  double delivered = 0.0;
  double energy = 0.0;
  double max_buffer = 0.0;
  std::size_t safety_violations = 0;
  std::size_t bo_chosen = 0;
  std::size_t random_chosen = 0;
  std::size_t updates = 0;
  double critic_loss = 0.0;  // mean over updates
};

/// Maps the current world to one decoded action per UAV.
using ActionFn = std::function<std::vector<UavAction>(const WorldState&)>;

struct RolloutResult {
  int slots = 0;
  bool drained = false;
  double reward = 0.0;
  double sensed = 0.0;
  double energy = 0.0;
  double max_buffer = 0.0;
  std::vector<double> backlog_curve;  // GU backlog + buffered bits after each slot
  std::vector<double> reward_curve;   // summed reward of each slot
};

/// Runs `policy` from the world's current state under the formation policy
/// until every queue is drained or max_slots have elapsed.
RolloutResult rollout(WorldState& w, const ActionFn& policy, const formation::FormationPolicy& fp,
                      const RewardWeights& weights, double lambda, int max_slots, const SlotSink& sink = {},
                      std::size_t episode = 0);

/// Deterministic decentralized policy: each UAV's actor, no noise.
ActionFn actor_policy(const std::vector<Net>& actors);

/// Every UAV flies at v_max toward the nearest GU with data left, preferring
/// GUs no lower-id UAV has picked. Near the GU the fixed step overshoots, so
/// the UAV shuttles across it at v_max, which costs less than hovering.
ActionFn scripted_policy();

/// BO-MADDPG / layered MADDPG trainer. The world uses its own random stream;
/// network initialisation, exploration and replay sampling use another.
class Trainer {
 public:
  Trainer(std::shared_ptr<const Environment> env, TrainConfig cfg, formation::FormationPolicy fp, gp::GpConfig gp_cfg,
          std::uint64_t seed);

  EpisodeStats run_episode(const SlotSink& sink = {});

  const std::vector<Agent<Real>>& agents() const { return agents_; }
  std::vector<Net> actors() const;
  const WorldState& world() const { return world_; }
  const TrainConfig& config() const { return cfg_; }
  const ReplayBuffer& replay() const { return replay_; }
  std::size_t episodes_done() const { return episode_; }

 private:
  std::shared_ptr<const Environment> env_;
  TrainConfig cfg_;
  formation::FormationPolicy fp_;
  gp::GpConfig gp_cfg_;
  WorldState world_;
  std::mt19937_64 rng_;
  std::vector<Agent<Real>> agents_;
  std::vector<gp::SampleHistory> histories_;
  ReplayBuffer replay_;
  std::size_t episode_ = 0;
};

/// Independent seeds for the world and learner streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace uavnet::marl
