#include "uavnet/harness.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <charconv>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace uavnet::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::atomic<bool> g_stop_requested{false};

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
  return f;
}

void finish(std::ofstream& f, const fs::path& path) {
  if (!f.is_open()) return;
  f.flush();
  if (!f) throw std::runtime_error(path.string() + ": write failed");
  f.close();
}

void write_json(const fs::path& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
  finish(f, path);
}

json position_json(const Position& p) { return json::array({p.x, p.y, p.z}); }

double deviation(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<MetricsRow> metrics_rows(const marl::SlotRecord& rec) {
  std::vector<MetricsRow> rows;
  for (const auto& u : rec.uavs) {
    MetricsRow r;
    r.episode = rec.episode;
    r.slot = rec.slot;
    r.uav_id = channel::uav_node(u.uav);
    r.x = u.pos.x;
    r.y = u.pos.y;
    r.buffer_bits = u.buffer;
    r.energy_j = u.energy;
    r.reward_total = u.reward.total;
    r.reward_e = u.reward.energy;
    r.reward_d = u.reward.data;
    r.reward_s = u.reward.sensing;
    r.penalty = u.reward.penalty;
    r.b_i = u.b;
    r.c_i = u.c;
    for (channel::NodeId rx = 0; rx < rec.formation.num_nodes(); ++rx) {
      if (const auto k = rec.formation.channel_of(r.uav_id, rx)) {
        if (!r.formation_links.empty()) r.formation_links += ';';
        r.formation_links += std::to_string(rx) + ":" + std::to_string(*k);
      }
    }
    r.gu_backlog_total = rec.gu_backlog;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_row(const MetricsRow& r) {
  std::string s;
  s += std::to_string(r.episode) + ',' + std::to_string(r.slot) + ',' + std::to_string(r.uav_id);
  for (double v : {r.x, r.y, r.buffer_bits, r.energy_j, r.reward_total, r.reward_e, r.reward_d, r.reward_s, r.penalty,
                   r.b_i, r.c_i})
    s += ',' + format_double(v);
  s += ',' + r.formation_links + ',' + format_double(r.gu_backlog_total);
  return s;
}

MetricsWriter::MetricsWriter(const fs::path& path) : path_(path), out_(open_out(path)) {
  out_ << kMetricsHeader << '\n';
}

void MetricsWriter::write(const marl::SlotRecord& rec) {
  for (const auto& row : metrics_rows(rec)) out_ << format_row(row) << '\n';
}

void MetricsWriter::close() { finish(out_, path_); }

TrajectoryWriter::TrajectoryWriter(const fs::path& path, const WorldState& w) : path_(path), out_(open_out(path)) {
  json gus = json::array();
  for (const auto& g : w.gus) gus.push_back({g.pos.x, g.pos.y, g.demand});
  out_ << json{{"type", "layout"}, {"num_uavs", w.uavs.size()}, {"gus", gus}}.dump() << '\n';
}

void TrajectoryWriter::write(const marl::SlotRecord& rec, const WorldState& after) {
  json start = json::array(), links = json::array(), actions = json::array(), uavs = json::array(),
       gus = json::array();
  for (const auto& p : rec.start_positions) start.push_back(position_json(p));
  for (const auto& l : rec.formation.links()) links.push_back({l.tx, l.rx, l.k});
  for (const auto& a : rec.actions) actions.push_back({a.dir.x, a.dir.y, a.speed});
  for (const auto& u : after.uavs) uavs.push_back({u.pos.x, u.pos.y, u.pos.z, u.buffer, u.energy_used});
  for (const auto& g : after.gus) gus.push_back(g.remaining);
  out_ << json{{"type", "slot"},       {"episode", rec.episode}, {"slot", rec.slot}, {"start", start},
               {"formation", links},   {"actions", actions},     {"uavs", uavs},     {"gu_remaining", gus}}
              .dump()
       << '\n';
}

void TrajectoryWriter::close() { finish(out_, path_); }

std::shared_ptr<const Environment> make_env(const RunConfig& cfg, double demand_scale) {
  ScenarioConfig sc = cfg.scenario;
  sc.gu_demand *= demand_scale;
  return make_environment(sc, cfg.channel.to_params());
}

std::vector<ReplayEpisode> replay_trajectories(const RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open trajectory log");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty trajectory log");
  const json layout = json::parse(line);
  if (layout.at("type") != "layout") throw std::runtime_error(path.string() + ": missing layout line");

  ScenarioConfig sc = cfg.scenario;
  sc.num_uavs = layout.at("num_uavs").get<std::size_t>();
  sc.gu_positions.clear();
  std::vector<double> demands;
  for (const auto& g : layout.at("gus")) {
    sc.gu_positions.push_back({g[0].get<double>(), g[1].get<double>()});
    demands.push_back(g[2].get<double>());
  }
  sc.num_gus = sc.gu_positions.size();
  sc.uav_starts.clear();
  const auto env = make_environment(sc, cfg.channel.to_params());

  std::vector<ReplayEpisode> out;
  WorldState w;
  bool active = false;
  int expected_slot = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json s = json::parse(line);
    const auto episode = s.at("episode").get<std::size_t>();
    const int slot = s.at("slot").get<int>();
    const auto& start = s.at("start");
    if (slot == 0) {
      w = make_world(env, 0);
      for (std::size_t i = 0; i < w.uavs.size(); ++i)
        w.uavs[i].pos = {start[i][0].get<double>(), start[i][1].get<double>(), start[i][2].get<double>()};
      for (std::size_t m = 0; m < w.gus.size(); ++m) w.gus[m].demand = w.gus[m].remaining = demands[m];
      out.push_back({episode, 0, 0.0, true});
      active = true;
      expected_slot = 0;
    }
    if (!active || slot != expected_slot || episode != out.back().episode)
      throw std::runtime_error(path.string() + ": slot lines out of order at episode " + std::to_string(episode));
    auto& rep = out.back();
    for (std::size_t i = 0; i < w.uavs.size(); ++i) {
      rep.max_deviation = std::max({rep.max_deviation, deviation(w.uavs[i].pos.x, start[i][0].get<double>()),
                                    deviation(w.uavs[i].pos.y, start[i][1].get<double>())});
    }
    channel::FormationMatrix phi(w.uavs.size(), env->channel.num_subchannels);
    for (const auto& l : s.at("formation")) phi.set(l[0].get<std::size_t>(), l[1].get<std::size_t>(), l[2].get<int>());
    std::vector<UavAction> actions;
    for (const auto& a : s.at("actions")) actions.push_back({{a[0].get<double>(), a[1].get<double>()}, a[2].get<double>()});
    step(w, actions, phi);
    const auto& uavs = s.at("uavs");
    for (std::size_t i = 0; i < w.uavs.size(); ++i) {
      const auto& u = w.uavs[i];
      rep.max_deviation = std::max({rep.max_deviation, deviation(u.pos.x, uavs[i][0].get<double>()),
                                    deviation(u.pos.y, uavs[i][1].get<double>()),
                                    deviation(u.buffer, uavs[i][3].get<double>()),
                                    deviation(u.energy_used, uavs[i][4].get<double>())});
    }
    const auto& gus = s.at("gu_remaining");
    for (std::size_t m = 0; m < w.gus.size(); ++m)
      rep.max_deviation = std::max(rep.max_deviation, deviation(w.gus[m].remaining, gus[m].get<double>()));
    rep.slots = slot + 1;
    rep.ok = rep.max_deviation <= 1e-12;
    ++expected_slot;
  }
  return out;
}

fs::path actor_path(const fs::path& out_dir, std::size_t i) {
  return out_dir / "checkpoints" / ("actor_" + std::to_string(i + 1) + ".json");
}

fs::path critic_path(const fs::path& out_dir, std::size_t i) {
  return out_dir / "checkpoints" / ("critic_" + std::to_string(i + 1) + ".json");
}

std::vector<marl::Net> load_actors(const fs::path& out_dir, std::size_t n) {
  std::vector<marl::Net> actors;
  for (std::size_t i = 0; i < n; ++i) actors.push_back(nn::load_checkpoint<marl::Real>(actor_path(out_dir, i)));
  return actors;
}

int run_train(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir / "checkpoints");
  write_json(out_dir / "config.json", to_json(cfg));

  const auto t0 = std::chrono::steady_clock::now();
  const auto env = make_env(cfg);
  marl::Trainer trainer(env, cfg.training, cfg.formation, cfg.gp, cfg.seed);
  MetricsWriter metrics(out_dir / "metrics.csv");
  TrajectoryWriter traj(out_dir / "trajectories.jsonl", trainer.world());
  auto episodes = open_out(out_dir / "episodes.csv");
  episodes << "episode,slots,drained,reward,sensed_bits,delivered_bits,energy_j,max_buffer_bits,safety_violations,"
              "bo_chosen,random_chosen,updates,critic_loss\n";

  const std::size_t total = cfg.training.episodes;
  marl::EpisodeStats last;
  double energy_sum = 0.0;
  std::vector<double> rewards;
  bool stopped = false;
  std::string error;
  try {
    for (std::size_t e = 0; e < total; ++e) {
      if (g_stop_requested.load()) {
        stopped = true;
        break;
      }
      const bool is_last = e + 1 == total;
      const bool log_metrics = e % cfg.output.metrics_every == 0 || is_last;
      const bool log_traj = e % cfg.output.trajectory_every == 0 || is_last;
      marl::SlotSink sink;
      if (log_metrics || log_traj)
        sink = [&](const marl::SlotRecord& rec) {
          if (log_metrics) metrics.write(rec);
          if (log_traj) traj.write(rec, trainer.world());
        };
      last = trainer.run_episode(sink);
      energy_sum += last.energy;
      rewards.push_back(last.reward);
      episodes << last.episode << ',' << last.slots << ',' << (last.drained ? 1 : 0) << ',' << format_double(last.reward)
               << ',' << format_double(last.sensed) << ',' << format_double(last.delivered) << ','
               << format_double(last.energy) << ',' << format_double(last.max_buffer) << ',' << last.safety_violations
               << ',' << last.bo_chosen << ',' << last.random_chosen << ',' << last.updates << ','
               << format_double(last.critic_loss) << '\n';
    }
  } catch (const std::exception& ex) {
    error = ex.what();
  }

  metrics.close();
  traj.close();
  finish(episodes, out_dir / "episodes.csv");
  for (std::size_t i = 0; i < trainer.agents().size(); ++i) {
    nn::save_checkpoint(trainer.agents()[i].actor, actor_path(out_dir, i));
    nn::save_checkpoint(trainer.agents()[i].critic, critic_path(out_dir, i));
  }

  const std::size_t tail = std::min<std::size_t>(100, rewards.size());
  double tail_mean = 0.0;
  for (std::size_t k = rewards.size() - tail; k < rewards.size(); ++k) tail_mean += rewards[k];
  if (tail) tail_mean /= static_cast<double>(tail);
  json summary = {
      {"episodes_completed", rewards.size()},
      {"stopped_early", stopped || !error.empty()},
      {"completion_time_slots", last.drained ? json(last.slots) : json(nullptr)},
      {"total_energy", last.energy},
      {"total_energy_all_episodes", energy_sum},
      {"final_episode",
       {{"slots", last.slots},
        {"drained", last.drained},
        {"reward", last.reward},
        {"sensed_bits", last.sensed},
        {"delivered_bits", last.delivered},
        {"max_buffer_bits", last.max_buffer}}},
      {"mean_reward_last_100", tail_mean},
      {"bo_enabled", cfg.training.bo_enabled},
      {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
  };
  if (!error.empty()) summary["error"] = error;
  write_json(out_dir / "summary.json", summary);
  if (!error.empty()) throw std::runtime_error("training failed: " + error);
  return kOk;
}

int run_eval(const RunConfig& cfg, const fs::path& out_dir) {
  const auto env = make_env(cfg);
  const auto actors = load_actors(out_dir, cfg.scenario.num_uavs);
  auto w = make_world(env, marl::derive_seed(cfg.seed, 1));
  MetricsWriter metrics(out_dir / "eval_metrics.csv");
  TrajectoryWriter traj(out_dir / "eval_trajectories.jsonl", w);
  const auto res = marl::rollout(
      w, marl::actor_policy(actors), cfg.formation, cfg.training.reward, cfg.training.lambda, cfg.training.horizon,
      [&](const marl::SlotRecord& rec) {
        metrics.write(rec);
        traj.write(rec, w);
      });
  metrics.close();
  traj.close();
  write_json(out_dir / "eval_summary.json",
             {{"slots", res.slots},
              {"drained", res.drained},
              {"completion_time_slots", res.drained ? json(res.slots) : json(nullptr)},
              {"total_energy", res.energy},
              {"reward", res.reward},
              {"sensed_bits", res.sensed},
              {"max_buffer_bits", res.max_buffer}});
  return kOk;
}

std::vector<PolicyRun> compare_policies(const RunConfig& cfg, const std::vector<std::string>& policies,
                                        const marl::ActionFn& trajectory) {
  std::vector<PolicyRun> runs;
  for (const auto& name : policies) {
    PolicyRun run;
    run.policy = name;
    runs.push_back(std::move(run));
  }
  for (double scale : cfg.compare.demand_scales) {
    const auto env = make_env(cfg, scale);
    for (auto& run : runs) {
      formation::FormationPolicy fp = cfg.formation;
      fp.kind = formation::policy_kind_from_string(run.policy);
      auto w = make_world(env, marl::derive_seed(cfg.seed, 1));
      const auto res = marl::rollout(w, trajectory, fp, cfg.training.reward, cfg.training.lambda, cfg.compare.max_slots);
      run.completion_slots.push_back(res.slots);
      run.drained.push_back(res.drained);
      run.max_buffer.push_back(res.max_buffer);
      run.total_energy.push_back(res.energy);
      run.remaining_curve.push_back(res.backlog_curve);
      run.reward_curve.push_back(res.reward_curve);
    }
  }
  return runs;
}

int run_compare(const RunConfig& cfg, const std::vector<std::string>& policies, const fs::path& out_dir) {
  if (policies.size() < 2) throw ConfigError("compare: at least two policies are required");
  for (const auto& p : policies) {
    try {
      formation::policy_kind_from_string(p);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--policy: ") + e.what());
    }
  }
  fs::create_directories(out_dir);
  const bool have_ckpt = fs::exists(actor_path(out_dir, 0));
  const auto trajectory =
      have_ckpt ? marl::actor_policy(load_actors(out_dir, cfg.scenario.num_uavs)) : marl::scripted_policy();
  const auto runs = compare_policies(cfg, policies, trajectory);

  json list = json::array();
  for (const auto& r : runs) {
    json completion = json::array();
    for (std::size_t k = 0; k < r.completion_slots.size(); ++k)
      completion.push_back(r.drained[k] ? json(r.completion_slots[k]) : json(nullptr));
    list.push_back({{"policy", r.policy},
                    {"completion_time_slots", completion},
                    {"slots_run", r.completion_slots},
                    {"drained", r.drained},
                    {"max_buffer_bits", r.max_buffer},
                    {"total_energy", r.total_energy},
                    {"remaining_curve", r.remaining_curve},
                    {"reward_curve", r.reward_curve}});
  }
  write_json(out_dir / "comparison.json", {{"trajectory_policy", have_ckpt ? "checkpoint" : "scripted"},
                                           {"demand_scales", cfg.compare.demand_scales},
                                           {"max_slots", cfg.compare.max_slots},
                                           {"seed", cfg.seed},
                                           {"results", list}});
  return kOk;
}

}  // namespace uavnet::harness
