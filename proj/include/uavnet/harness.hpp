#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uavnet/config.hpp"
#include "uavnet/marl.hpp"

namespace uavnet::harness {

enum ExitCode : int { kOk = 0, kConfigError = 1, kOracleFailure = 2, kRuntimeError = 3 };

/// Set from a signal handler to stop training after the current episode.
extern std::atomic<bool> g_stop_requested;

inline constexpr const char* kMetricsHeader =
    "episode,slot,uav_id,x,y,buffer_bits,energy_j,reward_total,reward_e,reward_d,reward_s,penalty,b_i,c_i,"
    "formation_links,gu_backlog_total";

struct MetricsRow {
  std::size_t episode = 0;
  int slot = 0;
  std::size_t uav_id = 0;  // node id, 1-based
  double x = 0.0;
  double y = 0.0;
  double buffer_bits = 0.0;
  double energy_j = 0.0;
  double reward_total = 0.0;
  double reward_e = 0.0;
  double reward_d = 0.0;
  double reward_s = 0.0;
  double penalty = 0.0;
  double b_i = 0.0;
  double c_i = 0.0;
  std::string formation_links;  // outgoing links as "rx:k", ';'-separated
  double gu_backlog_total = 0.0;
};

/// Keeps glibc from returning the training loop's large temporaries to the
/// kernel after every update (that churn cost ~30% in system time).
void tune_allocator();

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::vector<MetricsRow> metrics_rows(const marl::SlotRecord& rec);
std::string format_row(const MetricsRow& row);

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const marl::SlotRecord& rec);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// JSON-lines trajectory log. The first line describes the GU layout; each
/// following line is one slot: start positions, formation, applied actions
/// and the resulting UAV and GU state.
class TrajectoryWriter {
 public:
  TrajectoryWriter(const std::filesystem::path& path, const WorldState& w);
  void write(const marl::SlotRecord& rec, const WorldState& after);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct ReplayEpisode {
  std::size_t episode = 0;
  int slots = 0;
  double max_deviation = 0.0;  // largest absolute state difference seen
  bool ok = false;
};

/// Re-simulates every logged episode through world::step from its logged
/// start and compares each slot's resulting state with the log.
std::vector<ReplayEpisode> replay_trajectories(const RunConfig& cfg, const std::filesystem::path& path);

std::shared_ptr<const Environment> make_env(const RunConfig& cfg, double demand_scale = 1.0);

/// Trains and writes metrics.csv, episodes.csv, summary.json,
/// trajectories.jsonl, config.json and checkpoints/ under out_dir.
int run_train(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// One deterministic episode with the checkpointed actors (no noise, no BO).
int run_eval(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct PolicyRun {
  std::string policy;
  std::vector<int> completion_slots;  // per demand scale; max_slots when not drained
  std::vector<bool> drained;
  std::vector<double> max_buffer;
  std::vector<double> total_energy;
  std::vector<std::vector<double>> remaining_curve;
  std::vector<std::vector<double>> reward_curve;
};

/// Runs the trajectory policy under each formation policy on the same world
/// (same seed, hence same GU layout and starts) for every demand scale.
std::vector<PolicyRun> compare_policies(const RunConfig& cfg, const std::vector<std::string>& policies,
                                        const marl::ActionFn& trajectory);

/// Writes comparison.json. Uses checkpointed actors when out_dir has them,
/// otherwise the scripted policy.
int run_compare(const RunConfig& cfg, const std::vector<std::string>& policies, const std::filesystem::path& out_dir);

/// Checkpoint layout used by run_train / run_eval.
std::filesystem::path actor_path(const std::filesystem::path& out_dir, std::size_t i);
std::filesystem::path critic_path(const std::filesystem::path& out_dir, std::size_t i);
std::vector<marl::Net> load_actors(const std::filesystem::path& out_dir, std::size_t n);

}  // namespace uavnet::harness
