#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "uavnet/channel.hpp"
#include "uavnet/formation.hpp"
#include "uavnet/gp.hpp"
#include "uavnet/marl.hpp"
#include "uavnet/world.hpp"

namespace uavnet {

/// Raised for schema violations; the message starts with the field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Channel section as written in the file; powers are kept in dBm so that a
/// parse/serialize round trip is exact.
struct ChannelSpec {
  int num_subchannels = 3;
  double bandwidth_hz = 1e6;
  double noise_dbm = -90.0;
  double alpha_u = 2.0;
  double alpha_s = 2.0;
  double beta_u = 1e-5;
  double beta_s = 6e4;
  double p_uav_dbm = 23.0;
  double q_gu_dbm = 23.0;
  double carrier_hz = 2e9;

  channel::ChannelParams to_params() const;
};

struct CompareConfig {
  std::vector<std::string> policies{"eda_nf", "dynamic_nf", "buffer_threshold", "non_cooperative"};
  std::vector<double> demand_scales{1.0, 2.0, 3.0};
  int max_slots = 600;
};

struct OutputConfig {
  std::size_t metrics_every = 1;       // write metrics rows for every k-th episode
  std::size_t trajectory_every = 100;  // trajectory episodes, plus the last one
};

struct RunConfig {
  ScenarioConfig scenario;
  ChannelSpec channel;
  formation::FormationPolicy formation;
  gp::GpConfig gp;
  marl::TrainConfig training;
  CompareConfig compare;
  OutputConfig output;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  /// Cross-section checks on top of each section's own validation.
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys and type errors raise
/// ConfigError naming the field path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

/// An empty (or whitespace-only) file yields the defaults.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace uavnet
