#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "uavnet/config.hpp"

using namespace uavnet;
using nlohmann::json;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("empty file gives the defaults") {
  const auto p = write_temp("uavnet_empty.json", "  \n");
  const auto cfg = load_config(p);
  CHECK(cfg.channel.num_subchannels == 3);
  CHECK(cfg.scenario.uav_altitude == 100.0);
  CHECK(cfg.scenario.v_max == 20.0);
  CHECK(cfg.channel.noise_dbm == -90.0);
  CHECK(cfg.training.batch_size == 256);
  CHECK(cfg.training.lr_actor == 1e-3);
  CHECK(cfg.training.lr_critic == 1e-4);
  CHECK(cfg.training.epsilon == 0.1);
  CHECK(cfg.training.noise == 0.1);
  CHECK(cfg.formation.min_rate_rule == formation::MinRateRule::path);
  std::filesystem::remove(p);
}

TEST_CASE("unknown keys are rejected by path") {
  try {
    config_from_json(json{{"training", {{"epsilonn", 0.2}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("training.epsilonn") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"training", {{"batch_size", "big"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"seed", -3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"formation", {{"min_rate_rule", "fastest"}}}}), ConfigError);
  CHECK_THROWS_AS(load_config(write_temp("uavnet_bad.json", "{ not json")), ConfigError);
}

TEST_CASE("values outside their range are rejected") {
  CHECK_THROWS(config_from_json(json{{"scenario", {{"v_max", -1.0}}}}).validate());
  CHECK_THROWS(config_from_json(json{{"scenario", {{"protocol", {{"slot_s", 1.0}, {"t_fly_s", 0.9}}}}}}).validate());
}

TEST_CASE("serialize then parse is the identity") {
  auto cfg = config_from_json(json{{"seed", 17},
                                   {"scenario", {{"gu_positions_m", {{1.0, 2.0}, {-3.5, 4.25}}}, {"num_gus", 2}}},
                                   {"formation", {{"min_rate_rule", "sender_u2b"}, {"policy", "dynamic_nf"}}},
                                   {"channel", {{"p_uav_dbm", 21.3}}},
                                   {"training", {{"hidden", {32, 16}}, {"bo_enabled", false}}}});
  const json once = to_json(cfg);
  const json twice = to_json(config_from_json(once));
  CHECK(once == twice);
  CHECK(config_from_json(once).seed == 17);
  CHECK(config_from_json(once).training.hidden == std::vector<int>{32, 16});
  CHECK(to_json(config_from_json(json::object())) == to_json(RunConfig{}));
}

TEST_CASE("channel spec converts powers") {
  ChannelSpec s;
  const auto p = s.to_params();
  CHECK(p.noise_w == doctest::Approx(1e-12));
  CHECK(p.p_uav_w == doctest::Approx(0.19952623149688797));
  CHECK(p.num_subchannels == 3);
}
