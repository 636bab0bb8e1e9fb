#include "uavnet/config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace uavnet {

using nlohmann::json;

namespace {

/// Walks one JSON object, remembering which keys were consumed so that the
/// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, field(key));
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    out = convert<T>(j_.at(key), field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, int>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      const auto x = v.get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(where + ": integer out of range");
      return static_cast<int>(x);
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(where + ": expected a non-negative integer");
      return static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, Vec2>) {
      if (!v.is_array() || v.size() != 2) throw ConfigError(where + ": expected [x, y]");
      return Vec2{convert<double>(v[0], where + "[0]"), convert<double>(v[1], where + "[1]")};
    } else {
      using E = typename T::value_type;
      if (!v.is_array()) throw ConfigError(where + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<E>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string min_rate_rule_name(formation::MinRateRule r) {
  switch (r) {
    case formation::MinRateRule::path:
      return "path";
    case formation::MinRateRule::sender_u2b:
      return "sender_u2b";
    case formation::MinRateRule::fixed:
      return "fixed";
  }
  return "path";
}

json vec2_json(const Vec2& v) { return json::array({v.x, v.y}); }

json vec2_list(const std::vector<Vec2>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(vec2_json(v));
  return a;
}

}  // namespace

channel::ChannelParams ChannelSpec::to_params() const {
  channel::ChannelParams p;
  p.num_subchannels = num_subchannels;
  p.bandwidth_hz = bandwidth_hz;
  p.noise_w = channel::dbm_to_watts(noise_dbm);
  p.alpha_u = alpha_u;
  p.alpha_s = alpha_s;
  p.beta_u = beta_u;
  p.beta_s = beta_s;
  p.p_uav_w = channel::dbm_to_watts(p_uav_dbm);
  p.q_gu_w = channel::dbm_to_watts(q_gu_dbm);
  p.carrier_hz = carrier_hz;
  return p;
}

void RunConfig::validate() const {
  try {
    scenario.validate();
    channel.to_params().validate();
    formation.validate();
    gp.validate();
    training.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (compare.policies.empty()) throw ConfigError("compare.policies: must not be empty");
  for (std::size_t i = 0; i < compare.policies.size(); ++i) {
    try {
      formation::policy_kind_from_string(compare.policies[i]);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("compare.policies[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (compare.demand_scales.empty()) throw ConfigError("compare.demand_scales: must not be empty");
  for (double s : compare.demand_scales)
    if (!(s > 0)) throw ConfigError("compare.demand_scales: scales must be > 0");
  if (compare.max_slots < 1) throw ConfigError("compare.max_slots: must be >= 1");
  if (output.metrics_every < 1) throw ConfigError("output.metrics_every: must be >= 1");
  if (output.trajectory_every < 1) throw ConfigError("output.trajectory_every: must be >= 1");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  {
    auto s = root.sub("scenario");
    auto& sc = c.scenario;
    s.get("half_width_m", sc.half_width);
    s.get("num_uavs", sc.num_uavs);
    s.get("num_gus", sc.num_gus);
    s.get("gu_positions_m", sc.gu_positions);
    s.get("uav_starts_m", sc.uav_starts);
    s.get("gu_demand_bits", sc.gu_demand);
    s.get("d_max_bits", sc.d_max);
    s.get("altitude_m", sc.uav_altitude);
    s.get("bs_height_m", sc.bs_height);
    s.get("bs_xy_m", sc.bs_xy);
    s.get("v_max", sc.v_max);
    s.get("coverage_snr_db", sc.coverage_snr_db);
    auto p = s.sub("protocol");
    p.get("slot_s", sc.protocol.slot_len);
    p.get("t_fly_s", sc.protocol.t_fly);
    p.get("t_sense_s", sc.protocol.t_sense);
    p.get("t_offload_s", sc.protocol.t_offload);
    p.get("d_min_m", sc.protocol.d_min);
    p.finish();
    auto e = s.sub("energy");
    e.get("c1", sc.energy.c1);
    e.get("c2", sc.energy.c2);
    e.get("hover_w", sc.energy.hover_power);
    e.get("v_floor", sc.energy.v_floor);
    e.finish();
    s.finish();
  }
  {
    auto s = root.sub("channel");
    auto& ch = c.channel;
    s.get("K", ch.num_subchannels);
    s.get("bandwidth_hz", ch.bandwidth_hz);
    s.get("noise_dbm", ch.noise_dbm);
    s.get("alpha_u", ch.alpha_u);
    s.get("alpha_s", ch.alpha_s);
    s.get("beta_u", ch.beta_u);
    s.get("beta_s", ch.beta_s);
    s.get("p_uav_dbm", ch.p_uav_dbm);
    s.get("q_gu_dbm", ch.q_gu_dbm);
    s.get("carrier_hz", ch.carrier_hz);
    s.finish();
  }
  {
    auto s = root.sub("formation");
    auto& f = c.formation;
    std::string kind = std::string(formation::to_string(f.kind));
    std::string rule = min_rate_rule_name(f.min_rate_rule);
    s.get("policy", kind);
    s.get("b_threshold", f.b_threshold);
    s.get("buffer_threshold_bits", f.buffer_threshold);
    s.get("d_k_m", f.pairing_distance);
    s.get("min_rate_rule", rule);
    s.get("min_rate_bps", f.min_rate);
    s.get("dynamic_margin", f.dynamic_margin);
    s.get("ratio_cap", f.ratio_cap);
    s.get("baseline_path_guard", f.baseline_path_guard);
    s.finish();
    try {
      f.kind = formation::policy_kind_from_string(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("formation.policy: ") + e.what());
    }
    if (rule == "path")
      f.min_rate_rule = formation::MinRateRule::path;
    else if (rule == "sender_u2b")
      f.min_rate_rule = formation::MinRateRule::sender_u2b;
    else if (rule == "fixed")
      f.min_rate_rule = formation::MinRateRule::fixed;
    else
      throw ConfigError("formation.min_rate_rule: expected \"path\", \"sender_u2b\" or \"fixed\"");
  }
  {
    auto s = root.sub("gp");
    auto& g = c.gp;
    s.get("length_scale", g.length_scale);
    s.get("signal_var", g.signal_var);
    s.get("jitter", g.noise_jitter);
    s.get("prior_mean", g.prior_mean);
    s.get("window", g.window);
    s.get("n_dir", g.n_dir);
    s.get("n_rad", g.n_rad);
    s.finish();
  }
  {
    auto s = root.sub("training");
    auto& t = c.training;
    s.get("episodes", t.episodes);
    s.get("horizon", t.horizon);
    s.get("batch_size", t.batch_size);
    s.get("replay_capacity", t.replay_capacity);
    s.get("warmup", t.warmup);
    s.get("tau", t.tau);
    s.get("lr_actor", t.lr_actor);
    s.get("lr_critic", t.lr_critic);
    s.get("hidden", t.hidden);
    s.get("noise", t.noise);
    s.get("epsilon", t.epsilon);
    s.get("actor_preact_reg", t.actor_preact_reg);
    s.get("bo_enabled", t.bo_enabled);
    s.get("bo_stride", t.bo_stride);
    s.get("lambda", t.lambda);
    s.get("gp_value_unit_bits", t.gp_value_unit);
    auto r = s.sub("reward");
    r.get("energy", t.reward.energy);
    r.get("data", t.reward.data);
    r.get("sensing", t.reward.sensing);
    r.get("safety", t.reward.safety);
    r.get("discount", t.reward.discount);
    r.get("energy_unit_j", t.reward.energy_unit);
    r.get("data_unit_bits", t.reward.data_unit);
    r.finish();
    s.finish();
  }
  {
    auto s = root.sub("compare");
    s.get("policies", c.compare.policies);
    s.get("demand_scales", c.compare.demand_scales);
    s.get("max_slots", c.compare.max_slots);
    s.finish();
  }
  {
    auto s = root.sub("output");
    s.get("metrics_every", c.output.metrics_every);
    s.get("trajectory_every", c.output.trajectory_every);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  const auto& sc = c.scenario;
  const auto& t = c.training;
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["scenario"] = {
      {"half_width_m", sc.half_width},
      {"num_uavs", sc.num_uavs},
      {"num_gus", sc.num_gus},
      {"gu_positions_m", vec2_list(sc.gu_positions)},
      {"uav_starts_m", vec2_list(sc.uav_starts)},
      {"gu_demand_bits", sc.gu_demand},
      {"d_max_bits", sc.d_max},
      {"altitude_m", sc.uav_altitude},
      {"bs_height_m", sc.bs_height},
      {"bs_xy_m", vec2_json(sc.bs_xy)},
      {"v_max", sc.v_max},
      {"coverage_snr_db", sc.coverage_snr_db},
      {"protocol",
       {{"slot_s", sc.protocol.slot_len},
        {"t_fly_s", sc.protocol.t_fly},
        {"t_sense_s", sc.protocol.t_sense},
        {"t_offload_s", sc.protocol.t_offload},
        {"d_min_m", sc.protocol.d_min}}},
      {"energy",
       {{"c1", sc.energy.c1}, {"c2", sc.energy.c2}, {"hover_w", sc.energy.hover_power}, {"v_floor", sc.energy.v_floor}}},
  };
  j["channel"] = {
      {"K", c.channel.num_subchannels}, {"bandwidth_hz", c.channel.bandwidth_hz}, {"noise_dbm", c.channel.noise_dbm},
      {"alpha_u", c.channel.alpha_u},   {"alpha_s", c.channel.alpha_s},           {"beta_u", c.channel.beta_u},
      {"beta_s", c.channel.beta_s},     {"p_uav_dbm", c.channel.p_uav_dbm},       {"q_gu_dbm", c.channel.q_gu_dbm},
      {"carrier_hz", c.channel.carrier_hz},
  };
  j["formation"] = {
      {"policy", std::string(formation::to_string(c.formation.kind))},
      {"b_threshold", c.formation.b_threshold},
      {"buffer_threshold_bits", c.formation.buffer_threshold},
      {"d_k_m", c.formation.pairing_distance},
      {"min_rate_rule", min_rate_rule_name(c.formation.min_rate_rule)},
      {"min_rate_bps", c.formation.min_rate},
      {"dynamic_margin", c.formation.dynamic_margin},
      {"ratio_cap", c.formation.ratio_cap},
      {"baseline_path_guard", c.formation.baseline_path_guard},
  };
  j["gp"] = {
      {"length_scale", c.gp.length_scale}, {"signal_var", c.gp.signal_var}, {"jitter", c.gp.noise_jitter},
      {"prior_mean", c.gp.prior_mean},     {"window", c.gp.window},         {"n_dir", c.gp.n_dir},
      {"n_rad", c.gp.n_rad},
  };
  j["training"] = {
      {"episodes", t.episodes},
      {"horizon", t.horizon},
      {"batch_size", t.batch_size},
      {"replay_capacity", t.replay_capacity},
      {"warmup", t.warmup},
      {"tau", t.tau},
      {"lr_actor", t.lr_actor},
      {"lr_critic", t.lr_critic},
      {"hidden", t.hidden},
      {"noise", t.noise},
      {"epsilon", t.epsilon},
      {"actor_preact_reg", t.actor_preact_reg},
      {"bo_enabled", t.bo_enabled},
      {"bo_stride", t.bo_stride},
      {"lambda", t.lambda},
      {"gp_value_unit_bits", t.gp_value_unit},
      {"reward",
       {{"energy", t.reward.energy},
        {"data", t.reward.data},
        {"sensing", t.reward.sensing},
        {"safety", t.reward.safety},
        {"discount", t.reward.discount},
        {"energy_unit_j", t.reward.energy_unit},
        {"data_unit_bits", t.reward.data_unit}}},
  };
  j["compare"] = {
      {"policies", c.compare.policies}, {"demand_scales", c.compare.demand_scales}, {"max_slots", c.compare.max_slots}};
  j["output"] = {{"metrics_every", c.output.metrics_every}, {"trajectory_every", c.output.trajectory_every}};
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  if (std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isspace(ch); }))
    return config_from_json(json::object());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace uavnet
