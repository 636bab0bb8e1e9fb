// Acceptance runner: one PASS/FAIL line per criterion, then a summary.
// Exit status is 0 once every selected criterion has been evaluated; the
// verdicts are in the output (and in --report if given).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "properties.hpp"
#include "uavnet/config.hpp"
#include "uavnet/harness.hpp"
#include "uavnet/marl.hpp"
#include "uavnet/oracles.hpp"

using namespace uavnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<Verdict> g_verdicts;

void report(Verdict v) {
  std::printf("[%s] %-3s %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", v.id.c_str(), v.title.c_str(), v.detail.c_str(),
              v.seconds);
  std::fflush(stdout);
  g_verdicts.push_back(std::move(v));
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------- 1 .. 3

void criterion_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = oracles::run_oracle_checks();
  const double secs = since(t0);
  std::ostringstream d;
  for (const auto& r : rep.results) d << r.name << " " << (r.passed ? "ok" : "BAD") << " err " << r.max_error << "; ";
  d << "limit 120 s";
  report({"1", "oracle suite", rep.passed() && secs < 120.0, d.str(), secs});
}

void criterion_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = testing::sweep_world_invariants(2024, 1000);
  const double secs = since(t0);
  std::string d = std::to_string(r.cases) + " slots, " + std::to_string(r.violations) + " violations";
  if (r.violations) d += " (first: " + r.first + ")";
  report({"2", "simulator invariants", r.violations == 0 && r.cases == 1000 && secs < 60.0, d, secs});
}

void criterion_eda() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const auto r = testing::sweep_eda_properties(2024, 1000, &worst);
  const double secs = since(t0);
  std::ostringstream d;
  d << r.cases << " reports, " << r.violations << " violations, worst |sum b| " << worst;
  if (r.violations) d << " (first: " << r.first << ")";
  report({"3", "EDA-NF structure", r.violations == 0 && worst <= 1e-9 && secs < 60.0, d.str(), secs});
}

// ---------------------------------------------------------------- 4

struct SanityResult {
  bool reached = false;
  std::size_t episodes = 0;
  double learned = 0.0;
  double scripted = 0.0;
};

SanityResult single_agent_run(std::uint64_t seed, std::size_t max_episodes, std::size_t eval_every) {
  auto sc = testing::desk_scenario(1, 1);
  sc.gu_positions = {{300, 0}};
  sc.uav_starts = {{0, 0}};
  const auto env = make_environment(sc, {});
  marl::TrainConfig tc;
  tc.horizon = 30;
  tc.bo_enabled = false;
  formation::FormationPolicy fp;

  auto eval = [&](const marl::ActionFn& policy) {
    auto w = make_world(env, 1);
    return marl::rollout(w, policy, fp, tc.reward, tc.lambda, tc.horizon).reward;
  };
  SanityResult res;
  res.scripted = eval(marl::scripted_policy());
  const double target = res.scripted - 0.1 * std::abs(res.scripted);

  marl::Trainer trainer(env, tc, fp, {}, seed);
  for (std::size_t e = 1; e <= max_episodes; ++e) {
    trainer.run_episode();
    if (e % eval_every) continue;
    res.learned = eval(marl::actor_policy(trainer.actors()));
    res.episodes = e;
    if (res.learned >= target) {
      res.reached = true;
      break;
    }
  }
  return res;
}

void criterion_single_agent() {
  const auto t0 = std::chrono::steady_clock::now();
  int ok = 0;
  std::ostringstream d;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = single_agent_run(seed, 5000, 100);
    ok += r.reached;
    d << "seed " << seed << ": " << (r.reached ? "reached" : "not reached") << " at " << r.episodes << " ep (learned "
      << fmt("%.3f", r.learned) << " vs scripted " << fmt("%.3f", r.scripted) << "); ";
  }
  const double secs = since(t0);
  d << ok << "/3 seeds, limit 900 s";
  report({"4", "single-agent DDPG sanity", ok == 3 && secs < 900.0, d.str(), secs});
}

// ---------------------------------------------------------------- 5

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

RunConfig variant_config(const RunConfig& base, std::uint64_t seed, bool bo) {
  RunConfig cfg = base;
  cfg.seed = seed;
  cfg.training.bo_enabled = bo;
  return cfg;
}

fs::path cache_file(const fs::path& dir, const RunConfig& cfg) {
  char key[17];
  std::snprintf(key, sizeof key, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(cfg).dump())));
  return dir / ((cfg.training.bo_enabled ? std::string("bo") : std::string("plain")) + "_seed" +
                std::to_string(cfg.seed) + "_" + key + ".json");
}

/// Trains one variant/seed and evaluates the frozen actors on the demand sweep.
json study_run(const RunConfig& cfg) {
  const double c0 = cpu_seconds();
  const auto t0 = std::chrono::steady_clock::now();
  marl::Trainer trainer(harness::make_env(cfg), cfg.training, cfg.formation, cfg.gp, cfg.seed);
  std::vector<double> reward, sensed;
  for (std::size_t e = 0; e < cfg.training.episodes; ++e) {
    const auto s = trainer.run_episode();
    reward.push_back(s.reward);
    sensed.push_back(s.sensed);
    if ((e + 1) % 1000 == 0) {
      std::fprintf(stderr, "  %s seed %llu: %zu/%zu episodes, %.0f s\n", cfg.training.bo_enabled ? "bo" : "plain",
                   static_cast<unsigned long long>(cfg.seed), e + 1, cfg.training.episodes, since(t0));
    }
  }
  const auto runs = harness::compare_policies(cfg, cfg.compare.policies, marl::actor_policy(trainer.actors()));
  json cmp = json::array();
  for (const auto& r : runs)
    cmp.push_back({{"policy", r.policy},
                   {"completion_slots", r.completion_slots},
                   {"drained", r.drained},
                   {"max_buffer_bits", r.max_buffer},
                   {"total_energy", r.total_energy}});
  return {{"seed", cfg.seed},
          {"bo_enabled", cfg.training.bo_enabled},
          {"episodes", cfg.training.episodes},
          {"reward", reward},
          {"sensed", sensed},
          {"compare", cmp},
          {"demand_scales", cfg.compare.demand_scales},
          {"cpu_seconds", cpu_seconds() - c0},
          {"wall_seconds", since(t0)},
          {"config", to_json(cfg)}};
}

json load_or_run(const fs::path& dir, const RunConfig& cfg, bool allow_run, bool* ran) {
  const auto path = cache_file(dir, cfg);
  if (fs::exists(path)) {
    std::ifstream in(path);
    return json::parse(in);
  }
  if (!allow_run) return nullptr;
  std::fprintf(stderr, "desk study: running %s\n", path.filename().string().c_str());
  auto j = study_run(cfg);
  fs::create_directories(dir);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump() << '\n';
  }
  fs::rename(tmp, path);
  if (ran) *ran = true;
  return j;
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to) {
  if (to <= from) return 0.0;
  return std::accumulate(v.begin() + static_cast<long>(from), v.begin() + static_cast<long>(to), 0.0) /
         static_cast<double>(to - from);
}

double variance(const std::vector<double>& v, std::size_t from, std::size_t to) {
  const double m = mean(v, from, to);
  double s = 0.0;
  for (std::size_t k = from; k < to; ++k) s += (v[k] - m) * (v[k] - m);
  return to - from > 1 ? s / static_cast<double>(to - from - 1) : 0.0;
}

struct Curve {
  double final_value = 0.0;
  std::size_t to_80 = 0;  // episodes until the smoothed reward reaches 80% of its rise
  double tail_var = 0.0;
  double mean_sensed = 0.0;
};

Curve analyse(const json& run) {
  const auto reward = run["reward"].get<std::vector<double>>();
  const auto sensed = run["sensed"].get<std::vector<double>>();
  const std::size_t n = reward.size();
  const std::size_t w = std::min<std::size_t>(100, n);
  Curve c;
  c.mean_sensed = mean(sensed, 0, n);
  c.final_value = mean(reward, n - std::max<std::size_t>(1, n / 10), n);
  c.tail_var = variance(reward, n - std::max<std::size_t>(2, n / 4), n);
  const double start = mean(reward, 0, w);
  c.to_80 = n;
  if (c.final_value > start) {
    const double target = start + 0.8 * (c.final_value - start);
    double acc = std::accumulate(reward.begin(), reward.begin() + static_cast<long>(w), 0.0);
    for (std::size_t e = w;; ++e) {
      if (acc / static_cast<double>(w) >= target) {
        c.to_80 = e;
        break;
      }
      if (e == n) break;
      acc += reward[e] - reward[e - w];
    }
  }
  return c;
}

void criterion_desk_study(const RunConfig& base, const fs::path& dir, bool allow_run, std::size_t seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<json> bo, plain;
  double cpu = 0.0;
  bool missing = false;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    for (bool variant : {true, false}) {
      auto j = load_or_run(dir, variant_config(base, s, variant), allow_run, nullptr);
      if (j.is_null()) {
        missing = true;
        continue;
      }
      cpu += j["cpu_seconds"].get<double>();
      (variant ? bo : plain).push_back(std::move(j));
    }
  }
  const double secs = since(t0);
  if (missing) {
    for (const char* id : {"5a", "5b", "5c", "5d", "5e", "5"})
      report({id, "desk study", false, "study results missing in " + dir.string(), secs});
    return;
  }

  const std::size_t need = seeds - seeds / 5;  // 4 of 5
  int a = 0, b_speed = 0, b_final = 0, c = 0, d = 0, e = 0;
  std::ostringstream da, db, dc, dd, de;
  for (std::size_t k = 0; k < seeds; ++k) {
    const auto cb = analyse(bo[k]), cp = analyse(plain[k]);
    a += cb.mean_sensed >= cp.mean_sensed;
    da << fmt("%.2f", cb.mean_sensed / 1e6) << "/" << fmt("%.2f", cp.mean_sensed / 1e6) << " ";
    b_speed += cb.to_80 < cp.to_80;
    b_final += cb.final_value >= cp.final_value;
    db << cb.to_80 << "/" << cp.to_80 << " ep, " << fmt("%.2f", cb.final_value) << "/" << fmt("%.2f", cp.final_value)
       << "; ";
    c += cb.tail_var < cp.tail_var;
    dc << fmt("%.3g", cb.tail_var) << "/" << fmt("%.3g", cp.tail_var) << " ";

    // frozen BO-MADDPG trajectory, demand sweep
    std::map<std::string, json> by;
    for (const auto& r : bo[k]["compare"]) by[r["policy"].get<std::string>()] = r;
    const auto top = bo[k]["demand_scales"].size() - 1;
    auto slots = [&](const char* p, std::size_t s) { return by.at(p)["completion_slots"][s].get<double>(); };
    const double te = slots("eda_nf", top), td = slots("dynamic_nf", top), tb = slots("buffer_threshold", top),
                 tn = slots("non_cooperative", top);
    d += te <= td && td <= tb && tb <= tn && te <= 0.9 * tn;
    dd << te << "/" << td << "/" << tb << "/" << tn << " ";
    const double be = by.at("eda_nf")["max_buffer_bits"][0].get<double>();
    const double bn = by.at("non_cooperative")["max_buffer_bits"][0].get<double>();
    e += bn >= be;
    de << fmt("%.2f", bn / 1e6) << "/" << fmt("%.2f", be / 1e6) << " ";
  }
  auto tally = [&](int n) { return std::to_string(n) + "/" + std::to_string(seeds) + " seeds"; };
  report({"5a", "sensed data BO >= plain", static_cast<std::size_t>(a) >= need,
          tally(a) + "; Mbit per episode bo/plain: " + da.str(), 0});
  report({"5b", "faster to 80% and final not lower",
          static_cast<std::size_t>(b_speed) >= need && static_cast<std::size_t>(b_final) >= need,
          "faster " + tally(b_speed) + ", final not lower " + tally(b_final) + "; bo/plain: " + db.str(), 0});
  report({"5c", "post-convergence variance BO < plain", static_cast<std::size_t>(c) >= need,
          tally(c) + "; var bo/plain: " + dc.str(), 0});
  report({"5d", "completion ordering at 3x demand", static_cast<std::size_t>(d) >= need,
          tally(d) + "; slots eda/dyn/buf/noncoop: " + dd.str(), 0});
  report({"5e", "max buffer noncoop >= EDA-NF", static_cast<std::size_t>(e) >= need,
          tally(e) + "; Mbit noncoop/eda: " + de.str(), 0});
  report({"5", "desk study CPU budget", cpu <= 4 * 3600.0,
          fmt("%.2f", cpu / 3600.0) + " h CPU over " + std::to_string(2 * seeds) + " runs, budget 4 h", secs});
}

// ---------------------------------------------------------------- 6

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_determinism(const RunConfig& base) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = base;
  cfg.training.episodes = 4;
  cfg.output.metrics_every = 1;
  const auto root = fs::temp_directory_path() / "uavnet_acceptance_det";
  fs::remove_all(root);
  bool same = true;
  std::string detail;
  for (bool bo : {true, false}) {
    cfg.training.bo_enabled = bo;
    const auto a = root / (bo ? "bo_a" : "plain_a"), b = root / (bo ? "bo_b" : "plain_b");
    harness::run_train(cfg, a);
    harness::run_train(cfg, b);
    const auto ma = slurp(a / "metrics.csv"), mb = slurp(b / "metrics.csv");
    const bool eq = !ma.empty() && ma == mb;
    same = same && eq;
    detail += std::string(bo ? "bo" : "plain") + " metrics.csv " + std::to_string(ma.size()) + " bytes " +
              (eq ? "identical" : "DIFFER") + "; ";
  }
  fs::remove_all(root);
  report({"6", "determinism", same, detail, since(t0)});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance runner"};
  std::string desk = "configs/desk.json";
  std::string study_dir = "results/desk_study";
  std::string report_path;
  std::vector<std::string> only;
  bool study_only = false, no_run = false;
  std::size_t seeds = 5;
  app.add_option("--desk-config", desk, "desk scenario config");
  app.add_option("--study-dir", study_dir, "cache of desk study runs");
  app.add_option("--only", only, "criteria to run (1 2 3 4 5 6)");
  app.add_option("--seeds", seeds, "desk study seeds");
  app.add_option("--report", report_path, "write verdicts as JSON");
  app.add_flag("--study-only", study_only, "only fill the desk study cache");
  app.add_flag("--no-run", no_run, "never train for the desk study, use the cache only");
  CLI11_PARSE(app, argc, argv);

  harness::tune_allocator();
  const RunConfig base = load_config(desk);

  if (study_only) {
    for (std::uint64_t s = 1; s <= seeds; ++s)
      for (bool variant : {true, false}) load_or_run(study_dir, variant_config(base, s, variant), true, nullptr);
    return 0;
  }

  const std::set<std::string> pick(only.begin(), only.end());
  auto want = [&](const char* id) { return pick.empty() || pick.count(id); };
  if (want("1")) criterion_oracles();
  if (want("2")) criterion_invariants();
  if (want("3")) criterion_eda();
  if (want("4")) criterion_single_agent();
  if (want("5")) criterion_desk_study(base, study_dir, !no_run, seeds);
  if (want("6")) criterion_determinism(base);

  std::size_t passed = 0;
  json out = json::array();
  for (const auto& v : g_verdicts) {
    passed += v.pass;
    out.push_back({{"id", v.id}, {"title", v.title}, {"pass", v.pass}, {"detail", v.detail}, {"seconds", v.seconds}});
  }
  std::printf("acceptance: %zu/%zu criteria passed\n", passed, g_verdicts.size());
  if (!report_path.empty()) std::ofstream(report_path) << out.dump(2) << '\n';
  return 0;
}
