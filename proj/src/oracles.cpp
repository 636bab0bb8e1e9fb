#include "uavnet/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "uavnet/channel.hpp"
#include "uavnet/formation.hpp"
#include "uavnet/marl.hpp"
#include "uavnet/nn.hpp"
#include "uavnet/world.hpp"

namespace uavnet::oracles {

namespace {

/// Gaussian elimination with partial pivoting; solves A x = b for each
/// right-hand side column.
std::vector<std::vector<double>> dense_solve(std::vector<std::vector<double>> A,
                                             std::vector<std::vector<double>> rhs) {
  const std::size_t n = A.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    std::swap(A[col], A[piv]);
    for (auto& b : rhs) std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = A[r][col] / A[col][col];
      for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
      for (auto& b : rhs) b[r] -= f * b[col];
    }
  }
  for (auto& b : rhs) {
    for (std::size_t r = n; r-- > 0;) {
      double s = b[r];
      for (std::size_t c = r + 1; c < n; ++c) s -= A[r][c] * b[c];
      b[r] = s / A[r][r];
    }
  }
  return rhs;
}

double se_kernel(double px, double py, double qx, double qy, double length, double sv) {
  const double d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy);
  return sv * std::exp(-d2 / (2.0 * length * length));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

/// Incoming plus outgoing entries per (UAV, sub-channel) summed directly.
std::vector<std::pair<std::size_t, int>> eq1_violations(const channel::FormationMatrix& phi) {
  std::vector<std::pair<std::size_t, int>> out;
  const std::size_t N = phi.num_uavs();
  for (std::size_t i = 1; i <= N; ++i) {
    for (int k = 0; k < phi.num_subchannels(); ++k) {
      int incoming = 0, outgoing = 0;
      for (std::size_t m = 1; m <= N; ++m)
        if (m != i) incoming += phi.get(m, i, k);
      for (std::size_t j = 0; j <= N; ++j)
        if (j != i) outgoing += phi.get(i, j, k);
      if (incoming + outgoing > 1) out.emplace_back(i, k);
    }
  }
  return out;
}

/// Slot objective after one offloading sub-slot, derived from scratch.
double objective_by_hand(const WorldState& w, const channel::FormationMatrix& phi, double lambda) {
  const auto& ch = w.env->channel;
  const std::size_t N = w.uavs.size();
  const int K = ch.num_subchannels;
  std::vector<Position> pos{w.env->bs_position()};
  for (const auto& u : w.uavs) pos.push_back(u.pos);
  auto rx_power = [&](std::size_t a, std::size_t b) {
    const double d = std::max(1.0, distance(pos[a], pos[b]));
    return ch.p_uav_w * ch.beta_u / std::pow(d, ch.alpha_u);
  };
  auto transmits_on = [&](std::size_t m, int k) {
    for (std::size_t j = 0; j <= N; ++j)
      if (phi.get(m, j, k)) return true;
    return false;
  };

  std::vector<double> out(N, 0.0), in(N, 0.0), room(N);
  for (std::size_t i = 0; i < N; ++i) room[i] = std::max(0.0, w.env->scenario.d_max - w.uavs[i].buffer);
  for (std::size_t tx = 1; tx <= N; ++tx) {
    double left = w.uavs[tx - 1].buffer;
    for (std::size_t rx = 0; rx <= N; ++rx) {
      if (rx == tx) continue;
      double rate = 0.0;
      for (int k = 0; k < K; ++k) {
        if (!phi.get(tx, rx, k)) continue;
        double interf = 0.0;
        for (std::size_t m = 1; m <= N; ++m)
          if (m != tx && transmits_on(m, k)) interf += rx_power(m, rx);
        rate += ch.bandwidth_hz * std::log2(1.0 + rx_power(tx, rx) / (ch.noise_w + interf));
      }
      double bits = std::min(rate * w.env->scenario.protocol.t_offload, left);
      if (rx != 0) {
        bits = std::min(bits, room[rx - 1]);
        room[rx - 1] -= bits;
        in[rx - 1] += bits;
      }
      left -= bits;
      out[tx - 1] += bits;
    }
  }
  double total = 0.0;
  for (const auto& g : w.gus) total += g.remaining;
  for (std::size_t i = 0; i < N; ++i) {
    const double next = std::min(std::max(0.0, w.uavs[i].buffer - out[i]) + in[i], w.env->scenario.d_max);
    total += w.uavs[i].last_energy + lambda * next;
  }
  return total;
}

}  // namespace

bool OracleReport::passed() const {
  return !results.empty() && std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

nlohmann::json OracleReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : results)
    list.push_back({{"name", r.name},
                    {"cases", r.cases},
                    {"max_error", r.max_error},
                    {"tolerance", r.tolerance},
                    {"passed", r.passed},
                    {"detail", r.detail}});
  return {{"passed", passed()}, {"seconds", seconds}, {"oracles", list}};
}

OracleResult check_gp_dense(const OracleOptions& opt) {
  OracleResult res{"gp_posterior_dense", 0, 0.0, 1e-8, false, ""};
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0), value(0.0, 5.0), length(0.2, 0.8), sv(0.5, 2.0);
  std::uniform_int_distribution<int> size(1, 8);
  try {
    for (int trial = 0; trial < 20; ++trial) {
      gp::GpConfig cfg;
      cfg.length_scale = length(rng);
      cfg.signal_var = sv(rng);
      cfg.noise_jitter = 1e-6 * cfg.signal_var;
      cfg.prior_mean = 0.0;
      gp::SampleHistory h(8);
      const int n = size(rng);
      double y_scale = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = coord(rng), y = coord(rng), v = value(rng);
        h.push({x, y, 0.0}, v);
        y_scale = std::max(y_scale, v);
      }

      std::vector<std::vector<double>> K(n, std::vector<double>(n));
      std::vector<double> ys(n);
      for (int i = 0; i < n; ++i) {
        ys[i] = h[i].value;
        for (int j = 0; j < n; ++j)
          K[i][j] = se_kernel(h[i].pos.x, h[i].pos.y, h[j].pos.x, h[j].pos.y, cfg.length_scale, cfg.signal_var) +
                    (i == j ? cfg.noise_jitter : 0.0);
      }
      std::vector<Position> queries{h[0].pos};
      for (int q = 0; q < 5; ++q) queries.push_back({coord(rng), coord(rng), 0.0});

      const gp::GpModel model(h, cfg, opt.kernel);
      for (const auto& q : queries) {
        std::vector<double> k(n);
        for (int i = 0; i < n; ++i)
          k[i] = se_kernel(h[i].pos.x, h[i].pos.y, q.x, q.y, cfg.length_scale, cfg.signal_var);
        const auto sol = dense_solve(K, {ys, k});
        double mean = 0.0, explained = 0.0;
        for (int i = 0; i < n; ++i) {
          mean += k[i] * sol[0][i];
          explained += k[i] * sol[1][i];
        }
        const double var = std::max(0.0, cfg.signal_var - explained);
        const auto got = model.predict(q);
        // Errors are relative to the quantity or its natural scale, whichever
        // is larger, so near-zero variances do not inflate them.
        const double e_mean = std::abs(got.mean - mean) / std::max(std::abs(mean), y_scale);
        const double e_var = std::abs(got.var - var) / std::max(var, cfg.signal_var);
        res.max_error = std::max({res.max_error, e_mean, e_var});
        if (!std::isfinite(got.mean) || !std::isfinite(got.var)) res.max_error = INFINITY;
        ++res.cases;
      }
    }
    res.passed = res.max_error <= res.tolerance;
    res.detail = std::to_string(res.cases) + " queries over 20 histories";
  } catch (const std::exception& e) {
    res.passed = false;
    res.max_error = INFINITY;
    res.detail = std::string("posterior failed: ") + e.what();
  }
  return res;
}

OracleResult check_ei_monte_carlo(const OracleOptions& opt) {
  OracleResult res{"ei_monte_carlo", 0, 0.0, 1e-2, false, ""};
  const double triples[10][3] = {{1, 1, 0},      {0, 1, 0},     {0.5, 2, 1},  {2, 0.5, 1.5}, {3, 1.5, 2},
                                 {0.2, 0.3, 0.4}, {10, 4, 8},   {-1, 1, -1.5}, {5, 0.1, 4.9}, {1, 2, 2.5}};
  std::mt19937_64 rng(opt.seed + 1);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (const auto& t : triples) {
    const double mu = t[0], sd = t[1], f_star = t[2];
    double acc = 0.0;
    for (std::size_t d = 0; d < opt.ei_draws; ++d) acc += std::max(0.0, mu + sd * n01(rng) - f_star);
    const double mc = acc / static_cast<double>(opt.ei_draws);
    const double cf = gp::expected_improvement({mu, sd * sd}, f_star);
    res.max_error = std::max(res.max_error, std::abs(cf - mc) / std::max(mc, 1e-12));
    ++res.cases;
  }
  res.passed = res.max_error <= res.tolerance;
  res.detail = std::to_string(opt.ei_draws) + " draws per triple";
  return res;
}

OracleResult check_mlp_gradients(const OracleOptions& opt) {
  OracleResult res{"mlp_gradients_fd", 0, 0.0, 1e-4, false, ""};
  constexpr double h = 1e-5;
  constexpr std::size_t kUavs = 3;
  const std::vector<std::pair<std::vector<int>, nn::Activation>> shapes = {
      {{marl::obs_dim(kUavs), 64, 64, marl::kActionDim}, nn::Activation::tanh},
      {{marl::critic_input_dim(kUavs), 64, 64, 1}, nn::Activation::identity},
  };
  using M = nn::Mat<double>;
  for (std::size_t s = 0; s < opt.gradient_seeds; ++s) {
    for (const auto& [dims, act] : shapes) {
      std::mt19937_64 rng(opt.seed * 1000 + s);
      nn::Mlp<double> net(dims, act, rng);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      M x(dims.front(), 3), dy(dims.back(), 3);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < dy.size(); ++i) dy.data()[i] = u(rng);

      nn::ForwardCache<double> cache;
      net.forward(x, cache);
      const auto g = net.backward(cache, dy);
      auto loss = [&](const nn::Mlp<double>& n, const M& in) { return (n.forward(in).array() * dy.array()).sum(); };
      auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };

      nn::Mlp<double> probe = net;
      auto& layers = probe.mutable_layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto visit = [&](auto& p, const auto& grad) {
          for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double keep = p.data()[i];
            p.data()[i] = keep + h;
            const double up = loss(probe, x);
            p.data()[i] = keep - h;
            const double down = loss(probe, x);
            p.data()[i] = keep;
            res.max_error = std::max(res.max_error, rel(grad.data()[i], (up - down) / (2 * h)));
            ++res.cases;
          }
        };
        visit(layers[l].W, g.layers[l].W);
        visit(layers[l].b, g.layers[l].b);
      }
      M xp = x;
      for (Eigen::Index i = 0; i < xp.size(); ++i) {
        const double keep = xp.data()[i];
        xp.data()[i] = keep + h;
        const double up = loss(net, xp);
        xp.data()[i] = keep - h;
        const double down = loss(net, xp);
        xp.data()[i] = keep;
        res.max_error = std::max(res.max_error, rel(g.dx.data()[i], (up - down) / (2 * h)));
        ++res.cases;
      }
    }
  }
  res.passed = res.max_error <= res.tolerance;
  res.detail = std::to_string(opt.gradient_seeds) + " seeds, actor and critic shapes";
  return res;
}

OracleResult check_alloc_enumerator(const OracleOptions&) {
  OracleResult res{"alloc_enumerator", 0, 0.0, 0.0, false, ""};
  std::size_t mismatches = 0;
  for (std::size_t N = 1; N <= 3; ++N) {
    for (int K = 1; K <= 2; ++K) {
      std::vector<channel::Link> entries;
      for (std::size_t tx = 1; tx <= N; ++tx)
        for (std::size_t rx = 0; rx <= N; ++rx)
          if (rx != tx)
            for (int k = 0; k < K; ++k) entries.push_back({tx, rx, k});
      const std::uint64_t total = std::uint64_t{1} << entries.size();
      for (std::uint64_t mask = 0; mask < total; ++mask) {
        channel::FormationMatrix phi(N, K);
        for (std::size_t e = 0; e < entries.size(); ++e)
          if (mask >> e & 1U) phi.set(entries[e].tx, entries[e].rx, entries[e].k);
        const auto expected = eq1_violations(phi);
        const auto check = channel::validate_alloc(phi);
        std::vector<std::pair<std::size_t, int>> got;
        bool other_kind = false;
        for (const auto& v : check.violations) {
          if (v.kind == channel::AllocViolation::Kind::channel_conflict)
            got.emplace_back(v.node, v.k);
          else
            other_kind = true;
        }
        std::sort(got.begin(), got.end());
        auto want = expected;
        std::sort(want.begin(), want.end());
        if (got != want || other_kind || check.ok() != expected.empty()) ++mismatches;
        ++res.cases;
      }
    }
  }
  res.max_error = static_cast<double>(mismatches);
  res.passed = mismatches == 0;
  res.detail = std::to_string(mismatches) + " disagreements";
  return res;
}

OracleResult check_brute_force(const OracleOptions& opt) {
  OracleResult res{"brute_force_formation", 0, 0.0, 1e-9, false, ""};
  std::mt19937_64 rng(opt.seed + 2);
  std::uniform_real_distribution<double> coord(-1000.0, 1000.0), unit(0.0, 1.0);
  double worst_gap = 0.0;
  for (std::size_t N = 1; N <= 3; ++N) {
    for (int K = 1; K <= 2; ++K) {
      for (int trial = 0; trial < 3; ++trial) {
        ScenarioConfig sc;
        sc.num_uavs = N;
        sc.num_gus = 2;
        channel::ChannelParams ch;
        ch.num_subchannels = K;
        auto w = make_world(make_environment(sc, ch), rng());
        for (auto& u : w.uavs) {
          u.pos = {coord(rng), coord(rng), sc.uav_altitude};
          u.buffer = unit(rng) * sc.d_max;
          u.last_energy = 1000.0 * unit(rng);
        }
        for (auto& g : w.gus) g.remaining = unit(rng) * g.demand;
        const double lambda = 0.5;
        const std::vector<double> lambdas(N, lambda);

        std::vector<channel::Link> entries;
        for (std::size_t tx = 1; tx <= N; ++tx)
          for (std::size_t rx = 0; rx <= N; ++rx)
            if (rx != tx)
              for (int k = 0; k < K; ++k) entries.push_back({tx, rx, k});
        double best = INFINITY;
        std::size_t feasible = 0;
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << entries.size()); ++mask) {
          channel::FormationMatrix phi(N, K);
          for (std::size_t e = 0; e < entries.size(); ++e)
            if (mask >> e & 1U) phi.set(entries[e].tx, entries[e].rx, entries[e].k);
          if (!eq1_violations(phi).empty()) continue;
          ++feasible;
          best = std::min(best, objective_by_hand(w, phi, lambda));
        }
        const auto bf = formation::brute_force_formation(w, lambdas);
        const double scale = std::max(1.0, std::abs(best));
        const double err = std::max(std::abs(bf.cost - best) / scale,
                                    std::abs(objective_by_hand(w, bf.phi, lambda) - bf.cost) / scale);
        res.max_error = std::max(res.max_error, err);
        if (bf.feasible_count != feasible) res.max_error = INFINITY;

        formation::FormationPolicy fp;
        const auto eda = formation::apply_policy(fp, w, lambdas);
        worst_gap = std::max(worst_gap, (objective_by_hand(w, eda, lambda) - best) / scale);
        ++res.cases;
      }
    }
  }
  res.passed = res.max_error <= res.tolerance;
  res.detail = "EDA-NF worst relative gap to the optimum " + fmt(worst_gap);
  return res;
}

OracleReport run_oracle_checks(const OracleOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  OracleReport report;
  report.results.push_back(check_gp_dense(opt));
  report.results.push_back(check_ei_monte_carlo(opt));
  report.results.push_back(check_mlp_gradients(opt));
  report.results.push_back(check_alloc_enumerator(opt));
  report.results.push_back(check_brute_force(opt));
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace uavnet::oracles
