#include "uavnet/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uavnet::gp {

SampleHistory::SampleHistory(std::size_t window) : window_(window) {
  if (window == 0) throw std::invalid_argument("gp.window: must be >= 1");
}

void SampleHistory::push(const Position& pos, double value) {
  if (samples_.size() == window_) samples_.pop_front();
  samples_.push_back({pos, std::max(0.0, value)});
}

void GpConfig::validate() const {
  if (!(length_scale > 0)) throw std::invalid_argument("gp.length_scale: must be > 0");
  if (!(signal_var > 0)) throw std::invalid_argument("gp.signal_var: must be > 0");
  if (!(noise_jitter > 0)) throw std::invalid_argument("gp.jitter: must be > 0");
  if (window < 1) throw std::invalid_argument("gp.window: must be >= 1");
  if (n_dir < 1) throw std::invalid_argument("gp.n_dir: must be >= 1");
  if (n_rad < 1) throw std::invalid_argument("gp.n_rad: must be >= 1");
}

double kernel(const Position& p, const Position& q, const GpConfig& cfg) {
  const double dx = p.x - q.x;
  const double dy = p.y - q.y;
  const double l2 = cfg.length_scale * cfg.length_scale;
  return cfg.signal_var * std::exp(-0.5 * (dx * dx + dy * dy) / l2);
}

GpModel::GpModel(const SampleHistory& h, const GpConfig& cfg, KernelFn k) : cfg_(cfg), kernel_(k) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(h.size());
  if (n == 0) return;

  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd y(n);
  points_.reserve(h.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    points_.push_back(h[i].pos);
    y(i) = h[i].value - cfg.prior_mean;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = kernel_(points_[i], points_[j], cfg);

  const double cap = cfg.noise_jitter * 1e6;
  for (jitter_ = cfg.noise_jitter; jitter_ <= cap; jitter_ *= 10.0) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += jitter_;
    llt_.compute(A);
    if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 0.0) {
      alpha_ = llt_.solve(y);
      return;
    }
  }
  throw std::runtime_error("gp: kernel matrix is not positive definite even with raised jitter");
}

Posterior GpModel::predict(const Position& query) const {
  if (points_.empty()) return {cfg_.prior_mean, cfg_.signal_var};
  const auto n = static_cast<Eigen::Index>(points_.size());
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) k(i) = kernel_(points_[i], query, cfg_);
  const Eigen::VectorXd v = llt_.matrixL().solve(k);
  Posterior p;
  p.mean = cfg_.prior_mean + k.dot(alpha_);
  p.var = std::max(0.0, kernel_(query, query, cfg_) - v.squaredNorm());
  return p;
}

Posterior posterior(const SampleHistory& h, const Position& query, const GpConfig& cfg) {
  return GpModel(h, cfg).predict(query);
}

double best_observed(const SampleHistory& h) {
  double best = 0.0;
  for (const auto& s : h) best = std::max(best, s.value);
  return best;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(const Posterior& p, double f_star) {
  const double gain = p.mean - f_star;
  const double sigma = std::sqrt(std::max(0.0, p.var));
  if (sigma <= 0.0) return std::max(0.0, gain);
  const double z = gain / sigma;
  // The closed form can dip a hair below zero far in the left tail.
  return std::max(0.0, gain * normal_cdf(z) + sigma * normal_pdf(z));
}

std::vector<Position> candidates(const Position& current, double reach, const GpConfig& cfg, const Bounds& bounds) {
  if (!(reach > 0)) throw std::invalid_argument("propose_point: reach must be > 0");
  std::vector<Position> out;
  out.reserve(1 + static_cast<std::size_t>(cfg.n_dir * cfg.n_rad));
  out.push_back(bounds.clamp(current));
  for (int r = 1; r <= cfg.n_rad; ++r) {
    const double radius = reach * r / cfg.n_rad;
    for (int d = 0; d < cfg.n_dir; ++d) {
      const double angle = 2.0 * std::numbers::pi * d / cfg.n_dir;
      Position p = current;
      p.x += radius * std::cos(angle);
      p.y += radius * std::sin(angle);
      out.push_back(bounds.clamp(p));
    }
  }
  return out;
}

Proposal propose(const SampleHistory& h, const Position& current, double reach, const GpConfig& cfg,
                 const Bounds& bounds) {
  const auto cand = candidates(current, reach, cfg, bounds);
  const GpModel model(h, cfg);
  const double f_star = best_observed(h);
  Proposal best{cand[0], 0, expected_improvement(model.predict(cand[0]), f_star)};
  for (std::size_t i = 1; i < cand.size(); ++i) {
    const double ei = expected_improvement(model.predict(cand[i]), f_star);
    if (ei > best.ei) best = {cand[i], i, ei};
  }
  return best;
}

Position propose_point(const SampleHistory& h, const Position& current, double reach, const GpConfig& cfg,
                       const Bounds& bounds) {
  return propose(h, current, reach, cfg, bounds).point;
}

}  // namespace uavnet::gp
