#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include <Eigen/Dense>

#include "uavnet/geometry.hpp"

namespace uavnet::gp {

struct Sample {
  Position pos;
  double value = 0.0;
};

/// Sliding window of the most recent samples, oldest first.
class SampleHistory {
 public:
  explicit SampleHistory(std::size_t window = 50);

  /// Negative values are clamped to zero.
  void push(const Position& pos, double value);
  void clear() { samples_.clear(); }

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t window() const { return window_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

 private:
  std::size_t window_;
  std::deque<Sample> samples_;
};

struct GpConfig {
  double length_scale = 0.3;  // in the units of the stored positions
  double signal_var = 1.0;
  double noise_jitter = 1e-6;  // diagonal variance
  double prior_mean = 0.0;
  std::size_t window = 50;
  int n_dir = 16;
  int n_rad = 4;

  void validate() const;  // throws std::invalid_argument
};

struct Posterior {
  double mean = 0.0;
  double var = 0.0;
};

/// signal_var * exp(-|p - q|^2 / (2 l^2)) over the horizontal coordinates.
double kernel(const Position& p, const Position& q, const GpConfig& cfg);

using KernelFn = double (*)(const Position&, const Position&, const GpConfig&);

/// Conditioned GP for one history snapshot. The Cholesky factor is computed
/// once so many queries share it. If the kernel matrix is not positive
/// definite the jitter is raised a decade at a time, up to 1e6 times the
/// configured value, before giving up with std::runtime_error.
class GpModel {
 public:
  /// `k` exists so self-checks can run the solver with a deliberately
  /// broken kernel; everything else uses the default.
  GpModel(const SampleHistory& h, const GpConfig& cfg, KernelFn k = kernel);

  Posterior predict(const Position& query) const;
  double jitter_used() const { return jitter_; }

 private:
  GpConfig cfg_;
  KernelFn kernel_;
  std::vector<Position> points_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

Posterior posterior(const SampleHistory& h, const Position& query, const GpConfig& cfg);

/// Largest stored value; 0 for an empty history.
double best_observed(const SampleHistory& h);

double normal_pdf(double z);
double normal_cdf(double z);

/// E[max(0, f - f_star)] for f ~ N(mean, var).
double expected_improvement(const Posterior& p, double f_star);

/// Candidate set: current position first, then n_rad rings (innermost first)
/// of n_dir points each at radii reach * r / n_rad, clipped to `bounds`.
std::vector<Position> candidates(const Position& current, double reach, const GpConfig& cfg, const Bounds& bounds);

struct Proposal {
  Position point;
  std::size_t index = 0;
  double ei = 0.0;
};

/// EI argmax over the candidate set; ties go to the smallest index.
Proposal propose(const SampleHistory& h, const Position& current, double reach, const GpConfig& cfg,
                 const Bounds& bounds);

Position propose_point(const SampleHistory& h, const Position& current, double reach, const GpConfig& cfg,
                       const Bounds& bounds);

}  // namespace uavnet::gp
