#include "uavnet/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace uavnet::channel {

namespace {

void require(bool cond, const char* field, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("channel.") + field + ": " + what);
}

double path_gain(double d, double alpha) { return std::pow(std::max(d, kMinLinkDistance), -alpha); }

}  // namespace

void ChannelParams::validate() const {
  require(num_subchannels >= 1, "K", "must be >= 1");
  require(bandwidth_hz > 0.0, "bandwidth_hz", "must be > 0");
  require(noise_w > 0.0, "noise", "must be > 0");
  require(alpha_u >= 1.0, "alpha_u", "must be >= 1");
  require(alpha_s >= 1.0, "alpha_s", "must be >= 1");
  require(beta_u > 0.0, "beta_u", "must be > 0");
  require(beta_s > 0.0, "beta_s", "must be > 0");
  require(p_uav_w > 0.0, "p_uav", "must be > 0");
  require(q_gu_w > 0.0, "q_gu", "must be > 0");
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

FormationMatrix::FormationMatrix(std::size_t num_uavs, int num_subchannels)
    : num_uavs_(num_uavs), num_subchannels_(num_subchannels) {
  if (num_subchannels < 1) throw std::invalid_argument("FormationMatrix: K must be >= 1");
  const std::size_t n = num_uavs + 1;
  bits_.assign(n * n * static_cast<std::size_t>(num_subchannels), 0);
}

std::size_t FormationMatrix::index(NodeId tx, NodeId rx, int k) const {
  const std::size_t n = num_nodes();
  if (tx >= n || rx >= n || k < 0 || k >= num_subchannels_)
    throw std::out_of_range("FormationMatrix index out of range");
  return (tx * n + rx) * static_cast<std::size_t>(num_subchannels_) + static_cast<std::size_t>(k);
}

bool FormationMatrix::get(NodeId tx, NodeId rx, int k) const { return bits_[index(tx, rx, k)] != 0; }

void FormationMatrix::set(NodeId tx, NodeId rx, int k, bool on) { bits_[index(tx, rx, k)] = on ? 1 : 0; }

bool FormationMatrix::linked(NodeId tx, NodeId rx) const { return channel_of(tx, rx).has_value(); }

std::optional<int> FormationMatrix::channel_of(NodeId tx, NodeId rx) const {
  for (int k = 0; k < num_subchannels_; ++k)
    if (get(tx, rx, k)) return k;
  return std::nullopt;
}

void FormationMatrix::clear_link(NodeId tx, NodeId rx) {
  for (int k = 0; k < num_subchannels_; ++k) set(tx, rx, k, false);
}

std::vector<Link> FormationMatrix::links() const {
  std::vector<Link> out;
  const std::size_t n = num_nodes();
  for (NodeId tx = 0; tx < n; ++tx)
    for (NodeId rx = 0; rx < n; ++rx)
      for (int k = 0; k < num_subchannels_; ++k)
        if (bits_[index(tx, rx, k)]) out.push_back({tx, rx, k});
  return out;
}

bool FormationMatrix::empty() const {
  return std::none_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
}

AllocCheck validate_alloc(const FormationMatrix& phi) {
  AllocCheck check;
  const std::size_t n = phi.num_nodes();
  const int K = phi.num_subchannels();
  for (int k = 0; k < K; ++k) {
    for (NodeId rx = 0; rx < n; ++rx)
      if (phi.get(kBaseStation, rx, k)) check.violations.push_back({kBaseStation, k, AllocViolation::Kind::bs_transmit});
    for (NodeId i = 1; i < n; ++i)
      if (phi.get(i, i, k)) check.violations.push_back({i, k, AllocViolation::Kind::self_link});
  }
  for (NodeId i = 1; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      int used = 0;
      for (NodeId m = 1; m < n; ++m)
        if (m != i && phi.get(m, i, k)) ++used;
      for (NodeId j = 0; j < n; ++j)
        if (j != i && phi.get(i, j, k)) ++used;
      if (used > 1) check.violations.push_back({i, k, AllocViolation::Kind::channel_conflict});
    }
  }
  return check;
}

double received_power(const Position& tx, const Position& rx, const ChannelParams& params) {
  return params.p_uav_w * params.beta_u * path_gain(distance(tx, rx), params.alpha_u);
}

double interference(const FormationMatrix& phi, const NodePositions& pos, NodeId tx, NodeId rx, int k,
                    const ChannelParams& params) {
  double total = 0.0;
  const std::size_t n = phi.num_nodes();
  for (NodeId m = 1; m < n; ++m) {
    if (m == tx) continue;
    bool active = false;
    for (NodeId j = 0; j < n && !active; ++j) active = phi.get(m, j, k);
    if (active) total += received_power(pos[m], pos[rx], params);
  }
  return total;
}

double u2u_rate(const FormationMatrix& phi, const NodePositions& pos, NodeId tx, NodeId rx,
                const ChannelParams& params) {
  double rate = 0.0;
  for (int k = 0; k < phi.num_subchannels(); ++k) {
    if (!phi.get(tx, rx, k)) continue;
    const double signal = received_power(pos[tx], pos[rx], params);
    const double sinr = signal / (params.noise_w + interference(phi, pos, tx, rx, k, params));
    rate += params.bandwidth_hz * std::log2(1.0 + sinr);
  }
  return rate;
}

double isolated_rate(const Position& tx, const Position& rx, const ChannelParams& params) {
  return params.bandwidth_hz * std::log2(1.0 + received_power(tx, rx, params) / params.noise_w);
}

double g2u_snr(const Position& gu, const Position& uav, const ChannelParams& params) {
  return params.q_gu_w * params.beta_s * path_gain(distance(gu, uav), params.alpha_s);
}

double g2u_rate(const Position& gu, const Position& uav, const ChannelParams& params) {
  return params.bandwidth_hz * std::log2(1.0 + g2u_snr(gu, uav, params));
}

double coverage_radius(const ChannelParams& params, double snr_threshold_db) {
  const double threshold = std::pow(10.0, snr_threshold_db / 10.0);
  return std::pow(params.q_gu_w * params.beta_s / threshold, 1.0 / params.alpha_s);
}

OffloadResult offload(const FormationMatrix& phi, const NodePositions& pos, std::span<const double> buffers,
                      const ChannelParams& params, double t_offload,
                      std::optional<std::span<const double>> receiver_headroom) {
  const std::size_t N = phi.num_uavs();
  if (buffers.size() != N || pos.size() != N + 1)
    throw std::invalid_argument("offload: buffers/positions do not match the formation size");
  if (!validate_alloc(phi).ok()) throw std::invalid_argument("offload: formation violates the sub-channel constraint");

  std::vector<double> headroom;
  if (receiver_headroom) {
    if (receiver_headroom->size() != N) throw std::invalid_argument("offload: headroom size mismatch");
    headroom.assign(receiver_headroom->begin(), receiver_headroom->end());
  }

  OffloadResult result;
  result.outgoing.assign(N, 0.0);
  result.incoming.assign(N, 0.0);
  result.delivered_to_bs.assign(N, 0.0);

  for (NodeId tx = 1; tx <= N; ++tx) {
    double remaining = std::max(0.0, buffers[uav_index(tx)]);
    for (NodeId rx = 0; rx <= N; ++rx) {
      if (rx == tx || !phi.linked(tx, rx)) continue;
      double bits = std::min(u2u_rate(phi, pos, tx, rx, params) * t_offload, remaining);
      if (rx != kBaseStation && !headroom.empty()) {
        bits = std::min(bits, std::max(0.0, headroom[uav_index(rx)]));
        headroom[uav_index(rx)] -= bits;
      }
      remaining -= bits;
      result.outgoing[uav_index(tx)] += bits;
      if (rx == kBaseStation)
        result.delivered_to_bs[uav_index(tx)] += bits;
      else
        result.incoming[uav_index(rx)] += bits;
      result.transfers.push_back({tx, rx, bits});
    }
  }
  return result;
}

}  // namespace uavnet::channel
