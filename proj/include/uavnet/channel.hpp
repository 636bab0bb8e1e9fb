#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uavnet/geometry.hpp"

namespace uavnet::channel {

/// Log-distance LoS link budget shared by the G2U, U2U and U2B links.
struct ChannelParams {
  int num_subchannels = 3;    // K
  double bandwidth_hz = 1e6;  // per sub-channel
  double noise_w = 1e-12;     // per sub-channel (-90 dBm)
  double alpha_u = 2.0;       // U2U / U2B path-loss exponent
  double alpha_s = 2.0;       // G2U path-loss exponent
  double beta_u = 1e-5;       // U2U / U2B reference power gain at 1 m
  double beta_s = 6e4;        // G2U reference gain at 1 m, already divided by noise power
  double p_uav_w = 0.19952623149688797;  // 23 dBm
  double q_gu_w = 0.19952623149688797;   // 23 dBm
  double carrier_hz = 2e9;    // metadata only

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

/// Node index: 0 is the BS, UAV u (0-based) is node u + 1.
using NodeId = std::size_t;
inline constexpr NodeId kBaseStation = 0;

inline NodeId uav_node(std::size_t uav_index) { return uav_index + 1; }
inline std::size_t uav_index(NodeId node) { return node - 1; }

/// Power-law distances are floored at the 1 m reference distance.
inline constexpr double kMinLinkDistance = 1.0;

struct Link {
  NodeId tx = 0;
  NodeId rx = 0;
  int k = 0;

  friend bool operator==(const Link&, const Link&) = default;
};

/// Binary sub-channel allocation over (transmitter, receiver, sub-channel).
/// Indices run over all N + 1 nodes so that malformed entries (BS transmit,
/// self links) are representable and can be reported by validate_alloc.
class FormationMatrix {
 public:
  FormationMatrix() = default;
  FormationMatrix(std::size_t num_uavs, int num_subchannels);

  std::size_t num_uavs() const { return num_uavs_; }
  std::size_t num_nodes() const { return num_uavs_ + 1; }
  int num_subchannels() const { return num_subchannels_; }

  bool get(NodeId tx, NodeId rx, int k) const;
  void set(NodeId tx, NodeId rx, int k, bool on = true);

  /// True if tx -> rx is active on any sub-channel.
  bool linked(NodeId tx, NodeId rx) const;
  /// First sub-channel carrying tx -> rx.
  std::optional<int> channel_of(NodeId tx, NodeId rx) const;
  void clear_link(NodeId tx, NodeId rx);

  /// Active entries in (tx, rx, k) lexicographic order.
  std::vector<Link> links() const;
  bool empty() const;

  /// Flat (tx, rx, k) bit vector, exposed for enumeration and hashing.
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const FormationMatrix&, const FormationMatrix&) = default;

 private:
  std::size_t index(NodeId tx, NodeId rx, int k) const;

  std::size_t num_uavs_ = 0;
  int num_subchannels_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct AllocViolation {
  enum class Kind { channel_conflict, self_link, bs_transmit };
  NodeId node = 0;
  int k = 0;
  Kind kind = Kind::channel_conflict;

  friend bool operator==(const AllocViolation&, const AllocViolation&) = default;
};

struct AllocCheck {
  std::vector<AllocViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Sub-channel constraint: for every UAV i and sub-channel k, the number of
/// links into i on k plus the number of links out of i on k is at most one.
/// Self links and BS-transmit entries are reported as structural violations.
AllocCheck validate_alloc(const FormationMatrix& phi);

/// Positions indexed by NodeId (entry 0 is the BS antenna).
using NodePositions = std::vector<Position>;

/// Received power p * beta_u * d^-alpha_u between two airborne nodes.
double received_power(const Position& tx, const Position& rx, const ChannelParams& params);

/// Co-channel interference seen at `rx` for the link tx -> rx on sub-channel k:
/// the received power from every other UAV transmitting on k.
double interference(const FormationMatrix& phi, const NodePositions& pos, NodeId tx, NodeId rx, int k,
                    const ChannelParams& params);

/// Achievable rate (bit/s) of tx -> rx summed over the sub-channels allocated
/// to it in phi. rx may be the BS.
double u2u_rate(const FormationMatrix& phi, const NodePositions& pos, NodeId tx, NodeId rx,
                const ChannelParams& params);

/// Single sub-channel rate (bit/s) of an isolated tx -> rx pair, no interference.
double isolated_rate(const Position& tx, const Position& rx, const ChannelParams& params);

double g2u_snr(const Position& gu, const Position& uav, const ChannelParams& params);
/// Interference-free GU -> UAV rate in bit/s.
double g2u_rate(const Position& gu, const Position& uav, const ChannelParams& params);

/// Largest GU-UAV distance whose G2U SNR still meets the threshold.
double coverage_radius(const ChannelParams& params, double snr_threshold_db);

struct LinkTransfer {
  NodeId tx = 0;
  NodeId rx = 0;
  double bits = 0.0;
};

struct OffloadResult {
  std::vector<LinkTransfer> transfers;
  std::vector<double> outgoing;         // O_i, per UAV index
  std::vector<double> incoming;         // bits relayed in, per UAV index
  std::vector<double> delivered_to_bs;  // per UAV index
};

/// One offloading sub-slot. Each sender serves its outgoing links in
/// ascending receiver order, each link taking up to rate * t_offload, capped
/// in total by the bits the sender held at sub-slot start. When
/// `receiver_headroom` is given (per UAV index), relayed bits into a UAV are
/// additionally capped by its remaining headroom, consumed in ascending
/// sender order. Throws std::invalid_argument on an invalid allocation.
OffloadResult offload(const FormationMatrix& phi, const NodePositions& pos, std::span<const double> buffers,
                      const ChannelParams& params, double t_offload,
                      std::optional<std::span<const double>> receiver_headroom = std::nullopt);

}  // namespace uavnet::channel
