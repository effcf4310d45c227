#ifndef CROSSGAP_PEER_HPP
#define CROSSGAP_PEER_HPP

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "crossgap/detector.hpp"

namespace crossgap {

// Fixed-length big-endian frame:
//   magic 'C','G' (2) | version u8 (1) | node_id (16) | seq u64 (8)
//   | state u8 (1) | margin f32 (4) | timestamp_ms u64 (8)  = 40 bytes
constexpr std::size_t kPeerWireSize = 40;
constexpr std::uint8_t kPeerVersion = 1;

using NodeId = std::array<std::uint8_t, 16>;

struct PeerMessage {
    NodeId node_id{};
    std::uint64_t seq = 0;
    Crossing state = Crossing::kTraffic;
    float margin = 0.0f;
    std::uint64_t timestamp_ms = 0;  // milliseconds since epoch
};

std::array<std::uint8_t, kPeerWireSize> encode_peer(const PeerMessage& msg);

enum class DecodeStatus { kOk, kBadMagic, kBadVersion };
DecodeStatus decode_peer(const std::uint8_t* bytes, std::size_t size, PeerMessage& out);

struct MergedIndication {
    Crossing state = Crossing::kTraffic;
    double staleness = 0.0;  // seconds since the older input; +inf when remote absent
};

// Conservative agreement: GAP only when the local state is GAP and a fresh
// remote report (age <= limit) is also GAP. Absent or stale remotes degrade
// to TRAFFIC.
MergedIndication merge(const CrossingState& local, const std::optional<PeerMessage>& remote,
                       double staleness_limit_s, std::uint64_t now_ms);

enum class PeerRole { kListen, kConnect };

struct PeerConfig {
    PeerRole role = PeerRole::kListen;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // listen: 0 picks a free port
    NodeId node_id{};
    double staleness_limit_s = 2.0;
    double send_period_s = 0.2;  // also sends on every local state change
};

// TCP link between two detector nodes. Runs its own thread: exchanges
// PeerMessages at >= 5 Hz, reconnects with exponential backoff (0.5 s to
// 8 s), and re-evaluates the merged indication continuously so staleness
// degrades to TRAFFIC even with no traffic on the wire. Never blocks the
// detector: the state source is a snapshot callback.
class PeerLink {
public:
    PeerLink(const PeerConfig& cfg, std::function<CrossingState()> local_state,
             std::function<void(const MergedIndication&)> on_merged);
    ~PeerLink();

    PeerLink(const PeerLink&) = delete;
    PeerLink& operator=(const PeerLink&) = delete;

    void start();
    void stop();

    std::uint16_t bound_port() const { return bound_port_.load(); }
    bool connected() const { return connected_.load(); }
    MergedIndication last_merged() const;

    // Suspends outgoing messages; the peer sees the link go stale.
    void set_send_paused(bool paused) { send_paused_.store(paused); }

private:
    struct Impl;
    void run();

    PeerConfig cfg_;
    std::function<CrossingState()> local_state_;
    std::function<void(const MergedIndication&)> on_merged_;
    std::unique_ptr<Impl> impl_;
    std::atomic<std::uint16_t> bound_port_{0};
    std::atomic<bool> connected_{false};
    std::atomic<bool> send_paused_{false};
};

NodeId random_node_id();

}  // namespace crossgap

#endif
