#include "crossgap/peer.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <limits>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "crossgap/errors.hpp"
#include "crossgap/log.hpp"

namespace crossgap {

namespace {

void put_u64(std::uint8_t* p, std::uint64_t v) {
    for (int i = 7; i >= 0; --i) {
        p[i] = static_cast<std::uint8_t>(v & 0xff);
        v >>= 8;
    }
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t now_epoch_ms() {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
}

}  // namespace

std::array<std::uint8_t, kPeerWireSize> encode_peer(const PeerMessage& msg) {
    std::array<std::uint8_t, kPeerWireSize> out{};
    out[0] = 0x43;  // 'C'
    out[1] = 0x47;  // 'G'
    out[2] = kPeerVersion;
    std::memcpy(out.data() + 3, msg.node_id.data(), 16);
    put_u64(out.data() + 19, msg.seq);
    out[27] = msg.state == Crossing::kTraffic ? 1 : 0;
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(msg.margin));
    std::memcpy(&bits, &msg.margin, 4);
    out[28] = static_cast<std::uint8_t>(bits >> 24);
    out[29] = static_cast<std::uint8_t>(bits >> 16);
    out[30] = static_cast<std::uint8_t>(bits >> 8);
    out[31] = static_cast<std::uint8_t>(bits);
    put_u64(out.data() + 32, msg.timestamp_ms);
    return out;
}

DecodeStatus decode_peer(const std::uint8_t* bytes, std::size_t size, PeerMessage& out) {
    if (size < kPeerWireSize) return DecodeStatus::kBadMagic;
    if (bytes[0] != 0x43 || bytes[1] != 0x47) return DecodeStatus::kBadMagic;
    if (bytes[2] != kPeerVersion) return DecodeStatus::kBadVersion;
    std::memcpy(out.node_id.data(), bytes + 3, 16);
    out.seq = get_u64(bytes + 19);
    out.state = bytes[27] != 0 ? Crossing::kTraffic : Crossing::kGap;
    std::uint32_t bits = (static_cast<std::uint32_t>(bytes[28]) << 24) |
                         (static_cast<std::uint32_t>(bytes[29]) << 16) |
                         (static_cast<std::uint32_t>(bytes[30]) << 8) | bytes[31];
    std::memcpy(&out.margin, &bits, 4);
    out.timestamp_ms = get_u64(bytes + 32);
    return DecodeStatus::kOk;
}

MergedIndication merge(const CrossingState& local, const std::optional<PeerMessage>& remote,
                       double staleness_limit_s, std::uint64_t now_ms) {
    MergedIndication out;
    if (!remote) {
        out.state = Crossing::kTraffic;
        out.staleness = std::numeric_limits<double>::infinity();
        return out;
    }
    double age_s = remote->timestamp_ms <= now_ms
                       ? static_cast<double>(now_ms - remote->timestamp_ms) / 1000.0
                       : 0.0;
    out.staleness = age_s;
    bool remote_fresh_gap = remote->state == Crossing::kGap && age_s < staleness_limit_s;
    out.state = (local.state == Crossing::kGap && remote_fresh_gap) ? Crossing::kGap : Crossing::kTraffic;
    return out;
}

NodeId random_node_id() {
    NodeId id;
    std::random_device rd;
    for (auto& b : id) b = static_cast<std::uint8_t>(rd() & 0xff);
    return id;
}

// ---------------------------------------------------------------------------
// PeerLink
// ---------------------------------------------------------------------------

struct PeerLink::Impl {
    std::thread worker;
    std::atomic<bool> stop{false};
    int listen_fd = -1;
    std::atomic<int> conn_fd{-1};

    mutable std::mutex mu;
    std::optional<PeerMessage> remote;           // latest accepted message
    std::uint64_t last_remote_seq = 0;
    MergedIndication merged{Crossing::kTraffic, std::numeric_limits<double>::infinity()};
    bool merged_valid = false;

    ~Impl() {
        if (listen_fd >= 0) ::close(listen_fd);
        int fd = conn_fd.exchange(-1);
        if (fd >= 0) ::close(fd);
    }
};

PeerLink::PeerLink(const PeerConfig& cfg, std::function<CrossingState()> local_state,
                   std::function<void(const MergedIndication&)> on_merged)
    : cfg_(cfg), local_state_(std::move(local_state)), on_merged_(std::move(on_merged)),
      impl_(std::make_unique<Impl>()) {}

PeerLink::~PeerLink() { stop(); }

void PeerLink::start() {
    if (cfg_.role == PeerRole::kListen) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw RuntimeError("socket() failed");
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(cfg_.port);
        addr.sin_addr.s_addr = cfg_.host.empty() ? INADDR_ANY : inet_addr(cfg_.host.c_str());
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw RuntimeError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
        }
        if (::listen(fd, 1) != 0) {
            ::close(fd);
            throw RuntimeError("listen() failed");
        }
        socklen_t len = sizeof(addr);
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        bound_port_.store(ntohs(addr.sin_port));
        impl_->listen_fd = fd;
    }
    impl_->worker = std::thread([this] { run(); });
}

void PeerLink::stop() {
    if (!impl_->worker.joinable()) return;
    impl_->stop.store(true);
    // Unblock poll() promptly.
    int fd = impl_->conn_fd.load();
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    if (impl_->listen_fd >= 0) ::shutdown(impl_->listen_fd, SHUT_RDWR);
    impl_->worker.join();
}

MergedIndication PeerLink::last_merged() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->merged;
}

void PeerLink::run() {
    using clock = std::chrono::steady_clock;
    double backoff = 0.5;
    auto next_connect = clock::now();
    auto last_send = clock::now() - std::chrono::hours(1);
    Crossing last_sent_state = Crossing::kTraffic;
    bool sent_any = false;
    std::uint64_t seq = 0;
    std::vector<std::uint8_t> rxbuf;

    auto close_conn = [&](const char* why) {
        int fd = impl_->conn_fd.exchange(-1);
        if (fd >= 0) {
            ::close(fd);
            log::info("peer link closed: %s", why);
        }
        connected_.store(false);
        rxbuf.clear();
        {
            std::lock_guard<std::mutex> lock(impl_->mu);
            impl_->remote.reset();
            impl_->last_remote_seq = 0;
        }
        next_connect = clock::now() + std::chrono::duration_cast<clock::duration>(
                                          std::chrono::duration<double>(backoff));
        backoff = std::min(backoff * 2.0, 8.0);
    };

    while (!impl_->stop.load()) {
        // Establish a connection if needed.
        if (impl_->conn_fd.load() < 0) {
            if (cfg_.role == PeerRole::kListen) {
                pollfd p{impl_->listen_fd, POLLIN, 0};
                if (::poll(&p, 1, 50) > 0 && (p.revents & POLLIN)) {
                    int fd = ::accept(impl_->listen_fd, nullptr, nullptr);
                    if (fd >= 0) {
                        int one = 1;
                        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
                        impl_->conn_fd.store(fd);
                        connected_.store(true);
                        backoff = 0.5;
                        sent_any = false;
                    }
                }
            } else if (clock::now() >= next_connect) {
                int fd = ::socket(AF_INET, SOCK_STREAM, 0);
                sockaddr_in addr{};
                addr.sin_family = AF_INET;
                addr.sin_port = htons(cfg_.port);
                addr.sin_addr.s_addr = inet_addr(cfg_.host.c_str());
                if (fd >= 0 && ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
                    int one = 1;
                    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
                    impl_->conn_fd.store(fd);
                    connected_.store(true);
                    backoff = 0.5;
                    sent_any = false;
                } else {
                    if (fd >= 0) ::close(fd);
                    next_connect = clock::now() + std::chrono::duration_cast<clock::duration>(
                                                      std::chrono::duration<double>(backoff));
                    backoff = std::min(backoff * 2.0, 8.0);
                }
            }
        }

        int fd = impl_->conn_fd.load();
        if (fd >= 0) {
            // Receive.
            pollfd p{fd, POLLIN, 0};
            int rv = ::poll(&p, 1, 20);
            if (rv > 0 && (p.revents & (POLLIN | POLLHUP | POLLERR))) {
                std::uint8_t chunk[512];
                ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
                if (n <= 0) {
                    close_conn("peer disconnected");
                } else {
                    rxbuf.insert(rxbuf.end(), chunk, chunk + n);
                    std::size_t off = 0;
                    bool reset = false;
                    while (rxbuf.size() - off >= kPeerWireSize) {
                        PeerMessage msg;
                        DecodeStatus st = decode_peer(rxbuf.data() + off, kPeerWireSize, msg);
                        if (st == DecodeStatus::kBadMagic) {
                            log::warn("peer protocol desync (bad magic); resetting link");
                            reset = true;
                            break;
                        }
                        if (st == DecodeStatus::kBadVersion) {
                            log::error("peer version mismatch (got %u, want %u); closing",
                                       rxbuf[off + 2], kPeerVersion);
                            reset = true;
                            break;
                        }
                        off += kPeerWireSize;
                        std::lock_guard<std::mutex> lock(impl_->mu);
                        if (impl_->last_remote_seq != 0 && msg.seq <= impl_->last_remote_seq) {
                            log::warn("peer seq regression (%llu after %llu); resetting link",
                                      static_cast<unsigned long long>(msg.seq),
                                      static_cast<unsigned long long>(impl_->last_remote_seq));
                            reset = true;
                            break;
                        }
                        impl_->last_remote_seq = msg.seq;
                        impl_->remote = msg;
                    }
                    if (reset) {
                        close_conn("protocol violation");
                    } else if (off > 0) {
                        rxbuf.erase(rxbuf.begin(), rxbuf.begin() + static_cast<long>(off));
                    }
                }
            }
        } else {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }

        // Send periodically and on local state changes.
        CrossingState local = local_state_();
        fd = impl_->conn_fd.load();
        if (fd >= 0 && !send_paused_.load()) {
            double since = std::chrono::duration<double>(clock::now() - last_send).count();
            if (!sent_any || since >= cfg_.send_period_s || local.state != last_sent_state) {
                PeerMessage msg;
                msg.node_id = cfg_.node_id;
                msg.seq = ++seq;
                msg.state = local.state;
                msg.margin = static_cast<float>(local.margin);
                msg.timestamp_ms = now_epoch_ms();
                auto bytes = encode_peer(msg);
                ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
                if (n != static_cast<ssize_t>(bytes.size())) {
                    close_conn("send failed");
                } else {
                    last_send = clock::now();
                    last_sent_state = local.state;
                    sent_any = true;
                }
            }
        }

        // Merge tick; emit on change.
        {
            std::optional<PeerMessage> remote;
            {
                std::lock_guard<std::mutex> lock(impl_->mu);
                remote = impl_->remote;
            }
            MergedIndication m = merge(local, remote, cfg_.staleness_limit_s, now_epoch_ms());
            bool fire = false;
            {
                std::lock_guard<std::mutex> lock(impl_->mu);
                if (!impl_->merged_valid || m.state != impl_->merged.state) {
                    impl_->merged_valid = true;
                    fire = true;
                }
                impl_->merged = m;
            }
            if (fire && on_merged_) on_merged_(m);
        }
    }
}

}  // namespace crossgap
