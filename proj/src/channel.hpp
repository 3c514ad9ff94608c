#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "ring.hpp"

namespace trishare {

// Wire format, little-endian throughout:
//   u32 body_len | body
//   body = header | u32 dims[rank] | payload words
//   header = u64 session_id | u64 plan_id | u32 node_id |
//            u8 sender | u8 receiver | u8 phase | u8 slot |
//            u8 backend | u8 dtype | u8 rank | u8 reserved
inline constexpr uint64_t kFrameLenBytes = 4;
inline constexpr uint64_t kFrameHeaderBytes = 28;
inline constexpr uint8_t kDtypeRingWords = 0;
inline constexpr int kPhaseOffline = 0;
inline constexpr int kPhaseOnline = 1;

struct FrameHeader {
    uint64_t session_id = 0;
    uint64_t plan_id = 0;
    uint32_t node_id = 0;
    uint8_t sender = 0;
    uint8_t receiver = 0;
    uint8_t phase = 0;
    uint8_t slot = 0;
    uint8_t backend = 0;
    uint8_t dtype = kDtypeRingWords;
    uint8_t rank = 0;
    uint8_t reserved = 0;
};

struct Frame {
    FrameHeader h;
    std::vector<uint32_t> dims;
    std::vector<uint8_t> payload;

    uint64_t wire_bytes() const {
        return kFrameLenBytes + kFrameHeaderBytes + 4 * dims.size() + payload.size();
    }
    Shape shape() const;
    // Full wire encoding including the length prefix.
    std::vector<uint8_t> serialize() const;
    // Parses one body (without the length prefix).
    static Frame parse_body(std::span<const uint8_t> body);
};

Frame make_frame(uint64_t session_id, uint64_t plan_id, uint32_t node_id, int sender, int receiver,
                 int phase, int slot, const RingTensor& t);
RingTensor tensor_from_frame(const Frame& f);

struct LinkCost;  // plan.hpp

// Per-link accounting, mirrored by the static predictor.
struct PhaseCost {
    uint64_t messages = 0;
    uint64_t payload_bytes = 0;
    uint64_t frame_bytes = 0;
};

// Frames received from one peer, keyed by (node, slot, phase) so independent
// sends never block or reorder each other.
class Inbox {
  public:
    void put(Frame f);
    Frame take(uint32_t node, uint8_t slot, uint8_t phase, int timeout_ms);
    void close();
    PhaseCost received(int phase) const;

  private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<uint64_t, std::deque<Frame>> slots_;
    PhaseCost received_[2];
    bool closed_ = false;
};

// One directed endpoint of a reliable ordered link to a single peer.
class Channel {
  public:
    Channel(int self, int peer) : self_(self), peer_(peer) {}
    virtual ~Channel() = default;

    void send(const Frame& f);
    Frame recv(uint32_t node, uint8_t slot, uint8_t phase, int timeout_ms);
    virtual void close() {}

    int self() const { return self_; }
    int peer() const { return peer_; }
    PhaseCost sent(int phase) const { return sent_[phase]; }
    PhaseCost received(int phase) const { return inbox_->received(phase); }
    Inbox& inbox() { return *inbox_; }

  protected:
    virtual void transmit(const Frame& f) = 0;

    int self_;
    int peer_;
    std::shared_ptr<Inbox> inbox_ = std::make_shared<Inbox>();
    PhaseCost sent_[2];
};

// Paired in-process endpoints: a.send lands in b's inbox and vice versa.
std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> make_inmemory_pair(int a, int b);

// TCP transport. Each endpoint runs a writer thread (sends never block the
// protocol) and a reader thread feeding the inbox.
std::shared_ptr<Channel> make_tcp_channel(int fd, int self, int peer);

class TcpListener {
  public:
    explicit TcpListener(int port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;

    // Accepts one connection and completes the hello exchange; returns
    // (peer party index, connected fd).
    std::pair<int, int> accept_peer(uint64_t session_id, int timeout_ms);

  private:
    int fd_ = -1;
};

// Connects, retrying until the peer's listener is up, and exchanges hellos.
int tcp_dial(const std::string& host, int port, int self, uint64_t session_id, int timeout_ms);

}  // namespace trishare
