#include "channel.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "errors.hpp"

namespace trishare {

namespace {

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint64_t get_u64(const uint8_t* p) {
    return static_cast<uint64_t>(get_u32(p)) | static_cast<uint64_t>(get_u32(p + 4)) << 32;
}

uint64_t inbox_key(uint32_t node, uint8_t slot, uint8_t phase) {
    return static_cast<uint64_t>(node) << 16 | static_cast<uint64_t>(slot) << 8 | phase;
}

}  // namespace

Shape Frame::shape() const {
    Shape s;
    for (uint32_t d : dims) s.push_back(static_cast<int64_t>(d));
    return s;
}

std::vector<uint8_t> Frame::serialize() const {
    std::vector<uint8_t> out;
    uint64_t body = kFrameHeaderBytes + 4 * dims.size() + payload.size();
    out.reserve(kFrameLenBytes + body);
    put_u32(out, static_cast<uint32_t>(body));
    put_u64(out, h.session_id);
    put_u64(out, h.plan_id);
    put_u32(out, h.node_id);
    for (uint8_t v : {h.sender, h.receiver, h.phase, h.slot, h.backend, h.dtype, h.rank,
                      h.reserved})
        out.push_back(v);
    for (uint32_t d : dims) put_u32(out, d);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Frame Frame::parse_body(std::span<const uint8_t> body) {
    if (body.size() < kFrameHeaderBytes)
        fail(ErrorCode::ProtocolDesync, "frame body shorter than header");
    Frame f;
    const uint8_t* p = body.data();
    f.h.session_id = get_u64(p);
    f.h.plan_id = get_u64(p + 8);
    f.h.node_id = get_u32(p + 16);
    f.h.sender = p[20];
    f.h.receiver = p[21];
    f.h.phase = p[22];
    f.h.slot = p[23];
    f.h.backend = p[24];
    f.h.dtype = p[25];
    f.h.rank = p[26];
    f.h.reserved = p[27];
    size_t need = kFrameHeaderBytes + 4ull * f.h.rank;
    if (body.size() < need) fail(ErrorCode::ProtocolDesync, "frame body shorter than its dims");
    for (int i = 0; i < f.h.rank; ++i)
        f.dims.push_back(get_u32(p + kFrameHeaderBytes + 4ull * i));
    f.payload.assign(body.begin() + static_cast<ptrdiff_t>(need), body.end());
    return f;
}

Frame make_frame(uint64_t session_id, uint64_t plan_id, uint32_t node_id, int sender, int receiver,
                 int phase, int slot, const RingTensor& t) {
    Frame f;
    f.h.session_id = session_id;
    f.h.plan_id = plan_id;
    f.h.node_id = node_id;
    f.h.sender = static_cast<uint8_t>(sender);
    f.h.receiver = static_cast<uint8_t>(receiver);
    f.h.phase = static_cast<uint8_t>(phase);
    f.h.slot = static_cast<uint8_t>(slot);
    f.h.backend = static_cast<uint8_t>(t.backend());
    f.h.dtype = kDtypeRingWords;
    f.h.rank = static_cast<uint8_t>(t.shape().size());
    for (int64_t d : t.shape()) f.dims.push_back(static_cast<uint32_t>(d));
    f.payload = t.to_bytes();
    return f;
}

RingTensor tensor_from_frame(const Frame& f) {
    if (f.h.dtype != kDtypeRingWords)
        fail(ErrorCode::ProtocolDesync, "unexpected frame dtype");
    Backend backend = static_cast<Backend>(f.h.backend);
    if (backend != Backend::Int64 && backend != Backend::Crt)
        fail(ErrorCode::ProtocolDesync, "unknown backend tag in frame");
    return RingTensor::from_bytes(backend, f.shape(), f.payload);
}

void Inbox::put(Frame f) {
    std::lock_guard<std::mutex> lock(mu_);
    int phase = f.h.phase == kPhaseOffline ? 0 : 1;
    received_[phase].messages += 1;
    received_[phase].payload_bytes += f.payload.size();
    received_[phase].frame_bytes += f.wire_bytes();
    slots_[inbox_key(f.h.node_id, f.h.slot, f.h.phase)].push_back(std::move(f));
    cv_.notify_all();
}

Frame Inbox::take(uint32_t node, uint8_t slot, uint8_t phase, int timeout_ms) {
    std::unique_lock<std::mutex> lock(mu_);
    uint64_t key = inbox_key(node, slot, phase);
    auto ready = [&] {
        auto it = slots_.find(key);
        return closed_ || (it != slots_.end() && !it->second.empty());
    };
    if (!cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), ready))
        fail(ErrorCode::Timeout, "no frame for node " + std::to_string(node) + " slot " +
                                     std::to_string(slot) + " within " +
                                     std::to_string(timeout_ms) + " ms");
    auto it = slots_.find(key);
    if (it == slots_.end() || it->second.empty())
        fail(ErrorCode::ChannelClosed, "channel closed while waiting for node " +
                                           std::to_string(node));
    Frame f = std::move(it->second.front());
    it->second.pop_front();
    return f;
}

void Inbox::close() {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
    cv_.notify_all();
}

PhaseCost Inbox::received(int phase) const {
    std::lock_guard<std::mutex> lock(mu_);
    return received_[phase];
}

void Channel::send(const Frame& f) {
    int phase = f.h.phase == kPhaseOffline ? 0 : 1;
    sent_[phase].messages += 1;
    sent_[phase].payload_bytes += f.payload.size();
    sent_[phase].frame_bytes += f.wire_bytes();
    transmit(f);
}

Frame Channel::recv(uint32_t node, uint8_t slot, uint8_t phase, int timeout_ms) {
    return inbox_->take(node, slot, static_cast<uint8_t>(phase), timeout_ms);
}

namespace {

class InMemoryChannel final : public Channel {
  public:
    InMemoryChannel(int self, int peer) : Channel(self, peer) {}

    void bind_peer(std::shared_ptr<Inbox> peer_inbox) { peer_inbox_ = std::move(peer_inbox); }
    void close() override {
        if (auto p = peer_inbox_.lock()) p->close();
        inbox_->close();
    }

  protected:
    void transmit(const Frame& f) override {
        auto p = peer_inbox_.lock();
        if (!p) fail(ErrorCode::ChannelClosed, "peer endpoint destroyed");
        p->put(f);
    }

  private:
    std::weak_ptr<Inbox> peer_inbox_;
};

}  // namespace

std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> make_inmemory_pair(int a, int b) {
    auto ca = std::make_shared<InMemoryChannel>(a, b);
    auto cb = std::make_shared<InMemoryChannel>(b, a);
    ca->bind_peer(std::shared_ptr<Inbox>(cb, &cb->inbox()));
    cb->bind_peer(std::shared_ptr<Inbox>(ca, &ca->inbox()));
    return {ca, cb};
}

namespace {

bool write_all(int fd, const uint8_t* p, size_t n) {
    while (n > 0) {
        ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
        if (w <= 0) return false;
        p += w;
        n -= static_cast<size_t>(w);
    }
    return true;
}

bool read_all(int fd, uint8_t* p, size_t n) {
    while (n > 0) {
        ssize_t r = ::recv(fd, p, n, 0);
        if (r <= 0) return false;
        p += r;
        n -= static_cast<size_t>(r);
    }
    return true;
}

class TcpChannel final : public Channel {
  public:
    TcpChannel(int fd, int self, int peer) : Channel(self, peer), fd_(fd) {
        writer_ = std::thread([this] { write_loop(); });
        reader_ = std::thread([this] { read_loop(); });
    }

    ~TcpChannel() override { close(); }

    void close() override {
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (closing_) return;
            closing_ = true;
            cv_.notify_all();
        }
        if (writer_.joinable()) writer_.join();
        ::shutdown(fd_, SHUT_RDWR);
        if (reader_.joinable()) reader_.join();
        ::close(fd_);
        inbox_->close();
    }

  protected:
    void transmit(const Frame& f) override {
        std::lock_guard<std::mutex> lock(mu_);
        if (closing_) fail(ErrorCode::ChannelClosed, "send on closed channel");
        outgoing_.push_back(f.serialize());
        cv_.notify_all();
    }

  private:
    void write_loop() {
        for (;;) {
            std::vector<uint8_t> buf;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [&] { return closing_ || !outgoing_.empty(); });
                if (outgoing_.empty()) return;  // closing and drained
                buf = std::move(outgoing_.front());
                outgoing_.pop_front();
            }
            if (!write_all(fd_, buf.data(), buf.size())) return;
        }
    }

    void read_loop() {
        for (;;) {
            uint8_t len_buf[4];
            if (!read_all(fd_, len_buf, 4)) break;
            uint32_t body_len = get_u32(len_buf);
            std::vector<uint8_t> body(body_len);
            if (!read_all(fd_, body.data(), body.size())) break;
            inbox_->put(Frame::parse_body(body));
        }
        inbox_->close();
    }

    int fd_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::vector<uint8_t>> outgoing_;
    bool closing_ = false;
    std::thread writer_;
    std::thread reader_;
};

constexpr uint32_t kHelloMagic = 0x31485354;  // "TSH1"

struct Hello {
    uint32_t magic;
    uint32_t party;
    uint64_t session;
};

bool send_hello(int fd, int self, uint64_t session) {
    std::vector<uint8_t> b;
    put_u32(b, kHelloMagic);
    put_u32(b, static_cast<uint32_t>(self));
    put_u64(b, session);
    return write_all(fd, b.data(), b.size());
}

void set_recv_timeout(int fd, int timeout_ms) {
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

// The handshake must never block forever: a connection can sit in a listen
// backlog of a party that is wedged or gone, so the hello read is bounded
// and the deadline cleared again before the channel takes over the fd.
Hello read_hello(int fd, int timeout_ms) {
    set_recv_timeout(fd, timeout_ms);
    uint8_t b[16];
    bool ok = read_all(fd, b, sizeof b);
    set_recv_timeout(fd, 0);
    if (!ok) fail(ErrorCode::ConnectFailed, "no hello from peer");
    return {get_u32(b), get_u32(b + 4), get_u64(b + 8)};
}

void check_hello(const Hello& h, uint64_t session) {
    if (h.magic != kHelloMagic) fail(ErrorCode::ProtocolDesync, "bad hello magic");
    if (h.session != session)
        fail(ErrorCode::ProtocolDesync, "peer joined with a different session id");
}

}  // namespace

std::shared_ptr<Channel> make_tcp_channel(int fd, int self, int peer) {
    return std::make_shared<TcpChannel>(fd, self, peer);
}

TcpListener::TcpListener(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) fail(ErrorCode::IoError, "socket: " + std::string(strerror(errno)));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        fail(ErrorCode::IoError, "bind port " + std::to_string(port) + ": " + strerror(errno));
    if (::listen(fd_, 16) != 0) fail(ErrorCode::IoError, "listen: " + std::string(strerror(errno)));
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::pair<int, int> TcpListener::accept_peer(uint64_t session_id, int timeout_ms) {
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) fail(ErrorCode::Timeout, "no peer connected: " + std::string(strerror(errno)));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    Hello h = read_hello(fd, timeout_ms);
    check_hello(h, session_id);
    if (!send_hello(fd, -1, session_id)) fail(ErrorCode::ConnectFailed, "hello ack failed");
    return {static_cast<int>(h.party), fd};
}

int tcp_dial(const std::string& host, int port, int self, uint64_t session_id, int timeout_ms) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        fail(ErrorCode::ConnectFailed, "cannot resolve " + host);
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    int fd = -1;
    for (;;) {
        fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) break;
        if (::connect(fd, res->ai_addr, res->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
        if (std::chrono::steady_clock::now() >= deadline) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    freeaddrinfo(res);
    if (fd < 0)
        fail(ErrorCode::ConnectFailed,
             "cannot connect to " + host + ":" + std::to_string(port));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (!send_hello(fd, self, session_id)) fail(ErrorCode::ConnectFailed, "hello failed");
    Hello h = read_hello(fd, timeout_ms);
    check_hello(h, session_id);
    return fd;
}

}  // namespace trishare
