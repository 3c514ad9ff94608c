#include "runtime.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace trishare {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        fail(ErrorCode::BadConfig, "bad integer for " + key + ": '" + v + "'");
    }
}

uint64_t fresh_entropy() {
    std::random_device rd;
    return (static_cast<uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace

const char* backend_name(Backend b) { return b == Backend::Int64 ? "int64" : "int100"; }

const char* trunc_name(TruncationMode t) {
    return t == TruncationMode::Interactive ? "interactive" : "local";
}

Backend backend_from_string(const std::string& s) {
    if (s == "int64") return Backend::Int64;
    if (s == "int100") return Backend::Crt;
    fail(ErrorCode::BadConfig, "backend must be int64 or int100, got '" + s + "'");
}

TruncationMode trunc_from_string(const std::string& s) {
    if (s == "interactive") return TruncationMode::Interactive;
    if (s == "local") return TruncationMode::LocalOptimistic;
    fail(ErrorCode::BadConfig, "trunc must be interactive or local, got '" + s + "'");
}

SessionConfig SessionConfig::parse_text(const std::string& text, const std::string& origin) {
    SessionConfig cfg;
    cfg.fp = default_fixed_point();
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    std::vector<PartyAddr> extra;
    std::map<std::string, PartyAddr> servers;
    while (std::getline(is, line)) {
        ++lineno;
        if (size_t h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::BadConfig,
                 origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "backend") {
            cfg.backend = backend_from_string(val);
        } else if (key == "trunc") {
            cfg.trunc = trunc_from_string(val);
        } else if (key == "seed") {
            cfg.seeded = true;
            cfg.seed = static_cast<uint64_t>(parse_int(val, key));
        } else if (key == "fractional_bits") {
            cfg.fp.fractional_bits = static_cast<int>(parse_int(val, key));
            cfg.fp_explicit = true;
        } else if (key == "bound_bits") {
            cfg.fp.bound_bits = static_cast<int>(parse_int(val, key));
            cfg.fp_explicit = true;
        } else if (key == "stat_security") {
            cfg.fp.stat_security = static_cast<int>(parse_int(val, key));
            cfg.fp_explicit = true;
        } else if (key == "timeout_ms") {
            cfg.timeout_ms = static_cast<int>(parse_int(val, key));
        } else if (key.rfind("party.", 0) == 0) {
            PartyAddr p;
            p.name = key.substr(6);
            if (p.name.empty()) fail(ErrorCode::BadConfig, "party entry without a name");
            size_t colon = val.rfind(':');
            if (colon == std::string::npos)
                fail(ErrorCode::BadConfig, "party." + p.name + " needs host:port");
            p.host = trim(val.substr(0, colon));
            p.port = static_cast<int>(parse_int(trim(val.substr(colon + 1)), key));
            if (p.name == "s0" || p.name == "s1" || p.name == "s2") {
                if (!servers.emplace(p.name, p).second)
                    fail(ErrorCode::BadConfig, "duplicate party " + p.name);
            } else {
                for (const auto& q : extra)
                    if (q.name == p.name) fail(ErrorCode::BadConfig, "duplicate party " + p.name);
                extra.push_back(p);
            }
        } else {
            fail(ErrorCode::BadConfig,
                 origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (!servers.empty()) {
        for (const char* s : {"s0", "s1", "s2"}) {
            auto it = servers.find(s);
            if (it == servers.end())
                fail(ErrorCode::BadConfig, std::string("missing party.") + s);
            cfg.parties.push_back(it->second);
        }
        cfg.parties.insert(cfg.parties.end(), extra.begin(), extra.end());
    } else if (!extra.empty()) {
        fail(ErrorCode::BadConfig, "party entries present but servers s0/s1/s2 missing");
    }
    cfg.validate();
    return cfg;
}

SessionConfig SessionConfig::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
}

void SessionConfig::validate() const {
    fp.validate(backend);
    if (trunc == TruncationMode::LocalOptimistic && backend == Backend::Crt)
        fail(ErrorCode::BadConfig, "trunc = local requires backend = int64");
    if (timeout_ms <= 0) fail(ErrorCode::BadConfig, "timeout_ms must be positive");
}

int SessionConfig::party_index(const std::string& name) const {
    for (size_t i = 0; i < parties.size(); ++i)
        if (parties[i].name == name) return static_cast<int>(i);
    fail(ErrorCode::BadConfig, "no party named " + name + " in config");
}

std::map<std::string, int> SessionConfig::party_indices() const {
    std::map<std::string, int> m;
    for (size_t i = 0; i < parties.size(); ++i) m[parties[i].name] = static_cast<int>(i);
    return m;
}

void SessionConfig::ensure_parties_for(const ComputationPlan& plan) {
    auto have = [&](const std::string& n) {
        return std::any_of(parties.begin(), parties.end(),
                           [&](const PartyAddr& p) { return p.name == n; });
    };
    if (parties.empty())
        for (const char* s : {"s0", "s1", "s2"}) parties.push_back({s, "", 0});
    for (const std::string& n : plan.provider_names())
        if (!have(n)) parties.push_back({n, "", 0});
    for (const std::string& n : plan.receiver_names())
        if (!have(n)) parties.push_back({n, "", 0});
}

uint64_t SessionConfig::session_id() const {
    uint64_t h = fnv1a("trishare-session");
    h = fnv1a_extend(h, backend_name(backend));
    h = fnv1a_extend(h, trunc_name(trunc));
    std::string nums = std::to_string(fp.fractional_bits) + "/" + std::to_string(fp.bound_bits) +
                       "/" + std::to_string(fp.stat_security) + "/" +
                       (seeded ? std::to_string(seed) : std::string("unseeded"));
    h = fnv1a_extend(h, nums);
    for (const PartyAddr& p : parties) {
        h = fnv1a_extend(h, p.name);
        h = fnv1a_extend(h, "|");
    }
    return h;
}

void merge_cost(CostTable& into, const CostTable& from) {
    for (const auto& [k, c] : from) into[k] += c;
}

namespace {

// Value a server holds for one node: exactly one representation is filled.
struct NodeValue {
    RingTensor share;       // private
    RingTensor alpha;       // masked (public to servers)
    RingTensor mask_share;  // masked
    RingTensor pub;         // public constant
};

class PartyExec {
  public:
    PartyExec(const ComputationPlan& plan, const SessionConfig& cfg, int self,
              std::map<int, std::shared_ptr<Channel>>& chans, const PartyInputs* inputs,
              const ExecOptions& opts)
        : plan_(plan),
          cfg_(cfg),
          self_(self),
          chans_(chans),
          inputs_(inputs),
          opts_(opts),
          session_(cfg.session_id()),
          plan_id_(plan.plan_id()) {}

    PartyRunResult run() {
        run_offline();
        if (opts_.sever_s2_after_offline) sever_s2();
        run_online();
        PartyRunResult r;
        r.outputs = std::move(outputs_);
        for (auto& [peer, ch] : chans_) {
            for (int phase = 0; phase < 2; ++phase) {
                PhaseCost pc = ch->sent(phase);
                if (pc.messages == 0) continue;
                r.sent[{self_, peer, phase}] = {pc.messages, pc.payload_bytes, pc.frame_bytes};
            }
        }
        return r;
    }

  private:
    bool is_server() const { return self_ == kServer0 || self_ == kServer1; }

    Channel& chan(int peer) {
        auto it = chans_.find(peer);
        if (it == chans_.end() || !it->second)
            fail(ErrorCode::ChannelClosed, "no channel to party " + std::to_string(peer));
        return *it->second;
    }

    void sever_s2() {
        if (self_ == kProducer) {
            for (auto& [peer, ch] : chans_) ch->close();
        } else if (auto it = chans_.find(kProducer); it != chans_.end() && it->second) {
            it->second->close();
        }
    }

    uint64_t offline_seed() const { return cfg_.seeded ? cfg_.seed : fresh_entropy(); }

    void run_offline() {
        if (self_ == kProducer) {
            Prg prg(offline_seed(), "offline");
            OfflineBundle bundle = generate_offline(plan_, prg);
            distribute(bundle, plan_, session_, chan(kServer0), chan(kServer1));
        } else if (is_server()) {
            store_ = receive_offline(plan_, session_, chan(kProducer), cfg_.timeout_ms);
        }
    }

    void run_online() {
        if (is_server()) {
            run_server();
        } else if (self_ >= static_cast<int>(cfg_.parties.size())) {
            fail(ErrorCode::BadConfig, "party index out of range");
        } else if (self_ != kProducer) {
            run_edge_party();
        }
    }

    // ---- servers ----

    void run_server() {
        vals_.resize(plan_.nodes.size());
        std::vector<uint32_t> last_use(plan_.nodes.size());
        for (const PlanNode& n : plan_.nodes) {
            last_use[n.id] = n.id;
            for (uint32_t i : n.inputs) last_use[i] = n.id;
        }
        for (const PlanNode& n : plan_.nodes) {
            exec_node(n);
            for (uint32_t i : n.inputs)
                if (last_use[i] == n.id) vals_[i] = NodeValue{};
            if (last_use[n.id] == n.id) vals_[n.id] = NodeValue{};
        }
    }

    RingTensor recv_value(int peer, const PlanNode& n, int slot) {
        Frame f = chan(peer).recv(n.id, static_cast<uint8_t>(slot), kPhaseOnline, cfg_.timeout_ms);
        if (f.h.session_id != session_ || f.h.plan_id != plan_id_)
            fail(ErrorCode::ProtocolDesync, "online frame from another session or plan");
        if (f.h.backend != static_cast<uint8_t>(plan_.backend) || f.shape() != n.shape)
            fail(ErrorCode::ProtocolDesync,
                 "online frame for node " + std::to_string(n.id) + " has wrong layout");
        return tensor_from_frame(f);
    }

    void send_value(int peer, const PlanNode& n, int slot, const RingTensor& t) {
        chan(peer).send(make_frame(session_, plan_id_, n.id, self_, peer, kPhaseOnline, slot, t));
    }

    void exec_node(const PlanNode& n) {
        int i = self_;
        NodeValue& out = vals_[n.id];
        auto in = [&](int k) -> NodeValue& { return vals_[n.inputs[k]]; };
        switch (n.kind) {
            case NodeKind::Input:
                out.share = recv_value(cfg_.party_index(n.party), n, 0);
                break;
            case NodeKind::PublicConst:
                out.pub = n.constant;
                break;
            case NodeKind::Promote:
                out.share = i == 0 ? in(0).pub : RingTensor::zeros(plan_.backend, n.shape);
                break;
            case NodeKind::Mask: {
                out.mask_share = store_.take(n.id, 0);
                RingTensor d = in(0).share.sub(out.mask_share);
                send_value(1 - i, n, 0, d);
                out.alpha = d.add(recv_value(1 - i, n, 0));
                break;
            }
            case NodeKind::Add:
                out.share = in(0).share.add(in(1).share);
                break;
            case NodeKind::Sub:
                out.share = in(0).share.sub(in(1).share);
                break;
            case NodeKind::Neg:
                out.share = in(0).share.neg();
                break;
            case NodeKind::AddPlain:
                out.share = i == 0 ? in(0).share.add(in(1).pub) : in(0).share;
                break;
            case NodeKind::MulPlain:
                out.share = in(0).share.mul(in(1).pub);
                break;
            case NodeKind::Mul:
            case NodeKind::MatMul:
            case NodeKind::Conv2D: {
                auto B = kernels::bilinear_fn(n.kind == NodeKind::Mul      ? BilinearKind::Mul
                                              : n.kind == NodeKind::MatMul ? BilinearKind::MatMul
                                                                           : BilinearKind::Conv2D,
                                              n.stride);
                out.share = kernels::bilinear_share(i, in(0).alpha, in(1).alpha, in(0).mask_share,
                                                    in(1).mask_share, store_.take(n.id, 0), B);
                break;
            }
            case NodeKind::Truncate:
                if (plan_.trunc_mode == TruncationMode::LocalOptimistic) {
                    out.share =
                        kernels::trunc_local_share(i, in(0).share, plan_.fp.fractional_bits);
                } else {
                    RingTensor r = store_.take(n.id, 0), rp = store_.take(n.id, 1);
                    RingTensor d = kernels::trunc_open_addend(i, in(0).share, r, plan_.fp);
                    send_value(1 - i, n, 0, d);
                    RingTensor c = d.add(recv_value(1 - i, n, 0));
                    out.share = kernels::trunc_result_share(i, c, rp, plan_.fp);
                }
                break;
            case NodeKind::Transpose:
            case NodeKind::Reshape:
            case NodeKind::Stack:
            case NodeKind::Concat:
            case NodeKind::ReduceSumAxis: {
                bool masked = n.sharing == SharingKind::Masked;
                std::vector<RingTensor> parts;
                for (uint32_t id : n.inputs)
                    parts.push_back(masked ? vals_[id].alpha : vals_[id].share);
                (masked ? out.alpha : out.share) = eval_structural(n, parts);
                if (masked) {
                    parts.clear();
                    for (uint32_t id : n.inputs) parts.push_back(vals_[id].mask_share);
                    out.mask_share = eval_structural(n, parts);
                }
                break;
            }
            case NodeKind::Output:
                send_value(cfg_.party_index(n.party), n, 0, in(0).share);
                break;
        }
    }

    // ---- input providers and output receivers ----

    void run_edge_party() {
        const std::string& me = cfg_.parties[self_].name;
        Prg prg(offline_seed(), "input/" + me);
        for (const PlanNode& n : plan_.nodes) {
            if (n.kind == NodeKind::Input && n.party == me) {
                if (!inputs_ || !inputs_->count(n.name))
                    fail(ErrorCode::InvalidArgument, "no value supplied for input " + n.name);
                const RealTensor& v = inputs_->at(n.name);
                if (v.shape != n.shape)
                    fail(ErrorCode::ShapeMismatch, "input " + n.name + " is " +
                                                       shape_str(v.shape) + ", plan wants " +
                                                       shape_str(n.shape));
                PrivateTensor p = share(encode(v, plan_.fp, plan_.backend),
                                        plan_.fp.fractional_bits, prg);
                for (int s = 0; s < 2; ++s)
                    chan(s).send(make_frame(session_, plan_id_, n.id, self_, s, kPhaseOnline, 0,
                                            p.shares[s]));
            } else if (n.kind == NodeKind::Output && n.party == me) {
                RingTensor raw = recv_value(kServer0, n, 0).add(recv_value(kServer1, n, 0));
                OutputResult r;
                r.name = n.name;
                r.raw = raw;
                r.decoded = decode(raw, plan_.fp, n.fp_scale);
                r.post = n.post;
                r.post_value = apply_post(n.post, r.decoded);
                r.fp_scale = n.fp_scale;
                outputs_[n.name] = std::move(r);
            }
        }
    }

    const ComputationPlan& plan_;
    const SessionConfig& cfg_;
    int self_;
    std::map<int, std::shared_ptr<Channel>>& chans_;
    const PartyInputs* inputs_;
    ExecOptions opts_;
    uint64_t session_;
    uint64_t plan_id_;
    OfflineStore store_;
    std::vector<NodeValue> vals_;
    std::map<std::string, OutputResult> outputs_;
};

}  // namespace

PartyRunResult execute_party(const ComputationPlan& plan, const SessionConfig& cfg, int self,
                             std::map<int, std::shared_ptr<Channel>>& chans,
                             const PartyInputs* inputs, const ExecOptions& opts) {
    return PartyExec(plan, cfg, self, chans, inputs, opts).run();
}

SessionResult run_inmemory(const ComputationPlan& plan, SessionConfig cfg,
                           const SessionInputs& inputs, const ExecOptions& opts) {
    cfg.ensure_parties_for(plan);
    cfg.validate();
    int n = static_cast<int>(cfg.parties.size());
    std::vector<std::map<int, std::shared_ptr<Channel>>> mesh(n);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            auto [ca, cb] = make_inmemory_pair(a, b);
            mesh[a][b] = ca;
            mesh[b][a] = cb;
        }
    std::vector<PartyRunResult> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> threads;
    for (int p = 0; p < n; ++p) {
        threads.emplace_back([&, p] {
            try {
                const PartyInputs* in = nullptr;
                if (auto it = inputs.find(cfg.parties[p].name); it != inputs.end())
                    in = &it->second;
                results[p] = execute_party(plan, cfg, p, mesh[p], in, opts);
            } catch (...) {
                errors[p] = std::current_exception();
                for (auto& [peer, ch] : mesh[p]) ch->close();
            }
        });
    }
    for (auto& t : threads) t.join();
    // A root-cause failure at one party surfaces at the others as closed
    // channels or timeouts; rethrow the most informative error.
    std::exception_ptr first;
    for (int p = 0; p < n; ++p) {
        if (!errors[p]) continue;
        if (!first) first = errors[p];
        try {
            std::rethrow_exception(errors[p]);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ChannelClosed && e.code() != ErrorCode::Timeout)
                std::rethrow_exception(errors[p]);
        } catch (...) {
            std::rethrow_exception(errors[p]);
        }
    }
    if (first) std::rethrow_exception(first);
    SessionResult out;
    for (PartyRunResult& r : results) {
        merge_cost(out.sent, r.sent);
        for (auto& [name, o] : r.outputs) out.outputs[name] = std::move(o);
    }
    return out;
}

PartyRunResult run_tcp_party(const ComputationPlan& plan, const SessionConfig& cfg, int self,
                             const PartyInputs* inputs) {
    if (self < 0 || self >= static_cast<int>(cfg.parties.size()))
        fail(ErrorCode::BadConfig, "party index out of range");
    uint64_t sid = cfg.session_id();
    int n = static_cast<int>(cfg.parties.size());
    std::map<int, std::shared_ptr<Channel>> chans;
    {
        std::optional<TcpListener> listener;
        if (self < n - 1) listener.emplace(cfg.parties[self].port);
        for (int p = 0; p < self; ++p) {
            int fd = tcp_dial(cfg.parties[p].host, cfg.parties[p].port, self, sid, cfg.timeout_ms);
            chans[p] = make_tcp_channel(fd, self, p);
        }
        for (int k = self + 1; k < n; ++k) {
            auto [peer, fd] = listener->accept_peer(sid, cfg.timeout_ms);
            if (peer <= self || peer >= n || chans.count(peer))
                fail(ErrorCode::ProtocolDesync, "unexpected peer " + std::to_string(peer));
            chans[peer] = make_tcp_channel(fd, self, peer);
        }
    }
    PartyRunResult r = execute_party(plan, cfg, self, chans, inputs);
    for (auto& [peer, ch] : chans) ch->close();
    return r;
}

}  // namespace trishare
