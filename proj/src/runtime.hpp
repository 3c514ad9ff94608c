#pragma once

#include <map>
#include <memory>
#include <string>

#include "channel.hpp"
#include "offline.hpp"
#include "plan.hpp"

namespace trishare {

// First three parties are always the servers.
inline constexpr int kServer0 = 0;
inline constexpr int kServer1 = 1;
inline constexpr int kProducer = 2;

const char* backend_name(Backend b);       // "int64" / "int100"
const char* trunc_name(TruncationMode t);  // "interactive" / "local"
Backend backend_from_string(const std::string& s);
TruncationMode trunc_from_string(const std::string& s);

struct PartyAddr {
    std::string name;
    std::string host = "127.0.0.1";
    int port = 0;
};

// Parsed session configuration (text key-value file). Keys: backend, trunc,
// seed, fractional_bits, bound_bits, stat_security, timeout_ms, and
// party.<name> = host:port entries. s0/s1/s2 are required for TCP runs; any
// further parties are input providers / output receivers.
struct SessionConfig {
    Backend backend = Backend::Int64;
    TruncationMode trunc = TruncationMode::Interactive;
    FixedPointConfig fp;
    bool fp_explicit = false;  // a config file pinned the fixed-point keys
    bool seeded = false;
    uint64_t seed = 0;
    int timeout_ms = 30000;
    std::vector<PartyAddr> parties;

    static SessionConfig parse_file(const std::string& path);
    static SessionConfig parse_text(const std::string& text, const std::string& origin);

    int party_index(const std::string& name) const;
    std::map<std::string, int> party_indices() const;
    // Adds s0/s1/s2 and the plan's provider/receiver names when absent
    // (in-memory sessions need no addresses).
    void ensure_parties_for(const ComputationPlan& plan);
    // Agreed upon by every party without communication.
    uint64_t session_id() const;
    void validate() const;
};

struct OutputResult {
    std::string name;
    RingTensor raw;         // reconstructed ring tensor
    RealTensor decoded;     // fixed-point decoded
    RealTensor post_value;  // after the plan's plaintext post op
    PostOp post = PostOp::None;
    int fp_scale = 0;
};

using PartyInputs = std::map<std::string, RealTensor>;     // tensor name -> value
using SessionInputs = std::map<std::string, PartyInputs>;  // party name -> inputs

struct PartyRunResult {
    std::map<std::string, OutputResult> outputs;  // non-empty only at receivers
    CostTable sent;                               // frames this party sent
};

struct ExecOptions {
    // Close every channel to/from S2 once the offline phase ends; the online
    // phase must still complete (S2 is offline-only).
    bool sever_s2_after_offline = false;
};

// Runs one party over an established channel mesh (peer index -> channel).
PartyRunResult execute_party(const ComputationPlan& plan, const SessionConfig& cfg, int self,
                             std::map<int, std::shared_ptr<Channel>>& chans,
                             const PartyInputs* inputs, const ExecOptions& opts = {});

struct SessionResult {
    std::map<std::string, OutputResult> outputs;  // merged over receivers
    CostTable sent;                               // merged over parties
};

// All parties as threads of this process, wired with in-memory channels.
SessionResult run_inmemory(const ComputationPlan& plan, SessionConfig cfg,
                           const SessionInputs& inputs, const ExecOptions& opts = {});

// This process as one TCP party; dials lower indices, accepts higher ones.
PartyRunResult run_tcp_party(const ComputationPlan& plan, const SessionConfig& cfg, int self,
                             const PartyInputs* inputs);

void merge_cost(CostTable& into, const CostTable& from);

}  // namespace trishare
