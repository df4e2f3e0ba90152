#pragma once

#include "derauth/endpoints.hpp"
#include "derauth/event_log.hpp"
#include "derauth/frame.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace derauth {

using Bytes = std::vector<std::uint8_t>;

enum class TransportKind { InProcess, SocketPair };

// One direction of a link. Writes are delivered in order; reads return
// whatever has arrived so far.
class ByteChannel {
public:
    virtual ~ByteChannel() = default;
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    virtual Bytes read_available() = 0;
};

std::unique_ptr<ByteChannel> make_channel(TransportKind kind);

enum class AdversaryMode { None, Passive, Replay, Tamper, Block, Rollback, Inject };

struct AdversaryConfig {
    AdversaryMode mode = AdversaryMode::None;
    int tamper_bit = 0;                         // bit of the 64-bit REPLY word to flip
    MsgType block_type = MsgType::Verdict;      // frames dropped in Block mode
    std::uint64_t start_round = 1;              // first challenge (0-based) the adversary acts on
    std::uint64_t period = 1;                   // act on every period-th challenge from start_round
    std::uint64_t snapshot_round = 0;           // Rollback: device image taken before this challenge
    int budget = 0;                             // maximum number of interventions; 0 is unlimited
    int drop_enrollments = 0;                   // link loss: ENROLL_CRT frames lost before delivery
};

enum class Direction { MasterToOutstation, OutstationToMaster };

struct Interception {
    std::vector<Bytes> forward;   // continue toward the receiver
    std::vector<Bytes> reflect;   // sent back toward the sender
};

// Man-in-the-middle hop between the two endpoints.
class AdversaryProxy {
public:
    explicit AdversaryProxy(const AdversaryConfig& config, EventLog* log = nullptr);

    // Enrollment runs with the adversary disabled; link loss still applies.
    void set_enabled(bool on) { enabled_ = on; }
    bool enabled() const { return enabled_; }

    Interception intercept(Direction dir, const Frame& frame);
    const std::vector<Frame>& capture_log() const { return capture_; }
    std::uint64_t challenges_seen() const { return challenges_; }
    int actions() const { return actions_; }

    // Rollback mode: the stale device image used to answer challenges.
    void arm_rollback(const OutstationSession& image);
    bool rollback_armed() const { return image_ != nullptr; }

private:
    bool acting() const;
    void act(std::string event, std::string detail);
    void note(std::string event, std::string detail = {});

    AdversaryConfig config_;
    EventLog* log_;
    bool enabled_ = true;
    int enroll_drops_left_;
    std::uint64_t challenges_ = 0;   // CHALLENGE frames seen, current one included
    int actions_ = 0;
    bool impersonating_ = false;   // current round answered from the image
    std::vector<Frame> capture_;
    std::optional<Frame> last_reply_;
    std::unique_ptr<OutstationSession> image_;
};

enum class RoundOutcome { Accept, Reject, Abort, Timeout };
std::string_view to_string(RoundOutcome o);

struct ScenarioConfig {
    std::uint64_t seed = 0;
    int n_cells = 100;
    OutstationConfig outstation;
    int rounds = 10;
    std::int64_t idle_cycles = 1;    // measurement cycles between rounds
    // Measurement cycles after characterization before the first round. Right
    // after a recharge many cells read above the 4.0 V window ceiling.
    std::int64_t warmup_cycles = 400;
    TransportKind transport = TransportKind::InProcess;
    AdversaryConfig adversary;
    bool reenroll = true;            // re-enroll after a session-invalidating abort
    int max_enroll_attempts = 5;

    void validate() const;
};

struct RoundRecord {
    std::uint64_t index = 0;
    RoundOutcome outcome = RoundOutcome::Timeout;
    AbortReason reason = AbortReason::None;
    std::uint64_t challenge = 0;
    std::optional<std::uint64_t> reply;   // reply as received by the master
};

struct ScenarioResult {
    std::vector<RoundRecord> rounds;
    EventLog log;
    std::vector<Frame> capture_log;
    int accepts = 0;
    int rejects = 0;
    int aborts = 0;
    int timeouts = 0;
    int enrollments = 0;
    int lockstep_violations = 0;   // accepted rounds after which the tables differed
    MasterState master_state = MasterState::Idle;
    OutstationState outstation_state = OutstationState::Idle;
    bool tables_equal = false;
};

// Drives enrollment and `rounds` authentication rounds over framed links,
// with the adversary hop in between. Deterministic for a given config.
ScenarioResult run_session(const ScenarioConfig& config);

struct ExportStats {
    long lines = 0;
    long rounds = 0;                  // challenges issued, aborted ones included
    long duplicate_challenges = 0;    // challenge words seen more than once
    long duplicate_pairs = 0;         // identical (challenge, reply) lines
};

// Writes `n` accepted CRSeqs as `challenge_hex16,reply_hex16` lines.
ExportStats export_crseq_dataset(std::ostream& out, long n, const ScenarioConfig& config);
ExportStats export_crseq_dataset(const std::string& path, long n, const ScenarioConfig& config);

} // namespace derauth
