#pragma once

#include "derauth/cell_monitor.hpp"
#include "derauth/crseq.hpp"
#include "derauth/ducm.hpp"
#include "derauth/event_log.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace derauth {

enum class MasterState { Idle, Enrolled, ChallengeOutstanding, Verified, Aborted };
enum class OutstationState { Idle, Enrolled, Aborted };

std::string_view to_string(MasterState s);
std::string_view to_string(OutstationState s);

// Codes below 0x10 end one round and leave the session usable; the rest
// invalidate the session until it is enrolled again.
enum class AbortReason : std::uint8_t {
    None = 0x00,
    Malformed = 0x01,
    SelfAuthFailed = 0x02,
    OutOfWindow = 0x03,
    Gauge = 0x04,
    Timeout = 0x05,
    NotEnrolled = 0x10,
    Desync = 0x11,
    UnexpectedVerdict = 0x12,
    BadFrame = 0x13,
};

std::string_view to_string(AbortReason r);
bool invalidates_session(AbortReason r);
AbortReason abort_reason_from_byte(std::uint8_t b);

struct ReplyCheck {
    bool accepted = false;
    std::uint64_t round = 0;   // table version the challenge was answered against
    BessState bs;              // B_s recovered from the reply
    int mismatched_replies = 0;
};

class MasterSession {
public:
    explicit MasterSession(TransformVariant variant = TransformVariant::WholeWord, EventLog* log = nullptr);

    void accept_enrollment(CellReplyTable crt);

    // Samples four distinct L_set1 ids, two distinct L_set2 ids and an R_T.
    // Allowed from Enrolled, Verified and Aborted (a rejected round may be retried).
    Challenge build_challenge(std::uint64_t rng_seed);
    void issue_challenge(const Challenge& ch);

    // Accept updates C_rt with the recovered B_s; Reject leaves it untouched.
    ReplyCheck verify_reply(std::uint64_t r_auth);

    // Outstation acknowledgement of a verdict. A matching acknowledgement of an
    // Accept authorizes the control command. Returns true in that case.
    bool confirm(std::uint64_t round, bool committed);

    void abort(AbortReason reason, std::string detail = {});
    void reset();

    MasterState state() const { return state_; }
    std::uint64_t round() const { return crt_.version(); }
    const CellReplyTable& crt() const { return crt_; }
    const std::optional<Challenge>& pending_challenge() const { return pending_; }
    std::optional<std::uint64_t> awaiting_confirmation() const { return awaiting_; }
    TransformVariant variant() const { return variant_; }
    void set_log(EventLog* log) { log_ = log; }

private:
    void log(std::string event, std::string detail = {}) const;

    TransformVariant variant_;
    EventLog* log_;
    CellReplyTable crt_;
    MasterState state_ = MasterState::Idle;
    std::optional<Challenge> pending_;
    std::optional<std::uint64_t> awaiting_;
};

struct OutstationConfig {
    MonitorConfig monitor;
    double tau_mah = 1.0;
    TransformVariant variant = TransformVariant::WholeWord;
};

struct ChallengeResult {
    std::optional<std::uint64_t> reply;
    AbortReason reason = AbortReason::None;
    std::string detail;
    BessState bs;
};

struct VerdictResult {
    bool committed = false;
    AbortReason reason = AbortReason::None;
};

class OutstationSession {
public:
    OutstationSession(std::uint64_t seed, int n_cells, const OutstationConfig& config, EventLog* log = nullptr);

    // Learning cycle and DUCM bootstrap; enrollment runs it on first use.
    void characterize();

    // Initializes C_rt and returns the copy to transmit. The session becomes
    // Enrolled only once the master acknowledges receipt.
    CellReplyTable offer_enrollment(std::uint64_t crt_seed);
    void complete_enrollment();
    bool enrollment_offered() const { return offered_.has_value(); }

    // Self-authenticates L_set1, then answers with T(B_s | r_i). The C_rt
    // update is staged until the master's verdict arrives.
    ChallengeResult handle_challenge(const Challenge& ch);

    // Commits the staged update on a matching Accept, discards it on Reject.
    // A round or B_s mismatch invalidates the session.
    VerdictResult handle_verdict(std::uint64_t round, bool accepted, const BessState& bs_echo);

    void abort(AbortReason reason, std::string detail = {});
    void reset();

    // Measurement cycles elapsing between rounds.
    void advance(std::int64_t cycles);

    OutstationState state() const { return state_; }
    std::uint64_t round() const { return crt_.version(); }
    const CellReplyTable& crt() const { return crt_; }
    bool has_staged() const { return staged_.has_value(); }
    int size() const { return n_cells_; }
    const Tolerance& tolerance() const { return tol_; }
    CellMonitor& monitor() { return monitor_; }
    const CellMonitor& monitor() const { return monitor_; }
    void set_log(EventLog* log) { log_ = log; }

    // Test hook standing in for a device restored from an old image.
    void restore_crt(const CellReplyTable& crt) { crt_ = crt; }

private:
    void log(std::string event, std::string detail = {}) const;
    ChallengeResult refuse(AbortReason reason, std::string detail);

    struct Staged {
        CellReplyTable next;
        BessState bs;
        std::uint64_t round = 0;
    };

    OutstationConfig config_;
    int n_cells_;
    Tolerance tol_;
    EventLog* log_;
    CellMonitor monitor_;
    CellReplyTable crt_;
    OutstationState state_ = OutstationState::Idle;
    std::optional<CellReplyTable> offered_;
    std::optional<Staged> staged_;
};

// In-process enrollment: outstation offers C_rt, master stores it, outstation
// is acknowledged. Both end Enrolled with equal tables at version 0.
void enroll(MasterSession& master, OutstationSession& outstation, std::uint64_t crt_seed);

} // namespace derauth
