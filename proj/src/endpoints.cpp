#include "derauth/endpoints.hpp"

#include "derauth/errors.hpp"
#include "derauth/random.hpp"

#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace derauth {

std::string_view to_string(MasterState s) {
    switch (s) {
    case MasterState::Idle: return "idle";
    case MasterState::Enrolled: return "enrolled";
    case MasterState::ChallengeOutstanding: return "challenge-outstanding";
    case MasterState::Verified: return "verified";
    case MasterState::Aborted: return "aborted";
    }
    return "unknown";
}

std::string_view to_string(OutstationState s) {
    switch (s) {
    case OutstationState::Idle: return "idle";
    case OutstationState::Enrolled: return "enrolled";
    case OutstationState::Aborted: return "aborted";
    }
    return "unknown";
}

std::string_view to_string(AbortReason r) {
    switch (r) {
    case AbortReason::None: return "none";
    case AbortReason::Malformed: return "malformed";
    case AbortReason::SelfAuthFailed: return "self-auth-failed";
    case AbortReason::OutOfWindow: return "out-of-window";
    case AbortReason::Gauge: return "gauge";
    case AbortReason::NotEnrolled: return "not-enrolled";
    case AbortReason::Desync: return "desync";
    case AbortReason::UnexpectedVerdict: return "unexpected-verdict";
    case AbortReason::BadFrame: return "bad-frame";
    case AbortReason::Timeout: return "timeout";
    }
    return "unknown";
}

bool invalidates_session(AbortReason r) {
    return static_cast<std::uint8_t>(r) >= 0x10;
}

AbortReason abort_reason_from_byte(std::uint8_t b) {
    switch (b) {
    case 0x01: case 0x02: case 0x03: case 0x04: case 0x05:
    case 0x10: case 0x11: case 0x12: case 0x13:
        return static_cast<AbortReason>(b);
    default:
        throw ProtocolError("unknown abort reason 0x" + to_hex16(b).substr(14));
    }
}

// ---------------------------------------------------------------- master

MasterSession::MasterSession(TransformVariant variant, EventLog* log) : variant_(variant), log_(log) {}

void MasterSession::log(std::string event, std::string detail) const {
    if (log_ != nullptr) {
        log_->emit(crt_.version(), "master", std::move(event), std::string(to_string(state_)), std::move(detail));
    }
}

void MasterSession::accept_enrollment(CellReplyTable crt) {
    if (state_ != MasterState::Idle) {
        throw ProtocolError("master already enrolled");
    }
    if (crt.size() < 6) {
        throw ProtocolError("cell-reply table too small for a challenge");
    }
    crt_ = std::move(crt);
    state_ = MasterState::Enrolled;
    log("enrolled", std::to_string(crt_.size()) + " cells");
}

Challenge MasterSession::build_challenge(std::uint64_t rng_seed) {
    if (state_ != MasterState::Enrolled && state_ != MasterState::Verified && state_ != MasterState::Aborted) {
        throw ProtocolError("cannot build a challenge in state " + std::string(to_string(state_)));
    }
    Rng rng(rng_seed);
    const auto& entries = crt_.entries();
    std::vector<std::size_t> idx(entries.size());
    std::iota(idx.begin(), idx.end(), 0);

    Challenge ch;
    for (std::size_t k = 0; k < ch.lset1.size(); ++k) {
        const auto j = k + static_cast<std::size_t>(rng.below(idx.size() - k));
        std::swap(idx[k], idx[j]);
        ch.lset1[k] = entries[idx[k]].first;
    }
    const auto a = static_cast<std::size_t>(rng.below(entries.size()));
    auto b = static_cast<std::size_t>(rng.below(entries.size() - 1));
    if (b >= a) {
        ++b;
    }
    ch.lset2 = {entries[a].first, entries[b].first};
    ch.rt = TransformSpec::unpack(static_cast<std::uint16_t>(rng.next()));
    issue_challenge(ch);
    return ch;
}

void MasterSession::issue_challenge(const Challenge& ch) {
    if (state_ != MasterState::Enrolled && state_ != MasterState::Verified && state_ != MasterState::Aborted) {
        throw ProtocolError("cannot issue a challenge in state " + std::string(to_string(state_)));
    }
    pending_ = ch;
    awaiting_.reset();
    state_ = MasterState::ChallengeOutstanding;
    log("challenge-sent", to_hex16(ch.encode()));
}

ReplyCheck MasterSession::verify_reply(std::uint64_t r_auth) {
    if (state_ != MasterState::ChallengeOutstanding || !pending_) {
        throw ProtocolError("no challenge outstanding");
    }
    const Challenge ch = *pending_;
    pending_.reset();

    const auto fields = split_temp_reply(reverse_transform(r_auth, ch.rt, variant_));
    ReplyCheck out;
    out.round = crt_.version();
    out.bs = fields.bs;
    for (std::size_t i = 0; i < ch.lset1.size(); ++i) {
        if (fields.replies[i] != crt_.reply(ch.lset1[i])) {
            ++out.mismatched_replies;
        }
    }
    out.accepted = out.mismatched_replies == 0;
    awaiting_ = out.round;
    if (out.accepted) {
        crt_.update(out.bs);
        state_ = MasterState::Verified;
        log("reply-accepted", to_hex16(r_auth));
    } else {
        state_ = MasterState::Aborted;
        log("reply-rejected", std::to_string(out.mismatched_replies) + " reply bytes differ");
    }
    return out;
}

bool MasterSession::confirm(std::uint64_t round, bool committed) {
    if (!awaiting_ || *awaiting_ != round) {
        abort(AbortReason::Desync, "acknowledgement for round " + std::to_string(round) + " not expected");
        return false;
    }
    awaiting_.reset();
    if (committed && state_ == MasterState::Verified) {
        log("command-authorized", "round " + std::to_string(round));
        return true;
    }
    if (!committed && state_ == MasterState::Aborted) {
        log("rollback-confirmed", "round " + std::to_string(round));
        return false;
    }
    abort(AbortReason::Desync, "acknowledgement disagrees with verdict");
    return false;
}

void MasterSession::abort(AbortReason reason, std::string detail) {
    state_ = MasterState::Aborted;
    pending_.reset();
    awaiting_.reset();
    log("abort", std::string(to_string(reason)) + (detail.empty() ? "" : ": " + detail));
}

void MasterSession::reset() {
    crt_ = CellReplyTable{};
    pending_.reset();
    awaiting_.reset();
    state_ = MasterState::Idle;
    log("reset");
}

// ------------------------------------------------------------ outstation

OutstationSession::OutstationSession(std::uint64_t seed, int n_cells, const OutstationConfig& config,
                                     EventLog* log)
    : config_(config), n_cells_(n_cells), tol_(config.tau_mah), log_(log), monitor_(seed, n_cells, config.monitor) {}

void OutstationSession::log(std::string event, std::string detail) const {
    if (log_ != nullptr) {
        log_->emit(crt_.version(), "outstation", std::move(event), std::string(to_string(state_)),
                   std::move(detail));
    }
}

void OutstationSession::characterize() {
    if (!monitor_.characterized()) {
        monitor_.characterize();
        log("characterized", std::to_string(n_cells_) + " cells");
    }
}

CellReplyTable OutstationSession::offer_enrollment(std::uint64_t crt_seed) {
    if (state_ != OutstationState::Idle) {
        throw ProtocolError("outstation already enrolled");
    }
    characterize();
    offered_ = init_crt(crt_seed, n_cells_);
    log("crt-offered");
    return *offered_;
}

void OutstationSession::complete_enrollment() {
    if (state_ != OutstationState::Idle || !offered_) {
        throw ProtocolError("no enrollment offer outstanding");
    }
    crt_ = std::move(*offered_);
    offered_.reset();
    state_ = OutstationState::Enrolled;
    log("enrolled");
}

ChallengeResult OutstationSession::refuse(AbortReason reason, std::string detail) {
    if (invalidates_session(reason)) {
        abort(reason, detail);
    } else {
        log("challenge-refused", std::string(to_string(reason)) + ": " + detail);
    }
    ChallengeResult r;
    r.reason = reason;
    r.detail = std::move(detail);
    return r;
}

ChallengeResult OutstationSession::handle_challenge(const Challenge& ch) {
    if (state_ != OutstationState::Enrolled) {
        return refuse(AbortReason::NotEnrolled, "session not enrolled");
    }
    if (staged_) {
        return refuse(AbortReason::Desync, "verdict for round " + std::to_string(staged_->round) + " never arrived");
    }
    log("challenge-received", to_hex16(ch.encode()));

    struct Tick {
        CellMonitor& m;
        ~Tick() { m.advance(); }
    } tick{monitor_};

    if (!ch.well_formed(n_cells_)) {
        return refuse(AbortReason::Malformed, "cell id out of range or repeated");
    }
    const auto& sample = monitor_.sample();
    for (auto id : ch.lset1) {
        const auto& m = sample[id];
        try {
            const auto out = monitor_.ducm(id).self_authenticate(m, tol_);
            if (!out.passed) {
                return refuse(AbortReason::SelfAuthFailed,
                              "cell " + std::to_string(id) + " residual " + std::to_string(out.residual_mah) + " mAh");
            }
        } catch (const OutOfWindowError& e) {
            return refuse(AbortReason::OutOfWindow, e.what());
        } catch (const GaugeRefusal& e) {
            return refuse(AbortReason::Gauge, e.what());
        }
    }

    const Measurement lset2[2] = {sample[ch.lset2[0]], sample[ch.lset2[1]]};
    ChallengeResult r;
    r.bs = quantize_bs(lset2);
    r.reply = apply_transform(build_temp_reply(crt_, ch, r.bs), ch.rt, config_.variant);
    staged_ = Staged{update_crt(crt_, r.bs), r.bs, crt_.version()};
    log("reply-sent", to_hex16(*r.reply) + (r.bs.clipped ? " (B_s clipped)" : ""));
    return r;
}

VerdictResult OutstationSession::handle_verdict(std::uint64_t round, bool accepted, const BessState& bs_echo) {
    VerdictResult r;
    if (state_ != OutstationState::Enrolled || !staged_) {
        r.reason = AbortReason::UnexpectedVerdict;
        abort(r.reason, "no reply awaiting a verdict");
        return r;
    }
    if (round != staged_->round) {
        r.reason = AbortReason::Desync;
        abort(r.reason, "verdict names round " + std::to_string(round) + ", expected " +
                            std::to_string(staged_->round));
        return r;
    }
    if (!accepted) {
        staged_.reset();
        log("crt-rolled-back");
        return r;
    }
    if (!(bs_echo == staged_->bs)) {
        r.reason = AbortReason::Desync;
        abort(r.reason, "B_s echo " + to_hex16(bs_echo.pack()).substr(8) + " differs from " +
                            to_hex16(staged_->bs.pack()).substr(8));
        return r;
    }
    crt_ = std::move(staged_->next);
    staged_.reset();
    r.committed = true;
    log("crt-committed");
    return r;
}

void OutstationSession::abort(AbortReason reason, std::string detail) {
    state_ = OutstationState::Aborted;
    staged_.reset();
    log("abort", std::string(to_string(reason)) + (detail.empty() ? "" : ": " + detail));
}

void OutstationSession::reset() {
    crt_ = CellReplyTable{};
    staged_.reset();
    offered_.reset();
    state_ = OutstationState::Idle;
    log("reset");
}

void OutstationSession::advance(std::int64_t cycles) {
    for (std::int64_t i = 0; i < cycles; ++i) {
        monitor_.tick();
    }
}

void enroll(MasterSession& master, OutstationSession& outstation, std::uint64_t crt_seed) {
    if (master.state() != MasterState::Idle || outstation.state() != OutstationState::Idle) {
        throw ProtocolError("already enrolled; reset both sessions first");
    }
    master.accept_enrollment(outstation.offer_enrollment(crt_seed));
    outstation.complete_enrollment();
}

} // namespace derauth
