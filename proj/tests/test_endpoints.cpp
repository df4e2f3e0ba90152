#include "doctest.h"

#include "derauth/endpoints.hpp"
#include "derauth/errors.hpp"

#include <set>
#include <sstream>

using namespace derauth;

namespace {

enum class Outcome { Accept, Reject, Abort };

struct Pair {
    EventLog log;
    MasterSession master;
    OutstationSession outstation;

    explicit Pair(std::uint64_t seed = 0, OutstationConfig cfg = {})
        : master(cfg.variant), outstation(seed, 100, cfg) {
        master.set_log(&log);
        outstation.set_log(&log);
    }
};

// One round driven in-process. `flip` (if >= 0) toggles that bit of the reply in transit.
Outcome round_trip(Pair& p, std::uint64_t seed, int flip = -1) {
    const auto ch = p.master.build_challenge(seed);
    const auto res = p.outstation.handle_challenge(ch);
    if (!res.reply) {
        p.master.abort(res.reason, res.detail);
        return Outcome::Abort;
    }
    auto reply = *res.reply;
    if (flip >= 0) {
        reply ^= 1ULL << flip;
    }
    const auto check = p.master.verify_reply(reply);
    const auto v = p.outstation.handle_verdict(check.round, check.accepted, check.bs);
    if (v.reason != AbortReason::None) {
        p.master.abort(v.reason);
        return Outcome::Abort;
    }
    const bool authorized = p.master.confirm(check.round, v.committed);
    return authorized ? Outcome::Accept : Outcome::Reject;
}

Pair& shared_pair() {
    static Pair p(0);
    return p;
}

} // namespace

TEST_CASE("enrollment") {
    Pair p(1);
    CHECK(p.master.state() == MasterState::Idle);
    enroll(p.master, p.outstation, 99);
    CHECK(p.master.state() == MasterState::Enrolled);
    CHECK(p.outstation.state() == OutstationState::Enrolled);
    CHECK(p.master.crt() == p.outstation.crt());
    CHECK(p.master.round() == 0);
    CHECK_THROWS_AS(enroll(p.master, p.outstation, 99), ProtocolError);
    CHECK_THROWS_AS(p.outstation.offer_enrollment(1), ProtocolError);

    // An offer that never reached the master leaves the outstation Idle and retryable.
    Pair q(1);
    (void)q.outstation.offer_enrollment(5);
    CHECK(q.outstation.state() == OutstationState::Idle);
    q.master.accept_enrollment(q.outstation.offer_enrollment(5));
    q.outstation.complete_enrollment();
    CHECK(q.master.crt() == q.outstation.crt());
}

TEST_CASE("challenge building") {
    MasterSession m;
    CHECK_THROWS_AS(m.build_challenge(1), ProtocolError);
    m.accept_enrollment(init_crt(3, 100));

    std::set<std::uint64_t> words;
    int duplicates = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto ch = m.build_challenge(s);
        duplicates += words.insert(ch.encode()).second ? 0 : 1;
        CHECK(m.state() == MasterState::ChallengeOutstanding);
        CHECK(m.pending_challenge().has_value());
        CHECK_THROWS_AS(m.build_challenge(s), ProtocolError);
        m.abort(AbortReason::Timeout);
        CHECK_FALSE(m.pending_challenge().has_value());
    }
    CHECK(duplicates <= 1);

    for (std::uint64_t s = 0; s < 100000; ++s) {
        const auto ch = m.build_challenge(s * 7919 + 1);
        REQUIRE(ch.well_formed(100));
        m.abort(AbortReason::Timeout);
    }
}

TEST_CASE("honest rounds stay in lockstep and aborts change nothing") {
    auto& p = shared_pair();
    enroll(p.master, p.outstation, 7);
    int accepts = 0;
    int aborts = 0;
    for (std::uint64_t r = 0; r < 200; ++r) {
        const auto before = p.outstation.crt();
        const auto o = round_trip(p, 1000 + r);
        p.outstation.advance(3);
        REQUIRE(o != Outcome::Reject);
        if (o == Outcome::Accept) {
            ++accepts;
            REQUIRE(p.outstation.crt() == p.master.crt());
            REQUIRE(p.master.round() == static_cast<std::uint64_t>(accepts));
        } else {
            ++aborts;
            REQUIRE(p.outstation.crt() == before);
            REQUIRE(p.master.crt() == before);
        }
    }
    CHECK(accepts > 120);
    CHECK(p.log.count("command-authorized") == static_cast<std::size_t>(accepts));
    MESSAGE("accepted " << accepts << " of 200, aborted " << aborts);
}

TEST_CASE("malformed challenge is refused without touching C_rt") {
    auto& p = shared_pair();
    Challenge ch;
    ch.lset1 = {1, 2, 3, 255};
    ch.lset2 = {5, 6};
    p.master.issue_challenge(ch);
    const auto before = p.outstation.crt();
    const auto res = p.outstation.handle_challenge(ch);
    CHECK_FALSE(res.reply.has_value());
    CHECK(res.reason == AbortReason::Malformed);
    CHECK(p.outstation.state() == OutstationState::Enrolled);
    CHECK(p.outstation.crt() == before);
    p.master.abort(res.reason);
    CHECK(round_trip(p, 4242) != Outcome::Reject);
}

TEST_CASE("every single-bit flip of a reply ends without authorization") {
    auto& p = shared_pair();
    for (int bit = 0; bit < 64; ++bit) {
        Outcome o = Outcome::Abort;
        std::uint64_t s = 5000 + static_cast<std::uint64_t>(bit) * 1000;
        // retry until the outstation actually answers
        for (;;) {
            const auto ch = p.master.build_challenge(s++);
            const auto res = p.outstation.handle_challenge(ch);
            if (!res.reply) {
                p.master.abort(res.reason);
                continue;
            }
            const auto before = p.master.crt();
            const auto check = p.master.verify_reply(*res.reply ^ (1ULL << bit));
            const auto v = p.outstation.handle_verdict(check.round, check.accepted, check.bs);
            if (v.reason != AbortReason::None) {
                CHECK(check.accepted);   // only a B_s flip gets past the reply comparison
                CHECK(invalidates_session(v.reason));
                o = Outcome::Abort;
            } else {
                CHECK_FALSE(check.accepted);
                CHECK_FALSE(p.master.confirm(check.round, v.committed));
                CHECK(p.master.crt() == before);
                CHECK(p.outstation.crt() == before);
                o = Outcome::Reject;
            }
            break;
        }
        CHECK(o != Outcome::Accept);
        if (p.outstation.state() == OutstationState::Aborted) {
            p.master.reset();
            p.outstation.reset();
            enroll(p.master, p.outstation, 100 + static_cast<std::uint64_t>(bit));
        }
    }
}

TEST_CASE("replaying the previous round's reply is rejected") {
    auto& p = shared_pair();
    std::uint64_t s = 900000;
    std::optional<std::uint64_t> previous;
    int rejects = 0;
    while (rejects < 50) {
        const auto ch = p.master.build_challenge(s++);
        const auto res = p.outstation.handle_challenge(ch);
        if (!res.reply) {
            p.master.abort(res.reason);
            continue;
        }
        if (previous) {
            const auto check = p.master.verify_reply(*previous);
            REQUIRE_FALSE(check.accepted);
            const auto v = p.outstation.handle_verdict(check.round, check.accepted, check.bs);
            REQUIRE(v.reason == AbortReason::None);
            CHECK_FALSE(p.master.confirm(check.round, v.committed));
            ++rejects;
            previous.reset();
            continue;
        }
        const auto check = p.master.verify_reply(*res.reply);
        const auto v = p.outstation.handle_verdict(check.round, check.accepted, check.bs);
        REQUIRE(p.master.confirm(check.round, v.committed));
        previous = *res.reply;
    }
}

TEST_CASE("an outstation restored to an old table is rejected") {
    auto& p = shared_pair();
    const auto old = p.outstation.crt();
    for (std::uint64_t s = 1; p.master.round() < old.version() + 3; ++s) {
        round_trip(p, 31 * s + 17);
    }
    p.outstation.restore_crt(old);
    for (std::uint64_t s = 1;; ++s) {
        const auto res = p.outstation.handle_challenge(p.master.build_challenge(77000 + s));
        if (!res.reply) {
            p.master.abort(res.reason);
            continue;
        }
        const auto check = p.master.verify_reply(*res.reply);
        CHECK_FALSE(check.accepted);
        CHECK(p.master.state() == MasterState::Aborted);
        // the stale device also disagrees on the round number
        const auto v = p.outstation.handle_verdict(check.round, check.accepted, check.bs);
        CHECK(v.reason == AbortReason::Desync);
        break;
    }
    p.master.reset();
    p.outstation.reset();
    enroll(p.master, p.outstation, 8);
}

TEST_CASE("verdict mismatches invalidate the outstation session") {
    auto& p = shared_pair();
    for (std::uint64_t s = 1;; ++s) {
        const auto res = p.outstation.handle_challenge(p.master.build_challenge(s));
        if (res.reply) {
            const auto check = p.master.verify_reply(*res.reply);
            const auto v = p.outstation.handle_verdict(check.round + 1, check.accepted, check.bs);
            CHECK(v.reason == AbortReason::Desync);
            break;
        }
        p.master.abort(res.reason);
    }
    CHECK(p.outstation.state() == OutstationState::Aborted);
    CHECK(p.outstation.handle_challenge(Challenge{}).reason == AbortReason::NotEnrolled);
    p.master.reset();
    p.outstation.reset();
    enroll(p.master, p.outstation, 3);

    // A lost verdict shows up as a new challenge while an update is still staged.
    for (std::uint64_t s = 10;; ++s) {
        const auto res = p.outstation.handle_challenge(p.master.build_challenge(s));
        if (res.reply) {
            (void)p.master.verify_reply(*res.reply);
            break;
        }
        p.master.abort(res.reason);
    }
    CHECK(p.outstation.handle_challenge(p.master.build_challenge(99)).reason == AbortReason::Desync);
    CHECK(p.outstation.state() == OutstationState::Aborted);
    CHECK(p.outstation.handle_verdict(0, true, BessState{}).reason == AbortReason::UnexpectedVerdict);
    p.master.reset();
    p.outstation.reset();
    enroll(p.master, p.outstation, 4);
}

TEST_CASE("master guards") {
    MasterSession m;
    CHECK_THROWS_AS(m.verify_reply(0), ProtocolError);
    m.accept_enrollment(init_crt(0, 10));
    CHECK_THROWS_AS(m.accept_enrollment(init_crt(0, 10)), ProtocolError);
    CHECK_THROWS_AS(m.verify_reply(0), ProtocolError);
    CHECK_FALSE(m.confirm(0, true));
    CHECK(m.state() == MasterState::Aborted);
    CHECK_NOTHROW(m.build_challenge(1));
}

TEST_CASE("a model frozen for 5000 cycles on an aged pack refuses challenges") {
    OutstationConfig cfg;
    cfg.monitor.refresh_enabled = false;
    Pair p(2, cfg);
    enroll(p.master, p.outstation, 1);
    for (int c = 0; c < 19; ++c) {
        p.outstation.monitor().pack().recharge_all();
    }
    p.outstation.advance(5000);
    int aborts = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto res = p.outstation.handle_challenge(p.master.build_challenge(s));
        if (!res.reply) {
            ++aborts;
            CHECK(res.reason == AbortReason::SelfAuthFailed);
            p.master.abort(res.reason);
        } else {
            const auto check = p.master.verify_reply(*res.reply);
            p.outstation.handle_verdict(check.round, false, check.bs);
            p.master.abort(AbortReason::None);
        }
    }
    CHECK(aborts == 20);
}

TEST_CASE("event log lines carry the five fields in order") {
    EventLog log;
    log.emit(3, "master", "reply-accepted", "verified", "ab\"c");
    CHECK(log.to_jsonl() ==
          "{\"round\":3,\"role\":\"master\",\"event\":\"reply-accepted\",\"state\":\"verified\",\"detail\":\"ab\\\"c\"}\n");
    CHECK(log.count("reply-accepted") == 1);
}

TEST_CASE("abort reason codes") {
    CHECK_FALSE(invalidates_session(AbortReason::SelfAuthFailed));
    CHECK(invalidates_session(AbortReason::Desync));
    CHECK(abort_reason_from_byte(0x02) == AbortReason::SelfAuthFailed);
    CHECK_THROWS_AS(abort_reason_from_byte(0x00), ProtocolError);
    CHECK_THROWS_AS(abort_reason_from_byte(0x7F), ProtocolError);
}
