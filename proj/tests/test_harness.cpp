#include "doctest.h"

#include "derauth/errors.hpp"
#include "derauth/harness.hpp"
#include "derauth/random.hpp"

#include <sstream>
#include <string>

using namespace derauth;

namespace {

ScenarioConfig scenario(AdversaryMode mode, int rounds = 10) {
    ScenarioConfig cfg;
    cfg.seed = 3;
    cfg.rounds = rounds;
    cfg.adversary.mode = mode;
    return cfg;
}

} // namespace

TEST_CASE("frame layout is bit-exact") {
    const auto bytes = encode_frame(make_word_frame(MsgType::Challenge, 0x01020304050619ABULL));
    const Bytes expect{0xDE, 0xA7, 0x02, 0x00, 0x08, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x19, 0xAB};
    CHECK(bytes == expect);
    CHECK(encode_frame(Frame{MsgType::EnrollCrt, {}}) == Bytes{0xDE, 0xA7, 0x01, 0x00, 0x00});
    const auto v = encode_frame(make_verdict_frame({0x01020304, VerdictStatus::Accept, 0xA1B2C3D4}));
    CHECK(v == Bytes{0xDE, 0xA7, 0x04, 0x00, 0x09, 0x01, 0x02, 0x03, 0x04, 0x01, 0xA1, 0xB2, 0xC3, 0xD4});
}

TEST_CASE("frame codec round-trips random frames") {
    Rng rng(1);
    for (int i = 0; i < 20000; ++i) {
        Frame f;
        switch (rng.below(5)) {
        case 0: f = make_word_frame(MsgType::Challenge, rng.next()); break;
        case 1: f = make_word_frame(MsgType::Reply, rng.next()); break;
        case 2:
            f = make_verdict_frame({static_cast<std::uint32_t>(rng.next()),
                                    static_cast<VerdictStatus>(rng.below(4)), static_cast<std::uint32_t>(rng.next())});
            break;
        case 3: f = make_abort_frame({static_cast<std::uint8_t>(rng.next()), static_cast<std::uint32_t>(rng.next())}); break;
        default: {
            f.type = MsgType::EnrollCrt;
            f.payload.resize(rng.below(600));
            for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng.next());
        }
        }
        REQUIRE(decode_frame(encode_frame(f)) == f);
    }
    CHECK(verdict_of(make_verdict_frame({7, VerdictStatus::Committed, 9})) ==
          VerdictPayload{7, VerdictStatus::Committed, 9});
    CHECK(abort_of(make_abort_frame({0x11, 4})) == AbortPayload{0x11, 4});
}

TEST_CASE("streaming decoder handles split and concatenated input") {
    const auto a = encode_frame(make_word_frame(MsgType::Reply, 42));
    const auto b = encode_frame(make_abort_frame({2, 9}));
    Bytes all = a;
    all.insert(all.end(), b.begin(), b.end());
    FrameDecoder d;
    for (auto byte : all) {
        d.feed(std::span(&byte, 1));
    }
    CHECK(word_of(*d.next()) == 42);
    CHECK(abort_of(*d.next()).round == 9);
    CHECK_FALSE(d.next().has_value());
}

TEST_CASE("framing faults are protocol errors") {
    CHECK_THROWS_AS(decode_frame(Bytes{0xDE, 0xA7, 0x7F, 0x00, 0x00}), ProtocolError);
    CHECK_THROWS_AS(decode_frame(Bytes{0xDE, 0xA8, 0x02, 0x00, 0x00}), ProtocolError);
    CHECK_THROWS_AS(decode_frame(Bytes{0xDE, 0xA7, 0x02, 0x00, 0x07, 1, 2, 3, 4, 5, 6, 7}), ProtocolError);
    CHECK_THROWS_AS(decode_frame(Bytes{0xDE, 0xA7, 0x03, 0x00, 0x08, 1, 2}), ProtocolError);
    CHECK_THROWS_AS(encode_frame(Frame{MsgType::Reply, Bytes(9)}), ProtocolError);
    FrameDecoder d;
    const Bytes bad{0x00};
    d.feed(bad);
    CHECK_THROWS_AS(d.next(), ProtocolError);
}

TEST_CASE("socket-pair channel delivers in order") {
    auto ch = make_channel(TransportKind::SocketPair);
    CHECK(ch->read_available().empty());
    const Bytes a{1, 2, 3};
    const Bytes b(10000, 7);
    ch->write(a);
    ch->write(b);
    const auto got = ch->read_available();
    REQUIRE(got.size() == 10003);
    CHECK(got[2] == 3);
    CHECK(got[10002] == 7);
}

TEST_CASE("passive adversary: every answered round is accepted in lockstep") {
    const auto r = run_session(scenario(AdversaryMode::Passive));
    CHECK(r.rounds.size() == 10);
    CHECK(r.rejects == 0);
    CHECK(r.timeouts == 0);
    CHECK(r.accepts + r.aborts == 10);
    CHECK(r.accepts >= 6);
    CHECK(r.lockstep_violations == 0);
    CHECK(r.tables_equal);
    CHECK(r.enrollments == 1);
    CHECK(r.log.count("command-authorized") == static_cast<std::size_t>(r.accepts));
    CHECK(r.capture_log.size() >= 10);
    for (const auto& rec : r.rounds) {
        if (rec.outcome == RoundOutcome::Abort) {
            CHECK_FALSE(invalidates_session(rec.reason));
        }
    }
}

TEST_CASE("replayed replies are rejected") {
    auto cfg = scenario(AdversaryMode::Replay, 40);
    cfg.adversary.start_round = 1;
    cfg.adversary.period = 2;
    const auto r = run_session(cfg);
    int replayed = 0;
    for (const auto& e : r.log.events()) {
        if (e.event == "replay") {
            ++replayed;
            CHECK(r.rounds.at(e.round).outcome == RoundOutcome::Reject);
        }
    }
    CHECK(replayed > 10);
    CHECK(r.lockstep_violations == 0);
}

TEST_CASE("no single-bit tamper of a reply is ever accepted") {
    for (int bit = 0; bit < 64; ++bit) {
        auto cfg = scenario(AdversaryMode::Tamper, 6);
        cfg.adversary.tamper_bit = bit;
        cfg.adversary.start_round = 0;
        const auto r = run_session(cfg);
        for (const auto& rec : r.rounds) {
            REQUIRE(rec.outcome != RoundOutcome::Accept);
        }
        CHECK(r.lockstep_violations == 0);
    }
}

TEST_CASE("blocking the verdict invalidates the session and forces re-enrollment") {
    auto cfg = scenario(AdversaryMode::Block, 12);
    cfg.adversary.block_type = MsgType::Verdict;
    cfg.adversary.start_round = 2;
    cfg.adversary.budget = 1;
    const auto r = run_session(cfg);
    CHECK(r.log.count("block") == 1);
    bool saw_desync = false;
    for (const auto& rec : r.rounds) {
        saw_desync = saw_desync || rec.reason == AbortReason::Desync;
    }
    CHECK(saw_desync);
    CHECK(r.enrollments == 2);
    CHECK(r.timeouts == 1);
    CHECK(r.tables_equal);
    CHECK(r.lockstep_violations == 0);
}

TEST_CASE("a stale device image answering challenges is rejected") {
    auto cfg = scenario(AdversaryMode::Rollback, 12);
    cfg.adversary.snapshot_round = 0;
    cfg.adversary.start_round = 6;
    const auto r = run_session(cfg);
    int stale_answers = 0;
    for (const auto& rec : r.rounds) {
        if (rec.index >= 6) {
            REQUIRE(rec.outcome != RoundOutcome::Accept);
            stale_answers += rec.outcome == RoundOutcome::Reject ? 1 : 0;
        }
    }
    CHECK(stale_answers >= 1);
}

TEST_CASE("unknown message type aborts the connection with a logged reason") {
    auto cfg = scenario(AdversaryMode::Inject, 4);
    cfg.adversary.start_round = 1;
    cfg.adversary.budget = 1;
    const auto r = run_session(cfg);
    CHECK(r.log.count("connection-abort") >= 1);
    CHECK(r.log.to_jsonl().find("unknown msg_type 0x7f") != std::string::npos);
    CHECK(r.enrollments >= 2);
}

TEST_CASE("lost enrollment leaves both sides idle until a retry succeeds") {
    auto cfg = scenario(AdversaryMode::Passive, 3);
    cfg.adversary.drop_enrollments = 1;
    const auto r = run_session(cfg);
    CHECK(r.log.count("enrollment-timeout") == 1);
    CHECK(r.enrollments == 1);
    CHECK(r.rounds.size() == 3);

    cfg.adversary.drop_enrollments = 2;   // the acknowledgement of the retry is lost too
    const auto r2 = run_session(cfg);
    CHECK(r2.enrollments == 1);
    CHECK(r2.tables_equal);

    cfg.adversary.drop_enrollments = 100;
    cfg.max_enroll_attempts = 3;
    const auto r3 = run_session(cfg);
    CHECK(r3.enrollments == 0);
    CHECK(r3.rounds.empty());
    CHECK(r3.master_state == MasterState::Idle);
    CHECK(r3.outstation_state == OutstationState::Idle);
}

TEST_CASE("scenario logs are byte-identical across runs and transports") {
    auto cfg = scenario(AdversaryMode::Tamper, 8);
    cfg.adversary.tamper_bit = 40;
    cfg.adversary.start_round = 3;
    cfg.adversary.period = 3;
    const auto a = run_session(cfg).log.to_jsonl();
    const auto b = run_session(cfg).log.to_jsonl();
    cfg.transport = TransportKind::SocketPair;
    const auto c = run_session(cfg).log.to_jsonl();
    CHECK(a == b);
    CHECK(a == c);
    cfg.seed = 4;
    CHECK(run_session(cfg).log.to_jsonl() != a);
}

TEST_CASE("scenario config validation") {
    ScenarioConfig cfg;
    cfg.n_cells = 3;
    CHECK_THROWS_AS(run_session(cfg), ConfigError);
    cfg = ScenarioConfig{};
    cfg.adversary.period = 0;
    CHECK_THROWS_AS(run_session(cfg), ConfigError);
    cfg = ScenarioConfig{};
    cfg.adversary.tamper_bit = 64;
    CHECK_THROWS_AS(run_session(cfg), ConfigError);
}

TEST_CASE("CRSeq export") {
    ScenarioConfig cfg;
    cfg.seed = 11;
    std::ostringstream a;
    std::ostringstream b;
    const auto stats = export_crseq_dataset(a, 100, cfg);
    export_crseq_dataset(b, 100, cfg);
    CHECK(a.str() == b.str());
    CHECK(stats.lines == 100);
    CHECK(stats.rounds >= 100);
    std::istringstream in(a.str());
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
        ++n;
        REQUIRE(line.size() == 33);
        REQUIRE(line[16] == ',');
        CHECK_NOTHROW(from_hex16(line.substr(0, 16)));
        CHECK_NOTHROW(from_hex16(line.substr(17)));
    }
    CHECK(n == 100);
    CHECK_THROWS_AS(export_crseq_dataset(a, 0, cfg), DomainError);
    CHECK_THROWS(export_crseq_dataset("/nonexistent-dir/x.csv", 10, cfg));
}
