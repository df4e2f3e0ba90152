#include "derauth/harness.hpp"

#include "derauth/errors.hpp"
#include "derauth/random.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <deque>
#include <fstream>
#include <ostream>
#include <set>
#include <string>
#include <utility>

namespace derauth {

// ------------------------------------------------------------- transports

namespace {

class InProcessChannel final : public ByteChannel {
public:
    void write(std::span<const std::uint8_t> bytes) override { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
    Bytes read_available() override {
        Bytes out(buf_.begin(), buf_.end());
        buf_.clear();
        return out;
    }

private:
    std::deque<std::uint8_t> buf_;
};

class SocketPairChannel final : public ByteChannel {
public:
    SocketPairChannel() {
        if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds_) != 0) {
            throw std::runtime_error(std::string("socketpair: ") + std::strerror(errno));
        }
    }
    ~SocketPairChannel() override {
        ::close(fds_[0]);
        ::close(fds_[1]);
    }
    SocketPairChannel(const SocketPairChannel&) = delete;
    SocketPairChannel& operator=(const SocketPairChannel&) = delete;

    void write(std::span<const std::uint8_t> bytes) override {
        std::size_t done = 0;
        while (done < bytes.size()) {
            const auto n = ::send(fds_[0], bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw std::runtime_error(std::string("send: ") + std::strerror(errno));
            }
            done += static_cast<std::size_t>(n);
        }
    }

    Bytes read_available() override {
        Bytes out;
        std::uint8_t chunk[4096];
        for (;;) {
            const auto n = ::recv(fds_[1], chunk, sizeof chunk, MSG_DONTWAIT);
            if (n > 0) {
                out.insert(out.end(), chunk, chunk + n);
                continue;
            }
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) {
                throw std::runtime_error(std::string("recv: ") + std::strerror(errno));
            }
            return out;
        }
    }

private:
    int fds_[2] = {-1, -1};
};

} // namespace

std::unique_ptr<ByteChannel> make_channel(TransportKind kind) {
    if (kind == TransportKind::SocketPair) {
        return std::make_unique<SocketPairChannel>();
    }
    return std::make_unique<InProcessChannel>();
}

// --------------------------------------------------------------- adversary

AdversaryProxy::AdversaryProxy(const AdversaryConfig& config, EventLog* log)
    : config_(config), log_(log), enroll_drops_left_(config.drop_enrollments) {}

void AdversaryProxy::note(std::string event, std::string detail) {
    if (log_ != nullptr) {
        log_->emit(challenges_ == 0 ? 0 : challenges_ - 1, "adversary", std::move(event), enabled_ ? "active" : "disabled", std::move(detail));
    }
}

bool AdversaryProxy::acting() const {
    if (!enabled_ || challenges_ == 0) {
        return false;
    }
    switch (config_.mode) {
    case AdversaryMode::None:
    case AdversaryMode::Passive:
        return false;
    default:
        break;
    }
    if (config_.budget > 0 && actions_ >= config_.budget) {
        return false;
    }
    const auto idx = challenges_ - 1;
    return idx >= config_.start_round && (idx - config_.start_round) % config_.period == 0;
}

void AdversaryProxy::act(std::string event, std::string detail) {
    ++actions_;
    note(std::move(event), std::move(detail));
}

void AdversaryProxy::arm_rollback(const OutstationSession& image) {
    image_ = std::make_unique<OutstationSession>(image);
    image_->set_log(nullptr);
    note("image-captured", "table version " + std::to_string(image.round()));
}

Interception AdversaryProxy::intercept(Direction dir, const Frame& frame) {
    Interception out;
    if (frame.type == MsgType::EnrollCrt && enroll_drops_left_ > 0) {
        --enroll_drops_left_;
        note("link-loss", "ENROLL_CRT dropped");
        return out;
    }
    if (config_.mode != AdversaryMode::None && enabled_) {
        capture_.push_back(frame);
    }
    if (dir == Direction::MasterToOutstation && frame.type == MsgType::Challenge && enabled_) {
        ++challenges_;
        impersonating_ = false;
    }
    if (impersonating_ && dir == Direction::MasterToOutstation && frame.type == MsgType::Verdict) {
        const auto v = verdict_of(frame);
        (void)image_->handle_verdict(v.round, v.status == VerdictStatus::Accept, BessState::unpack(v.bs));
        note("swallow", "VERDICT");
        return out;
    }
    if (!acting()) {
        out.forward.push_back(encode_frame(frame));
        if (frame.type == MsgType::Reply) {
            last_reply_ = frame;
        }
        return out;
    }

    switch (config_.mode) {
    case AdversaryMode::Replay:
        if (frame.type == MsgType::Reply && last_reply_) {
            act("replay", "REPLY " + to_hex16(word_of(*last_reply_)) + " in place of " + to_hex16(word_of(frame)));
            out.forward.push_back(encode_frame(*last_reply_));
            last_reply_ = frame;
            return out;
        }
        break;
    case AdversaryMode::Tamper:
        if (frame.type == MsgType::Reply) {
            const auto w = word_of(frame) ^ (1ULL << (config_.tamper_bit & 63));
            act("tamper", "REPLY bit " + std::to_string(config_.tamper_bit & 63));
            out.forward.push_back(encode_frame(make_word_frame(MsgType::Reply, w)));
            return out;
        }
        break;
    case AdversaryMode::Block:
        if (frame.type == config_.block_type) {
            act("block", std::string(to_string(frame.type)));
            return out;
        }
        break;
    case AdversaryMode::Inject:
        if (frame.type == MsgType::Reply) {
            act("inject", "unknown msg_type 0x7f in place of REPLY");
            out.forward.push_back(Bytes{kMagic0, kMagic1, 0x7F, 0x00, 0x00});
            return out;
        }
        break;
    case AdversaryMode::Rollback:
        if (image_ && frame.type == MsgType::Challenge) {
            const auto res = image_->handle_challenge(Challenge::decode(word_of(frame)));
            act("impersonate", "answered from table version " + std::to_string(image_->round()));
            impersonating_ = true;
            if (res.reply) {
                out.reflect.push_back(encode_frame(make_word_frame(MsgType::Reply, *res.reply)));
            } else {
                out.reflect.push_back(encode_frame(make_abort_frame(
                    {static_cast<std::uint8_t>(res.reason), static_cast<std::uint32_t>(image_->round())})));
            }
            return out;
        }
        break;
    case AdversaryMode::None:
    case AdversaryMode::Passive:
        break;
    }
    out.forward.push_back(encode_frame(frame));
    if (frame.type == MsgType::Reply) {
        last_reply_ = frame;
    }
    return out;
}

std::string_view to_string(RoundOutcome o) {
    switch (o) {
    case RoundOutcome::Accept: return "accept";
    case RoundOutcome::Reject: return "reject";
    case RoundOutcome::Abort: return "abort";
    case RoundOutcome::Timeout: return "timeout";
    }
    return "unknown";
}

void ScenarioConfig::validate() const {
    if (n_cells < kMinPackCells || n_cells > 256) {
        throw ConfigError("pack.n_cells: must be in [" + std::to_string(kMinPackCells) + ", 256]");
    }
    if (rounds < 0) {
        throw ConfigError("protocol.rounds: must be >= 0");
    }
    if (idle_cycles < 0) {
        throw ConfigError("protocol.idle_cycles: must be >= 0");
    }
    if (!(outstation.tau_mah > 0.0)) {
        throw ConfigError("ducm.tau_mah: must be > 0");
    }
    if (adversary.period == 0) {
        throw ConfigError("adversary.period: must be >= 1");
    }
    if (adversary.tamper_bit < 0 || adversary.tamper_bit > 63) {
        throw ConfigError("adversary.tamper_bit: must be in [0, 63]");
    }
    if (warmup_cycles < 0) {
        throw ConfigError("protocol.warmup_cycles: must be >= 0");
    }
    if (adversary.budget < 0) {
        throw ConfigError("adversary.budget: must be >= 0");
    }
    if (adversary.drop_enrollments < 0) {
        throw ConfigError("adversary.drop_enrollments: must be >= 0");
    }
    if (max_enroll_attempts < 1) {
        throw ConfigError("protocol.max_enroll_attempts: must be >= 1");
    }
    outstation.monitor.pack.validate();
    outstation.monitor.gauge.validate();
    outstation.monitor.ducm.validate();
}

// ------------------------------------------------------------------ nodes

namespace {

// What the master observed during the current round.
struct RoundView {
    std::optional<ReplyCheck> check;
    std::optional<std::uint64_t> reply;
    bool authorized = false;
    std::optional<AbortReason> abort;
};

class MasterNode {
public:
    MasterNode(MasterSession& s, EventLog& log) : s_(s), log_(log) {}

    void begin_round() { view_ = RoundView{}; }
    const RoundView& view() const { return view_; }

    std::vector<Frame> receive(const Bytes& bytes) {
        std::vector<Frame> out;
        decoder_.feed(bytes);
        for (;;) {
            std::optional<Frame> f;
            try {
                f = decoder_.next();
            } catch (const ProtocolError& e) {
                decoder_.clear();
                log_.emit(s_.round(), "master", "connection-abort", std::string(to_string(s_.state())), e.what());
                s_.abort(AbortReason::BadFrame, e.what());
                view_.abort = AbortReason::BadFrame;
                return out;
            }
            if (!f) {
                return out;
            }
            handle(*f, out);
        }
    }

private:
    void handle(const Frame& f, std::vector<Frame>& out) {
        switch (f.type) {
        case MsgType::EnrollCrt:
            if (f.payload.empty()) {
                break;
            }
            if (s_.state() == MasterState::Enrolled && s_.round() == 0) {
                s_.reset();   // repeated offer: our acknowledgement was lost
            }
            if (s_.state() == MasterState::Idle) {
                s_.accept_enrollment(CellReplyTable::deserialize(f.payload));
                out.push_back(Frame{MsgType::EnrollCrt, {}});
            }
            break;
        case MsgType::Reply:
            if (s_.state() != MasterState::ChallengeOutstanding) {
                log_.emit(s_.round(), "master", "unexpected-reply", std::string(to_string(s_.state())));
                break;
            }
            view_.reply = word_of(f);
            view_.check = s_.verify_reply(*view_.reply);
            out.push_back(make_verdict_frame({static_cast<std::uint32_t>(view_.check->round),
                                              view_.check->accepted ? VerdictStatus::Accept : VerdictStatus::Reject,
                                              view_.check->bs.pack()}));
            break;
        case MsgType::Verdict: {
            const auto v = verdict_of(f);
            if (v.status != VerdictStatus::Committed && v.status != VerdictStatus::RolledBack) {
                s_.abort(AbortReason::BadFrame, "verdict status not valid from outstation");
                view_.abort = AbortReason::BadFrame;
                break;
            }
            const auto expected = s_.awaiting_confirmation();
            // The wire carries the low 32 bits of the round counter.
            const std::uint64_t round = expected ? ((*expected & ~0xFFFFFFFFULL) | v.round) : v.round;
            view_.authorized = s_.confirm(round, v.status == VerdictStatus::Committed) || view_.authorized;
            break;
        }
        case MsgType::Abort: {
            const auto a = abort_of(f);
            AbortReason reason = AbortReason::BadFrame;
            try {
                reason = abort_reason_from_byte(a.reason);
            } catch (const ProtocolError&) {
            }
            s_.abort(reason, "from outstation");
            view_.abort = reason;
            break;
        }
        case MsgType::Challenge:
            s_.abort(AbortReason::BadFrame, "CHALLENGE received by master");
            view_.abort = AbortReason::BadFrame;
            break;
        }
    }

    MasterSession& s_;
    EventLog& log_;
    FrameDecoder decoder_;
    RoundView view_;
};

class OutstationNode {
public:
    OutstationNode(OutstationSession& s, EventLog& log) : s_(s), log_(log) {}

    std::vector<Frame> receive(const Bytes& bytes) {
        std::vector<Frame> out;
        decoder_.feed(bytes);
        for (;;) {
            std::optional<Frame> f;
            try {
                f = decoder_.next();
            } catch (const ProtocolError& e) {
                decoder_.clear();
                log_.emit(s_.round(), "outstation", "connection-abort", std::string(to_string(s_.state())), e.what());
                s_.abort(AbortReason::BadFrame, e.what());
                out.push_back(abort_frame(AbortReason::BadFrame));
                return out;
            }
            if (!f) {
                return out;
            }
            handle(*f, out);
        }
    }

private:
    Frame abort_frame(AbortReason r) const {
        return make_abort_frame({static_cast<std::uint8_t>(r), static_cast<std::uint32_t>(s_.round())});
    }

    void handle(const Frame& f, std::vector<Frame>& out) {
        switch (f.type) {
        case MsgType::EnrollCrt:
            if (f.payload.empty() && s_.enrollment_offered()) {
                s_.complete_enrollment();
            }
            break;
        case MsgType::Challenge: {
            const auto res = s_.handle_challenge(Challenge::decode(word_of(f)));
            out.push_back(res.reply ? make_word_frame(MsgType::Reply, *res.reply) : abort_frame(res.reason));
            break;
        }
        case MsgType::Verdict: {
            const auto v = verdict_of(f);
            if (v.status != VerdictStatus::Accept && v.status != VerdictStatus::Reject) {
                s_.abort(AbortReason::BadFrame, "verdict status not valid from master");
                out.push_back(abort_frame(AbortReason::BadFrame));
                break;
            }
            // Staged rounds are compared on the low 32 bits carried by the frame.
            const std::uint64_t round = (s_.round() & ~0xFFFFFFFFULL) | v.round;
            const auto r = s_.handle_verdict(round, v.status == VerdictStatus::Accept, BessState::unpack(v.bs));
            if (r.reason != AbortReason::None) {
                out.push_back(abort_frame(r.reason));
            } else {
                out.push_back(make_verdict_frame(
                    {v.round, r.committed ? VerdictStatus::Committed : VerdictStatus::RolledBack, v.bs}));
            }
            break;
        }
        case MsgType::Reply:
        case MsgType::Abort:
            log_.emit(s_.round(), "outstation", "unexpected-frame", std::string(to_string(s_.state())),
                      std::string(to_string(f.type)));
            break;
        }
    }

    OutstationSession& s_;
    EventLog& log_;
    FrameDecoder decoder_;
};

void send_all(ByteChannel& ch, const std::vector<Frame>& frames) {
    for (const auto& f : frames) {
        ch.write(encode_frame(f));
    }
}

class Harness {
public:
    explicit Harness(const ScenarioConfig& cfg)
        : cfg_(cfg),
          master_(cfg.outstation.variant, &result_.log),
          outstation_(cfg.seed, cfg.n_cells, cfg.outstation, &result_.log),
          proxy_(cfg.adversary, &result_.log),
          mnode_(master_, result_.log),
          onode_(outstation_, result_.log),
          m2p_(make_channel(cfg.transport)),
          p2o_(make_channel(cfg.transport)),
          o2p_(make_channel(cfg.transport)),
          p2m_(make_channel(cfg.transport)) {}

    ScenarioResult run() {
        if (!enroll()) {
            return finish();
        }
        outstation_.advance(cfg_.warmup_cycles);
        for (int r = 0; r < cfg_.rounds; ++r) {
            run_round(static_cast<std::uint64_t>(r));
            outstation_.advance(cfg_.idle_cycles);
            if (needs_reenroll() && cfg_.reenroll && !enroll()) {
                break;
            }
        }
        return finish();
    }

private:
    bool needs_reenroll() const {
        return master_.state() == MasterState::Idle || outstation_.state() == OutstationState::Aborted ||
               (last_abort_ && invalidates_session(*last_abort_));
    }

    bool enroll() {
        if (master_.state() != MasterState::Idle || outstation_.state() != OutstationState::Idle) {
            master_.reset();
            outstation_.reset();
        }
        last_abort_.reset();
        proxy_.set_enabled(false);
        for (int attempt = 0; attempt < cfg_.max_enroll_attempts; ++attempt) {
            const auto crt = outstation_.offer_enrollment(hash_key({cfg_.seed, 0xE4, enroll_count_, static_cast<std::uint64_t>(attempt)}));
            send_all(*o2p_, {Frame{MsgType::EnrollCrt, crt.serialize()}});
            pump();
            if (master_.state() == MasterState::Enrolled && outstation_.state() == OutstationState::Enrolled) {
                ++enroll_count_;
                ++result_.enrollments;
                proxy_.set_enabled(true);
                return true;
            }
            result_.log.emit(result_.rounds.size(), "harness", "enrollment-timeout", "idle",
                             "attempt " + std::to_string(attempt + 1));
        }
        proxy_.set_enabled(true);
        return false;
    }

    void run_round(std::uint64_t index) {
        if (cfg_.adversary.mode == AdversaryMode::Rollback && index == cfg_.adversary.snapshot_round) {
            proxy_.arm_rollback(outstation_);
        }
        mnode_.begin_round();
        RoundRecord rec;
        rec.index = index;
        const auto ch = master_.build_challenge(hash_key({cfg_.seed, 0xC4A1, index}));
        rec.challenge = ch.encode();
        send_all(*m2p_, {make_word_frame(MsgType::Challenge, rec.challenge)});
        pump();

        const auto& v = mnode_.view();
        rec.reply = v.reply;
        if (v.authorized) {
            rec.outcome = RoundOutcome::Accept;
            ++result_.accepts;
            if (!(master_.crt() == outstation_.crt())) {
                ++result_.lockstep_violations;
            }
        } else if (v.abort) {
            rec.outcome = RoundOutcome::Abort;
            rec.reason = *v.abort;
            ++result_.aborts;
        } else if (v.check && !v.check->accepted) {
            rec.outcome = RoundOutcome::Reject;
            ++result_.rejects;
        } else {
            rec.outcome = RoundOutcome::Timeout;
            rec.reason = AbortReason::Timeout;
            ++result_.timeouts;
            master_.abort(AbortReason::Timeout, "round " + std::to_string(index) + " unanswered");
        }
        last_abort_ = v.abort;
        result_.log.emit(index, "harness", "round-" + std::string(to_string(rec.outcome)),
                         std::string(to_string(master_.state())),
                         "table version " + std::to_string(master_.round()) +
                             (rec.reason != AbortReason::None ? ", " + std::string(to_string(rec.reason)) : ""));
        result_.rounds.push_back(rec);
    }

    // Moves frames hop by hop until no channel has anything left to deliver.
    void pump() {
        for (int guard = 0; guard < 1000; ++guard) {
            bool moved = false;
            moved |= relay(*m2p_, Direction::MasterToOutstation, *p2o_, *p2m_, proxy_m_);
            auto bytes = p2o_->read_available();
            if (!bytes.empty()) {
                moved = true;
                send_all(*o2p_, onode_.receive(bytes));
            }
            moved |= relay(*o2p_, Direction::OutstationToMaster, *p2m_, *p2o_, proxy_o_);
            bytes = p2m_->read_available();
            if (!bytes.empty()) {
                moved = true;
                send_all(*m2p_, mnode_.receive(bytes));
            }
            if (!moved) {
                return;
            }
        }
        throw std::logic_error("frame exchange did not settle");
    }

    bool relay(ByteChannel& in, Direction dir, ByteChannel& onward, ByteChannel& back, FrameDecoder& dec) {
        const auto bytes = in.read_available();
        if (bytes.empty()) {
            return false;
        }
        dec.feed(bytes);
        while (auto f = dec.next()) {
            const auto out = proxy_.intercept(dir, *f);
            for (const auto& b : out.forward) {
                onward.write(b);
            }
            for (const auto& b : out.reflect) {
                back.write(b);
            }
        }
        return true;
    }

    ScenarioResult finish() {
        result_.capture_log = proxy_.capture_log();
        result_.master_state = master_.state();
        result_.outstation_state = outstation_.state();
        result_.tables_equal = master_.crt() == outstation_.crt();
        return std::move(result_);
    }

    ScenarioConfig cfg_;
    ScenarioResult result_;
    MasterSession master_;
    OutstationSession outstation_;
    AdversaryProxy proxy_;
    MasterNode mnode_;
    OutstationNode onode_;
    std::unique_ptr<ByteChannel> m2p_;
    std::unique_ptr<ByteChannel> p2o_;
    std::unique_ptr<ByteChannel> o2p_;
    std::unique_ptr<ByteChannel> p2m_;
    FrameDecoder proxy_m_;
    FrameDecoder proxy_o_;
    std::uint64_t enroll_count_ = 0;
    std::optional<AbortReason> last_abort_;
};

} // namespace

ScenarioResult run_session(const ScenarioConfig& config) {
    config.validate();
    return Harness(config).run();
}

// ----------------------------------------------------------------- export

ExportStats export_crseq_dataset(std::ostream& out, long n, const ScenarioConfig& config) {
    if (n < 1) {
        throw DomainError("dataset size must be >= 1");
    }
    config.validate();
    MasterSession master(config.outstation.variant);
    OutstationSession outstation(config.seed, config.n_cells, config.outstation);
    enroll(master, outstation, hash_key({config.seed, 0xE4, 0}));
    outstation.advance(config.warmup_cycles);

    ExportStats stats;
    std::set<std::uint64_t> challenges;
    std::set<std::pair<std::uint64_t, std::uint64_t>> pairs;
    for (std::uint64_t i = 0; stats.lines < n; ++i) {
        ++stats.rounds;
        const auto ch = master.build_challenge(hash_key({config.seed, 0xC4A1, i}));
        const auto res = outstation.handle_challenge(ch);
        outstation.advance(config.idle_cycles);
        if (!res.reply) {
            master.abort(res.reason);
            continue;
        }
        const auto check = master.verify_reply(*res.reply);
        const auto v = outstation.handle_verdict(check.round, check.accepted, check.bs);
        if (!master.confirm(check.round, v.committed)) {
            throw ProtocolError("honest round was not authorized during export");
        }
        const auto cw = ch.encode();
        stats.duplicate_challenges += challenges.insert(cw).second ? 0 : 1;
        stats.duplicate_pairs += pairs.insert({cw, *res.reply}).second ? 0 : 1;
        out << to_hex16(cw) << ',' << to_hex16(*res.reply) << '\n';
        ++stats.lines;
    }
    if (!out) {
        throw std::runtime_error("write failed while exporting dataset");
    }
    return stats;
}

ExportStats export_crseq_dataset(const std::string& path, long n, const ScenarioConfig& config) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    auto stats = export_crseq_dataset(out, n, config);
    out.flush();
    if (!out) {
        throw std::runtime_error("write failed for '" + path + "'");
    }
    return stats;
}

} // namespace derauth
