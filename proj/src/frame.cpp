#include "derauth/frame.hpp"

#include "derauth/errors.hpp"

#include <string>

namespace derauth {

namespace {

bool known_type(std::uint8_t t) {
    return t >= 0x01 && t <= 0x05;
}

std::size_t fixed_payload(MsgType t) {
    switch (t) {
    case MsgType::Challenge:
    case MsgType::Reply: return 8;
    case MsgType::Verdict: return 9;
    case MsgType::Abort: return 5;
    case MsgType::EnrollCrt: return 0;
    }
    return 0;
}

void check_payload(MsgType t, std::size_t n) {
    const auto want = fixed_payload(t);
    if (want != 0 && n != want) {
        throw ProtocolError(std::string(to_string(t)) + " payload must be " + std::to_string(want) + " bytes, got " +
                            std::to_string(n));
    }
}

std::uint64_t read_be(std::span<const std::uint8_t> b) {
    std::uint64_t v = 0;
    for (auto x : b) {
        v = (v << 8) | x;
    }
    return v;
}

void write_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

} // namespace

std::string_view to_string(MsgType t) {
    switch (t) {
    case MsgType::EnrollCrt: return "ENROLL_CRT";
    case MsgType::Challenge: return "CHALLENGE";
    case MsgType::Reply: return "REPLY";
    case MsgType::Verdict: return "VERDICT";
    case MsgType::Abort: return "ABORT";
    }
    return "UNKNOWN";
}

std::vector<std::uint8_t> encode_frame(const Frame& f) {
    check_payload(f.type, f.payload.size());
    if (f.payload.size() > 0xFFFF) {
        throw ProtocolError("frame payload exceeds 65535 bytes");
    }
    std::vector<std::uint8_t> out{kMagic0, kMagic1, static_cast<std::uint8_t>(f.type)};
    write_be(out, f.payload.size(), 2);
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    FrameDecoder d;
    d.feed(bytes);
    auto f = d.next();
    if (!f) {
        throw ProtocolError("truncated frame");
    }
    if (d.buffered() != 0) {
        throw ProtocolError("trailing bytes after frame");
    }
    return *f;
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameDecoder::next() {
    if (buf_.size() >= 1 && buf_[0] != kMagic0) {
        throw ProtocolError("bad frame magic");
    }
    if (buf_.size() >= 2 && buf_[1] != kMagic1) {
        throw ProtocolError("bad frame magic");
    }
    if (buf_.size() >= 3 && !known_type(buf_[2])) {
        throw ProtocolError("unknown msg_type 0x" + std::string(1, "0123456789abcdef"[buf_[2] >> 4]) +
                            std::string(1, "0123456789abcdef"[buf_[2] & 0xF]));
    }
    if (buf_.size() < kFrameHeader) {
        return std::nullopt;
    }
    const auto type = static_cast<MsgType>(buf_[2]);
    const std::size_t len = (std::size_t{buf_[3]} << 8) | buf_[4];
    check_payload(type, len);
    if (buf_.size() < kFrameHeader + len) {
        return std::nullopt;
    }
    Frame f;
    f.type = type;
    f.payload.assign(buf_.begin() + kFrameHeader, buf_.begin() + static_cast<long>(kFrameHeader + len));
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(kFrameHeader + len));
    return f;
}

Frame make_word_frame(MsgType type, std::uint64_t word) {
    if (type != MsgType::Challenge && type != MsgType::Reply) {
        throw ProtocolError("word frames are CHALLENGE or REPLY");
    }
    Frame f{type, {}};
    write_be(f.payload, word, 8);
    return f;
}

std::uint64_t word_of(const Frame& f) {
    if ((f.type != MsgType::Challenge && f.type != MsgType::Reply) || f.payload.size() != 8) {
        throw ProtocolError("not a CHALLENGE/REPLY frame");
    }
    return read_be(f.payload);
}

Frame make_verdict_frame(const VerdictPayload& v) {
    Frame f{MsgType::Verdict, {}};
    write_be(f.payload, v.round, 4);
    f.payload.push_back(static_cast<std::uint8_t>(v.status));
    write_be(f.payload, v.bs, 4);
    return f;
}

VerdictPayload verdict_of(const Frame& f) {
    if (f.type != MsgType::Verdict || f.payload.size() != 9) {
        throw ProtocolError("not a VERDICT frame");
    }
    if (f.payload[4] > 0x03) {
        throw ProtocolError("unknown verdict status");
    }
    VerdictPayload v;
    v.round = static_cast<std::uint32_t>(read_be(std::span(f.payload).first(4)));
    v.status = static_cast<VerdictStatus>(f.payload[4]);
    v.bs = static_cast<std::uint32_t>(read_be(std::span(f.payload).subspan(5)));
    return v;
}

Frame make_abort_frame(const AbortPayload& a) {
    Frame f{MsgType::Abort, {a.reason}};
    write_be(f.payload, a.round, 4);
    return f;
}

AbortPayload abort_of(const Frame& f) {
    if (f.type != MsgType::Abort || f.payload.size() != 5) {
        throw ProtocolError("not an ABORT frame");
    }
    return AbortPayload{f.payload[0], static_cast<std::uint32_t>(read_be(std::span(f.payload).subspan(1)))};
}

} // namespace derauth
