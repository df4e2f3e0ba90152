#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace derauth {

inline constexpr std::uint8_t kMagic0 = 0xDE;
inline constexpr std::uint8_t kMagic1 = 0xA7;
inline constexpr std::size_t kFrameHeader = 5;

enum class MsgType : std::uint8_t {
    EnrollCrt = 0x01,
    Challenge = 0x02,
    Reply = 0x03,
    Verdict = 0x04,
    Abort = 0x05,
};

std::string_view to_string(MsgType t);

// magic(2) | msg_type(1) | length(2, big-endian) | payload
struct Frame {
    MsgType type = MsgType::Abort;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Frame&, const Frame&) = default;
};

std::vector<std::uint8_t> encode_frame(const Frame& f);
// Exactly one frame; throws ProtocolError on any framing fault.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// Incremental decoder over a byte stream.
class FrameDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes);
    // Next complete frame, or nothing if more bytes are needed. Throws
    // ProtocolError on bad magic, unknown type or a bad fixed-size payload.
    std::optional<Frame> next();
    std::size_t buffered() const { return buf_.size(); }
    void clear() { buf_.clear(); }

private:
    std::deque<std::uint8_t> buf_;
};

// Verdict status byte. Master to outstation: Reject/Accept. Outstation to
// master: RolledBack/Committed acknowledgements.
enum class VerdictStatus : std::uint8_t {
    Reject = 0x00,
    Accept = 0x01,
    RolledBack = 0x02,
    Committed = 0x03,
};

// round(4, big-endian) | status(1) | B_s(4)
struct VerdictPayload {
    std::uint32_t round = 0;
    VerdictStatus status = VerdictStatus::Reject;
    std::uint32_t bs = 0;

    friend bool operator==(const VerdictPayload&, const VerdictPayload&) = default;
};

// reason(1) | round(4, big-endian)
struct AbortPayload {
    std::uint8_t reason = 0;
    std::uint32_t round = 0;

    friend bool operator==(const AbortPayload&, const AbortPayload&) = default;
};

Frame make_word_frame(MsgType type, std::uint64_t word);   // CHALLENGE or REPLY
std::uint64_t word_of(const Frame& f);
Frame make_verdict_frame(const VerdictPayload& v);
VerdictPayload verdict_of(const Frame& f);
Frame make_abort_frame(const AbortPayload& a);
AbortPayload abort_of(const Frame& f);

} // namespace derauth
