#include "derauth/crseq.hpp"

#include "derauth/errors.hpp"
#include "derauth/random.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <string>

namespace derauth {

namespace {

constexpr std::uint64_t kByteLanes = 0x0101010101010101ULL;
// Quantization inputs arrive already rounded to the gauge resolution, so a
// nudge far below that resolution keeps exact halves rounding up.
constexpr double kHalfUpNudge = 1e-9;

std::uint8_t quantize_unit(double fraction, bool* clipped) {
    const double scaled = std::floor(fraction * 255.0 + 0.5 + kHalfUpNudge);
    const bool out = scaled < 0.0 || scaled > 255.0;
    if (clipped != nullptr) {
        *clipped = *clipped || out;
    }
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

std::uint64_t rotate_bytes(std::uint64_t word, int shift, bool left) {
    std::uint64_t out = 0;
    for (int lane = 0; lane < 8; ++lane) {
        const auto b = static_cast<std::uint8_t>(word >> (8 * lane));
        const auto r = left ? std::rotl(b, shift) : std::rotr(b, shift);
        out |= static_cast<std::uint64_t>(r) << (8 * lane);
    }
    return out;
}

std::uint64_t rotate(std::uint64_t word, const TransformSpec& rt, bool left, TransformVariant variant) {
    if (variant == TransformVariant::PerByte) {
        return rotate_bytes(word, rt.shift % 8, left);
    }
    return left ? std::rotl(word, rt.shift) : std::rotr(word, rt.shift);
}

} // namespace

std::uint16_t TransformSpec::pack() const {
    return static_cast<std::uint16_t>(((shift & 0x1Fu) << 11) | ((direction_field & 0x07u) << 8) | xor_mask);
}

TransformSpec TransformSpec::unpack(std::uint16_t bits) {
    TransformSpec rt;
    rt.shift = static_cast<std::uint8_t>((bits >> 11) & 0x1Fu);
    rt.direction_field = static_cast<std::uint8_t>((bits >> 8) & 0x07u);
    rt.xor_mask = static_cast<std::uint8_t>(bits & 0xFFu);
    return rt;
}

bool TransformSpec::rotates_left() const {
    return (std::popcount(static_cast<unsigned>(direction_field & 0x07u)) & 1) != 0;
}

std::uint64_t Challenge::encode() const {
    std::uint64_t w = 0;
    for (auto id : lset1) {
        w = (w << 8) | id;
    }
    for (auto id : lset2) {
        w = (w << 8) | id;
    }
    return (w << 16) | rt.pack();
}

Challenge Challenge::decode(std::uint64_t word) {
    Challenge ch;
    for (int i = 0; i < 4; ++i) {
        ch.lset1[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(word >> (56 - 8 * i));
    }
    for (int i = 0; i < 2; ++i) {
        ch.lset2[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(word >> (24 - 8 * i));
    }
    ch.rt = TransformSpec::unpack(static_cast<std::uint16_t>(word & 0xFFFFu));
    return ch;
}

bool Challenge::well_formed(int n_cells) const {
    auto below = [n_cells](std::uint8_t id) { return id < n_cells; };
    if (!std::all_of(lset1.begin(), lset1.end(), below) || !std::all_of(lset2.begin(), lset2.end(), below)) {
        return false;
    }
    for (std::size_t i = 0; i < lset1.size(); ++i) {
        for (std::size_t j = i + 1; j < lset1.size(); ++j) {
            if (lset1[i] == lset1[j]) {
                return false;
            }
        }
    }
    return lset2[0] != lset2[1] && rt.shift < 32 && rt.direction_field < 8;
}

std::uint32_t BessState::pack() const {
    return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) | (std::uint32_t{bytes[2]} << 8) |
           std::uint32_t{bytes[3]};
}

BessState BessState::unpack(std::uint32_t bits) {
    BessState bs;
    for (int i = 0; i < 4; ++i) {
        bs.bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(bits >> (24 - 8 * i));
    }
    return bs;
}

std::uint8_t BessState::digest() const {
    return static_cast<std::uint8_t>(bytes[0] ^ bytes[1] ^ bytes[2] ^ bytes[3]);
}

std::uint8_t quantize_soc(double soc_percent, bool* clipped) {
    return quantize_unit(soc_percent / 100.0, clipped);
}

std::uint8_t quantize_voltage(double voltage, bool* clipped) {
    return quantize_unit((voltage - kVoltageMin) / (kVoltageMax - kVoltageMin), clipped);
}

BessState quantize_bs(std::span<const Measurement> lset2_measurements) {
    if (lset2_measurements.size() != 2) {
        throw DomainError("B_s needs exactly two L_set2 measurements");
    }
    BessState bs;
    for (std::size_t i = 0; i < 2; ++i) {
        bs.bytes[2 * i] = quantize_soc(lset2_measurements[i].soc_percent, &bs.clipped);
        bs.bytes[2 * i + 1] = quantize_voltage(lset2_measurements[i].voltage, &bs.clipped);
    }
    return bs;
}

CellReplyTable::CellReplyTable(std::vector<Entry> entries, std::uint64_t version)
    : entries_(std::move(entries)), version_(version) {
    std::sort(entries_.begin(), entries_.end());
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        if (entries_[i].first == entries_[i - 1].first) {
            throw DomainError("duplicate cell id " + std::to_string(entries_[i].first) + " in cell-reply table");
        }
    }
}

bool CellReplyTable::contains(std::uint8_t cell_id) const {
    return std::binary_search(entries_.begin(), entries_.end(), Entry{cell_id, 0},
                              [](const Entry& a, const Entry& b) { return a.first < b.first; });
}

std::uint8_t CellReplyTable::reply(std::uint8_t cell_id) const {
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), cell_id,
                                     [](const Entry& e, std::uint8_t id) { return e.first < id; });
    if (it == entries_.end() || it->first != cell_id) {
        throw ProtocolError("cell " + std::to_string(cell_id) + " not in cell-reply table");
    }
    return it->second;
}

void CellReplyTable::set_reply(std::uint8_t cell_id, std::uint8_t reply) {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), cell_id,
                               [](const Entry& e, std::uint8_t id) { return e.first < id; });
    if (it == entries_.end() || it->first != cell_id) {
        throw ProtocolError("cell " + std::to_string(cell_id) + " not in cell-reply table");
    }
    it->second = reply;
}

void CellReplyTable::update(const BessState& bs) {
    const std::uint8_t b = bs.digest();
    const int shift = std::popcount(static_cast<unsigned>(b)) % 8;
    for (auto& e : entries_) {
        e.second = std::rotl(static_cast<std::uint8_t>(e.second ^ b), shift);
    }
    ++version_;
}

std::vector<std::uint8_t> CellReplyTable::serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(10 + 2 * entries_.size());
    out.push_back(static_cast<std::uint8_t>(entries_.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(entries_.size()));
    for (int i = 7; i >= 0; --i) {
        out.push_back(static_cast<std::uint8_t>(version_ >> (8 * i)));
    }
    for (const auto& [id, r] : entries_) {
        out.push_back(id);
        out.push_back(r);
    }
    return out;
}

CellReplyTable CellReplyTable::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 10) {
        throw ProtocolError("cell-reply table payload truncated");
    }
    const std::size_t n = (std::size_t{bytes[0]} << 8) | bytes[1];
    if (bytes.size() != 10 + 2 * n) {
        throw ProtocolError("cell-reply table payload length mismatch");
    }
    std::uint64_t version = 0;
    for (std::size_t i = 2; i < 10; ++i) {
        version = (version << 8) | bytes[i];
    }
    std::vector<Entry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        entries.emplace_back(bytes[10 + 2 * i], bytes[11 + 2 * i]);
    }
    try {
        return CellReplyTable(std::move(entries), version);
    } catch (const DomainError& e) {
        throw ProtocolError(e.what());
    }
}

CellReplyTable init_crt(std::uint64_t seed, int n_cells) {
    if (n_cells < 1 || n_cells > 256) {
        throw DomainError("cell-reply table size must be in [1, 256]");
    }
    Rng rng(hash_key({seed, 0xC27}));
    std::vector<CellReplyTable::Entry> entries;
    entries.reserve(static_cast<std::size_t>(n_cells));
    for (int id = 0; id < n_cells; ++id) {
        entries.emplace_back(static_cast<std::uint8_t>(id), static_cast<std::uint8_t>(rng.next() >> 56));
    }
    return CellReplyTable(std::move(entries), 0);
}

CellReplyTable update_crt(CellReplyTable crt, const BessState& bs) {
    crt.update(bs);
    return crt;
}

std::uint64_t build_temp_reply(const CellReplyTable& crt, const Challenge& ch, const BessState& bs) {
    std::uint64_t low = 0;
    for (auto id : ch.lset1) {
        low = (low << 8) | crt.reply(id);
    }
    return (std::uint64_t{bs.pack()} << 32) | low;
}

TempReplyFields split_temp_reply(std::uint64_t temp_reply) {
    TempReplyFields f;
    f.bs = BessState::unpack(static_cast<std::uint32_t>(temp_reply >> 32));
    for (int i = 0; i < 4; ++i) {
        f.replies[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(temp_reply >> (24 - 8 * i));
    }
    return f;
}

std::uint64_t apply_transform(std::uint64_t temp_reply, const TransformSpec& rt, TransformVariant variant) {
    return rotate(temp_reply, rt, rt.rotates_left(), variant) ^ (kByteLanes * rt.xor_mask);
}

std::uint64_t reverse_transform(std::uint64_t auth_reply, const TransformSpec& rt, TransformVariant variant) {
    return rotate(auth_reply ^ (kByteLanes * rt.xor_mask), rt, !rt.rotates_left(), variant);
}

std::string to_hex16(std::uint64_t word) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[word & 0xF];
        word >>= 4;
    }
    return s;
}

std::uint64_t from_hex16(std::string_view text) {
    if (text.size() != 16) {
        throw DomainError("expected 16 hex digits, got '" + std::string(text) + "'");
    }
    std::uint64_t v = 0;
    for (char c : text) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
            throw DomainError("invalid hex digit in '" + std::string(text) + "'");
        }
    }
    std::from_chars(text.data(), text.data() + text.size(), v, 16);
    return v;
}

} // namespace derauth
