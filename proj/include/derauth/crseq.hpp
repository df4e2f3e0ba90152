#pragma once

#include "derauth/fuel_gauge.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace derauth {

// Reply transformation bits R_T (16 bits, most significant first):
//   [15..11] cyclic shift amount, [10..8] direction field, [7..0] XOR mask.
struct TransformSpec {
    std::uint8_t shift = 0;            // 0..31
    std::uint8_t direction_field = 0;  // 0..7; odd popcount rotates left
    std::uint8_t xor_mask = 0;

    std::uint16_t pack() const;
    static TransformSpec unpack(std::uint16_t bits);
    bool rotates_left() const;

    friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

// 64-bit challenge, big-endian fields:
//   [63..32] four L_set1 cell ids, [31..16] two L_set2 cell ids, [15..0] R_T.
struct Challenge {
    std::array<std::uint8_t, 4> lset1{};
    std::array<std::uint8_t, 2> lset2{};
    TransformSpec rt;

    std::uint64_t encode() const;
    static Challenge decode(std::uint64_t word);
    // Ids below n_cells; lset1 pairwise distinct; lset2 pairwise distinct.
    bool well_formed(int n_cells) const;

    friend bool operator==(const Challenge&, const Challenge&) = default;
};

// Quantized live state of the two L_set2 cells: (soc, volt) bytes per cell.
struct BessState {
    std::array<std::uint8_t, 4> bytes{};   // soc0, volt0, soc1, volt1
    bool clipped = false;                  // telemetry only; not on the wire

    std::uint32_t pack() const;
    static BessState unpack(std::uint32_t bits);
    std::uint8_t digest() const;           // XOR of the four bytes

    friend bool operator==(const BessState& a, const BessState& b) { return a.bytes == b.bytes; }
};

std::uint8_t quantize_soc(double soc_percent, bool* clipped = nullptr);
std::uint8_t quantize_voltage(double voltage, bool* clipped = nullptr);
BessState quantize_bs(std::span<const Measurement> lset2_measurements);

// N pairs <c_i, r_i>, shared by master and outstation and mutated every round.
class CellReplyTable {
public:
    using Entry = std::pair<std::uint8_t, std::uint8_t>;

    CellReplyTable() = default;
    explicit CellReplyTable(std::vector<Entry> entries, std::uint64_t version = 0);

    std::size_t size() const { return entries_.size(); }
    std::uint64_t version() const { return version_; }
    const std::vector<Entry>& entries() const { return entries_; }
    bool contains(std::uint8_t cell_id) const;
    std::uint8_t reply(std::uint8_t cell_id) const;
    void set_reply(std::uint8_t cell_id, std::uint8_t reply);

    // The p_[ri,Bs] step: b = digest(B_s); r_i <- rotl8(r_i ^ b, popcount(b) mod 8).
    void update(const BessState& bs);

    // Wire form: 2-byte big-endian count, 8-byte big-endian version, then (c_i, r_i) pairs.
    std::vector<std::uint8_t> serialize() const;
    static CellReplyTable deserialize(std::span<const std::uint8_t> bytes);

    friend bool operator==(const CellReplyTable&, const CellReplyTable&) = default;

private:
    std::vector<Entry> entries_;   // sorted by cell id
    std::uint64_t version_ = 0;
};

CellReplyTable init_crt(std::uint64_t seed, int n_cells);
CellReplyTable update_crt(CellReplyTable crt, const BessState& bs);

// [63..32] B_s, [31..0] the four L_set1 replies in challenge order.
std::uint64_t build_temp_reply(const CellReplyTable& crt, const Challenge& ch, const BessState& bs);

struct TempReplyFields {
    BessState bs;
    std::array<std::uint8_t, 4> replies{};
};
TempReplyFields split_temp_reply(std::uint64_t temp_reply);

enum class TransformVariant {
    WholeWord,   // rotate the 64-bit reply as one word
    PerByte,     // rotate each byte independently by shift mod 8
};

std::uint64_t apply_transform(std::uint64_t temp_reply, const TransformSpec& rt,
                              TransformVariant variant = TransformVariant::WholeWord);
std::uint64_t reverse_transform(std::uint64_t auth_reply, const TransformSpec& rt,
                                TransformVariant variant = TransformVariant::WholeWord);

// Lowercase, zero-padded, 16 digits.
std::string to_hex16(std::uint64_t word);
std::uint64_t from_hex16(std::string_view text);

} // namespace derauth
