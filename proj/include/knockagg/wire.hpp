#pragma once

// One-shot node -> coordinator message.
//
// Layout (little-endian):
//   0   magic "KAG1"          4 bytes
//   4   version u16 = 1
//   6   node_id u32
//   10  n_i     u32
//   14  p       u32
//   18  mode    u8            0 = binary-median, 1 = fixed16, 2 = raw32
//   19  chi bits              ceil(p/8) bytes, +1 -> 1, -1 -> 0, MSB first
//       W                     binary-median: ceil(p/8) bytes of bits, MSB first
//                             fixed16: p x u16, round(65535 * rank/p)
//                             raw32:   p x IEEE-754 binary32
// Padding bits must be zero.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knockagg/error.hpp"
#include "knockagg/node.hpp"

namespace knockagg {

enum class WireMode : std::uint8_t { binary_median = 0, fixed16 = 1, raw32 = 2 };

inline const char* to_string(WireMode mode) {
    switch (mode) {
        case WireMode::binary_median: return "binary-median";
        case WireMode::fixed16: return "fixed16";
        case WireMode::raw32: return "raw32";
    }
    return "unknown";
}

inline WireMode parse_wire_mode(std::string_view name) {
    if (name == "binary-median") return WireMode::binary_median;
    if (name == "fixed16") return WireMode::fixed16;
    if (name == "raw32") return WireMode::raw32;
    fail(ErrorCode::config, "unknown wire mode '" + std::string(name) + "' (expected binary-median, fixed16 or raw32)");
}

inline constexpr std::array<std::uint8_t, 4> wire_magic{'K', 'A', 'G', '1'};
inline constexpr std::uint16_t wire_version = 1;
inline constexpr std::size_t wire_header_bytes = 19;
inline constexpr double fixed16_scale = 65535.0;

/// Decoded message. `w` holds the values exactly as they travel on the wire
/// (0/1, k/65535 or a binary32 value widened to double).
struct NodeSummary {
    std::uint32_t node_id = 0;
    std::uint32_t n = 0;
    std::uint32_t p = 0;
    WireMode mode = WireMode::raw32;
    std::vector<int> chi;
    std::vector<double> w;

    bool operator==(const NodeSummary&) const = default;
};

inline std::uint64_t wire_payload_bytes(std::uint64_t p, WireMode mode) {
    const std::uint64_t bit_bytes = (p + 7) / 8;
    switch (mode) {
        case WireMode::binary_median: return 2 * bit_bytes;
        case WireMode::fixed16: return bit_bytes + 2 * p;
        case WireMode::raw32: return bit_bytes + 4 * p;
    }
    return 0;
}

/// Exact encoded size in bits.
inline std::uint64_t message_bits(std::uint64_t p, WireMode mode) {
    require(p >= 1, ErrorCode::invalid_input, "message_bits: p must be >= 1");
    return 8 * (wire_header_bytes + wire_payload_bytes(p, mode));
}

/// Quantizes node statistics into what the message carries, without
/// producing bytes. Used directly by in-memory runs.
inline NodeSummary summarize(const NodeStatistics& stats, WireMode mode, std::uint32_t node_id) {
    const std::size_t p = stats.p();
    require(p >= 1 && static_cast<std::size_t>(stats.w.size()) == p, ErrorCode::invalid_input,
            "summarize: W and chi lengths differ or are empty");
    NodeSummary out;
    out.node_id = node_id;
    out.n = stats.n;
    out.p = static_cast<std::uint32_t>(p);
    out.mode = mode;
    out.chi = stats.chi;
    for (int c : out.chi) require(c == 1 || c == -1, ErrorCode::invalid_input, "summarize: chi entries must be +1 or -1");
    for (Eigen::Index j = 0; j < stats.w.size(); ++j) {
        require(std::isfinite(stats.w(j)) && stats.w(j) >= 0, ErrorCode::invalid_input, "summarize: W must be finite and >= 0");
    }

    out.w.resize(p);
    switch (mode) {
        case WireMode::binary_median: {
            const Vector bits = binarize_above_median(stats.w);
            for (std::size_t j = 0; j < p; ++j) out.w[j] = bits(static_cast<Eigen::Index>(j));
            break;
        }
        case WireMode::fixed16: {
            // rank = number of strictly smaller entries, so ties share a code
            std::vector<double> sorted(stats.w.data(), stats.w.data() + p);
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t j = 0; j < p; ++j) {
                const double value = stats.w(static_cast<Eigen::Index>(j));
                const auto rank = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), value) - sorted.begin());
                out.w[j] = std::round(fixed16_scale * rank / static_cast<double>(p)) / fixed16_scale;
            }
            break;
        }
        case WireMode::raw32:
            for (std::size_t j = 0; j < p; ++j) out.w[j] = static_cast<double>(static_cast<float>(stats.w(static_cast<Eigen::Index>(j))));
            break;
    }
    return out;
}

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>((v >> (8 * k)) & 0xff));
}

inline std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at) {
    return static_cast<std::uint16_t>(in[at] | (in[at + 1] << 8));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | in[at + static_cast<std::size_t>(k)];
    return v;
}

template <class Bit>
void put_bits(std::vector<std::uint8_t>& out, std::size_t count, Bit bit) {
    const std::size_t start = out.size();
    out.resize(start + (count + 7) / 8, 0);
    for (std::size_t i = 0; i < count; ++i) {
        if (bit(i)) out[start + i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    }
}

inline bool get_bit(std::span<const std::uint8_t> in, std::size_t start, std::size_t i) {
    return (in[start + i / 8] >> (7 - i % 8)) & 1u;
}

inline void check_padding(std::span<const std::uint8_t> in, std::size_t start, std::size_t count) {
    if (count % 8 == 0) return;
    const std::uint8_t last = in[start + count / 8];
    const std::uint8_t mask = static_cast<std::uint8_t>(0xffu >> (count % 8));
    if (last & mask) fail(ErrorCode::protocol, "decode_summary: nonzero padding bits");
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_summary(const NodeSummary& summary) {
    const std::size_t p = summary.p;
    require(p >= 1 && summary.chi.size() == p && summary.w.size() == p, ErrorCode::invalid_input,
            "serialize_summary: inconsistent lengths");
    std::vector<std::uint8_t> out;
    out.reserve(wire_header_bytes + wire_payload_bytes(p, summary.mode));
    for (std::uint8_t b : wire_magic) out.push_back(b);
    detail::put_u16(out, wire_version);
    detail::put_u32(out, summary.node_id);
    detail::put_u32(out, summary.n);
    detail::put_u32(out, summary.p);
    out.push_back(static_cast<std::uint8_t>(summary.mode));

    for (int c : summary.chi) require(c == 1 || c == -1, ErrorCode::invalid_input, "serialize_summary: chi must be +1 or -1");
    detail::put_bits(out, p, [&](std::size_t j) { return summary.chi[j] == 1; });

    switch (summary.mode) {
        case WireMode::binary_median:
            for (double w : summary.w) require(w == 0.0 || w == 1.0, ErrorCode::invalid_input, "serialize_summary: binary W must be 0 or 1");
            detail::put_bits(out, p, [&](std::size_t j) { return summary.w[j] == 1.0; });
            break;
        case WireMode::fixed16:
            for (double w : summary.w) {
                require(w >= 0.0 && w <= 1.0, ErrorCode::invalid_input, "serialize_summary: fixed16 W must lie in [0, 1]");
                detail::put_u16(out, static_cast<std::uint16_t>(std::lround(w * fixed16_scale)));
            }
            break;
        case WireMode::raw32:
            for (double w : summary.w) {
                require(std::isfinite(w) && w >= 0.0, ErrorCode::invalid_input, "serialize_summary: raw W must be finite and >= 0");
                detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
            }
            break;
    }
    return out;
}

inline std::vector<std::uint8_t> encode_summary(const NodeStatistics& stats, WireMode mode, std::uint32_t node_id) {
    return serialize_summary(summarize(stats, mode, node_id));
}

inline NodeSummary decode_summary(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < wire_header_bytes) fail(ErrorCode::length, "decode_summary: buffer shorter than header");
    if (!std::equal(wire_magic.begin(), wire_magic.end(), bytes.begin())) fail(ErrorCode::protocol, "decode_summary: bad magic");
    if (detail::get_u16(bytes, 4) != wire_version) fail(ErrorCode::protocol, "decode_summary: unsupported version");

    NodeSummary out;
    out.node_id = detail::get_u32(bytes, 6);
    out.n = detail::get_u32(bytes, 10);
    out.p = detail::get_u32(bytes, 14);
    const std::uint8_t mode_byte = bytes[18];
    if (mode_byte > 2) fail(ErrorCode::protocol, "decode_summary: unknown mode " + std::to_string(mode_byte));
    out.mode = static_cast<WireMode>(mode_byte);
    if (out.p == 0) fail(ErrorCode::protocol, "decode_summary: p must be >= 1");

    const std::uint64_t expected = wire_header_bytes + wire_payload_bytes(out.p, out.mode);
    if (bytes.size() < expected) fail(ErrorCode::length, "decode_summary: truncated payload");
    if (bytes.size() > expected) fail(ErrorCode::length, "decode_summary: trailing bytes after payload");

    const std::size_t p = out.p;
    const std::size_t bit_bytes = (p + 7) / 8;
    std::size_t at = wire_header_bytes;
    detail::check_padding(bytes, at, p);
    out.chi.resize(p);
    for (std::size_t j = 0; j < p; ++j) out.chi[j] = detail::get_bit(bytes, at, j) ? 1 : -1;
    at += bit_bytes;

    out.w.resize(p);
    switch (out.mode) {
        case WireMode::binary_median:
            detail::check_padding(bytes, at, p);
            for (std::size_t j = 0; j < p; ++j) out.w[j] = detail::get_bit(bytes, at, j) ? 1.0 : 0.0;
            break;
        case WireMode::fixed16:
            for (std::size_t j = 0; j < p; ++j) out.w[j] = detail::get_u16(bytes, at + 2 * j) / fixed16_scale;
            break;
        case WireMode::raw32:
            for (std::size_t j = 0; j < p; ++j) {
                const float v = std::bit_cast<float>(detail::get_u32(bytes, at + 4 * j));
                if (!std::isfinite(v) || v < 0.0f) fail(ErrorCode::protocol, "decode_summary: raw W must be finite and >= 0");
                out.w[j] = static_cast<double>(v);
            }
            break;
    }
    return out;
}

/// Concatenation of u32-length-prefixed messages.
inline std::vector<std::uint8_t> write_summary_stream(std::span<const std::vector<std::uint8_t>> messages) {
    std::vector<std::uint8_t> out;
    for (const auto& msg : messages) {
        detail::put_u32(out, static_cast<std::uint32_t>(msg.size()));
        out.insert(out.end(), msg.begin(), msg.end());
    }
    return out;
}

/// Reads either a single bare message (starts with the magic) or a
/// length-prefixed stream of messages.
inline std::vector<NodeSummary> read_summaries(std::span<const std::uint8_t> bytes) {
    std::vector<NodeSummary> out;
    if (bytes.size() >= 4 && std::equal(wire_magic.begin(), wire_magic.end(), bytes.begin())) {
        out.push_back(decode_summary(bytes));
        return out;
    }
    std::size_t at = 0;
    while (at < bytes.size()) {
        if (bytes.size() - at < 4) fail(ErrorCode::length, "summary stream: truncated length prefix");
        const std::uint32_t len = detail::get_u32(bytes, at);
        at += 4;
        if (bytes.size() - at < len) fail(ErrorCode::length, "summary stream: truncated message");
        out.push_back(decode_summary(bytes.subspan(at, len)));
        at += len;
    }
    if (out.empty()) fail(ErrorCode::length, "summary stream: no messages");
    return out;
}

}  // namespace knockagg
