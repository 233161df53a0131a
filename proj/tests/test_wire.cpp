#include <gtest/gtest.h>

#include <cstring>

#include "knockagg/wire.hpp"
#include "oracles.hpp"

using namespace knockagg;

namespace {

NodeStatistics random_stats(std::size_t p, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 5.0);
    NodeStatistics s;
    s.n = 300;
    s.w.resize(static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) {
        s.w(static_cast<Eigen::Index>(j)) = unif(rng);
        s.chi.push_back(rng() & 1 ? 1 : -1);
    }
    return s;
}

ErrorCode decode_code(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_summary(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "decoded without error";
    return ErrorCode::invalid_input;
}

}  // namespace

TEST(Wire, HeaderLayout) {
    NodeStatistics s = random_stats(8, 1);
    const auto bytes = encode_summary(s, WireMode::binary_median, 0x01020304);
    ASSERT_EQ(bytes.size(), 21u);
    EXPECT_EQ(std::memcmp(bytes.data(), "KAG1", 4), 0);
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[5], 0);
    EXPECT_EQ(bytes[6], 0x04);  // little-endian node id
    EXPECT_EQ(bytes[9], 0x01);
    EXPECT_EQ(bytes[10], 300 & 0xff);
    EXPECT_EQ(bytes[11], 300 >> 8);
    EXPECT_EQ(bytes[14], 8);
    EXPECT_EQ(bytes[18], 0);
}

TEST(Wire, ChiBitsAreMsbFirst) {
    NodeStatistics s;
    s.n = 20;
    s.w = Vector::Zero(10);
    s.chi = {1, -1, -1, -1, -1, -1, -1, 1, 1, -1};
    const auto bytes = encode_summary(s, WireMode::raw32, 0);
    EXPECT_EQ(bytes[19], 0b10000001);
    EXPECT_EQ(bytes[20], 0b10000000);
    EXPECT_EQ(bytes.size(), 19u + 2 + 40);
}

TEST(Wire, Sizes) {
    EXPECT_EQ(encode_summary(random_stats(8, 2), WireMode::raw32, 0).size(), 19u + 1 + 32);
    EXPECT_EQ(message_bits(1000, WireMode::binary_median), 2152u);
    EXPECT_EQ(message_bits(1000, WireMode::fixed16), 19u * 8 + 8 * 125 + 16000);
    for (std::uint64_t p : {1, 7, 8, 9, 100, 1001}) {
        EXPECT_LE(message_bits(p, WireMode::binary_median), message_bits(p, WireMode::fixed16));
        EXPECT_LE(message_bits(p, WireMode::fixed16), message_bits(p, WireMode::raw32));
        EXPECT_EQ(message_bits(p, WireMode::binary_median), 8 * (19 + 2 * ((p + 7) / 8)));
        for (WireMode mode : {WireMode::binary_median, WireMode::fixed16, WireMode::raw32}) {
            EXPECT_EQ(8 * encode_summary(random_stats(p, p), mode, 0).size(), message_bits(p, mode));
        }
    }
}

TEST(Wire, RoundTripAllModes) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const std::size_t p = 1 + seed * 7 % 97;
        const NodeStatistics s = random_stats(p, seed);
        for (WireMode mode : {WireMode::binary_median, WireMode::fixed16, WireMode::raw32}) {
            const NodeSummary expected = summarize(s, mode, static_cast<std::uint32_t>(seed));
            const NodeSummary decoded = decode_summary(encode_summary(s, mode, static_cast<std::uint32_t>(seed)));
            EXPECT_EQ(decoded, expected);
            EXPECT_EQ(serialize_summary(decoded), encode_summary(s, mode, static_cast<std::uint32_t>(seed)));
        }
    }
}

TEST(Wire, Fixed16PreservesOrder) {
    const NodeStatistics s = random_stats(50, 3);
    const NodeSummary d = decode_summary(encode_summary(s, WireMode::fixed16, 0));
    for (std::size_t a = 0; a < 50; ++a) {
        for (std::size_t b = 0; b < 50; ++b) {
            if (s.w(static_cast<Eigen::Index>(a)) < s.w(static_cast<Eigen::Index>(b))) EXPECT_LT(d.w[a], d.w[b]);
        }
        // rank / p within quantization
        double rank = 0;
        for (std::size_t b = 0; b < 50; ++b) rank += s.w(static_cast<Eigen::Index>(b)) < s.w(static_cast<Eigen::Index>(a));
        EXPECT_LE(std::abs(d.w[a] - rank / 50.0), std::ldexp(1.0, -16));
    }
}

TEST(Wire, BadMagicVersionAndMode) {
    auto bytes = encode_summary(random_stats(8, 4), WireMode::binary_median, 0);
    auto bad = bytes;
    std::memcpy(bad.data(), "XXXX", 4);
    EXPECT_EQ(decode_code(bad), ErrorCode::protocol);
    bad = bytes;
    bad[4] = 2;
    EXPECT_EQ(decode_code(bad), ErrorCode::protocol);
    bad = bytes;
    bad[18] = 3;
    EXPECT_EQ(decode_code(bad), ErrorCode::protocol);
}

TEST(Wire, TruncationAndTrailingBytes) {
    const auto bytes = encode_summary(random_stats(13, 5), WireMode::fixed16, 0);
    EXPECT_EQ(decode_code({bytes.begin(), bytes.end() - 1}), ErrorCode::length);
    EXPECT_EQ(decode_code({bytes.begin(), bytes.begin() + 10}), ErrorCode::length);
    auto longer = bytes;
    longer.push_back(0);
    EXPECT_EQ(decode_code(longer), ErrorCode::length);
}

TEST(Wire, NonzeroPaddingIsRejected) {
    auto bytes = encode_summary(random_stats(5, 6), WireMode::binary_median, 0);
    bytes[19] |= 0x01;  // bit 8 of a 5-bit field
    EXPECT_EQ(decode_code(bytes), ErrorCode::protocol);
}

TEST(Wire, SummarizeRejectsBadStatistics) {
    NodeStatistics s = random_stats(4, 1);
    s.chi[0] = 0;
    EXPECT_THROW(encode_summary(s, WireMode::raw32, 0), Error);
    s = random_stats(4, 1);
    s.w(0) = -1;
    EXPECT_THROW(encode_summary(s, WireMode::raw32, 0), Error);
}

TEST(Wire, StreamOfMessages) {
    std::vector<std::vector<std::uint8_t>> msgs;
    for (std::uint32_t i = 0; i < 3; ++i) msgs.push_back(encode_summary(random_stats(9, i), WireMode::raw32, i));
    const auto stream = write_summary_stream(msgs);
    const auto back = read_summaries(stream);
    ASSERT_EQ(back.size(), 3u);
    for (std::uint32_t i = 0; i < 3; ++i) EXPECT_EQ(back[i].node_id, i);
    EXPECT_EQ(read_summaries(msgs[1]).size(), 1u);
    EXPECT_THROW(read_summaries(std::vector<std::uint8_t>(stream.begin(), stream.end() - 2)), Error);
}

TEST(Wire, ModeNames) {
    for (WireMode m : {WireMode::binary_median, WireMode::fixed16, WireMode::raw32}) EXPECT_EQ(parse_wire_mode(to_string(m)), m);
    EXPECT_THROW(parse_wire_mode("bits"), Error);
}
