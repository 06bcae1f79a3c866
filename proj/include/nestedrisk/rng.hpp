#pragma once

#include <cstdint>
#include <limits>

#include "nestedrisk/math.hpp"

namespace nestedrisk::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Philox 4x32-10 counter-based generator. A draw is a pure function of
// (key, substream, position), so disjoint substreams never share state and
// results do not depend on scheduling or worker count.
struct Philox4x32 {
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    struct Block {
        std::uint32_t v[4];
    };

    static Block generate(std::uint64_t key, std::uint64_t substream, std::uint64_t position) {
        std::uint32_t c0 = static_cast<std::uint32_t>(position);
        std::uint32_t c1 = static_cast<std::uint32_t>(position >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(substream);
        std::uint32_t c3 = static_cast<std::uint32_t>(substream >> 32);
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c0;
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n0 = hi1 ^ c1 ^ k0;
            const std::uint32_t n1 = lo1;
            const std::uint32_t n2 = hi0 ^ c3 ^ k1;
            const std::uint32_t n3 = lo0;
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return Block{{c0, c1, c2, c3}};
    }
};

// A sequential view over one (key, substream) pair. Each next_u64 consumes a
// fixed position in the counter space, so sequences are reproducible and
// substreams are non-overlapping by construction.
class Sequence {
public:
    Sequence(std::uint64_t key, std::uint64_t substream)
        : key_(key), substream_(substream) {}

    std::uint64_t next_u64() {
        if (have_buffered_) {
            have_buffered_ = false;
            return buffered_;
        }
        const auto b = Philox4x32::generate(key_, substream_, position_++);
        buffered_ = (static_cast<std::uint64_t>(b.v[3]) << 32) | b.v[2];
        have_buffered_ = true;
        return (static_cast<std::uint64_t>(b.v[1]) << 32) | b.v[0];
    }

    // Uniform on the open interval (0,1); never returns an endpoint.
    double next_uniform() {
        const std::uint64_t bits = next_u64() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via the inverse CDF; exactly one u64 per draw keeps
    // substream alignment independent of the values produced.
    double next_normal() { return normal_inv_cdf(next_uniform()); }

    // UniformRandomBitGenerator interface for std distributions.
    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }
    result_type operator()() { return next_u64(); }

private:
    std::uint64_t key_;
    std::uint64_t substream_;
    std::uint64_t position_ = 0;
    std::uint64_t buffered_ = 0;
    bool have_buffered_ = false;
};

// A keyed family of substreams. Streams for different purposes are derived
// from one experiment seed with distinct domain tags (see stream_for).
class Stream {
public:
    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t key() const { return key_; }
    Sequence substream(std::uint64_t index) const { return Sequence(key_, index); }

    // Derives an unrelated child stream; used for per-scenario inner streams.
    Stream fork(std::uint64_t index) const { return Stream(splitmix64(key_ ^ index)); }

private:
    std::uint64_t key_;
};

enum class Purpose : std::uint64_t {
    OuterScenarios = 0x6F75746572ULL,
    InnerPooled = 0x696E6E6572ULL,
    InnerConditional = 0x636F6E6464ULL,
    Benchmark = 0x62656E6368ULL,
    Regression = 0x72656772ULL,
    Oracle = 0x6F7261636CULL,
};

// Key derivation: seed -> purpose -> replicate, each folded through
// splitmix64. Disjoint purposes or replicates give unrelated streams.
inline Stream stream_for(std::uint64_t seed, Purpose purpose, std::uint64_t replicate = 0) {
    std::uint64_t k = splitmix64(seed ^ static_cast<std::uint64_t>(purpose));
    k = splitmix64(k ^ replicate);
    return Stream(k);
}

}  // namespace nestedrisk::rng
