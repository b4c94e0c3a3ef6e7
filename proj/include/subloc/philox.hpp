// Counter-based RNG: Philox4x32-10 (Salmon et al. constants), plus the
// uniform/normal conversions used everywhere in this library. The exact
// bit-level conventions are documented in docs/rng.md so that independent
// implementations can reproduce our streams.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace subloc {

class Philox {
public:
    // One generator = one (seed, stream) pair. Streams with distinct ids are
    // independent; blocks advance automatically as values are consumed.
    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) {
            fill_block();
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    // Uniform on the open interval (0,1): 53-bit mantissa, offset by half an ulp
    // so 0 and 1 are unreachable.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the sine partner is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Raw block function, exposed for known-answer tests.
    static void block(const std::uint32_t ctr[4], const std::uint32_t key[2],
                      std::uint32_t out[4]) {
        std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
        std::uint32_t k0 = key[0], k1 = key[1];
        round_once(c0, c1, c2, c3, k0, k1);
        for (int r = 1; r < 10; ++r) {
            k0 += kWeyl0;
            k1 += kWeyl1;
            round_once(c0, c1, c2, c3, k0, k1);
        }
        out[0] = c0;
        out[1] = c1;
        out[2] = c2;
        out[3] = c3;
    }

private:
    static constexpr std::uint32_t kMult0 = 0xD2511F53u;
    static constexpr std::uint32_t kMult1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static void round_once(std::uint32_t& c0, std::uint32_t& c1, std::uint32_t& c2,
                           std::uint32_t& c3, std::uint32_t k0, std::uint32_t k1) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMult0) * c0;
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMult1) * c2;
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
    }

    void fill_block() {
        const std::uint32_t ctr[4] = {static_cast<std::uint32_t>(block_),
                                      static_cast<std::uint32_t>(block_ >> 32),
                                      stream_lo_, stream_hi_};
        const std::uint32_t key[2] = {key0_, key1_};
        block(ctr, key, buf_);
        ++block_;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t block_ = 0;
    std::uint32_t buf_[4] = {0, 0, 0, 0};
    int buf_pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

// Stream-id convention: high 32 bits tag the purpose, low 32 bits index it.
// Replica-owned streams use the replica index; see docs/rng.md.
inline std::uint64_t stream_id(std::uint32_t tag, std::uint32_t index) {
    return (static_cast<std::uint64_t>(tag) << 32) | index;
}

// Per-replica, per-step sampler streams: replica in the high 16 bits of the
// index, step in the low 16. Keeps every chain independent and reproducible.
inline std::uint32_t replica_stream(std::uint64_t replica, std::uint64_t step) {
    return static_cast<std::uint32_t>(((replica & 0xffff) << 16) | (step & 0xffff));
}

namespace streams {
// Purpose tags. Keep stable: changing them changes every experiment output.
inline constexpr std::uint32_t kGlobal = 0;     // initial batch, set construction
inline constexpr std::uint32_t kBrownian = 1;   // per-replica driving noise
inline constexpr std::uint32_t kSampler = 2;    // per-replica MCMC / exact sampling
inline constexpr std::uint32_t kScratch = 3;    // hypothesis checks, proposals
}  // namespace streams

}  // namespace subloc
