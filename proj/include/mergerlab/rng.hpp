#pragma once

#include <array>
#include <cstdint>

namespace mergerlab {

/// Philox4x64-10 counter-based generator. A stream is identified by
/// (seed, stream): the seed fills the key, the stream id sits in the upper
/// half of the 256-bit counter, and draws advance the lower half. Any market
/// or substream can therefore be generated independently of scheduling order.
class PhiloxRng {
public:
    PhiloxRng(std::uint64_t seed, std::uint64_t stream)
        : key_{seed, 0x6d657267u /* arbitrary domain tag */}, stream_(stream) {}

    /// Raw 4x64 block for a given counter value (stateless; used by tests).
    static std::array<std::uint64_t, 4> block(
        const std::array<std::uint64_t, 4>& counter,
        const std::array<std::uint64_t, 2>& key);

    std::uint64_t next_u64();

    /// Uniform on the open interval (0, 1).
    double uniform();

    /// Standard normal via the inverse-CDF transform.
    double normal();

private:
    std::array<std::uint64_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t draw_ = 0;
    std::array<std::uint64_t, 4> buf_{};
    int buffered_ = 0;
};

/// Standard normal quantile, Wichura's PPND16 rational approximation
/// (AS 241); absolute error below 1e-15 on (0, 1).
double normal_quantile(double p);

}  // namespace mergerlab
