#pragma once

// Counter-based random numbers.
//
// Philox4x32-10 keyed by a 64-bit seed. The 128-bit counter holds the stream
// id in its high half and a block index in its low half, so every
// (seed, stream_id) pair owns a disjoint 2^64-block sequence and replications
// can run in any order on any thread with bit-identical output.

#include <array>
#include <cstdint>

namespace spikelab {

class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    /// One Philox4x32-10 evaluation.
    static Block encrypt(Block counter, Key key) noexcept;
};

/// Sequential view of one Philox stream.
class PhiloxStream {
public:
    PhiloxStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in the open interval (0, 1) with 53 random bits.
    double next_uniform() noexcept;
    /// Standard normal by inverse CDF of next_uniform().
    double next_normal() noexcept;

private:
    Philox4x32::Key key_;
    std::uint64_t stream_id_;
    std::uint64_t block_ = 0;
    Philox4x32::Block buffer_{};
    int used_ = 4;
};

/// Inverse of the standard normal CDF, p in (0, 1). Acklam's rational
/// approximation; relative error below 1.2e-9 over the whole range.
double normal_quantile(double p) noexcept;

/// Standard normal CDF.
double normal_cdf(double x) noexcept;

}  // namespace spikelab
