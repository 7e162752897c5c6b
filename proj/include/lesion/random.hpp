#pragma once

#include <cstdint>
#include <span>

namespace lesion {

// Counter-based stream: the n-th 64-bit word is a pure function of
// (seed, stream, n), so independent streams can be consumed in any order.
// word(n) = splitmix64_finalize(splitmix64_finalize(seed ^ golden*stream) + golden*(n+1))
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t word(std::uint64_t n) const;
    std::uint64_t next_word() { return word(counter_++); }

    // Uniform in (0, 1): 53 high bits, offset by half an ulp so 0 is never produced.
    double next_uniform();

    // Standard normal via Box-Muller. Each call consumes two words and returns
    // the cosine branch; the sine branch is cached for the following call.
    double next_normal();

    void fill_normal(std::span<float> out);

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64_finalize(std::uint64_t z);

}  // namespace lesion
