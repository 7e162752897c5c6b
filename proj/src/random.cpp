#include "lesion/random.hpp"

#include <cmath>
#include <numbers>

namespace lesion {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

CounterStream::CounterStream(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64_finalize(seed ^ (kGolden * (stream + 1)))) {}

std::uint64_t CounterStream::word(std::uint64_t n) const {
    return splitmix64_finalize(key_ + kGolden * (n + 1));
}

double CounterStream::next_uniform() {
    return (static_cast<double>(next_word() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterStream::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

void CounterStream::fill_normal(std::span<float> out) {
    for (float& v : out) v = static_cast<float>(next_normal());
}

}  // namespace lesion
