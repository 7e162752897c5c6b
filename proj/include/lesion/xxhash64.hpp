#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace lesion {

// XXH64 (Yann Collet's xxHash, 64-bit variant). Used as the NLF1 trailer digest
// and for probe/report content hashes.
std::uint64_t xxh64(std::span<const std::byte> data, std::uint64_t seed = 0);

std::uint64_t xxh64(std::string_view text, std::uint64_t seed = 0);

}  // namespace lesion
