#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace mkin {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(const void* data, std::size_t size);
Sha256 sha256(const std::string& data);

std::string to_hex(const Sha256& digest);

}  // namespace mkin
