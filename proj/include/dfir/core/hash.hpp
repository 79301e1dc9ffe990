#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace dfir {

std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::byte> data);

std::uint32_t crc32(std::span<const std::byte> data);

}  // namespace dfir
