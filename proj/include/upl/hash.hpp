#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace upl {

// CRC-64/XZ (ECMA-182 polynomial, reflected). Guarantees detection of any
// single-bit flip, which is the integrity contract for cache payloads.
class Crc64 {
public:
    Crc64() { init_table(); }

    Crc64& update(std::span<const std::uint8_t> bytes) {
        for (std::uint8_t b : bytes) {
            crc_ = table_[(crc_ ^ b) & 0xff] ^ (crc_ >> 8);
        }
        return *this;
    }

    Crc64& update(const void* data, std::size_t n) {
        return update(std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(data), n));
    }

    std::uint64_t value() const { return ~crc_; }

private:
    void init_table() {
        constexpr std::uint64_t poly = 0xc96c5795d7870f42ull;
        for (std::uint64_t i = 0; i < 256; ++i) {
            std::uint64_t c = i;
            for (int k = 0; k < 8; ++k) {
                c = (c & 1) ? (poly ^ (c >> 1)) : (c >> 1);
            }
            table_[i] = c;
        }
    }

    std::uint64_t crc_ = ~0ull;
    std::uint64_t table_[256];
};

inline std::uint64_t crc64(const void* data, std::size_t n) {
    return Crc64().update(data, n).value();
}

inline std::uint64_t crc64(const std::string& s) { return crc64(s.data(), s.size()); }

// FNV-1a, used to derive per-token embedding seeds.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex_u64(std::uint64_t v);

} // namespace upl
