#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace catgen {

// FNV-1a 64-bit; used for config hashes and fitted-state digests.
class Fnv1a64 {
  public:
    void update(const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state_ ^= bytes[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    void update(double x) { update(&x, sizeof x); }
    void update(std::int64_t x) { update(&x, sizeof x); }
    std::uint64_t digest() const { return state_; }

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    Fnv1a64 h;
    h.update(s);
    return h.digest();
}

std::string to_hex(std::uint64_t value);

} // namespace catgen
