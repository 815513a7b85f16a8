#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace depoison {

// Deterministic, platform-independent randomness. Standard-library engines and
// distributions are implementation-defined across toolchains, so everything
// that must reproduce byte-identically goes through this.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) { splitmix64(state_); }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Unbiased integer in [0, n); n must be > 0.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Uniform double in [0, 1).
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  // k distinct elements drawn without replacement (partial Fisher-Yates).
  template <typename T>
  std::vector<T> sample(const std::vector<T>& v, std::size_t k) {
    std::vector<T> pool = v;
    if (k > pool.size()) k = pool.size();
    std::vector<T> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(bounded(pool.size() - i));
      using std::swap;
      swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::uint64_t state_;
};

namespace detail {

inline void mix_into(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= 1099511628211ULL;
  }
}

inline void mix_into(std::uint64_t& h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  h ^= 0x1F;
  h *= 1099511628211ULL;
}

}  // namespace detail

// Derives an independent stream seed from a parent seed plus any mix of
// integer and string salts. Used to give every stage/entity its own stream
// regardless of evaluation order.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t parent, const Parts&... parts) {
  std::uint64_t h = 14695981039346656037ULL;
  detail::mix_into(h, parent);
  (detail::mix_into(h, parts), ...);
  return h;
}

template <typename... Parts>
Rng derive_rng(std::uint64_t parent, const Parts&... parts) {
  return Rng(derive_seed(parent, parts...));
}

}  // namespace depoison
