#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace bsw {

/// splitmix64 finalizer; used to derive independent per-game / per-tick seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return mix64(seed ^ mix64(v + 0x632be59bd9b4e019ULL));
}

template <typename... Ts>
constexpr std::uint64_t derive_seed(std::uint64_t base, Ts... parts) {
    std::uint64_t h = mix64(base);
    ((h = hash_combine(h, static_cast<std::uint64_t>(parts))), ...);
    return h;
}

/// FNV-1a 64 over raw bytes. Stable across platforms; used for content and
/// payload hashes.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic generator. The engine is std::mt19937_64 (its output sequence
/// is fixed by the standard); all distributions are implemented here so that
/// samples do not depend on the standard library's distribution code.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        // rejection sampling keeps the draw exactly uniform
        const std::uint64_t limit = span == 0 ? 0 : (~std::uint64_t{0} - span + 1) % span;
        std::uint64_t x = engine_();
        while (span != 0 && x < limit) x = engine_();
        return lo + static_cast<std::int64_t>(span == 0 ? x : x % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    int binomial(int n, double p) {
        if (p <= 0.0 || n <= 0) return 0;
        if (p >= 1.0) return n;
        int k = 0;
        for (int i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
        return k;
    }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

    std::mt19937_64& engine() { return engine_; }
    const std::mt19937_64& engine() const { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace bsw
