#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace qhr {

// FNV-1a over a byte string. Used to derive run seeds from
// (base seed, drug, config index, repeat, fold) and to fingerprint
// output artifacts for the run manifest.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::int64_t a = 0, std::int64_t b = 0,
                                 std::int64_t c = 0) {
    std::string key = std::to_string(base);
    key += '|';
    key += tag;
    key += '|';
    key += std::to_string(a);
    key += '|';
    key += std::to_string(b);
    key += '|';
    key += std::to_string(c);
    return fnv1a64(key);
}

// mt19937_64 output is fully specified by the standard; the std::
// distributions are not. All random transforms below are written out
// explicitly so that reruns are byte-identical across toolchains.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller, one value per call (the spare is discarded to keep the
// draw count predictable).
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
}

inline std::uint64_t bounded(Rng& rng, std::uint64_t n) {
    return rng() % n;  // modulo bias is ~2^-60 for the sizes used here
}

// Fisher-Yates with explicit draws.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::vector<int> shuffled_indices(int n, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    shuffle_in_place(idx, rng);
    return idx;
}

}  // namespace qhr
