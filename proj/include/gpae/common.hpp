#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpae {

using Vec = std::vector<double>;

// Deterministic RNG wrapper. All sampling goes through this class so that
// runs are bit-reproducible for a given seed regardless of the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    // Uniform double in [0, 1) with 53 bits of entropy.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Marsaglia polar method; deterministic given the engine state.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // Inverse-CDF categorical sample. Probabilities must sum to ~1.
    int categorical(const Vec& probs) {
        const double u = uniform01();
        double acc = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc) return static_cast<int>(k);
        }
        // Round-off fallthrough: return the last positive-probability entry.
        for (std::size_t k = probs.size(); k-- > 0;) {
            if (probs[k] > 0.0) return static_cast<int>(k);
        }
        throw std::runtime_error("categorical: all-zero probability row");
    }

    int uniform_int(int n) {  // in [0, n)
        return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
    }

    // Independent child stream, e.g. one per environment worker.
    Rng spawn(std::uint64_t stream) {
        const std::uint64_t mixed = engine_() ^ (0x9e3779b97f4a7c15ull * (stream + 1));
        return Rng(mixed);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline double sup_norm_diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sup_norm_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double mean_of(const Vec& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev_of(const Vec& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// FNV-1a, used to stamp output files with a config fingerprint.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace gpae
