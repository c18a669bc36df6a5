#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace midnet {

// Derives an independent stream seed from a base seed and a tag. All
// randomness in the project flows from one root seed through these
// derivations, so each component (data, init, mixer, shuffle, ...) is
// reproducible on its own.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a, std::uint64_t b);

// Seeded generator with hand-rolled samplers. std::mt19937_64 output is
// pinned by the standard, but the std distributions are not; sampling is
// implemented here so frozen test statistics survive libstdc++ upgrades.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    // Standard normal via Box-Muller (one value per pair; the spare is kept).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    // Gamma(shape, 1) via Marsaglia-Tsang, with the boost trick for shape < 1.
    double gamma(double shape);
    // Beta(a, b) as Gamma(a) / (Gamma(a) + Gamma(b)).
    double beta(double a, double b);
    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace midnet
