#ifndef FDF_RNG_HPP
#define FDF_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace fdf {

// Deterministic RNG wrapper. std::mt19937_64 has a standard-mandated output
// sequence, but the std distributions do not, so the mappings from raw draws
// to uniform reals / bounded ints / permutations live here. Two builds with
// the same seed produce the same stream on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform in [0, n). Modulo bias is irrelevant at these ranges.
    std::uint64_t uniform_index(std::uint64_t n) {
        return gen_() % n;
    }

    // Fisher-Yates, high index down.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream for a sub-task (splitmix64 step).
    std::uint64_t derive(std::uint64_t salt) {
        std::uint64_t z = gen_() + salt + 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace fdf

#endif
