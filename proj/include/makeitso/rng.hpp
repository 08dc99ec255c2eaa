#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace makeitso {

// Seeded random stream. All sampling in the engine goes through this type so
// that a (seed, call sequence) pair fully determines every draw.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    template <typename T>
    std::vector<T> normal_vector(std::size_t n) {
        std::vector<T> out(n);
        for (auto& v : out) v = static_cast<T>(normal());
        return out;
    }

    // Derives an independent child stream; used to give sub-tasks their own seeds.
    std::uint64_t split() { return engine_(); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace makeitso
