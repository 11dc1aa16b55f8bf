#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace minidet {

// Deterministic parameter RNG. Draws are defined in terms of the raw
// mt19937_64 stream so results do not depend on libstdc++'s distribution
// implementations.
class ParamRng {
public:
    explicit ParamRng(std::uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // symmetric fan-in scaled range, the init used for all block parameters
    double fan_in_uniform(int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return uniform(-bound, bound);
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace minidet
