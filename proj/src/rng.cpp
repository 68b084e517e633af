#include "melisa/rng.hpp"

#include <cmath>

namespace melisa {

double Rng::normal() {
    double u1 = uniform_open0();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t Rng::uniform_int(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r = gen_();
    while (r >= limit) r = gen_();
    return r % n;
}

}  // namespace melisa
