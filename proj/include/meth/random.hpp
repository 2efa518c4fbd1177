#ifndef METH_RANDOM_HPP
#define METH_RANDOM_HPP

#include <random>

#include "meth/coefffn.hpp"

namespace meth {

// Conjugate-symmetric band-limited field: sum_{1<=|j|<=J} a_j e^{ijx} with
// |a_j| <= amplitude * |j|^{-2}. Mean zero by construction.
inline CoeffFn random_field(std::mt19937_64& rng, const GridSpec& grid, double amplitude = 0.2) {
    std::uniform_real_distribution<double> mag(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, kPeriod);
    CoeffFn f;
    for (int j = 1; j <= grid.J; ++j) {
        double r = amplitude * mag(rng) / double(j * j);
        cplx a = std::polar(r, phase(rng));
        f.set_coeff(0, j, a);
        f.set_coeff(0, -j, std::conj(a));
    }
    f.trim();
    return f;
}

}  // namespace meth

#endif
