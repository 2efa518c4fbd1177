#ifndef METH_COMMON_HPP
#define METH_COMMON_HPP

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <cstdint>
#include <utility>

namespace meth {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kPeriod = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// x-degree of a product would exceed the configured cap
struct DegreeOverflow : Error { using Error::Error; };
// exponential of a function with nonzero polynomial part
struct SecularExponent : Error { using Error::Error; };
// (1 - Lambda) inversion hit a mode with 1 - e^{ij eps} ~ 0
struct ResonantMode : Error { using Error::Error; };
struct BandOverflow : Error { using Error::Error; };
struct DerivationOverflow : Error { using Error::Error; };
struct AnomalyExceeded : Error { using Error::Error; };
struct BlowUp : Error { using Error::Error; };
struct SliceViolation : Error { using Error::Error; };
// pointwise reciprocal of a function vanishing on the collocation grid
struct NonInvertible : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Grid / truncation configuration
// ---------------------------------------------------------------------------

struct GridSpec {
    double epsilon = 0.1;  // lattice spacing (string coupling)
    int J = 8;             // mode cap for fresh fields
    int Jmax = 32;         // mode cap for reported operators and norms
    int Jwork = 48;        // internal product resolution (dealiasing headroom);
                           // must stay below the lattice resonance 2*pi/epsilon
    int Dx = 12;           // cap on polynomial degree in x
    int band_cap = 12;     // retained Lambda-powers are in [-band_cap, band_cap]
    int dmax = 2;          // max derivation order of mixed operators

    void validate() const {
        if (!(epsilon > 0.0 && epsilon < kPeriod))
            throw Error("GridSpec: epsilon must be in (0, 2*pi)");
        if (J > Jmax) throw Error("GridSpec: J must not exceed Jmax");
        if (Dx < 0) throw Error("GridSpec: Dx must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
    return r;
}

inline double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= double(i);
    return r;
}

// c_n = sum_{k=1}^n 1/k as an exact fraction
inline std::pair<std::int64_t, std::int64_t> harmonic_frac(int n) {
    std::int64_t num = 0, den = 1;
    for (int k = 1; k <= n; ++k) {
        num = num * k + den;
        den *= k;
        std::int64_t a = num < 0 ? -num : num, b = den;
        while (b) { std::int64_t t = a % b; a = b; b = t; }
        if (a > 1) { num /= a; den /= a; }
    }
    return {num, den};
}

inline double harmonic(int n) {
    auto [p, q] = harmonic_frac(n);
    return double(p) / double(q);
}

}  // namespace meth

#endif
