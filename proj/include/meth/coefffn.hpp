#ifndef METH_COEFFFN_HPP
#define METH_COEFFFN_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "meth/common.hpp"

namespace meth {

// A coefficient function: polynomial in x whose coefficients are band-limited
// periodic functions on [0, 2*pi),
//
//     f(x) = sum_d x^d sum_{|j| <= half} f_{d,j} e^{i j x}.
//
// Values are immutable in spirit: all algebra goes through free functions that
// return fresh objects. Lossy operations accumulate dropped L2 mass into the
// `ledger` field, which propagates additively through every operation.
class CoeffFn {
public:
    CoeffFn() = default;  // the zero function

    static CoeffFn constant(cplx c) {
        CoeffFn f;
        if (c != cplx{}) f.set_coeff(0, 0, c);
        return f;
    }

    // a * e^{i j x}
    static CoeffFn harmonic_mode(int j, cplx a) {
        CoeffFn f;
        if (a != cplx{}) f.set_coeff(0, j, a);
        return f;
    }

    // c * x^degree
    static CoeffFn monomial(int degree, cplx c) {
        CoeffFn f;
        if (c != cplx{}) f.set_coeff(degree, 0, c);
        return f;
    }

    int xdeg() const { return blocks_.empty() ? 0 : int(blocks_.size()) - 1; }
    int half() const { return half_; }
    bool is_zero() const { return blocks_.empty(); }

    cplx coeff(int d, int j) const {
        if (d < 0 || d >= int(blocks_.size())) return {};
        if (j < -half_ || j > half_) return {};
        return blocks_[size_t(d)][size_t(j + half_)];
    }

    void set_coeff(int d, int j, cplx v) {
        grow(d, std::abs(j));
        blocks_[size_t(d)][size_t(j + half_)] = v;
    }

    void add_coeff(int d, int j, cplx v) {
        grow(d, std::abs(j));
        blocks_[size_t(d)][size_t(j + half_)] += v;
    }

    // Drop exactly-zero outer modes and top-degree blocks.
    void trim() {
        while (!blocks_.empty()) {
            bool allz = true;
            for (cplx c : blocks_.back())
                if (c != cplx{}) { allz = false; break; }
            if (!allz) break;
            blocks_.pop_back();
        }
        if (blocks_.empty()) { half_ = 0; return; }
        while (half_ > 0) {
            bool outer_zero = true;
            for (auto& b : blocks_)
                if (b.front() != cplx{} || b.back() != cplx{}) { outer_zero = false; break; }
            if (!outer_zero) break;
            for (auto& b : blocks_) {
                b.pop_back();
                b.erase(b.begin());
            }
            --half_;
        }
    }

    // Truncate mode band to |j| <= cap, accumulating dropped L2 mass.
    void truncate_modes(int cap) {
        if (half_ <= cap) return;
        for (auto& b : blocks_) {
            std::vector<cplx> nb(size_t(2 * cap + 1));
            for (int j = -half_; j <= half_; ++j) {
                cplx c = b[size_t(j + half_)];
                if (std::abs(j) <= cap) nb[size_t(j + cap)] = c;
                else ledger += std::norm(c);
            }
            b = std::move(nb);
        }
        half_ = cap;
    }

    CoeffFn& operator+=(const CoeffFn& g) {
        for (int d = 0; d <= g.xdeg(); ++d)
            for (int j = -g.half(); j <= g.half(); ++j) {
                cplx c = g.coeff(d, j);
                if (c != cplx{}) add_coeff(d, j, c);
            }
        ledger += g.ledger;
        trim();
        return *this;
    }

    CoeffFn& operator-=(const CoeffFn& g) {
        for (int d = 0; d <= g.xdeg(); ++d)
            for (int j = -g.half(); j <= g.half(); ++j) {
                cplx c = g.coeff(d, j);
                if (c != cplx{}) add_coeff(d, j, -c);
            }
        ledger += g.ledger;
        trim();
        return *this;
    }

    CoeffFn& operator*=(cplx s) {
        for (auto& b : blocks_)
            for (auto& c : b) c *= s;
        if (s == cplx{}) { blocks_.clear(); half_ = 0; }
        return *this;
    }

    double ledger = 0.0;

private:
    void grow(int d, int absj) {
        if (absj > half_) {
            for (auto& b : blocks_) {
                std::vector<cplx> nb(size_t(2 * absj + 1));
                for (int j = -half_; j <= half_; ++j)
                    nb[size_t(j + absj)] = b[size_t(j + half_)];
                b = std::move(nb);
            }
            half_ = absj;
        }
        while (int(blocks_.size()) <= d)
            blocks_.emplace_back(size_t(2 * half_ + 1));
    }

    // blocks_[d][j + half_] is the coefficient of x^d e^{ijx}
    std::vector<std::vector<cplx>> blocks_;
    int half_ = 0;
};

inline CoeffFn operator+(CoeffFn f, const CoeffFn& g) { f += g; return f; }
inline CoeffFn operator-(CoeffFn f, const CoeffFn& g) { f -= g; return f; }
inline CoeffFn operator*(CoeffFn f, cplx s) { f *= s; return f; }
inline CoeffFn operator*(cplx s, CoeffFn f) { f *= s; return f; }
inline CoeffFn operator-(CoeffFn f) { f *= cplx{-1.0, 0.0}; return f; }

// f(x + k*eps), exact: binomial redistribution of (x + k eps)^d plus a phase
// e^{i j k eps} on each mode.
inline CoeffFn shift(const CoeffFn& f, int k, double eps) {
    return [&] {
        CoeffFn g;
        g.ledger = f.ledger;
        const double a = k * eps;
        for (int d = 0; d <= f.xdeg(); ++d) {
            for (int j = -f.half(); j <= f.half(); ++j) {
                cplx c = f.coeff(d, j);
                if (c == cplx{}) continue;
                c *= std::polar(1.0, double(j) * a);
                double pw = 1.0;
                for (int b = d; b >= 0; --b) {
                    g.add_coeff(b, j, binomial(d, b) * pw * c);
                    pw *= a;
                }
            }
        }
        g.trim();
        return g;
    }();
}

// Arbitrary real shift x -> x + a (used by the generic (1 - Lambda_s) solver's
// callers only through integer multiples; kept general for oracles/tests).
inline CoeffFn shift_by(const CoeffFn& f, double a) {
    CoeffFn g;
    g.ledger = f.ledger;
    for (int d = 0; d <= f.xdeg(); ++d)
        for (int j = -f.half(); j <= f.half(); ++j) {
            cplx c = f.coeff(d, j);
            if (c == cplx{}) continue;
            c *= std::polar(1.0, double(j) * a);
            double pw = 1.0;
            for (int b = d; b >= 0; --b) {
                g.add_coeff(b, j, binomial(d, b) * pw * c);
                pw *= a;
            }
        }
    g.trim();
    return g;
}

inline CoeffFn ddx(const CoeffFn& f) {
    CoeffFn g;
    g.ledger = f.ledger;
    for (int d = 0; d <= f.xdeg(); ++d)
        for (int j = -f.half(); j <= f.half(); ++j) {
            cplx c = f.coeff(d, j);
            if (c == cplx{}) continue;
            if (d > 0) g.add_coeff(d - 1, j, double(d) * c);
            if (j != 0) g.add_coeff(d, j, cplx{0.0, double(j)} * c);
        }
    g.trim();
    return g;
}

// Convolution in modes, addition in x-degree. Modes beyond Jmax are dropped
// into the ledger; degrees beyond Dx are an error.
inline CoeffFn mul_fn(const CoeffFn& f, const CoeffFn& g, const GridSpec& grid) {
    if (f.is_zero() || g.is_zero()) {
        CoeffFn z;
        z.ledger = f.ledger + g.ledger;
        return z;
    }
    if (f.xdeg() + g.xdeg() > grid.Dx)
        throw DegreeOverflow("mul_fn: x-degree " + std::to_string(f.xdeg() + g.xdeg()) +
                             " exceeds cap " + std::to_string(grid.Dx));
    CoeffFn h;
    h.ledger = f.ledger + g.ledger;
    for (int d1 = 0; d1 <= f.xdeg(); ++d1)
        for (int j1 = -f.half(); j1 <= f.half(); ++j1) {
            cplx c1 = f.coeff(d1, j1);
            if (c1 == cplx{}) continue;
            for (int d2 = 0; d2 <= g.xdeg(); ++d2)
                for (int j2 = -g.half(); j2 <= g.half(); ++j2) {
                    cplx c2 = g.coeff(d2, j2);
                    if (c2 == cplx{}) continue;
                    h.add_coeff(d1 + d2, j1 + j2, c1 * c2);
                }
        }
    h.truncate_modes(std::max(grid.Jmax, grid.Jwork));
    h.trim();
    return h;
}

inline cplx eval(const CoeffFn& f, double x) {
    cplx r{};
    for (int d = 0; d <= f.xdeg(); ++d) {
        cplx row{};
        for (int j = -f.half(); j <= f.half(); ++j) {
            cplx c = f.coeff(d, j);
            if (c != cplx{}) row += c * std::polar(1.0, double(j) * x);
        }
        r += row * std::pow(x, double(d));
    }
    return r;
}

namespace detail {
// (1/2pi) * int_0^{2pi} x^d e^{ijx} dx
inline cplx monomial_mode_mean(int d, int j) {
    if (j == 0) return cplx{std::pow(kPeriod, double(d)) / double(d + 1), 0.0};
    // I(d,j) = int x^d e^{ijx} = (2pi)^d/(ij) - (d/(ij)) I(d-1,j)
    cplx ij{0.0, double(j)};
    cplx I{};  // I(0,j) = 0
    for (int e = 1; e <= d; ++e)
        I = (std::pow(kPeriod, double(e)) - double(e) * I) / ij;
    return I / kPeriod;
}
}  // namespace detail

// Exact average over the period [0, 2*pi).
inline cplx mean(const CoeffFn& f) {
    cplx m{};
    for (int d = 0; d <= f.xdeg(); ++d)
        for (int j = -f.half(); j <= f.half(); ++j) {
            cplx c = f.coeff(d, j);
            if (c != cplx{}) m += c * detail::monomial_mode_mean(d, j);
        }
    return m;
}

inline double sup_norm(const CoeffFn& f, int npts) {
    double m = 0.0;
    for (int p = 0; p < npts; ++p)
        m = std::max(m, std::abs(eval(f, kPeriod * double(p) / double(npts))));
    return m;
}

inline double sup_norm(const CoeffFn& f, const GridSpec& grid) {
    return sup_norm(f, 4 * grid.Jmax);
}

// Sup norm of the x-polynomial (degree >= 1) content.
inline double secular_norm(const CoeffFn& f, const GridSpec& grid) {
    CoeffFn p = f;
    for (int j = -f.half(); j <= f.half(); ++j) p.set_coeff(0, j, cplx{});
    p.trim();
    return sup_norm(p, grid);
}

namespace detail {
template <typename PointwiseFn>
CoeffFn collocation_transform(const CoeffFn& f, const GridSpec& grid, PointwiseFn&& op) {
    const int N = 4 * std::max(grid.Jmax, grid.Jwork);
    std::vector<cplx> vals(static_cast<size_t>(N), cplx{});
    for (int p = 0; p < N; ++p)
        vals[size_t(p)] = op(eval(f, kPeriod * double(p) / double(N)));
    std::vector<cplx> modes(static_cast<size_t>(N), cplx{});
    double peak = 0.0;
    for (int j = -N / 2 + 1; j <= N / 2 - 1; ++j) {
        cplx c{};
        for (int p = 0; p < N; ++p)
            c += vals[size_t(p)] * std::polar(1.0, -double(j) * kPeriod * double(p) / double(N));
        c /= double(N);
        modes[size_t(j + N / 2)] = c;
        peak = std::max(peak, std::abs(c));
    }
    CoeffFn g;
    g.ledger = f.ledger;
    for (int j = -N / 2 + 1; j <= N / 2 - 1; ++j) {
        cplx c = modes[size_t(j + N / 2)];
        // modes at the DFT roundoff floor are noise, not signal; keep them out
        // so exact inputs stay exact downstream
        if (std::abs(c) < 1e-14 * peak) continue;
        if (std::abs(j) <= std::max(grid.Jmax, grid.Jwork)) g.set_coeff(0, j, c);
        else g.ledger += std::norm(c);
    }
    g.trim();
    return g;
}
}  // namespace detail

// e^f by collocation; refuses secular exponents.
inline CoeffFn exp_fn(const CoeffFn& f, const GridSpec& grid) {
    if (f.xdeg() > 0)
        throw SecularExponent("exp_fn: argument has x-degree " + std::to_string(f.xdeg()));
    return detail::collocation_transform(f, grid, [](cplx z) { return std::exp(z); });
}

// 1/f by collocation; f must be nowhere small on the grid.
inline CoeffFn reciprocal_fn(const CoeffFn& f, const GridSpec& grid) {
    if (f.xdeg() > 0)
        throw NonInvertible("reciprocal_fn: argument has x-degree > 0");
    const int N = 4 * grid.Jmax;
    for (int p = 0; p < N; ++p)
        if (std::abs(eval(f, kPeriod * double(p) / double(N))) < 1e-12)
            throw NonInvertible("reciprocal_fn: function vanishes on the collocation grid");
    return detail::collocation_transform(f, grid, [](cplx z) { return 1.0 / z; });
}

// f / g0 with g0 of x-degree 0: pointwise division applied per degree block.
inline CoeffFn div_fn(const CoeffFn& f, const CoeffFn& g0, const GridSpec& grid) {
    CoeffFn r = reciprocal_fn(g0, grid);
    return mul_fn(f, r, grid);
}

// Solve (1 - Lambda_s) g = f where Lambda_s h(x) = h(x + s). Nonzero modes are
// divided by (1 - e^{ijs}); the j = 0 tower is absorbed by a secular term one
// degree higher, with the gauge g_{0,0} = 0.
inline CoeffFn invert_one_minus_shift(const CoeffFn& f, double s) {
    if (f.is_zero()) {
        CoeffFn z;
        z.ledger = f.ledger;
        return z;
    }
    const int D = f.xdeg();
    const int H = f.half();
    CoeffFn g;
    g.ledger = f.ledger;
    g.set_coeff(D + 1, 0, cplx{});  // reserve shape
    // modes j != 0: triangular in degree from the top
    for (int j = -H; j <= H; ++j) {
        if (j == 0) continue;
        cplx phase = std::polar(1.0, double(j) * s);
        cplx denom = cplx{1.0, 0.0} - phase;
        for (int d = D; d >= 0; --d) {
            cplx rhs = f.coeff(d, j);
            for (int e = d + 1; e <= D; ++e)
                rhs += binomial(e, d) * std::pow(s, double(e - d)) * phase * g.coeff(e, j);
            if (rhs == cplx{}) continue;
            if (std::abs(denom) < 1e-12)
                throw ResonantMode("invert_one_minus_shift: mode " + std::to_string(j) +
                                   " resonant with shift");
            g.set_coeff(d, j, rhs / denom);
        }
    }
    // mode 0: -sum_{e>d} C(e,d) s^{e-d} g_{e,0} = f_{d,0}, solved from d = D down
    for (int d = D; d >= 0; --d) {
        cplx rhs = f.coeff(d, 0);
        for (int e = d + 2; e <= D + 1; ++e)
            rhs += binomial(e, d) * std::pow(s, double(e - d)) * g.coeff(e, 0);
        g.set_coeff(d + 1, 0, -rhs / (double(d + 1) * s));
    }
    g.trim();
    return g;
}

// Apply (1 - Lambda_s): the round-trip oracle for the inversion above.
inline CoeffFn one_minus_shift(const CoeffFn& f, double s) {
    return f - shift_by(f, s);
}

// Drop top x-degree blocks whose coefficients are negligible relative to the
// largest coefficient anywhere in f. Cascaded solves produce secular blocks
// that cancel exactly in exact arithmetic; this removes their roundoff ghosts
// before they get amplified downstream.
inline CoeffFn drop_small_degrees(const CoeffFn& f, double rel = 1e-9) {
    double scale = 0.0;
    for (int d = 0; d <= f.xdeg(); ++d)
        for (int j = -f.half(); j <= f.half(); ++j)
            scale = std::max(scale, std::abs(f.coeff(d, j)));
    if (scale == 0.0) return CoeffFn{};
    auto deg_max = [&](int d) {
        double m = 0.0;
        for (int j = -f.half(); j <= f.half(); ++j) m = std::max(m, std::abs(f.coeff(d, j)));
        return m;
    };
    int top = f.xdeg();
    while (top > 0 && deg_max(top) < rel * scale) --top;
    if (top == f.xdeg()) return f;
    CoeffFn r;
    r.ledger = f.ledger;
    for (int d = 0; d <= top; ++d)
        for (int j = -f.half(); j <= f.half(); ++j)
            if (f.coeff(d, j) != cplx{}) r.set_coeff(d, j, f.coeff(d, j));
    return r;
}

inline double l2_mass(const CoeffFn& f) {
    double m = 0.0;
    for (int d = 0; d <= f.xdeg(); ++d)
        for (int j = -f.half(); j <= f.half(); ++j) m += std::norm(f.coeff(d, j));
    return m;
}

// Conjugate-symmetry check for real-valued fields.
inline bool is_real_valued(const CoeffFn& f, double tol = 1e-12) {
    for (int d = 0; d <= f.xdeg(); ++d)
        for (int j = 0; j <= f.half(); ++j)
            if (std::abs(f.coeff(d, -j) - std::conj(f.coeff(d, j))) > tol) return false;
    return true;
}

// Real part projection, used to keep RK4 state real to roundoff.
inline CoeffFn symmetrize_real(const CoeffFn& f) {
    CoeffFn g;
    g.ledger = f.ledger;
    for (int d = 0; d <= f.xdeg(); ++d)
        for (int j = -f.half(); j <= f.half(); ++j) {
            cplx c = 0.5 * (f.coeff(d, j) + std::conj(f.coeff(d, -j)));
            if (c != cplx{}) g.set_coeff(d, j, c);
        }
    g.trim();
    return g;
}

}  // namespace meth

#endif
