#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "meth/coefffn.hpp"
#include "meth/random.hpp"

using namespace meth;

namespace {

const GridSpec grid{};  // epsilon = 0.1, J = 8, Jmax = 32, Dx = 12

// x * cos(x) built from modes
CoeffFn x_cos_x() {
    CoeffFn f;
    f.set_coeff(1, 1, cplx{0.5, 0.0});
    f.set_coeff(1, -1, cplx{0.5, 0.0});
    return f;
}

CoeffFn cos_x(double a = 1.0) {
    CoeffFn f;
    f.set_coeff(0, 1, cplx{0.5 * a, 0.0});
    f.set_coeff(0, -1, cplx{0.5 * a, 0.0});
    return f;
}

double max_pointwise_diff(const CoeffFn& f, const CoeffFn& g, int npts = 64) {
    double m = 0.0;
    for (int p = 0; p < npts; ++p) {
        double x = kPeriod * p / npts;
        m = std::max(m, std::abs(eval(f, x) - eval(g, x)));
    }
    return m;
}

}  // namespace

TEST_CASE("shift: mode phase and polynomial shift") {
    CoeffFn e_ix = CoeffFn::harmonic_mode(1, cplx{1.0, 0.0});
    CoeffFn s = shift(e_ix, 1, grid.epsilon);
    CHECK(std::abs(s.coeff(0, 1) - std::polar(1.0, grid.epsilon)) < 1e-15);

    CoeffFn x = CoeffFn::monomial(1, cplx{1.0, 0.0});
    CoeffFn sx = shift(x, 1, grid.epsilon);
    CHECK(std::abs(sx.coeff(1, 0) - cplx{1.0, 0.0}) < 1e-15);
    CHECK(std::abs(sx.coeff(0, 0) - cplx{grid.epsilon, 0.0}) < 1e-15);
}

TEST_CASE("shift: x cos x by -2, pointwise oracle on a 64-point grid") {
    CoeffFn f = x_cos_x();
    CoeffFn s = shift(f, -2, grid.epsilon);
    double m = 0.0;
    for (int p = 0; p < 64; ++p) {
        double x = kPeriod * p / 64;
        cplx expected = (x - 2 * grid.epsilon) * std::cos(x - 2 * grid.epsilon);
        m = std::max(m, std::abs(eval(s, x) - expected));
    }
    CHECK(m < 1e-13);
}

TEST_CASE("shift composition is exact") {
    std::mt19937_64 rng(11);
    CoeffFn f = random_field(rng, grid) + CoeffFn::monomial(2, cplx{0.3, 0.0});
    CoeffFn a = shift(shift(f, 3, grid.epsilon), -5, grid.epsilon);
    CoeffFn b = shift(f, -2, grid.epsilon);
    CHECK(max_pointwise_diff(a, b) < 1e-13);
}

TEST_CASE("ddx: trivial and finite-difference oracle") {
    CHECK(ddx(CoeffFn::constant(cplx{3.0, 0.0})).is_zero());
    CoeffFn dx = ddx(CoeffFn::monomial(1, cplx{1.0, 0.0}));
    CHECK(std::abs(dx.coeff(0, 0) - cplx{1.0, 0.0}) < 1e-15);

    // d/dx [x e^{2ix}] = e^{2ix} + 2i x e^{2ix}
    CoeffFn f;
    f.set_coeff(1, 2, cplx{1.0, 0.0});
    CoeffFn d = ddx(f);
    const double h = 1e-6;
    double m = 0.0;
    for (int p = 0; p < 32; ++p) {
        double x = 1.0 + 4.0 * p / 32.0;  // interior points, away from period wrap
        cplx fd = (eval(f, x + h) - eval(f, x - h)) / (2.0 * h);
        m = std::max(m, std::abs(eval(d, x) - fd));
    }
    CHECK(m < 1e-8);
    CHECK(std::abs(d.coeff(0, 2) - cplx{1.0, 0.0}) < 1e-15);
    CHECK(std::abs(d.coeff(1, 2) - cplx{0.0, 2.0}) < 1e-15);
}

TEST_CASE("mul_fn: identity, inverse modes, cos^2") {
    std::mt19937_64 rng(7);
    CoeffFn g = random_field(rng, grid);
    CoeffFn idg = mul_fn(CoeffFn::constant(cplx{1.0, 0.0}), g, grid);
    CHECK(max_pointwise_diff(idg, g) < 1e-14);

    CoeffFn a = CoeffFn::harmonic_mode(1, cplx{1.0, 0.0});
    CoeffFn b = CoeffFn::harmonic_mode(-1, cplx{1.0, 0.0});
    CoeffFn one = mul_fn(a, b, grid);
    CHECK(std::abs(one.coeff(0, 0) - cplx{1.0, 0.0}) < 1e-15);
    CHECK(one.xdeg() == 0);

    CoeffFn c2 = mul_fn(cos_x(), cos_x(), grid);
    CoeffFn expected = CoeffFn::constant(cplx{0.5, 0.0});
    expected.set_coeff(0, 2, cplx{0.25, 0.0});
    expected.set_coeff(0, -2, cplx{0.25, 0.0});
    CHECK(max_pointwise_diff(c2, expected) < 1e-14);
}

TEST_CASE("mul_fn agrees with pointwise products when no truncation occurred") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 5; ++t) {
        CoeffFn f = random_field(rng, grid);
        CoeffFn g = random_field(rng, grid);
        CoeffFn h = mul_fn(f, g, grid);
        CHECK(h.ledger == 0.0);  // J + J <= Jmax
        double m = 0.0;
        std::uniform_real_distribution<double> xs(0.0, kPeriod);
        for (int p = 0; p < 64; ++p) {
            double x = xs(rng);
            m = std::max(m, std::abs(eval(h, x) - eval(f, x) * eval(g, x)));
        }
        CHECK(m < 1e-9);
    }
}

TEST_CASE("mul_fn: degree overflow is an error") {
    CoeffFn p7 = CoeffFn::monomial(7, cplx{1.0, 0.0});
    CHECK_THROWS_AS(mul_fn(p7, p7, grid), DegreeOverflow);
}

TEST_CASE("Leibniz rule to 1e-10") {
    std::mt19937_64 rng(3);
    CoeffFn f = random_field(rng, grid);
    CoeffFn g = random_field(rng, grid);
    CoeffFn lhs = ddx(mul_fn(f, g, grid));
    CoeffFn rhs = mul_fn(ddx(f), g, grid) + mul_fn(f, ddx(g), grid);
    CHECK(max_pointwise_diff(lhs, rhs) < 1e-10);
}

TEST_CASE("exp_fn: trivial, series oracle, shift commutation") {
    CHECK(max_pointwise_diff(exp_fn(CoeffFn(), grid), CoeffFn::constant(cplx{1.0, 0.0})) < 1e-14);

    CoeffFn f = cos_x(0.1);
    CoeffFn e = exp_fn(f, grid);
    // series oracle: sum (0.1 cos x)^n / n!
    CoeffFn series = CoeffFn::constant(cplx{1.0, 0.0});
    CoeffFn pw = CoeffFn::constant(cplx{1.0, 0.0});
    for (int n = 1; n <= 20; ++n) {
        pw = mul_fn(pw, f, grid);
        series += pw * cplx{1.0 / factorial(n), 0.0};
    }
    CHECK(max_pointwise_diff(e, series) < 1e-10);

    CoeffFn lhs = shift(exp_fn(f, grid), 1, grid.epsilon);
    CoeffFn rhs = exp_fn(shift(f, 1, grid.epsilon), grid);
    CHECK(max_pointwise_diff(lhs, rhs) < 1e-12);

    CHECK_THROWS_AS(exp_fn(CoeffFn::monomial(1, cplx{1.0, 0.0}), grid), SecularExponent);
}

TEST_CASE("invert_one_minus_shift: trivial cases") {
    CHECK(invert_one_minus_shift(CoeffFn(), grid.epsilon).is_zero());

    CoeffFn g = invert_one_minus_shift(CoeffFn::constant(cplx{1.0, 0.0}), grid.epsilon);
    // forced by linearity: g = -x / eps
    CHECK(g.xdeg() == 1);
    CHECK(std::abs(g.coeff(1, 0) - cplx{-1.0 / grid.epsilon, 0.0}) < 1e-13);
    CHECK(std::abs(g.coeff(0, 0)) < 1e-15);  // zero-mode gauge
}

TEST_CASE("invert_one_minus_shift: apply (1 - Lambda) round trip") {
    CoeffFn f = cos_x();
    CoeffFn g = invert_one_minus_shift(f, grid.epsilon);
    CHECK(max_pointwise_diff(one_minus_shift(g, grid.epsilon), f) < 1e-12);

    // secular right-hand sides round-trip too
    std::mt19937_64 rng(5);
    CoeffFn h = random_field(rng, grid) + CoeffFn::constant(cplx{0.7, 0.0}) +
                CoeffFn::monomial(2, cplx{0.2, 0.0}) + x_cos_x();
    CoeffFn gh = invert_one_minus_shift(h, grid.epsilon);
    CHECK(max_pointwise_diff(one_minus_shift(gh, grid.epsilon), h) < 1e-11);
    CHECK(std::abs(gh.coeff(0, 0)) < 1e-15);
}

TEST_CASE("invert_one_minus_shift: resonant mode") {
    GridSpec g5 = grid;
    g5.epsilon = kPeriod / 5.0;  // e^{i*5*eps} = 1
    CoeffFn f = CoeffFn::harmonic_mode(5, cplx{1.0, 0.0});
    CHECK_THROWS_AS(invert_one_minus_shift(f, g5.epsilon), ResonantMode);
}

TEST_CASE("mean and eval") {
    CoeffFn f = CoeffFn::constant(cplx{3.0, 0.0}) + cos_x();
    CHECK(std::abs(mean(f) - cplx{3.0, 0.0}) < 1e-14);
    CHECK(std::abs(eval(CoeffFn::monomial(1, cplx{1.0, 0.0}), kPi) - cplx{kPi, 0.0}) < 1e-14);

    // quadrature oracle for mean(x) over [0, 2pi)
    CoeffFn x = CoeffFn::monomial(1, cplx{1.0, 0.0});
    int N = 1 << 14;
    cplx quad{};
    for (int p = 0; p < N; ++p) quad += eval(x, kPeriod * (p + 0.5) / N);
    quad /= double(N);
    CHECK(std::abs(mean(x) - quad) < 1e-8);
    CHECK(std::abs(mean(x) - cplx{kPi, 0.0}) < 1e-13);

    // mean of x^d e^{ijx} against quadrature
    CoeffFn m;
    m.set_coeff(3, 2, cplx{1.0, 0.0});
    cplx q2{};
    for (int p = 0; p < N; ++p) q2 += eval(m, kPeriod * (p + 0.5) / N);
    q2 /= double(N);
    CHECK(std::abs(mean(m) - q2) < 1e-6);
}

TEST_CASE("reciprocal and division") {
    CoeffFn f = CoeffFn::constant(cplx{1.0, 0.0}) + cos_x(0.3);
    CoeffFn r = reciprocal_fn(f, grid);
    CoeffFn prod = mul_fn(f, r, grid);
    CHECK(max_pointwise_diff(prod, CoeffFn::constant(cplx{1.0, 0.0})) < 1e-12);
    CHECK_THROWS_AS(reciprocal_fn(cos_x(), grid), NonInvertible);
}

TEST_CASE("reality bookkeeping") {
    std::mt19937_64 rng(9);
    CoeffFn f = random_field(rng, grid);
    CHECK(is_real_valued(f));
    CHECK(is_real_valued(mul_fn(f, f, grid)));
    CHECK(is_real_valued(exp_fn(f, grid), 1e-11));
    CHECK_FALSE(is_real_valued(CoeffFn::harmonic_mode(1, cplx{1.0, 0.0})));
}
