#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "meth/dressing.hpp"
#include "meth/random.hpp"

using namespace meth;

namespace {
const GridSpec grid{};
}

TEST_CASE("solve_dressing: constant-coefficient case u=0, v=0") {
    CoeffFn zero;
    DressingPair P = solve_dressing(zero, zero, 6, grid);
    const double e = grid.epsilon;

    // w_0 = 1 exactly
    CHECK(sup_norm(P.S.coeff(0) - CoeffFn::constant(cplx{1.0, 0.0}), grid) < 1e-15);
    // w_1 = 0, w_2 = -x/eps (forced secular), w_3 = 0
    CHECK(P.S.coeff(-1).is_zero());
    CHECK(sup_norm(P.S.coeff(-2) - CoeffFn::monomial(1, cplx{-1.0 / e, 0.0}), grid) < 1e-12);
    CHECK(P.S.coeff(-3).is_zero());
    // w_4 = x^2/(2 eps^2) - 3x/(2 eps), from solving (1 - Lambda) w_4 = w_2(x - eps)
    CoeffFn w4 = CoeffFn::monomial(2, cplx{0.5 / (e * e), 0.0}) +
                 CoeffFn::monomial(1, cplx{-1.5 / e, 0.0});
    CHECK(sup_norm(P.S.coeff(-4) - w4, grid) < 1e-11);

    DiffOp L = lax_operator(zero, CoeffFn::constant(cplx{1.0, 0.0}));
    CHECK(dressing_residual(P, L, grid) < 1e-12);
    auto [c1, c2] = conjugation_residuals(P, L, grid);
    CHECK(c1 < 1e-11);
    CHECK(c2 < 1e-11);
}

TEST_CASE("solve_dressing: first-order coefficient and normalization") {
    std::mt19937_64 rng(31);
    CoeffFn u = random_field(rng, grid);
    CoeffFn v = random_field(rng, grid, 0.1);
    DressingPair P = solve_dressing(u, v, 8, grid);

    // m = 1 recursion: w_1 = (1 - Lambda)^{-1} u
    CHECK(sup_norm(P.S.coeff(-1) - invert_one_minus_shift(u, grid.epsilon), grid) < 1e-13);
    // Lambda^0 coefficient of S stays exactly 1
    CHECK(sup_norm(P.S.coeff(0) - CoeffFn::constant(cplx{1.0, 0.0}), grid) == 0.0);
    // gauge pin wt_0(0) = 1
    CHECK(std::abs(eval(P.Sbar.coeff(0), 0.0) - cplx{1.0, 0.0}) < 1e-12);
    // wt_0 solves wt_0(x) = e^v wt_0(x - eps)
    CoeffFn ev = exp_fn(v, grid);
    CoeffFn w0 = P.Sbar.coeff(0);
    CHECK(sup_norm(w0 - mul_fn(ev, shift(w0, -1, grid.epsilon), grid), grid) < 1e-11);
}

TEST_CASE("dressing residual for random small fields") {
    std::mt19937_64 rng(33);
    for (int t = 0; t < 5; ++t) {
        CoeffFn u = random_field(rng, grid, 0.1);
        CoeffFn v = random_field(rng, grid, 0.1);
        CertifiedDressing C = solve_dressing_certified(u, v, 8, grid);
        DiffOp L = lax_operator(u, exp_fn(v, grid));
        CHECK(dressing_residual(C.fine, L, grid) < 1e-9);
        auto [c1, c2] = conjugation_residuals(C, L, grid);
        CHECK(c1 < 1e-8);
        CHECK(c2 < 1e-8);
    }
}

TEST_CASE("K = 0 leaves the recursion unsolved") {
    std::mt19937_64 rng(35);
    CoeffFn u = random_field(rng, grid);
    CoeffFn v = random_field(rng, grid, 0.1);
    DressingPair P = solve_dressing(u, v, 0, grid);
    DiffOp L = lax_operator(u, exp_fn(v, grid));
    DiffOp r = diffop_mul(P.S, DiffOp::lambda_pow(1), grid) - diffop_mul(L, P.S, grid);
    // the unsolved m = 1 equation shows up as the full u-term at Lambda^0
    CHECK(sup_norm(r.coeff(0) + u, grid) < 1e-12);
    CHECK(op_norm(r, grid) > 1e-3);
}

TEST_CASE("logarithm operators: structure") {
    std::mt19937_64 rng(37);
    CoeffFn u = random_field(rng, grid, 0.1);
    CoeffFn v = random_field(rng, grid, 0.1);
    DressingPair P = solve_dressing(u, v, 8, grid);

    MixedOp lp = log_plus(P, grid);
    CHECK(lp.dmax() == 1);
    CHECK(sup_norm(lp.part(1).coeff(0) - CoeffFn::constant(cplx{1.0, 0.0}), grid) == 0.0);
    CHECK(lp.part(0).kmax() <= -1);  // strictly negative band

    MixedOp lm = log_minus(P, grid);
    CHECK(sup_norm(lm.part(1).coeff(0) + CoeffFn::constant(cplx{1.0, 0.0}), grid) == 0.0);
    CHECK((lm.part(0).is_zero() || lm.part(0).kmin() >= 0));  // non-negative band
}

TEST_CASE("log_plus of the constant case: Lambda^{-2} coefficient is 1") {
    CoeffFn zero;
    DressingPair P = solve_dressing(zero, zero, 6, grid);
    MixedOp lp = log_plus(P, grid);
    CHECK(sup_norm(lp.part(0).coeff(-2) - CoeffFn::constant(cplx{1.0, 0.0}), grid) < 1e-11);
}

TEST_CASE("[log_+- L, L] vanishes on trusted bands") {
    std::mt19937_64 rng(39);
    for (int t = 0; t < 20; ++t) {
        CoeffFn u = random_field(rng, grid, 0.2);
        CoeffFn v = random_field(rng, grid, 0.2);
        CertifiedDressing C = solve_dressing_certified(u, v, 8, grid);
        MixedOp L = MixedOp::from_diffop(lax_operator(u, exp_fn(v, grid)));
        MixedOp lp = log_plus(C, grid);
        MixedOp lm = log_minus(C, grid);
        // certification must leave a usable band, not a vacuous one
        CHECK(lp.part(0).trust.lo <= -6);
        CHECK(lm.part(0).trust.hi >= 3);
        CHECK(op_norm_trusted(commutator(lp, L, grid), grid) < 1e-8);
        CHECK(op_norm_trusted(commutator(lm, L, grid), grid) < 1e-8);
    }
}

TEST_CASE("gauge independence of the dressed commutation") {
    std::mt19937_64 rng(41);
    CoeffFn u = random_field(rng, grid, 0.15);
    CoeffFn v = random_field(rng, grid, 0.15);
    DressingPair P = solve_dressing(u, v, 8, grid);
    MixedOp L = MixedOp::from_diffop(lax_operator(u, exp_fn(v, grid)));
    double r0 = op_norm_trusted(commutator(log_plus(P, grid), L, grid), grid);

    // right-multiply S by 1 + c Lambda^{-1} (constant coefficient): allowed gauge
    DiffOp G = DiffOp::identity() + DiffOp::lambda_pow(-1, cplx{0.05, 0.0});
    DressingPair P2 = P;
    P2.S = diffop_mul(P.S, G, grid);
    P2.S.restrict_band(-P.order, 0);
    P2.S.mark_tail_below(-P.order);
    DiffOp N2 = P2.S - DiffOp::identity();
    P2.Sinv = detail::neumann_inverse(N2, -P.order, 0, grid);
    P2.Sinv.mark_tail_below(-P.order);
    double r1 = op_norm_trusted(commutator(log_plus(P2, grid), L, grid), grid);
    CHECK(std::abs(r1 - r0) < 1e-10);
}

TEST_CASE("solver preconditions") {
    CoeffFn zero;
    CHECK_THROWS_AS(solve_dressing(zero, zero, 30, grid), DegreeOverflow);
    CoeffFn vbad = CoeffFn::constant(cplx{0.3, 0.0});  // nonzero mean v
    CHECK_THROWS_AS(solve_dressing(zero, vbad, 4, grid), SecularExponent);
}
