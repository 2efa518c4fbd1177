#ifndef METH_DRESSING_HPP
#define METH_DRESSING_HPP

#include "meth/diffop.hpp"

namespace meth {

// L = Lambda + u + e^v Lambda^{-1}
inline DiffOp lax_operator(const CoeffFn& u, const CoeffFn& ev) {
    DiffOp L;
    L.set(1, CoeffFn::constant(cplx{1.0, 0.0}));
    L.set(0, u);
    L.set(-1, ev);
    return L;
}

// Truncated dressing pair: S = 1 + w_1 Lambda^{-1} + ... + w_K Lambda^{-K}
// conjugates Lambda into L; Sbar = wt_0 + wt_1 Lambda + ... conjugates
// Lambda^{-1} into L. Inverses are cached at the same truncation order.
struct DressingPair {
    DiffOp S, Sbar;
    DiffOp Sinv, Sbarinv;
    // Sbar = T * wt_0 with T unitriangular (t_0 = 1, t_m = wt_m / wt_0(x+m*eps)).
    // T and log wt_0 carry the Sbar content at O(1) coefficient size; identities
    // on the Sbar side are evaluated through them because wt_0's dynamic range
    // (e^{+-sup y}) makes direct products with Sbar ill-conditioned.
    DiffOp T;
    CoeffFn logw0;
    int order = 0;
    double ledger = 0.0;
};

namespace detail {

// Neumann inverse of 1 + N with N of strictly one-signed band; truncated to
// Lambda-powers in [lo, hi].
inline DiffOp neumann_inverse(const DiffOp& N, int lo, int hi, const GridSpec& grid) {
    DiffOp inv = DiffOp::identity();
    DiffOp pw = DiffOp::identity();
    int terms = std::max(std::abs(lo), std::abs(hi));
    for (int i = 1; i <= terms; ++i) {
        pw = diffop_mul(pw, N, grid);
        pw.restrict_band(lo, hi);
        if (pw.is_zero()) break;
        inv = (i % 2 == 1) ? inv - pw : inv + pw;
    }
    inv.restrict_band(lo, hi);
    return inv;
}

// Solve X S = A by back-substitution, using that S is unitriangular in Lambda
// (band [-K, 0], coefficient 1 at Lambda^0). X is computed on [lo, hi].
// Avoids forming S^{-1}: the inverse's coefficients are products of secular
// polynomials whose size makes explicit-inverse products cancel catastrophically.
inline DiffOp divide_by_S(const DiffOp& A, const DiffOp& S, int lo, int hi,
                          const GridSpec& grid) {
    const int K = -S.kmin();
    DiffOp X;
    for (int n = hi; n >= lo; --n) {
        CoeffFn xn = A.coeff(n);
        for (int m = 1; m <= K && n + m <= hi; ++m) {
            const CoeffFn& xk = X.coeff(n + m);
            if (xk.is_zero()) continue;
            xn -= mul_fn(xk, shift(S.coeff(-m), n + m, grid.epsilon), grid);
        }
        if (!xn.is_zero()) X.set(n, xn);
    }
    X.supp = {-kBandInf, hi};
    X.trust = {std::max(lo, A.trust.lo), std::min(hi, A.trust.hi)};
    X.ledger = A.ledger + S.ledger;
    return X;
}

// Solve X Sbar = A by forward substitution (Sbar has band [0, K] with
// invertible leading coefficient wt_0). X is computed on [lo, hi].
inline DiffOp divide_by_Sbar(const DiffOp& A, const DiffOp& Sbar, int lo, int hi,
                             const GridSpec& grid) {
    const int K = Sbar.kmax();
    DiffOp X;
    for (int n = lo; n <= hi; ++n) {
        CoeffFn xn = A.coeff(n);
        for (int m = 1; m <= K && n - m >= lo; ++m) {
            const CoeffFn& xk = X.coeff(n - m);
            if (xk.is_zero()) continue;
            xn -= mul_fn(xk, shift(Sbar.coeff(m), n - m, grid.epsilon), grid);
        }
        if (!xn.is_zero())
            X.set(n, div_fn(xn, shift(Sbar.coeff(0), n, grid.epsilon), grid));
    }
    X.supp = {lo, kBandInf};
    X.trust = {std::max(lo, A.trust.lo), std::min(hi, A.trust.hi)};
    X.ledger = A.ledger + Sbar.ledger;
    return X;
}

}  // namespace detail

// Solve S Lambda = L S and Sbar Lambda^{-1} = L Sbar order by order.
//
// S:    (1 - Lambda) w_m = u w_{m-1} + e^v w_{m-2}(x - eps),   w_0 = 1.
// Sbar: wt_0(x) = e^{v(x)} wt_0(x - eps) fixed through log wt_0, then
//       wt_m = wt_0 z_m with (1 - Lambda^{-1}) z_m = (u wt_{m-1} + wt_{m-2}(x + eps)) / wt_0.
//
// Every (1 - Lambda^{+-1}) inversion uses the zero-mean gauge; secular terms
// are absorbed into the x-polynomial part. Sbar is pinned by wt_0(0) = 1.
// The S-side recursion alone. It uses only u and e^v, so it tolerates a
// nonzero mean of v (and even a constant shift), unlike the Sbar gauge fixing.
inline DiffOp solve_dressing_S(const CoeffFn& u, const CoeffFn& ev, int K,
                               const GridSpec& grid) {
    const double eps = grid.epsilon;
    std::vector<CoeffFn> w(size_t(K) + 1);
    w[0] = CoeffFn::constant(cplx{1.0, 0.0});
    for (int m = 1; m <= K; ++m) {
        CoeffFn rhs = mul_fn(u, w[size_t(m - 1)], grid);
        if (m >= 2) rhs += mul_fn(ev, shift(w[size_t(m - 2)], -1, eps), grid);
        w[size_t(m)] = drop_small_degrees(invert_one_minus_shift(rhs, eps));
    }
    DiffOp S;
    for (int m = 0; m <= K; ++m) S.set(-m, w[size_t(m)]);
    S.mark_tail_below(-K);
    return S;
}

inline DressingPair solve_dressing(const CoeffFn& u, const CoeffFn& v, int K,
                                   const GridSpec& grid) {
    if (v.xdeg() > 0) throw SecularExponent("solve_dressing: v has secular content");
    if (grid.Dx < (K + 1) / 2)
        throw DegreeOverflow("solve_dressing: Dx must be >= ceil(K/2), raise Dx or lower K");
    const double eps = grid.epsilon;
    CoeffFn ev = exp_fn(v, grid);

    DressingPair P;
    P.order = K;

    // --- S ---
    P.S = solve_dressing_S(u, ev, K, grid);

    // --- Sbar, through the factorization Sbar = T wt_0 ---
    if (std::abs(mean(v)) > 1e-12)
        throw SecularExponent("solve_dressing: v must have zero mean for Sbar");
    // a sub-tolerance mean (roundoff from upstream arithmetic) would still
    // seed a secular term in log wt_0; remove it before solving
    CoeffFn vz = v - CoeffFn::constant(mean(v));
    CoeffFn logw0 = invert_one_minus_shift(vz, -eps);  // (1 - Lambda^{-1}) y = v
    if (logw0.xdeg() > 0) throw SecularExponent("solve_dressing: secular log wt_0");
    logw0 -= CoeffFn::constant(eval(logw0, 0.0));  // gauge: wt_0(0) = 1
    CoeffFn w0 = exp_fn(logw0, grid);
    P.logw0 = logw0;

    // Matching T e^v Lambda^{-1} = L T coefficientwise:
    //   t_m - e^{v - v(x+m eps)} t_m(x-eps) = (u t_{m-1} + t_{m-2}(x+eps)) e^{-v(x+m eps)}
    // with homogeneous solution phi_m = wt_0 / wt_0(x+m eps), so t_m = phi_m s_m
    // with (1 - Lambda^{-1}) s_m = q_m / phi_m.
    std::vector<CoeffFn> t(size_t(K) + 1);
    t[0] = CoeffFn::constant(cplx{1.0, 0.0});
    for (int m = 1; m <= K; ++m) {
        CoeffFn rhs = mul_fn(u, t[size_t(m - 1)], grid);
        if (m >= 2) rhs += shift(t[size_t(m - 2)], 1, eps);
        CoeffFn evm = exp_fn(shift(v, m, eps), grid);
        CoeffFn phim = exp_fn(logw0 - shift(logw0, m, eps), grid);
        CoeffFn q = div_fn(div_fn(rhs, evm, grid), phim, grid);
        CoeffFn s = invert_one_minus_shift(q, -eps);
        t[size_t(m)] = drop_small_degrees(mul_fn(phim, s, grid));
    }
    DiffOp T;
    for (int m = 0; m <= K; ++m) T.set(m, t[size_t(m)]);
    T.mark_tail_above(K);
    P.T = T;

    std::vector<CoeffFn> wt(size_t(K) + 1);
    DiffOp Sbar;
    for (int m = 0; m <= K; ++m) {
        wt[size_t(m)] = (m == 0) ? w0 : mul_fn(t[size_t(m)], shift(w0, m, eps), grid);
        Sbar.set(m, wt[size_t(m)]);
    }
    Sbar.mark_tail_above(K);
    P.Sbar = Sbar;
    CoeffFn w0inv = reciprocal_fn(w0, grid);

    // --- inverses ---
    DiffOp N = P.S - DiffOp::identity();  // band [-K, -1]
    P.Sinv = detail::neumann_inverse(N, -K, 0, grid);
    P.Sinv.mark_tail_below(-K);

    DiffOp Nt;
    Nt.ledger = Sbar.ledger;
    for (int m = 1; m <= K; ++m) Nt.set(m, mul_fn(wt[size_t(m)], w0inv, grid));
    Nt.mark_tail_above(K);
    DiffOp inv1 = detail::neumann_inverse(Nt, 0, K, grid);
    // Sbar^{-1} = (1 + Nt)^{-1} wt_0^{-1}
    P.Sbarinv = diffop_mul(inv1, DiffOp::from_fn(w0inv), grid);
    P.Sbarinv.restrict_band(0, K);
    P.Sbarinv.mark_tail_above(K);

    P.ledger = total_ledger(P.S) + total_ledger(P.Sbar) + total_ledger(P.Sinv) +
               total_ledger(P.Sbarinv);
    return P;
}

// Max of the norms of S Lambda - L S and Sbar Lambda^{-1} - L Sbar on the
// band [-(K-2), 1] implied by order K: two orders inside the truncation edge,
// where the solved coefficients are not dominated by the roundoff floor of the
// outermost secular polynomials. The high Lambda-powers of the Sbar side are
// certified separately through the conjugation residuals.
inline double dressing_residual(const DressingPair& P, const DiffOp& L, const GridSpec& grid) {
    int K = P.order;
    DiffOp r1 = diffop_mul(P.S, DiffOp::lambda_pow(1), grid) - diffop_mul(L, P.S, grid);
    DiffOp r2 = diffop_mul(P.Sbar, DiffOp::lambda_pow(-1), grid) - diffop_mul(L, P.Sbar, grid);
    BandInterval b{K < 2 ? -K : -(K - 2), 1};
    return std::max(op_norm_on_band(r1, detail::intersect(b, r1.trust), grid),
                    op_norm_on_band(r2, detail::intersect(b, r2.trust), grid));
}

namespace detail {

// S Lambda S^{-1} - L and Sbar Lambda^{-1} Sbar^{-1} - L. The quotients are
// taken by triangular division, not via explicit inverses.
inline std::pair<DiffOp, DiffOp> conjugation_ops(const DressingPair& P, const DiffOp& L,
                                                 const GridSpec& grid) {
    int K = P.order;
    DiffOp a1 = diffop_mul(P.S, DiffOp::lambda_pow(1), grid);
    DiffOp c1 = divide_by_S(a1, P.S, 1 - K, 1, grid) - L;
    // Sbar Lambda^{-1} Sbar^{-1} = T (e^v Lambda^{-1}) T^{-1} since
    // wt_0 / wt_0(x-eps) = e^v; conjugating through T keeps coefficients small.
    CoeffFn ev = exp_fn(P.logw0 - shift(P.logw0, -1, grid.epsilon), grid);
    DiffOp a2 = diffop_mul(P.T, DiffOp::from_fn(ev, -1), grid);
    DiffOp c2 = divide_by_Sbar(a2, P.T, -1, K - 1, grid) - L;
    return {c1, c2};
}

}  // namespace detail

inline std::pair<double, double> conjugation_residuals(const DressingPair& P, const DiffOp& L,
                                                       const GridSpec& grid) {
    auto [c1, c2] = detail::conjugation_ops(P, L, grid);
    return {op_norm_trusted(c1, grid), op_norm_trusted(c2, grid)};
}

// log_+ L = S (eps d) S^{-1} = eps d - eps S_x S^{-1}; the d = 0 part has a
// strictly negative Lambda-band.
inline MixedOp log_plus(const DressingPair& P, const GridSpec& grid) {
    DiffOp A = ddx_op(P.S) * cplx{-grid.epsilon, 0.0};
    DiffOp W = detail::divide_by_S(A, P.S, -P.order, -1, grid);
    W.mark_tail_below(-P.order);
    MixedOp r = MixedOp::from_diffop(W);
    r.set_part(1, DiffOp::identity());
    return r;
}

// log_- L = -Sbar (eps d) Sbar^{-1} = -eps d + eps Sbar_x Sbar^{-1}; the d = 0
// part has a non-negative Lambda-band.
inline MixedOp log_minus(const DressingPair& P, const GridSpec& grid) {
    // eps Sbar_x Sbar^{-1} = eps T_x T^{-1} + T (eps (log wt_0)_x) T^{-1}
    DiffOp A = ddx_op(P.T) * cplx{grid.epsilon, 0.0} +
               diffop_mul(P.T, DiffOp::from_fn(ddx(P.logw0) * cplx{grid.epsilon, 0.0}), grid);
    DiffOp W = detail::divide_by_Sbar(A, P.T, 0, P.order, grid);
    W.mark_tail_above(P.order);
    MixedOp r = MixedOp::from_diffop(W);
    r.set_part(1, DiffOp::identity() * cplx{-1.0, 0.0});
    return r;
}

// ---------------------------------------------------------------------------
// Two-resolution certification.
//
// The Lambda^k coefficients produced by the cascaded triangular solves are
// effectively order-k results: low k is accurate to near machine precision,
// while high k accumulates roundoff amplified through secular intermediates.
// Recomputing the same quantity at reduced internal product resolution makes
// that roundoff take a different value, so the contiguous band (grown from the
// low-order anchor) on which the two runs agree to `tol` is reliable to ~tol;
// trust is clipped there.
// ---------------------------------------------------------------------------

struct CertifiedDressing {
    DressingPair fine;   // solved at grid resolution
    DressingPair check;  // solved at reduced Jwork
    GridSpec coarse;
    double tol = 1e-9;
};

inline CertifiedDressing solve_dressing_certified(const CoeffFn& u, const CoeffFn& v, int K,
                                                  const GridSpec& grid, double tol = 1e-9) {
    CertifiedDressing C;
    C.coarse = grid;
    C.coarse.Jwork = std::max(grid.Jmax, grid.Jwork - 4);
    C.tol = tol;
    C.fine = solve_dressing(u, v, K, grid);
    C.check = solve_dressing(u, v, K, C.coarse);
    return C;
}

namespace detail {

// Largest contiguous band grown from `anchor` toward `dir` on which the two
// operators agree coefficientwise to `tol`.
inline BandInterval agreement_band(const DiffOp& a, const DiffOp& b, int anchor, int dir,
                                   double tol, const GridSpec& grid) {
    int edge = anchor - dir;
    for (int k = anchor; a.trust.contains(k); k += dir) {
        if (sup_norm(a.coeff(k) - b.coeff(k), grid) > tol) break;
        edge = k;
    }
    BandInterval band{-kBandInf, kBandInf};
    if (dir > 0) { band.lo = anchor; band.hi = edge; }
    else         { band.lo = edge;   band.hi = anchor; }
    return band;
}

inline DiffOp certify(DiffOp fine, const DiffOp& check, int anchor, int dir, double tol,
                      const GridSpec& grid) {
    fine.trust = intersect(fine.trust, agreement_band(fine, check, anchor, dir, tol, grid));
    return fine;
}

}  // namespace detail

inline MixedOp log_plus(const CertifiedDressing& C, const GridSpec& grid) {
    MixedOp r = log_plus(C.fine, grid);
    r.set_part(0, detail::certify(r.part(0), log_plus(C.check, C.coarse).part(0), -1, -1,
                                  C.tol, grid));
    return r;
}

inline MixedOp log_minus(const CertifiedDressing& C, const GridSpec& grid) {
    MixedOp r = log_minus(C.fine, grid);
    r.set_part(0, detail::certify(r.part(0), log_minus(C.check, C.coarse).part(0), 0, +1,
                                  C.tol, grid));
    return r;
}

// Conjugation residuals measured only on the cross-check agreement bands.
inline std::pair<double, double> conjugation_residuals(const CertifiedDressing& C,
                                                       const DiffOp& L, const GridSpec& grid) {
    auto [f1, f2] = detail::conjugation_ops(C.fine, L, grid);
    auto [g1, g2] = detail::conjugation_ops(C.check, L, C.coarse);
    DiffOp c1 = detail::certify(f1, g1, 1, -1, C.tol, grid);
    DiffOp c2 = detail::certify(f2, g2, -1, +1, C.tol, grid);
    return {op_norm_trusted(c1, grid), op_norm_trusted(c2, grid)};
}

}  // namespace meth

#endif
