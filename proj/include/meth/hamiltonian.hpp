#ifndef METH_HAMILTONIAN_HPP
#define METH_HAMILTONIAN_HPP

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "meth/hierarchy.hpp"

namespace meth {

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

struct Density {
    int beta = 0;
    int n = 0;
    CoeffFn value;
};

// h_{0,n} = (1/(n+1)!) Res L^{n+1}
// h_{1,n} = (2/n!)  Res[L^n (log_+L - c_n)]
// h_{2,n} = (2/n!)  Res[L^n (log_-L - c_n)]      (as printed)
//           alt:  -(2/(n+1)!) Res[L^{n+1} (log_-L - c_{n+1})]  (flow-matched)
// The c_n subtraction is kept outside the operator product so it cannot
// poison trust intervals (same pitfall as in flow_basis).
inline CoeffFn density_value(const CoeffFn& u, const CoeffFn& v, const DressingPair& P,
                             int beta, int n, const GridSpec& grid, bool alt = false) {
    DiffOp L = lax_operator(u, exp_fn(v, grid));
    if (beta == 0)
        return residue(diffop_pow(L, n + 1, grid)) * cplx{1.0 / factorial(n + 1), 0.0};
    MixedOp logL = beta == 1 ? log_plus(P, grid) : log_minus(P, grid);
    int m = (beta == 2 && alt) ? n + 1 : n;
    double c = (beta == 2 && alt) ? -2.0 / factorial(n + 1) : 2.0 / factorial(n);
    DiffOp Lm = diffop_pow(L, m, grid);
    CoeffFn r = residue(op_mul(MixedOp::from_diffop(Lm), logL, grid)) -
                residue(Lm) * cplx{harmonic(m), 0.0};
    return r * cplx{c, 0.0};
}

inline Density density(const LatticeState& st, const DressingPair& P, int beta, int n,
                       bool alt = false) {
    return {beta, n, density_value(st.u, st.v, P, beta, n, st.grid, alt)};
}

// Exact integral over one period of a coefficient function, secular terms
// included: int_0^{2pi} x^d e^{ijx} dx by the usual recursion.
inline cplx integrate_period(const CoeffFn& f) {
    cplx total{};
    for (int d = 0; d <= f.xdeg(); ++d) {
        for (int j = -f.half(); j <= f.half(); ++j) {
            cplx c = f.coeff(d, j);
            if (c == cplx{}) continue;
            cplx I;
            if (j == 0) {
                I = cplx{std::pow(kPeriod, d + 1) / (d + 1), 0.0};
            } else {
                I = cplx{};  // d = 0 case
                cplx ij{0.0, double(j)};
                for (int b = 1; b <= d; ++b)  // build I(b, j) from I(b-1, j)
                    I = (cplx{std::pow(kPeriod, b), 0.0} - cplx{double(b), 0.0} * I) / ij;
            }
            total += c * I;
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Functionals and variational derivatives
// ---------------------------------------------------------------------------

// A functional of the state, complex-valued so that mode-space perturbations
// (which are complex directions) differentiate cleanly.
using Functional = std::function<cplx(const CoeffFn&, const CoeffFn&)>;

struct VarGrad {
    CoeffFn dHdu, dHdv;
};

// H = int h_{beta,n} dx as a functional; K is the dressing order used per
// evaluation (the densities here depend only on the first few dressing
// orders, so a moderate K is exact enough and much cheaper).
inline Functional density_functional(int beta, int n, int K, const GridSpec& grid,
                                     bool alt = false) {
    return [=](const CoeffFn& u, const CoeffFn& v) {
        DressingPair P;
        if (beta != 0) P = solve_dressing(u, v, K, grid);
        return integrate_period(density_value(u, v, P, beta, n, grid, alt));
    };
}

// Mode-space variational derivative: 4th-order central differences of H
// along every Fourier mode e^{ijx} of u and v, j up to `modes` (defaults to
// Jmax: gradients of products like e^v carry modes well beyond the field
// band J, and truncating them is visible at the 1e-5 level). The j = 0
// direction of v is omitted: v must stay mean-free for the dressing, and
// both bracket kernels annihilate dHdv constants anyway. The j = 0
// direction of u is kept -- pb2 does see the dHdu constant.
inline VarGrad var_deriv(const Functional& H, const CoeffFn& u, const CoeffFn& v,
                         const GridSpec& grid, double step = 1e-3, int modes = -1) {
    VarGrad g;
    const int M = modes < 0 ? grid.Jmax : modes;
    for (int wu = 0; wu < 2; ++wu) {
        CoeffFn& r = wu ? g.dHdu : g.dHdv;
        for (int j = -M; j <= M; ++j) {
            if (j == 0 && !wu) continue;
            auto at = [&](double s) {
                CoeffFn pert = CoeffFn::harmonic_mode(j, cplx{s, 0.0});
                return wu ? H(u + pert, v) : H(u, v + pert);
            };
            cplx d = (at(-2 * step) - at(2 * step) +
                      (at(step) - at(-step)) * cplx{8.0, 0.0}) /
                     cplx{12.0 * step, 0.0};
            // delta H = d * int (dH/df) e^{ijx} dx picks the -j mode
            cplx c = d / cplx{kPeriod, 0.0};
            if (std::abs(c) > 1e-13) r.add_coeff(0, -j, c);
        }
        r.trim();
    }
    return g;
}

// The momentum-type functional generating the spatial flow t_{1,0}:
//   H = 2 eps int u (1 - Lambda^{-1})^{-1} v_x dx = 2 eps int u (log wt_0)_x dx
// with closed-form gradients (delta/delta u, delta/delta v).
inline cplx momentum_value(const CoeffFn& u, const CoeffFn& v, const GridSpec& grid) {
    CoeffFn vz = v - CoeffFn::constant(mean(v));
    CoeffFn y = invert_one_minus_shift(vz, -grid.epsilon);  // (1-Lambda^{-1})^{-1} v
    return integrate_period(mul_fn(u, ddx(y), grid)) * cplx{2.0 * grid.epsilon, 0.0};
}

inline VarGrad momentum_grad(const CoeffFn& u, const CoeffFn& v, const GridSpec& grid) {
    const double e = grid.epsilon;
    CoeffFn vz = v - CoeffFn::constant(mean(v));
    CoeffFn w1 = invert_one_minus_shift(u - CoeffFn::constant(mean(u)), e);
    VarGrad g;
    g.dHdu = ddx(invert_one_minus_shift(vz, -e)) * cplx{2.0 * e, 0.0};
    g.dHdv = ddx(w1) * cplx{-2.0 * e, 0.0};
    return g;
}

// ---------------------------------------------------------------------------
// Poisson brackets
// ---------------------------------------------------------------------------

// pb1:  du = (1/eps)(Lambda - 1) dHdv,   dv = (1/eps)(1 - Lambda^{-1}) dHdu
inline std::pair<CoeffFn, CoeffFn> pb1_flow(const VarGrad& g, const GridSpec& grid) {
    const double e = grid.epsilon;
    cplx s{1.0 / e, 0.0};
    CoeffFn du = (shift(g.dHdv, 1, e) - g.dHdv) * s;
    CoeffFn dv = (g.dHdu - shift(g.dHdu, -1, e)) * s;
    return {du, dv};
}

// pb2 kernels (the v-row adjoints are fixed by skew-symmetry):
//   du = (1/eps)[ e^{v(x+eps)} dHdu(x+eps) - e^{v} dHdu(x-eps) ]
//      + (1/eps) u (Lambda - 1) dHdv
//   dv = (1/eps)(1 - Lambda^{-1})(u dHdu)
//      + (1/eps)[ dHdv(x+eps) - dHdv(x-eps) ]
inline std::pair<CoeffFn, CoeffFn> pb2_flow(const LatticeState& st, const VarGrad& g) {
    const GridSpec& grid = st.grid;
    const double e = grid.epsilon;
    cplx s{1.0 / e, 0.0};
    CoeffFn ev = exp_fn(st.v, grid);
    CoeffFn du = (mul_fn(shift(ev, 1, e), shift(g.dHdu, 1, e), grid) -
                  mul_fn(ev, shift(g.dHdu, -1, e), grid)) * s +
                 mul_fn(st.u, shift(g.dHdv, 1, e) - g.dHdv, grid) * s;
    CoeffFn uu = mul_fn(st.u, g.dHdu, grid);
    CoeffFn dv = (uu - shift(uu, -1, e)) * s + (shift(g.dHdv, 1, e) - shift(g.dHdv, -1, e)) * s;
    return {du, dv};
}

// L2 pairing <g1, P g2> used by the skew-symmetry and Jacobi property tests.
inline cplx pair_flow(const VarGrad& g, const std::pair<CoeffFn, CoeffFn>& fl,
                      const GridSpec& grid) {
    return integrate_period(mul_fn(g.dHdu, fl.first, grid)) +
           integrate_period(mul_fn(g.dHdv, fl.second, grid));
}

// Jacobi residual for pb2 on linear functionals (constant gradients): the
// cyclic sum {F,{G,H}} + cyc, with the inner bracket's state dependence
// differentiated in mode space. For pb1 the inner bracket is
// state-independent and the sum vanishes identically.
inline double pb2_jacobi_residual(const LatticeState& st, const VarGrad& g1,
                                  const VarGrad& g2, const VarGrad& g3) {
    auto bracket_grad = [&](const VarGrad& a, const VarGrad& b) {
        Functional F = [&, a, b](const CoeffFn& uu, const CoeffFn& vv) {
            LatticeState s{uu, vv, {}, st.grid};
            return pair_flow(a, pb2_flow(s, b), st.grid);
        };
        return var_deriv(F, st.u, st.v, st.grid);
    };
    cplx total = pair_flow(g1, pb2_flow(st, bracket_grad(g2, g3)), st.grid) +
                 pair_flow(g2, pb2_flow(st, bracket_grad(g3, g1)), st.grid) +
                 pair_flow(g3, pb2_flow(st, bracket_grad(g1, g2)), st.grid);
    return std::abs(total);
}

// ---------------------------------------------------------------------------
// Hamiltonian form of the flows (calibration C1)
// ---------------------------------------------------------------------------

struct HamMatch {
    double residual = 0.0;
    std::string generator;  // which candidate and scale were selected
    double scale = 1.0;
};

// Match the Lax flow (beta, n) against pb1 of candidate generating
// functionals: int h_{beta,n}, int h_{beta,n+1} (and the alt form for
// beta = 2), at scales {1, 1/eps, eps}; the spatial flow additionally gets
// the momentum-type functional. The smallest residual and its selection are
// returned; selection is stable because the spread between candidates is
// many orders of magnitude.
inline HamMatch hamiltonian_match_residual(const LatticeState& st, const DressingPair& P,
                                           FlowSpec f, int Kgrad = 6) {
    const GridSpec& grid = st.grid;
    FlowRHS r = lax_rhs(st, P, f, 1e99);

    struct Cand {
        std::string name;
        VarGrad g;
    };
    // dressing-backed candidates get a reduced mode range: each of their
    // gradient modes costs a dressing solve, and their residuals bottom out
    // far above the ~1e-5 mode-truncation level regardless
    const int dressing_modes = grid.J + 2;
    std::vector<Cand> cands;
    for (int id = 0; id < 2; ++id) {
        int m = f.n + id;
        Functional H = density_functional(f.alpha, m, Kgrad, grid);
        cands.push_back({"int h_{" + std::to_string(f.alpha) + "," + std::to_string(m) + "}",
                         var_deriv(H, st.u, st.v, grid, 1e-3,
                                   f.alpha == 0 ? -1 : dressing_modes)});
    }
    if (f.alpha == 2) {
        Functional H = density_functional(f.alpha, f.n, Kgrad, grid, /*alt=*/true);
        cands.push_back({"int h_{2," + std::to_string(f.n) + "} (alt)",
                         var_deriv(H, st.u, st.v, grid, 1e-3, dressing_modes)});
    }
    if (f.alpha == 1 && f.n == 0)
        cands.push_back({"momentum", momentum_grad(st.u, st.v, grid)});

    HamMatch best;
    best.residual = std::numeric_limits<double>::infinity();
    for (auto& c : cands) {
        auto [du, dv] = pb1_flow(c.g, grid);
        for (double s : {1.0, 1.0 / grid.epsilon, grid.epsilon}) {
            double res = std::max(sup_norm(r.du - du * cplx{s, 0.0}, grid),
                                  sup_norm(r.dv - dv * cplx{s, 0.0}, grid));
            if (res < best.residual) best = {res, c.name, s};
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Bi-Hamiltonian recursion
// ---------------------------------------------------------------------------

// branch 0:  pb2(grad H_{0,n-1}) - (n+1) pb1(grad H_{0,n})
// branch 1:  pb2(grad H_{1,n-1}) - n pb1(grad H_{1,n}) - 2 pb1(grad H_{0,n-1})
// branch 2:  pb2(grad H_{2,n-1}) - n pb1(grad H_{2,n}) - 2 pb1(grad H_{2,n-1})
//            (as printed; pass substitute_branch0 to test the H_{0,n-1}
//             variant of the last term)
// H_{beta,m} = int h_{beta,m+1} dx throughout: the same off-by-one that
// calibration C1 fixes for the flow pairing (verified exactly for branch 0,
// n = 1: pb2(int h_{0,1}) = 2 pb1(int h_{0,2}) coefficient by coefficient,
// while no constant multiple relates the unshifted pair).
inline double recursion_residual(const LatticeState& st, int branch, int n, int Kgrad = 6,
                                 bool substitute_branch0 = false) {
    const GridSpec& grid = st.grid;
    auto grad = [&](int beta, int m) {
        return var_deriv(density_functional(beta, m + 1, Kgrad, grid), st.u, st.v, grid,
                         1e-3, beta == 0 ? -1 : grid.J + 2);
    };
    auto [du2, dv2] = pb2_flow(st, grad(branch, n - 1));
    auto [du1, dv1] = pb1_flow(grad(branch, n), grid);
    double c1 = branch == 0 ? n + 1.0 : double(n);
    CoeffFn ru = du2 - du1 * cplx{c1, 0.0};
    CoeffFn rv = dv2 - dv1 * cplx{c1, 0.0};
    if (branch == 1) {
        auto [du0, dv0] = pb1_flow(grad(0, n - 1), grid);
        ru -= du0 * cplx{2.0, 0.0};
        rv -= dv0 * cplx{2.0, 0.0};
    } else if (branch == 2) {
        auto [du0, dv0] = pb1_flow(grad(substitute_branch0 ? 0 : 2, n - 1), grid);
        ru -= du0 * cplx{2.0, 0.0};
        rv -= dv0 * cplx{2.0, 0.0};
    }
    return std::max(sup_norm(ru, grid), sup_norm(rv, grid));
}

// ---------------------------------------------------------------------------
// Tau symmetry and the tau-function relations
// ---------------------------------------------------------------------------

// d h_{alpha,m} / d t_{beta,n} by the chain rule: a central difference of the
// density along the flow vector field (no time stepping).
inline CoeffFn density_time_derivative(const LatticeState& st, std::pair<int, int> dens,
                                       FlowSpec f, int K = 8, double step = 1e-5) {
    const GridSpec& grid = st.grid;
    FlowRHS r = lax_rhs(st, f, K, 1e99);
    auto at = [&](double s) {
        CoeffFn u = st.u + r.du * cplx{s, 0.0};
        CoeffFn v = st.v + r.dv * cplx{s, 0.0};
        v -= CoeffFn::constant(mean(v));  // flows with a dv-mean defect drift off the slice
        DressingPair P;
        if (dens.first != 0) P = solve_dressing(u, v, K, grid);
        return density_value(u, v, P, dens.first, dens.second, grid);
    };
    return (at(step) - at(-step)) * cplx{1.0 / (2.0 * step), 0.0};
}

inline double tau_symmetry_residual(const LatticeState& st, FlowSpec fa, FlowSpec fb,
                                    int K = 8) {
    CoeffFn lhs = density_time_derivative(st, {fa.alpha, fa.n}, fb, K);
    CoeffFn rhs = density_time_derivative(st, {fb.alpha, fb.n}, fa, K);
    return sup_norm(lhs - rhs, st.grid);
}

// Closedness of the tau 1-form for a pair of flows: the cross-derivatives of
// g_{alpha,n} = (Lambda-1)^{-1} h_{alpha,n} must agree for a log tau to
// exist. Equivalent to tau symmetry after the (Lambda-1)^{-1}.
inline double tau_closedness_residual(const LatticeState& st, FlowSpec fa, FlowSpec fb,
                                      int K = 8) {
    const GridSpec& grid = st.grid;
    CoeffFn lhs = density_time_derivative(st, {fa.alpha, fa.n}, fb, K);
    CoeffFn rhs = density_time_derivative(st, {fb.alpha, fb.n}, fa, K);
    auto inv = [&](const CoeffFn& f) {
        return invert_one_minus_shift(f - CoeffFn::constant(mean(f)), grid.epsilon) *
               cplx{-1.0, 0.0};
    };
    return sup_norm(inv(lhs) - inv(rhs), grid);
}

// The dependent-variable relations: with D = (Lambda-1)(1-Lambda^{-1}),
//   v = D log tau                        (product relation)
//   d log tau / dt_{0,0} = (Lambda-1)^{-1} u   (quotient relation; the
//      paper's eps prefactor is absorbed into its time normalization,
//      calibration C1)
// log tau is pinned at t = 0 by the v-relation, advanced along the
// trajectory by trapezoid integration of the quotient relation, and the
// v-relation is re-checked at the end. Returns sup|v - D log tau| there.
inline double tau_relations_residual(const Trajectory& traj, double dt) {
    const GridSpec& grid = traj.states.front().grid;
    const double e = grid.epsilon;
    auto dlog = [&](const LatticeState& s) {
        // (Lambda - 1)^{-1} u
        return invert_one_minus_shift(s.u - CoeffFn::constant(mean(s.u)), e) *
               cplx{-1.0, 0.0};
    };
    auto Dinv = [&](const CoeffFn& f) {
        CoeffFn y = invert_one_minus_shift(f - CoeffFn::constant(mean(f)), e) * cplx{-1.0, 0.0};
        return invert_one_minus_shift(y, -e);
    };
    const LatticeState& s1 = traj.states.back();
    CoeffFn logtau = Dinv(traj.states.front().v);
    for (size_t i = 0; i + 1 < traj.states.size(); ++i)
        logtau += (dlog(traj.states[i]) + dlog(traj.states[i + 1])) * cplx{dt / 2.0, 0.0};
    CoeffFn D_logtau = shift(logtau, 1, e) - logtau * cplx{2.0, 0.0} + shift(logtau, -1, e);
    return sup_norm(s1.v - D_logtau, grid);
}

// Relative drift of the conserved quantities int h_{beta,n} along a
// trajectory: max over recorded observable columns of |H(t) - H(0)| /
// max(1, |H(0)|).
inline double conservation_drift(const Trajectory& traj) {
    double worst = 0.0;
    if (traj.observables.empty()) return 0.0;
    size_t cols = traj.observables.front().size();
    for (size_t c = 0; c < cols; ++c) {
        double h0 = traj.observables.front()[c];
        for (auto& row : traj.observables)
            worst = std::max(worst, std::abs(row[c] - h0) / std::max(1.0, std::abs(h0)));
    }
    return worst;
}

}  // namespace meth

#endif
