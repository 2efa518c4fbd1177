#ifndef METH_HIERARCHY_HPP
#define METH_HIERARCHY_HPP

#include <functional>
#include <utility>
#include <vector>

#include "meth/dressing.hpp"

namespace meth {

struct LatticeState {
    CoeffFn u, v;
    std::map<std::pair<int, int>, double> times;
    GridSpec grid;
};

// Flow index (alpha, n): alpha = 0 the classical tower, 1 the log_+ tower,
// 2 the log_- tower.
struct FlowSpec {
    int alpha = 0;
    int n = 0;
};

struct FlowRHS {
    CoeffFn du, dv;
    double anomaly = 0.0;  // norm of the [A, L] parts that must vanish
};

inline DiffOp diffop_pow(const DiffOp& a, int p, const GridSpec& grid) {
    DiffOp r = DiffOp::identity();
    for (int i = 0; i < p; ++i) r = diffop_mul(r, a, grid);
    return r;
}

// B_{alpha,n}; `logL` is log_+L for alpha = 1, log_-L for alpha = 2, unused
// for alpha = 0.
//   B_{0,n} =  L^{n+1}/(n+1)!
//   B_{1,n} =  (2/n!)      L^n     (log_+L - c_n)
//   B_{2,n} = -(2/(n+1)!)  L^{n+1} (log_-L - c_{n+1})
inline MixedOp flow_basis(const DiffOp& L, const MixedOp& logL, FlowSpec f,
                          const GridSpec& grid) {
    if (f.alpha == 0) {
        return MixedOp::from_diffop(diffop_pow(L, f.n + 1, grid) *
                                    cplx{1.0 / factorial(f.n + 1), 0.0});
    }
    // subtract the harmonic constant as a separate product: folding it into
    // logL first would merge supp up to Lambda^0 while trust stays negative,
    // and the product trust rule would then wipe out the usable band
    if (f.alpha == 1) {
        MixedOp Ln = MixedOp::from_diffop(diffop_pow(L, f.n, grid));
        return (op_mul(Ln, logL, grid) - Ln * cplx{harmonic(f.n), 0.0}) *
               cplx{2.0 / factorial(f.n), 0.0};
    }
    MixedOp Ln = MixedOp::from_diffop(diffop_pow(L, f.n + 1, grid));
    return (op_mul(Ln, logL, grid) - Ln * cplx{harmonic(f.n + 1), 0.0}) *
           cplx{-2.0 / factorial(f.n + 1), 0.0};
}

// A_{0,n} = (B_{0,n})_+, A_{1,n} = (B_{1,n})_+, A_{2,n} = (B_{2,n})_-
// (the overall minus of B_{2,n} is folded into the basis operator).
inline MixedOp flow_generator(const DiffOp& L, const MixedOp& logL, FlowSpec f,
                              const GridSpec& grid) {
    MixedOp B = flow_basis(L, logL, f, grid);
    return f.alpha == 2 ? project_minus(B) : project_plus(B, grid);
}

inline MixedOp flow_generator(const LatticeState& st, const DressingPair& P, FlowSpec f) {
    const GridSpec& grid = st.grid;
    DiffOp L = lax_operator(st.u, exp_fn(st.v, grid));
    MixedOp logL;
    if (f.alpha == 1) logL = log_plus(P, grid);
    if (f.alpha == 2) logL = log_minus(P, grid);
    return flow_generator(L, logL, f, grid);
}

namespace detail {

// du, dv and the anomaly from the commutator R = [A, L]: a valid flow has
// R = du Lambda^0 + (dv e^v) Lambda^{-1} and nothing else.
inline FlowRHS extract_rhs(const MixedOp& R, const CoeffFn& ev, const GridSpec& grid) {
    FlowRHS r;
    const DiffOp& R0 = R.part(0);
    r.du = R0.coeff(0);
    r.dv = div_fn(R0.coeff(-1), ev, grid);
    for (auto& [k, f] : R0.coeffs())
        if (k != 0 && k != -1 && R0.trust.contains(k))
            r.anomaly = std::max(r.anomaly, sup_norm(f, grid));
    for (auto& [d, p] : R.parts())
        if (d >= 1) r.anomaly = std::max(r.anomaly, op_norm_trusted(p, grid));
    return r;
}

}  // namespace detail

// Tolerance above which lax_rhs throws. The log_+/log_- towers beyond the
// spatial flow carry a structural Lambda^{<=-2} commutator remainder of order
// eps * L_x-products; callers that evolve them anyway pass an explicit
// tolerance and own that choice.
inline constexpr double kAnomalyTol = 1e-6;

inline FlowRHS lax_rhs(const LatticeState& st, const DressingPair& P, FlowSpec f,
                       double anomaly_tol = kAnomalyTol) {
    const GridSpec& grid = st.grid;
    CoeffFn ev = exp_fn(st.v, grid);
    DiffOp L = lax_operator(st.u, ev);
    MixedOp A = flow_generator(st, P, f);
    MixedOp R = commutator(A, MixedOp::from_diffop(L), grid);
    FlowRHS r = detail::extract_rhs(R, ev, grid);
    if (r.anomaly > anomaly_tol)
        throw AnomalyExceeded("lax_rhs: anomaly " + std::to_string(r.anomaly) +
                              " for flow (" + std::to_string(f.alpha) + "," +
                              std::to_string(f.n) + ")");
    return r;
}

// Convenience: solve the dressing internally (alpha = 0 needs none).
inline FlowRHS lax_rhs(const LatticeState& st, FlowSpec f, int K = 10,
                       double anomaly_tol = kAnomalyTol) {
    if (f.alpha == 0) {
        DressingPair none;
        return lax_rhs(st, none, f, anomaly_tol);
    }
    DressingPair P = solve_dressing(st.u, st.v, K, st.grid);
    return lax_rhs(st, P, f, anomaly_tol);
}

using Observable = std::function<double(const LatticeState&)>;

struct Trajectory {
    std::vector<LatticeState> states;                // steps + 1 entries
    std::vector<std::vector<double>> observables;    // one row per state
};

// Classical RK4 on the Fourier coefficients of (u, v); the dressing is
// re-solved from scratch at every stage, so no gauge state is co-evolved.
inline Trajectory evolve(const LatticeState& st0, FlowSpec f, double dt, int steps,
                         int K = 10, const std::vector<Observable>& obs = {},
                         double anomaly_tol = kAnomalyTol) {
    auto rhs = [&](const CoeffFn& u, const CoeffFn& v) {
        LatticeState s{u, v, {}, st0.grid};
        return lax_rhs(s, f, K, anomaly_tol);
    };
    Trajectory traj;
    LatticeState st = st0;
    auto record = [&](const LatticeState& s) {
        traj.states.push_back(s);
        std::vector<double> row;
        row.reserve(obs.size());
        for (auto& o : obs) row.push_back(o(s));
        traj.observables.push_back(std::move(row));
    };
    record(st);
    for (int step = 0; step < steps; ++step) {
        if (sup_norm(st.u, st.grid) > 1e6 || sup_norm(st.v, st.grid) > 1e6)
            throw BlowUp("evolve: field norm exceeds 1e6");
        FlowRHS k1 = rhs(st.u, st.v);
        FlowRHS k2 = rhs(st.u + k1.du * cplx{dt / 2, 0}, st.v + k1.dv * cplx{dt / 2, 0});
        FlowRHS k3 = rhs(st.u + k2.du * cplx{dt / 2, 0}, st.v + k2.dv * cplx{dt / 2, 0});
        FlowRHS k4 = rhs(st.u + k3.du * cplx{dt, 0}, st.v + k3.dv * cplx{dt, 0});
        cplx w{dt / 6.0, 0.0};
        st.u = symmetrize_real(st.u + (k1.du + k2.du * cplx{2, 0} + k3.du * cplx{2, 0} + k4.du) * w);
        st.v = symmetrize_real(st.v + (k1.dv + k2.dv * cplx{2, 0} + k3.dv * cplx{2, 0} + k4.dv) * w);
        st.times[{f.alpha, f.n}] += dt;
        record(st);
    }
    return traj;
}

// Finite-difference estimate of the commutator of two flows: compose one
// RK4 step of each in both orders and compare, normalized by h^2.
inline double flow_commutator_residual(const LatticeState& st, FlowSpec f1, FlowSpec f2,
                                       double h, int K = 10,
                                       double anomaly_tol = kAnomalyTol) {
    auto step = [&](const LatticeState& s, FlowSpec f) {
        return evolve(s, f, h, 1, K, {}, anomaly_tol).states.back();
    };
    LatticeState a = step(step(st, f1), f2);
    LatticeState b = step(step(st, f2), f1);
    return std::max(sup_norm(a.u - b.u, st.grid), sup_norm(a.v - b.v, st.grid)) / (h * h);
}

namespace detail {

// Solve S X = A for unitriangular S (band [-K, 0], w_0 = 1), top down:
// X_n = A_n - sum_{m>=1} w_m X_{n+m}(x - m eps).
inline DiffOp divide_left_by_S(const DiffOp& A, const DiffOp& S, int lo, int hi,
                               const GridSpec& grid) {
    const int K = -S.kmin();
    DiffOp X;
    for (int n = hi; n >= lo; --n) {
        CoeffFn xn = A.coeff(n);
        for (int m = 1; m <= K && n + m <= hi; ++m) {
            const CoeffFn& xk = X.coeff(n + m);
            if (xk.is_zero()) continue;
            xn -= mul_fn(S.coeff(-m), shift(xk, -m, grid.epsilon), grid);
        }
        if (!xn.is_zero()) X.set(n, xn);
    }
    X.supp = {-kBandInf, hi};
    X.trust = {std::max(lo, A.trust.lo), std::min(hi, A.trust.hi)};
    return X;
}

// Solve T X = A for unitriangular T (band [0, K], t_0 = 1), bottom up:
// X_n = A_n - sum_{m>=1} t_m X_{n-m}(x + m eps).
inline DiffOp divide_left_by_T(const DiffOp& A, const DiffOp& T, int lo, int hi,
                               const GridSpec& grid) {
    const int K = T.kmax();
    DiffOp X;
    for (int n = lo; n <= hi; ++n) {
        CoeffFn xn = A.coeff(n);
        for (int m = 1; m <= K && n - m >= lo; ++m) {
            const CoeffFn& xk = X.coeff(n - m);
            if (xk.is_zero()) continue;
            xn -= mul_fn(T.coeff(m), shift(xk, m, grid.epsilon), grid);
        }
        if (!xn.is_zero()) X.set(n, xn);
    }
    X.supp = {lo, kBandInf};
    X.trust = {std::max(lo, A.trust.lo), std::min(hi, A.trust.hi)};
    return X;
}

// B acting on a dressing operator: difference parts compose, derivation
// parts differentiate the coefficients (the ((eps d)^d W) reading; forced by
// the spatial flow, whose generator 2 eps d must act as 2 eps W_x).
inline DiffOp act_on_operator(const MixedOp& B, const DiffOp& W, const GridSpec& grid) {
    DiffOp r;
    for (auto& [d, p] : B.parts()) {
        DiffOp Wd = W;
        for (int i = 0; i < d; ++i) Wd = ddx_op(Wd) * cplx{grid.epsilon, 0.0};
        r = r + diffop_mul(p, Wd, grid);
    }
    return r;
}

// Drop the x-constant Fourier mode of every coefficient: the component a
// re-pinned gauge is allowed to absorb.
inline double nonconstant_norm(const DiffOp& a, const GridSpec& grid) {
    double m = 0.0;
    for (auto& [k, f] : a.coeffs()) {
        if (!a.trust.contains(k)) continue;
        m = std::max(m, sup_norm(f - CoeffFn::constant(mean(f)), grid));
    }
    return m;
}

}  // namespace detail

// Residuals of the dressing evolution equations along flow f:
//   dS/dt = -(B)_- S,   dSbar/dt = (B)_+ |> Sbar
// (|> is the action above). dS/dt is a Richardson-extrapolated central
// difference of the re-pinned solves, so each side is compared after
// quotienting by the gauge drift: the residual is left-divided by S (resp.
// T) and its per-band constant modes are dropped.
inline std::pair<double, double> sato_residual(const LatticeState& st, FlowSpec f,
                                               double h, int K = 10,
                                               double anomaly_tol = kAnomalyTol) {
    const GridSpec& grid = st.grid;
    auto pair_at = [&](double t) {
        LatticeState s = t == 0.0 ? st : evolve(st, f, t, 1, K, {}, anomaly_tol).states.back();
        return solve_dressing(s.u, s.v, K, grid);
    };
    DressingPair P0 = pair_at(0.0);
    auto fd = [&](auto&& proj) {
        auto cd = [&](double hh) {
            DressingPair Pp = pair_at(hh), Pm = pair_at(-hh);
            return (proj(Pp) - proj(Pm)) * cplx{1.0 / (2.0 * hh), 0.0};
        };
        DiffOp d1 = cd(h), d2 = cd(h / 2);
        return (d2 * cplx{4.0 / 3.0, 0.0}) - (d1 * cplx{1.0 / 3.0, 0.0});
    };

    DiffOp L = lax_operator(st.u, exp_fn(st.v, grid));
    MixedOp logL;
    if (f.alpha == 1) logL = log_plus(P0, grid);
    if (f.alpha == 2) logL = log_minus(P0, grid);
    MixedOp B = flow_basis(L, logL, f, grid);

    // S side: pure difference under the projection convention
    DiffOp Bm = project_minus(B).part(0);
    DiffOp rS = fd([](const DressingPair& P) { return P.S; }) + diffop_mul(Bm, P0.S, grid);
    rS.restrict_band(-K, 0);
    DiffOp qS = detail::divide_left_by_S(rS, P0.S, -K, 0, grid);
    qS.trust = {2 - K, 0};  // the deepest solved orders sit at their secular floor
    double res_S = detail::nonconstant_norm(qS, grid);

    // Sbar side, through the T factorization: Sbar = T w0 gives
    // dSbar/dt = (dT/dt) w0 + T w0 dlogw0/dt, so compare
    // (dT/dt) + T dlogw0/dt against ((B)_+ |> Sbar) / w0(x + k eps).
    MixedOp Bp = project_plus(B, grid);
    DiffOp act = detail::act_on_operator(Bp, P0.Sbar, grid);
    DiffOp actT;  // divide Lambda^k coefficient by w0(x + k eps)
    CoeffFn w0 = exp_fn(P0.logw0, grid);
    for (auto& [k, fn] : act.coeffs())
        actT.set(k, div_fn(fn, shift(w0, k, grid.epsilon), grid));
    actT.trust = act.trust;
    DiffOp dT = fd([](const DressingPair& P) { return P.T; });
    DiffOp dlog = DiffOp::from_fn(fd([](const DressingPair& P) {
        return DiffOp::from_fn(P.logw0);
    }).coeff(0));
    DiffOp rT = dT + diffop_mul(P0.T, dlog, grid) - actT;
    rT.restrict_band(0, K);
    DiffOp qT = detail::divide_left_by_T(rT, P0.T, 0, K, grid);
    // undo the w0 conjugation so a pure gauge drift becomes constant per band
    DiffOp g;
    for (auto& [k, fn] : qT.coeffs())
        g.set(k, mul_fn(div_fn(fn, w0, grid), shift(w0, k, grid.epsilon), grid));
    g.trust = {0, K - 2};
    double res_T = detail::nonconstant_norm(g, grid);
    return {res_S, res_T};
}

}  // namespace meth

#endif
