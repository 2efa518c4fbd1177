#ifndef METH_DIFFOP_HPP
#define METH_DIFFOP_HPP

#include <map>
#include <string>

#include "meth/coefffn.hpp"
#include "meth/common.hpp"

namespace meth {

// Saturating interval arithmetic over Lambda-powers, used to propagate the
// sub-band of an operator guaranteed unaffected by truncation.
inline constexpr int kBandInf = 1 << 20;

struct BandInterval {
    int lo = -kBandInf;
    int hi = kBandInf;
    bool empty() const { return lo > hi; }
    bool contains(int k) const { return k >= lo && k <= hi; }
};

namespace detail {
inline int sat_add(int a, int b) {
    long long s = (long long)a + (long long)b;
    if (s > kBandInf) return kBandInf;
    if (s < -kBandInf) return -kBandInf;
    return int(s);
}
inline BandInterval intersect(BandInterval a, BandInterval b) {
    return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
}
}  // namespace detail

// Laurent polynomial in the shift Lambda with CoeffFn coefficients.
//
// `supp` bounds the support of the exact (untruncated) object this operator
// approximates; `trust` is the interval of Lambda-powers on which the stored
// coefficients equal the exact ones. Fresh exact operators are trusted
// everywhere; truncation shrinks trust, and products propagate it by the
// interval rule.
class DiffOp {
public:
    DiffOp() = default;

    static DiffOp identity() { return lambda_pow(0, cplx{1.0, 0.0}); }

    static DiffOp lambda_pow(int k, cplx c = cplx{1.0, 0.0}) {
        DiffOp a;
        a.set(k, CoeffFn::constant(c));
        return a;
    }

    static DiffOp from_fn(const CoeffFn& f, int k = 0) {
        DiffOp a;
        a.set(k, f);
        return a;
    }

    bool is_zero() const { return c_.empty(); }
    int kmin() const { return c_.empty() ? 0 : c_.begin()->first; }
    int kmax() const { return c_.empty() ? 0 : c_.rbegin()->first; }

    const CoeffFn& coeff(int k) const {
        static const CoeffFn zero;
        auto it = c_.find(k);
        return it == c_.end() ? zero : it->second;
    }

    void set(int k, CoeffFn f) {
        f.trim();
        if (f.is_zero()) {
            ledger += f.ledger;
            c_.erase(k);
        } else {
            c_[k] = std::move(f);
        }
        supp.lo = std::min(supp_set_ ? supp.lo : k, k);
        supp.hi = std::max(supp_set_ ? supp.hi : k, k);
        supp_set_ = true;
    }

    void add(int k, const CoeffFn& f) { set(k, coeff(k) + f); }

    const std::map<int, CoeffFn>& coeffs() const { return c_; }

    // Drop |k| > cap coefficients into the ledger; trust shrinks only on the
    // sides where the exact object can actually extend past the cap.
    void apply_band_cap(int cap) {
        for (auto it = c_.begin(); it != c_.end();) {
            if (std::abs(it->first) > cap) {
                ledger += l2_mass(it->second) + it->second.ledger;
                it = c_.erase(it);
            } else {
                ++it;
            }
        }
        if (supp.hi > cap) trust.hi = std::min(trust.hi, cap);
        if (supp.lo < -cap) trust.lo = std::max(trust.lo, -cap);
    }

    // Drop coefficients outside [lo, hi] (dressing-order truncation).
    void restrict_band(int lo, int hi) {
        for (auto it = c_.begin(); it != c_.end();) {
            if (it->first < lo || it->first > hi) {
                ledger += l2_mass(it->second) + it->second.ledger;
                it = c_.erase(it);
            } else {
                ++it;
            }
        }
        if (supp.lo < lo) trust.lo = std::max(trust.lo, lo);
        if (supp.hi > hi) trust.hi = std::min(trust.hi, hi);
    }

    BandInterval trust;           // coefficients here equal the exact ones
    BandInterval supp{0, 0};      // bound on the exact object's support
    double ledger = 0.0;

    // Marks the exact object as having an (unknown) infinite tail on one side,
    // e.g. the true dressing series below the solve order.
    void mark_tail_below(int first_untrusted_excl) {
        supp.lo = -kBandInf;
        trust.lo = std::max(trust.lo, first_untrusted_excl);
    }
    void mark_tail_above(int last_trusted) {
        supp.hi = kBandInf;
        trust.hi = std::min(trust.hi, last_trusted);
    }

private:
    std::map<int, CoeffFn> c_;
    bool supp_set_ = false;
};

inline DiffOp operator+(const DiffOp& a, const DiffOp& b) {
    DiffOp r = a;
    for (auto& [k, f] : b.coeffs()) r.add(k, f);
    r.trust = detail::intersect(a.trust, b.trust);
    r.supp = {std::min(a.supp.lo, b.supp.lo), std::max(a.supp.hi, b.supp.hi)};
    r.ledger = a.ledger + b.ledger;
    return r;
}

inline DiffOp operator-(const DiffOp& a, const DiffOp& b) {
    DiffOp nb = b;
    DiffOp r = a;
    for (auto& [k, f] : nb.coeffs()) r.add(k, -f);
    r.trust = detail::intersect(a.trust, b.trust);
    r.supp = {std::min(a.supp.lo, b.supp.lo), std::max(a.supp.hi, b.supp.hi)};
    r.ledger = a.ledger + b.ledger;
    return r;
}

inline DiffOp operator*(const DiffOp& a, cplx s) {
    DiffOp r = a;
    DiffOp out;
    out.trust = a.trust;
    out.supp = a.supp;
    out.ledger = a.ledger;
    for (auto& [k, f] : r.coeffs()) out.set(k, f * s);
    out.trust = a.trust;
    out.supp = a.supp;
    return out;
}
inline DiffOp operator*(cplx s, const DiffOp& a) { return a * s; }
inline DiffOp operator-(const DiffOp& a) { return a * cplx{-1.0, 0.0}; }

namespace detail {
// Trust interval of a product by the interval rule: coefficients reachable
// from an untrusted region of either factor are polluted.
inline BandInterval product_trust(const DiffOp& a, const DiffOp& b) {
    BandInterval t{-kBandInf, kBandInf};
    if (a.trust.lo > a.supp.lo) t.lo = std::max(t.lo, sat_add(a.trust.lo, b.supp.hi));
    if (b.trust.lo > b.supp.lo) t.lo = std::max(t.lo, sat_add(b.trust.lo, a.supp.hi));
    if (a.trust.hi < a.supp.hi) t.hi = std::min(t.hi, sat_add(a.trust.hi, b.supp.lo));
    if (b.trust.hi < b.supp.hi) t.hi = std::min(t.hi, sat_add(b.trust.hi, a.supp.lo));
    return t;
}
}  // namespace detail

// Normal-ordered product of pure difference operators:
//   (f Lambda^a)(g Lambda^b) = f * g(x + a eps) Lambda^{a+b}.
inline DiffOp diffop_mul(const DiffOp& a, const DiffOp& b, const GridSpec& grid) {
    DiffOp r;
    r.ledger = a.ledger + b.ledger;
    for (auto& [ka, fa] : a.coeffs())
        for (auto& [kb, fb] : b.coeffs()) {
            if (std::abs(ka + kb) > grid.band_cap) {
                // dropped anyway by the band cap; avoid forming the product
                r.ledger += sup_norm(fa, grid) * sup_norm(fb, grid);
                continue;
            }
            r.add(ka + kb, mul_fn(fa, shift(fb, ka, grid.epsilon), grid));
        }
    r.supp = {detail::sat_add(a.supp.lo, b.supp.lo), detail::sat_add(a.supp.hi, b.supp.hi)};
    r.trust = detail::product_trust(a, b);
    r.apply_band_cap(grid.band_cap);
    return r;
}

// Coefficient-wise x-derivative.
inline DiffOp ddx_op(const DiffOp& a) {
    DiffOp r;
    r.ledger = a.ledger;
    for (auto& [k, f] : a.coeffs()) r.set(k, ddx(f));
    r.trust = a.trust;
    r.supp = a.supp;
    return r;
}

inline double op_norm(const DiffOp& a, const GridSpec& grid) {
    double m = 0.0;
    for (auto& [k, f] : a.coeffs()) m = std::max(m, sup_norm(f, grid));
    return m;
}

inline double op_norm_trusted(const DiffOp& a, const GridSpec& grid) {
    double m = 0.0;
    for (auto& [k, f] : a.coeffs())
        if (a.trust.contains(k)) m = std::max(m, sup_norm(f, grid));
    return m;
}

inline double op_norm_on_band(const DiffOp& a, BandInterval band, const GridSpec& grid) {
    double m = 0.0;
    for (auto& [k, f] : a.coeffs())
        if (band.contains(k)) m = std::max(m, sup_norm(f, grid));
    return m;
}

// ---------------------------------------------------------------------------
// Mixed operators: finite sums  sum_d P_d (eps d/dx)^d  with DiffOp parts.
// ---------------------------------------------------------------------------

class MixedOp {
public:
    MixedOp() { parts_[0] = DiffOp(); }

    static MixedOp from_diffop(const DiffOp& a) {
        MixedOp m;
        m.parts_[0] = a;
        return m;
    }

    // (eps d/dx)^d with given DiffOp coefficient
    static MixedOp derivation(int d, const DiffOp& p) {
        MixedOp m;
        m.parts_[d] = p;
        return m;
    }

    int dmax() const { return parts_.rbegin()->first; }

    const DiffOp& part(int d) const {
        static const DiffOp zero;
        auto it = parts_.find(d);
        return it == parts_.end() ? zero : it->second;
    }

    void set_part(int d, const DiffOp& p) {
        if (d != 0 && p.is_zero()) parts_.erase(d);
        else parts_[d] = p;
        if (parts_.find(0) == parts_.end()) parts_[0] = DiffOp();
    }

    const std::map<int, DiffOp>& parts() const { return parts_; }

    void prune() {
        for (auto it = parts_.begin(); it != parts_.end();) {
            if (it->first != 0 && it->second.is_zero()) it = parts_.erase(it);
            else ++it;
        }
    }

private:
    std::map<int, DiffOp> parts_;
};

inline MixedOp operator+(const MixedOp& a, const MixedOp& b) {
    MixedOp r = a;
    for (auto& [d, p] : b.parts()) r.set_part(d, r.part(d) + p);
    r.prune();
    return r;
}

inline MixedOp operator-(const MixedOp& a, const MixedOp& b) {
    MixedOp r = a;
    for (auto& [d, p] : b.parts()) r.set_part(d, r.part(d) - p);
    r.prune();
    return r;
}

inline MixedOp operator*(const MixedOp& a, cplx s) {
    MixedOp r;
    for (auto& [d, p] : a.parts()) r.set_part(d, p * s);
    return r;
}
inline MixedOp operator*(cplx s, const MixedOp& a) { return a * s; }
inline MixedOp operator-(const MixedOp& a) { return a * cplx{-1.0, 0.0}; }

// Normal-ordered product. Uses
//   (eps d)^c g = sum_{r<=c} C(c,r) (eps^r g^(r)) (eps d)^{c-r},
//   Lambda^a f = f(x + a eps) Lambda^a.
inline MixedOp op_mul(const MixedOp& a, const MixedOp& b, const GridSpec& grid) {
    MixedOp r;
    std::map<int, BandInterval> trust_acc;
    for (auto& [c, P] : a.parts()) {
        if (P.is_zero()) continue;
        for (auto& [e, Q] : b.parts()) {
            if (Q.is_zero()) continue;
            // derivative tower of Q
            DiffOp Qr = Q;
            for (int rr = 0; rr <= c; ++rr) {
                int dord = c - rr + e;
                if (dord > grid.dmax)
                    throw DerivationOverflow("op_mul: derivation order " + std::to_string(dord) +
                                             " exceeds cap " + std::to_string(grid.dmax));
                DiffOp term = diffop_mul(P, Qr * cplx{binomial(c, rr) *
                                                       std::pow(grid.epsilon, double(rr)), 0.0},
                                         grid);
                BandInterval t = term.trust;
                auto it = trust_acc.find(dord);
                if (it == trust_acc.end()) trust_acc[dord] = t;
                else it->second = detail::intersect(it->second, t);
                r.set_part(dord, r.part(dord) + term);
                if (rr < c) Qr = ddx_op(Qr);
            }
        }
    }
    for (auto& [d, t] : trust_acc) {
        DiffOp p = r.part(d);
        p.trust = detail::intersect(p.trust, t);
        r.set_part(d, p);
    }
    r.prune();
    return r;
}

inline MixedOp commutator(const MixedOp& a, const MixedOp& b, const GridSpec& grid) {
    return op_mul(a, b, grid) - op_mul(b, a, grid);
}

// Strictly negative Lambda-band of the d = 0 part; all derivation terms belong
// to the plus projection.
inline MixedOp project_minus(const MixedOp& a) {
    DiffOp m;
    const DiffOp& p0 = a.part(0);
    m.ledger = p0.ledger;
    for (auto& [k, f] : p0.coeffs())
        if (k < 0) m.set(k, f);
    m.trust = p0.trust;
    if (m.trust.hi >= -1) m.trust.hi = kBandInf;
    m.supp = {p0.supp.lo, std::min(p0.supp.hi, -1)};
    return MixedOp::from_diffop(m);
}

inline MixedOp project_plus(const MixedOp& a, const GridSpec& /*grid*/) {
    MixedOp r = a;
    DiffOp p;
    const DiffOp& p0 = a.part(0);
    p.ledger = p0.ledger;
    for (auto& [k, f] : p0.coeffs())
        if (k >= 0) p.set(k, f);
    p.trust = p0.trust;
    if (p.trust.lo <= 0) p.trust.lo = -kBandInf;
    p.supp = {std::max(p0.supp.lo, 0), p0.supp.hi};
    r.set_part(0, p);
    return r;
}

// Res A = the Lambda^0 coefficient of the d = 0 part.
inline CoeffFn residue(const MixedOp& a) { return a.part(0).coeff(0); }
inline CoeffFn residue(const DiffOp& a) { return a.coeff(0); }

inline double op_norm(const MixedOp& a, const GridSpec& grid) {
    double m = 0.0;
    for (auto& [d, p] : a.parts()) m = std::max(m, op_norm(p, grid));
    return m;
}

inline double op_norm_trusted(const MixedOp& a, const GridSpec& grid) {
    double m = 0.0;
    for (auto& [d, p] : a.parts()) m = std::max(m, op_norm_trusted(p, grid));
    return m;
}

inline double total_ledger(const MixedOp& a) {
    double m = 0.0;
    for (auto& [d, p] : a.parts()) {
        m += p.ledger;
        for (auto& [k, f] : p.coeffs()) m += f.ledger;
    }
    return m;
}

inline double total_ledger(const DiffOp& a) {
    double m = a.ledger;
    for (auto& [k, f] : a.coeffs()) m += f.ledger;
    return m;
}

inline BandInterval trusted_band(const MixedOp& a) {
    BandInterval t{-kBandInf, kBandInf};
    for (auto& [d, p] : a.parts()) t = detail::intersect(t, p.trust);
    return t;
}

}  // namespace meth

#endif
