#ifndef METH_SERIALIZE_HPP
#define METH_SERIALIZE_HPP

#include <string>

#include "json.hpp"
#include "meth/dressing.hpp"
#include "meth/hierarchy.hpp"

// JSON round-tripping for fields, operators, and states. Schemas:
//   CoeffFn:  {"xdeg": d, "J": half, "modes": [[[re,im] per j] per degree]}
//   DiffOp:   {"band": [kmin,kmax], "coeffs": {"k": CoeffFn},
//              "trust": [lo,hi], "supp": [lo,hi], "ledger": x}
//   MixedOp:  {"parts": {"d": DiffOp}}
// Trust/supp/ledger ride along so a reloaded operator carries the same
// certification state as the dumped one. Numbers round-trip exactly: nlohmann
// prints doubles with shortest-exact formatting.

namespace meth {

inline void to_json(nlohmann::json& j, const CoeffFn& f) {
    nlohmann::json modes = nlohmann::json::array();
    for (int d = 0; d <= f.xdeg(); ++d) {
        nlohmann::json row = nlohmann::json::array();
        for (int m = -f.half(); m <= f.half(); ++m) {
            cplx c = f.coeff(d, m);
            row.push_back({c.real(), c.imag()});
        }
        modes.push_back(std::move(row));
    }
    j = {{"xdeg", f.xdeg()}, {"J", f.half()}, {"modes", std::move(modes)}, {"ledger", f.ledger}};
}

inline void from_json(const nlohmann::json& j, CoeffFn& f) {
    f = CoeffFn{};
    const int xdeg = j.at("xdeg").get<int>();
    const int half = j.at("J").get<int>();
    const auto& modes = j.at("modes");
    for (int d = 0; d <= xdeg; ++d)
        for (int m = -half; m <= half; ++m) {
            const auto& c = modes.at(size_t(d)).at(size_t(m + half));
            cplx v{c.at(0).get<double>(), c.at(1).get<double>()};
            if (v != cplx{}) f.set_coeff(d, m, v);
        }
    f.ledger = j.value("ledger", 0.0);
}

namespace detail {

inline nlohmann::json band_json(BandInterval b) { return {b.lo, b.hi}; }

inline BandInterval band_from_json(const nlohmann::json& j) {
    return {j.at(0).get<int>(), j.at(1).get<int>()};
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const DiffOp& a) {
    nlohmann::json coeffs = nlohmann::json::object();
    for (auto& [k, f] : a.coeffs()) coeffs[std::to_string(k)] = f;
    j = {{"band", detail::band_json({a.kmin(), a.kmax()})},
         {"coeffs", std::move(coeffs)},
         {"trust", detail::band_json(a.trust)},
         {"supp", detail::band_json(a.supp)},
         {"ledger", a.ledger}};
}

inline void from_json(const nlohmann::json& j, DiffOp& a) {
    a = DiffOp{};
    for (auto& [key, val] : j.at("coeffs").items())
        a.set(std::stoi(key), val.get<CoeffFn>());
    // set() accumulates supp and per-coefficient ledgers; restore the dumped
    // certification state verbatim
    a.trust = detail::band_from_json(j.at("trust"));
    a.supp = detail::band_from_json(j.at("supp"));
    a.ledger = j.at("ledger").get<double>();
}

inline void to_json(nlohmann::json& j, const MixedOp& m) {
    nlohmann::json parts = nlohmann::json::object();
    for (auto& [d, p] : m.parts()) parts[std::to_string(d)] = p;
    j = {{"parts", std::move(parts)}};
}

inline void from_json(const nlohmann::json& j, MixedOp& m) {
    m = MixedOp{};
    for (auto& [key, val] : j.at("parts").items())
        m.set_part(std::stoi(key), val.get<DiffOp>());
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
    j = {{"epsilon", g.epsilon}, {"J", g.J},   {"Jmax", g.Jmax},         {"Jwork", g.Jwork},
         {"Dx", g.Dx},           {"band_cap", g.band_cap}, {"dmax", g.dmax}};
}

inline void from_json(const nlohmann::json& j, GridSpec& g) {
    g = GridSpec{};
    g.epsilon = j.value("epsilon", g.epsilon);
    g.J = j.value("J", g.J);
    g.Jmax = j.value("Jmax", g.Jmax);
    g.Jwork = j.value("Jwork", g.Jwork);
    g.Dx = j.value("Dx", g.Dx);
    g.band_cap = j.value("band_cap", g.band_cap);
    g.dmax = j.value("dmax", g.dmax);
    g.validate();
}

inline void to_json(nlohmann::json& j, const LatticeState& st) {
    nlohmann::json times = nlohmann::json::array();
    for (auto& [idx, val] : st.times) times.push_back({idx.first, idx.second, val});
    j = {{"u", st.u}, {"v", st.v}, {"times", std::move(times)}, {"grid", st.grid}};
}

inline void from_json(const nlohmann::json& j, LatticeState& st) {
    st.u = j.at("u").get<CoeffFn>();
    st.v = j.at("v").get<CoeffFn>();
    st.times.clear();
    for (auto& t : j.at("times"))
        st.times[{t.at(0).get<int>(), t.at(1).get<int>()}] = t.at(2).get<double>();
    st.grid = j.value("grid", GridSpec{});
}

inline void to_json(nlohmann::json& j, const DressingPair& P) {
    j = {{"order", P.order}, {"ledger", P.ledger}, {"S", P.S},
         {"Sbar", P.Sbar},   {"Sinv", P.Sinv},     {"Sbarinv", P.Sbarinv},
         {"T", P.T},         {"logw0", P.logw0}};
}

inline void from_json(const nlohmann::json& j, DressingPair& P) {
    P.order = j.at("order").get<int>();
    P.ledger = j.at("ledger").get<double>();
    P.S = j.at("S").get<DiffOp>();
    P.Sbar = j.at("Sbar").get<DiffOp>();
    P.Sinv = j.at("Sinv").get<DiffOp>();
    P.Sbarinv = j.at("Sbarinv").get<DiffOp>();
    P.T = j.at("T").get<DiffOp>();
    P.logw0 = j.at("logw0").get<CoeffFn>();
}

}  // namespace meth

#endif
