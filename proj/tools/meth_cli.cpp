// meth: verification suites, evolutions, and dressing dumps for the modified
// extended Toda hierarchy on the truncated difference-operator algebra.
//
// Subcommands:
//   verify --suite dressing|hierarchy|hamiltonian|addsym|block-table|all
//   evolve --flow a,n --dt --steps [--state in.json] --out traj.csv
//   dress  [--state in.json] --out dump.json
//   report --in report.json
//
// Exit codes: 0 pass, 1 check failure, 2 usage, 3 numeric precondition.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "meth/addsym.hpp"
#include "meth/random.hpp"
#include "meth/serialize.hpp"

using namespace meth;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    GridSpec grid;
    int K = 10;
    uint64_t seed = 1;
    int seeds = 3;         // seeds per cheap check; expensive checks use one
    double amplitude = 0.2;
    int mmax = 3, lmax = 3;
    std::string state_path;  // optional explicit state instead of random fields
};

json config_json(const RunConfig& c) {
    return {{"epsilon", c.grid.epsilon}, {"J", c.grid.J},     {"Jmax", c.grid.Jmax},
            {"Jwork", c.grid.Jwork},     {"Dx", c.grid.Dx},   {"band_cap", c.grid.band_cap},
            {"dmax", c.grid.dmax},       {"K", c.K},          {"seed", c.seed},
            {"seeds", c.seeds},          {"amplitude", c.amplitude},
            {"mmax", c.mmax},            {"lmax", c.lmax}};
}

void apply_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    json j = json::parse(in);
    c.grid.epsilon = j.value("epsilon", c.grid.epsilon);
    c.grid.J = j.value("J", c.grid.J);
    c.grid.Jmax = j.value("Jmax", c.grid.Jmax);
    c.grid.Jwork = j.value("Jwork", c.grid.Jwork);
    c.grid.Dx = j.value("Dx", c.grid.Dx);
    c.grid.band_cap = j.value("band_cap", c.grid.band_cap);
    c.grid.dmax = j.value("dmax", c.grid.dmax);
    c.K = j.value("K", c.K);
    c.seed = j.value("seed", c.seed);
    c.seeds = j.value("seeds", c.seeds);
    c.amplitude = j.value("amplitude", c.amplitude);
    c.mmax = j.value("mmax", c.mmax);
    c.lmax = j.value("lmax", c.lmax);
}

LatticeState state_for(const RunConfig& c, uint64_t salt) {
    if (!c.state_path.empty()) {
        std::ifstream in(c.state_path);
        if (!in) throw Error("cannot open state file " + c.state_path);
        return json::parse(in).get<LatticeState>();
    }
    std::mt19937_64 rng(c.seed * 1000003u + salt);
    LatticeState st;
    st.grid = c.grid;
    st.u = random_field(rng, c.grid, c.amplitude);
    st.v = random_field(rng, c.grid, c.amplitude);
    return st;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct CheckRec {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    double ledger = 0.0;
    bool pass = false;
    bool asserted = true;  // informational records never fail the run
    std::string note;
    double wall_ms = 0.0;
};

struct Suite {
    std::string name;
    std::vector<CheckRec> checks;

    // run one check, recording residual, wall time, and any numeric refusal
    void check(const std::string& cname, double tol, const std::function<double()>& fn,
               const std::string& note = "", double ledger = 0.0) {
        CheckRec r;
        r.name = cname;
        r.tolerance = tol;
        r.note = note;
        r.ledger = ledger;
        auto t0 = std::chrono::steady_clock::now();
        try {
            r.residual = fn();
            r.pass = r.residual <= tol;
        } catch (const Error& e) {
            r.residual = std::numeric_limits<double>::infinity();
            r.pass = false;
            r.note = note.empty() ? e.what() : note + "; " + e.what();
        }
        r.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0).count();
        checks.push_back(std::move(r));
    }

    void info(const std::string& cname, const std::function<double()>& fn,
              const std::string& note = "") {
        check(cname, std::numeric_limits<double>::infinity(), fn, note);
        checks.back().asserted = false;
        checks.back().pass = true;
    }

    json to_json(const RunConfig& cfg) const {
        std::vector<CheckRec> sorted = checks;
        std::sort(sorted.begin(), sorted.end(),
                  [](const CheckRec& a, const CheckRec& b) { return a.name < b.name; });
        json arr = json::array();
        int failed = 0;
        for (auto& c : sorted) {
            arr.push_back({{"name", c.name},
                           {"residual", c.residual},
                           {"tolerance", c.tolerance},
                           {"ledger", c.ledger},
                           {"pass", c.pass},
                           {"asserted", c.asserted},
                           {"note", c.note},
                           {"wall_ms", c.wall_ms}});
            if (c.asserted && !c.pass) ++failed;
        }
        return {{"suite", name},
                {"config", config_json(cfg)},
                {"checks", arr},
                {"summary", {{"total", int(sorted.size())},
                             {"failed", failed},
                             {"passed", int(sorted.size()) - failed}}}};
    }

    int failures() const {
        int n = 0;
        for (auto& c : checks)
            if (c.asserted && !c.pass) ++n;
        return n;
    }
};

std::string tag(uint64_t s) { return "[s" + std::to_string(s) + "]"; }

// ---------------------------------------------------------------------------
// verify suites
// ---------------------------------------------------------------------------

Suite suite_dressing(const RunConfig& cfg) {
    Suite S{"dressing"};
    const GridSpec& grid = cfg.grid;
    for (int s = 0; s < cfg.seeds; ++s) {
        LatticeState st = state_for(cfg, uint64_t(s));
        CertifiedDressing C = solve_dressing_certified(st.u, st.v, cfg.K, grid);
        DiffOp L = lax_operator(st.u, exp_fn(st.v, grid));
        auto [r1, r2] = conjugation_residuals(C, L, grid);
        S.check("conjugation S Lambda S^-1 = L " + tag(s), 1e-8, [&] { return r1; }, "",
                C.fine.ledger);
        S.check("conjugation Sbar Lambda^-1 Sbar^-1 = L " + tag(s), 1e-8, [&] { return r2; },
                "", C.fine.ledger);
        MixedOp lp = log_plus(C, grid);
        MixedOp lm = log_minus(C, grid);
        S.check("[log_+ L, L] " + tag(s), 1e-8, [&] {
            return op_norm_trusted(commutator(lp, MixedOp::from_diffop(L), grid), grid);
        });
        S.check("[log_- L, L] " + tag(s), 1e-8, [&] {
            return op_norm_trusted(commutator(lm, MixedOp::from_diffop(L), grid), grid);
        });
        S.check("log_+ band structure strictly negative " + tag(s), 0.0, [&] {
            return lp.part(0).kmax() <= -1 ? 0.0 : 1.0;
        });
        S.check("log_- band structure non-negative " + tag(s), 0.0, [&] {
            return lm.part(0).kmin() >= 0 ? 0.0 : 1.0;
        });
    }
    return S;
}

Suite suite_hierarchy(const RunConfig& cfg) {
    Suite S{"hierarchy"};
    const GridSpec& grid = cfg.grid;
    LatticeState st = state_for(cfg, 101);
    CertifiedDressing C = solve_dressing_certified(st.u, st.v, cfg.K, grid);
    const DressingPair& P = C.fine;
    DiffOp L = lax_operator(st.u, exp_fn(st.v, grid));

    // Lax anomalies for the nine lowest flows. The separated log towers
    // beyond the spatial flow carry a resolution-independent structural
    // remainder of order eps*(L^m)_- L_x; those records fail honestly.
    for (int alpha = 0; alpha <= 2; ++alpha)
        for (int n = 0; n <= 2; ++n) {
            bool structural = (alpha == 1 && n >= 1) || alpha == 2;
            S.check("lax anomaly (" + std::to_string(alpha) + "," + std::to_string(n) + ")",
                    1e-6,
                    [&] { return lax_rhs(st, P, FlowSpec{alpha, n}, 1e99).anomaly; },
                    structural ? "structural remainder of the separated log tower, "
                                 "resolution-independent"
                               : "");
        }

    for (FlowSpec f : {FlowSpec{0, 1}, FlowSpec{1, 0}, FlowSpec{1, 1}, FlowSpec{2, 0},
                       FlowSpec{2, 1}}) {
        S.check("projection equality [(B)_+,L] = [-(B)_-,L] (" + std::to_string(f.alpha) +
                    "," + std::to_string(f.n) + ")",
                1e-8, [&] {
                    MixedOp logL = f.alpha == 1   ? log_plus(C, grid)
                                   : f.alpha == 2 ? log_minus(C, grid)
                                                  : MixedOp{};
                    MixedOp B = flow_basis(L, logL, f, grid);
                    return op_norm_trusted(
                        commutator(B, MixedOp::from_diffop(L), grid).part(0), grid);
                });
    }

    S.check("t_{1,0} equals 2 eps d/dx", 1e-9, [&] {
        FlowRHS r = lax_rhs(st, P, FlowSpec{1, 0}, 1e99);
        cplx te{2.0 * grid.epsilon, 0.0};
        return std::max(sup_norm(r.du - ddx(st.u) * te, grid),
                        sup_norm(r.dv - ddx(st.v) * te, grid));
    });

    for (FlowSpec f : {FlowSpec{0, 0}, FlowSpec{0, 1}, FlowSpec{1, 0}}) {
        std::string fn = "(" + std::to_string(f.alpha) + "," + std::to_string(f.n) + ")";
        auto [rS, rT] = sato_residual(st, f, 1e-3, cfg.K);
        S.check("Sato equation dS " + fn, 5e-5, [&, rS = rS] { return rS; });
        S.check("Sato equation dSbar " + fn, 5e-5, [&, rT = rT] { return rT; });
    }

    S.check("flow commutator (0,0)x(0,1)", 5e-6,
            [&] { return flow_commutator_residual(st, FlowSpec{0, 0}, FlowSpec{0, 1}, 1e-3, cfg.K); });
    S.check("flow commutator (0,0)x(1,0)", 5e-6,
            [&] { return flow_commutator_residual(st, FlowSpec{0, 0}, FlowSpec{1, 0}, 1e-3, cfg.K); });
    return S;
}

Suite suite_hamiltonian(const RunConfig& cfg) {
    Suite S{"hamiltonian"};
    const GridSpec& grid = cfg.grid;
    LatticeState st = state_for(cfg, 202);
    DressingPair P = solve_dressing(st.u, st.v, cfg.K, grid);

    // secular cancellation in the densities
    for (int beta = 0; beta <= 2; ++beta)
        for (int n = 0; n <= 3; ++n)
            S.check("density secular h_{" + std::to_string(beta) + "," + std::to_string(n) +
                        "}",
                    1e-7, [&] {
                        return secular_norm(density(st, P, beta, n).value, grid);
                    });

    // Hamiltonian form of the flows. (2,0) has mean(dv) != 0 while every
    // bracket dv-row is a total difference: no generating functional exists.
    for (FlowSpec f : {FlowSpec{0, 0}, FlowSpec{0, 1}, FlowSpec{1, 0}, FlowSpec{2, 0}}) {
        std::string fn = "(" + std::to_string(f.alpha) + "," + std::to_string(f.n) + ")";
        std::string note;
        S.check("hamiltonian match " + fn, 1e-7, [&] {
            HamMatch m = hamiltonian_match_residual(st, P, f, f.alpha == 0 ? 6 : 5);
            note = "generator " + m.generator + " at scale " + std::to_string(m.scale);
            if (f.alpha == 2) note += "; mean(dv) != 0: outside both bracket images";
            return m.residual;
        });
        if (!note.empty()) S.checks.back().note = note;
    }

    S.check("recursion branch 0, n=1", 1e-7, [&] { return recursion_residual(st, 0, 1); });
    S.check("recursion branch 0, n=2", 1e-7, [&] { return recursion_residual(st, 0, 2); });
    S.info("recursion branch 1, n=1", [&] { return recursion_residual(st, 1, 1, 4); },
           "order-one structural remainder, reported");
    S.info("recursion branch 2, n=1 (as printed)",
           [&] { return recursion_residual(st, 2, 1, 4); }, "reported");
    S.info("recursion branch 2, n=1 (branch-0 substitution)",
           [&] { return recursion_residual(st, 2, 1, 4, true); }, "reported");

    // tau symmetry; pairs involving the separated towers fail at ~5e-2
    FlowSpec fs[] = {FlowSpec{0, 0}, FlowSpec{0, 1}, FlowSpec{1, 0}, FlowSpec{2, 0}};
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            bool logpair = fs[i].alpha != 0 || fs[j].alpha != 0;
            S.check("tau symmetry (" + std::to_string(fs[i].alpha) + "," +
                        std::to_string(fs[i].n) + ")x(" + std::to_string(fs[j].alpha) + "," +
                        std::to_string(fs[j].n) + ")",
                    1e-7, [&] { return tau_symmetry_residual(st, fs[i], fs[j]); },
                    logpair ? "separated-tower pair: tau symmetry breaks at order 5e-2" : "");
        }
    S.check("tau 1-form closed (0,0)x(0,1)", 1e-6,
            [&] { return tau_closedness_residual(st, FlowSpec{0, 0}, FlowSpec{0, 1}); });
    S.check("tau relations along 50-step Toda trajectory", 1e-5, [&] {
        Trajectory tr = evolve(st, FlowSpec{0, 0}, 0.01, 50, cfg.K);
        return tau_relations_residual(tr, 0.01);
    });

    // conservation over 100 RK4 steps of the Toda flow; the non-conserved
    // densities of the separated towers fail honestly
    {
        std::vector<std::pair<int, int>> dens;
        for (int beta = 0; beta <= 2; ++beta)
            for (int n = 0; n <= 2; ++n) dens.push_back({beta, n});
        Trajectory tr = evolve(st, FlowSpec{0, 0}, 0.01, 100, cfg.K);
        // one dressing per sampled state, shared across all densities
        std::vector<std::vector<double>> vals;
        for (size_t i = 0; i < tr.states.size(); i += 5) {
            const LatticeState& s = tr.states[i];
            DressingPair Ps = solve_dressing(s.u, s.v, 8, grid);
            std::vector<double> row;
            for (auto [beta, n] : dens)
                row.push_back(
                    integrate_period(density_value(s.u, s.v, Ps, beta, n, grid)).real());
            vals.push_back(std::move(row));
        }
        for (size_t c = 0; c < dens.size(); ++c) {
            double h0 = vals.front()[c];
            double worst = 0.0;
            for (auto& row : vals)
                worst = std::max(worst, std::abs(row[c] - h0) / std::max(1.0, std::abs(h0)));
            S.check("conservation int h_{" + std::to_string(dens[c].first) + "," +
                        std::to_string(dens[c].second) + "} over 100 Toda steps",
                    1e-7, [&] { return worst; });
        }
    }
    return S;
}

Suite suite_addsym(const RunConfig& cfg) {
    Suite S{"addsym"};
    const GridSpec& grid = cfg.grid;
    LatticeState st = state_for(cfg, 303);
    CertifiedDressing C = solve_dressing_certified(st.u, st.v, cfg.K, grid);
    OSOperators os = orlov_schulman(C, {}, grid);
    DiffOp L = lax_operator(st.u, exp_fn(st.v, grid));
    CanonicalResiduals cr = canonical_residuals(os, L, grid);
    S.check("canonical [L,M] = 1", 1e-7, [&] { return cr.LM; }, "", os.M.ledger);
    S.check("canonical [L,Mbar] = 1", 1e-7, [&] { return cr.LMbar; }, "", os.Mbar.ledger);
    S.check("canonical [M - Mbar, L] = 0", 1e-7, [&] { return cr.diff; });

    // reduction preservation; the m >= 2 powers have no truncation limit and
    // fail honestly
    for (int m = 0; m <= std::min(2, cfg.mmax); ++m)
        for (int l = 0; l <= std::min(2, cfg.lmax); ++l) {
            if (m == 0 && l == 0) continue;
            S.check("reduction preservation (" + std::to_string(m) + "," +
                        std::to_string(l) + ")",
                    1e-7, [&] { return reduction_residual(st, os, m, l); },
                    m >= 2 ? "(M-Mbar)^m divergent for m >= 2: no truncation limit" : "");
        }

    // hierarchy commutation, finite differences; m = 2 rows are divergent
    for (auto ml : {std::pair{0, 1}, {0, 2}, {1, 0}, {1, 1}, {2, 0}})
        for (FlowSpec f : {FlowSpec{0, 0}, FlowSpec{0, 1}, FlowSpec{1, 0}}) {
            std::string nm = "hierarchy commutation (" + std::to_string(ml.first) + "," +
                             std::to_string(ml.second) + ")x(" + std::to_string(f.alpha) +
                             "," + std::to_string(f.n) + ")";
            S.check(nm, 1e-4,
                    [&] { return hierarchy_commutation_residual(st, {}, ml, f, 1e-3, 8); },
                    ml.first >= 2 ? "(M-Mbar)^m divergent for m >= 2" : "");
        }

    S.info("gamma convention discrimination (display variant residual)", [&] {
        TimeSlice t{{{0, 1}, 0.3}, {{0, 2}, 0.2}, {{1, 0}, 0.25}};
        return hierarchy_commutation_residual(st, t, {1, 1}, FlowSpec{0, 1}, 1e-3, 8,
                                              GammaVariant::display);
    }, "the commuting convention is the default; its residual is ~1e-12");
    S.info("||[log_+ L, M] - L|| (identity fails as printed)",
           [&] { return log_plus_m_commutator_gap(st, C.fine, os); }, "reported, not asserted");
    S.info("t*_{1,1} explicit formula residual",
           [&] { return t11_flow_formula_residual(st, C.fine, os); },
           "du = u holds exactly; the printed dv formula misses by O(1)");

    S.check("H*_{0,1} = int u", 1e-10, [&] {
        return std::abs(additional_hamiltonian(st, os, 0, 1).value - integrate_period(st.u));
    });
    S.info("H*_{1,1} secular density norm",
           [&] { return additional_hamiltonian(st, os, 1, 1).secular; },
           "x-polynomial density; x-constant part has zero variational gradient");
    return S;
}

struct BlockRow {
    int m, l, n, k;
    double c;
    std::string method, status;
    double residual = std::numeric_limits<double>::quiet_NaN();
};

std::vector<BlockRow> block_table(const RunConfig& cfg, Suite& S) {
    const GridSpec& grid = cfg.grid;
    LatticeState st = state_for(cfg, 404);
    CertifiedDressing C = solve_dressing_certified(st.u, st.v, cfg.K, grid);
    OSOperators os = orlov_schulman(C, {}, grid);

    std::vector<std::pair<int, int>> idx;
    for (int m = 0; m <= cfg.mmax; ++m)
        for (int l = 0; l <= cfg.lmax; ++l)
            if (m + l >= 1) idx.push_back({m, l});

    auto fd_ok = [](std::pair<int, int> a) {
        return a.first == 0 || (a.first == 1 && a.second <= 1);
    };

    std::vector<BlockRow> rows;
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = i + 1; j < idx.size(); ++j) {
            auto [m, l] = idx[i];
            auto [n, k] = idx[j];
            if (m + n > 4 || k + l > 4) continue;
            BlockRow r{m, l, n, k, double(k) * m - double(n) * l, "", "", 0.0};
            std::string nm = "block bracket (" + std::to_string(m) + "," + std::to_string(l) +
                             ")x(" + std::to_string(n) + "," + std::to_string(k) + ")";
            if (m >= 2 || n >= 2) {
                r.method = "none";
                r.status = "divergent: (M-Mbar)^m has no truncation limit for m >= 2";
                r.residual = std::numeric_limits<double>::quiet_NaN();
            } else if (fd_ok(idx[i]) && fd_ok(idx[j])) {
                r.method = "fd";
                S.check(nm + " [fd]", 1e-4,
                        [&] { return block_bracket_residual(st, {}, idx[i], idx[j], 1e-3, 8); });
                r.residual = S.checks.back().residual;
                r.status = S.checks.back().pass ? "ok" : "fail";
            } else if (m == 1 && n == 1) {
                r.method = "none";
                r.status = "refused: both factors two-sided, trusted window collapses";
            } else {
                r.method = "operator";
                S.check(nm + " [operator]", 1e-7,
                        [&] { return block_bracket_operator_residual(st, os, idx[i], idx[j]); });
                r.residual = S.checks.back().residual;
                r.status = S.checks.back().pass
                               ? "ok"
                               : (std::isinf(S.checks.back().residual) ? "refused" : "fail");
            }
            rows.push_back(r);
        }
    return rows;
}

void write_block_csv(const std::vector<BlockRow>& rows, const std::string& path) {
    std::ofstream out(path);
    out << "m,l,n,k,predicted_c,method,residual,status\n";
    char buf[64];
    for (auto& r : rows) {
        if (std::isnan(r.residual))
            std::snprintf(buf, sizeof buf, "nan");
        else
            std::snprintf(buf, sizeof buf, "%.6e", r.residual);
        out << r.m << ',' << r.l << ',' << r.n << ',' << r.k << ',' << r.c << ','
            << r.method << ',' << buf << ",\"" << r.status << "\"\n";
    }
}

// ---------------------------------------------------------------------------
// subcommand drivers
// ---------------------------------------------------------------------------

int cmd_verify(const RunConfig& cfg, const std::string& suite, const std::string& out,
               const std::string& csv_out) {
    std::vector<Suite> suites;
    auto want = [&](const std::string& s) { return suite == s || suite == "all"; };
    if (want("dressing")) suites.push_back(suite_dressing(cfg));
    if (want("hierarchy")) suites.push_back(suite_hierarchy(cfg));
    if (want("hamiltonian")) suites.push_back(suite_hamiltonian(cfg));
    if (want("addsym")) suites.push_back(suite_addsym(cfg));
    if (want("block-table")) {
        Suite S{"block-table"};
        std::vector<BlockRow> rows = block_table(cfg, S);
        write_block_csv(rows, csv_out);
        std::printf("block table: %zu rows -> %s\n", rows.size(), csv_out.c_str());
        suites.push_back(std::move(S));
    }
    if (suites.empty()) throw CLI::ValidationError("--suite", "unknown suite " + suite);

    json rep = json::array();
    int failures = 0;
    for (auto& s : suites) {
        rep.push_back(s.to_json(cfg));
        failures += s.failures();
        std::printf("%-12s %3d checks, %d failed\n", s.name.c_str(), int(s.checks.size()),
                    s.failures());
    }
    std::ofstream(out) << (rep.size() == 1 ? rep.front() : rep).dump(2) << "\n";
    std::printf("report -> %s\n", out.c_str());
    return failures == 0 ? 0 : 1;
}

int cmd_evolve(const RunConfig& cfg, const std::string& flow, double dt, int steps,
               const std::string& out, const std::string& state_out) {
    size_t comma = flow.find(',');
    if (comma == std::string::npos)
        throw CLI::ValidationError("--flow", "expected a,n");
    FlowSpec f{std::stoi(flow.substr(0, comma)), std::stoi(flow.substr(comma + 1))};
    LatticeState st = state_for(cfg, 505);

    const GridSpec& grid = cfg.grid;
    std::vector<std::string> names = {"H00", "H01", "H02", "sup_u", "sup_v"};
    std::vector<Observable> obs;
    for (int n = 0; n <= 2; ++n)
        obs.push_back([n, &grid](const LatticeState& s) {
            DressingPair none;
            return integrate_period(density_value(s.u, s.v, none, 0, n, s.grid)).real();
        });
    obs.push_back([](const LatticeState& s) { return sup_norm(s.u, s.grid); });
    obs.push_back([](const LatticeState& s) { return sup_norm(s.v, s.grid); });

    Trajectory tr = evolve(st, f, dt, steps, cfg.K, obs);

    std::ofstream csv(out);
    csv << "step,t";
    for (auto& n : names) csv << ',' << n;
    csv << "\n";
    char buf[64];
    for (size_t i = 0; i < tr.states.size(); ++i) {
        csv << i << ',';
        std::snprintf(buf, sizeof buf, "%.10g", double(i) * dt);
        csv << buf;
        for (double v : tr.observables[i]) {
            std::snprintf(buf, sizeof buf, "%.12e", v);
            csv << ',' << buf;
        }
        csv << "\n";
    }
    std::ofstream(state_out) << json(tr.states.back()).dump(2) << "\n";
    std::printf("evolved (%d,%d) for %d steps, dt=%g -> %s, final state -> %s\n", f.alpha,
                f.n, steps, dt, out.c_str(), state_out.c_str());
    return 0;
}

int cmd_dress(const RunConfig& cfg, const std::string& out) {
    const GridSpec& grid = cfg.grid;
    LatticeState st = state_for(cfg, 606);
    DressingPair P = solve_dressing(st.u, st.v, cfg.K, grid);
    DiffOp L = lax_operator(st.u, exp_fn(st.v, grid));
    auto [r1, r2] = conjugation_residuals(P, L, grid);
    json j = {{"grid", grid},
              {"K", cfg.K},
              {"state", st},
              {"pair", P},
              {"residuals", {{"conj_plus", r1}, {"conj_minus", r2}}}};
    std::ofstream(out) << j.dump(2) << "\n";
    std::printf("dressing dump -> %s (residuals %.3e, %.3e)\n", out.c_str(), r1, r2);
    return 0;
}

int cmd_report(const std::string& in) {
    std::ifstream f(in);
    if (!f) throw Error("cannot open " + in);
    json j = json::parse(f);
    json arr = j.is_array() ? j : json::array({j});
    for (auto& rep : arr) {
        std::printf("== suite %s ==\n", rep.at("suite").get<std::string>().c_str());
        std::printf("%-64s %12s %10s %6s\n", "check", "residual", "tol", "pass");
        for (auto& c : rep.at("checks")) {
            std::printf("%-64s %12.3e %10.1e %6s%s\n",
                        c.at("name").get<std::string>().c_str(),
                        c.at("residual").get<double>(), c.at("tolerance").get<double>(),
                        c.at("pass").get<bool>() ? "yes" : "NO",
                        c.at("asserted").get<bool>() ? "" : "  (informational)");
        }
        auto& s = rep.at("summary");
        std::printf("summary: %d/%d passed\n\n", s.at("passed").get<int>(),
                    s.at("total").get<int>());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"modified extended Toda hierarchy verification toolkit"};
    app.require_subcommand(0, 1);

    RunConfig cfg;
    std::string config_path;
    bool print_config = false;
    app.add_option("--config", config_path, "flat-key JSON config file");
    app.add_flag("--print-config", print_config, "print the effective config and exit");
    app.add_option("--epsilon", cfg.grid.epsilon, "lattice spacing");
    app.add_option("--J", cfg.grid.J, "mode cap for fresh fields");
    app.add_option("--K", cfg.K, "dressing truncation order");
    app.add_option("--seed", cfg.seed, "random seed");
    app.add_option("--seeds", cfg.seeds, "seeds per cheap check");
    app.add_option("--amplitude", cfg.amplitude, "random field amplitude");
    app.add_option("--state", cfg.state_path, "state JSON instead of random fields");

    auto* ver = app.add_subcommand("verify", "run a verification suite");
    std::string suite, rep_out = "report.json", csv_out = "block_table.csv";
    ver->add_option("--suite", suite,
                    "dressing|hierarchy|hamiltonian|addsym|block-table|all")->required();
    ver->add_option("--out", rep_out, "report JSON path");
    ver->add_option("--csv-out", csv_out, "block-table CSV path");
    ver->add_option("--mmax", cfg.mmax, "max m index");
    ver->add_option("--lmax", cfg.lmax, "max l index");

    auto* evo = app.add_subcommand("evolve", "integrate a hierarchy flow");
    std::string flow = "0,0", traj_out = "traj.csv", state_out = "final_state.json";
    double dt = 0.01;
    int steps = 10;
    evo->add_option("--flow", flow, "flow index a,n");
    evo->add_option("--dt", dt, "time step");
    evo->add_option("--steps", steps, "number of RK4 steps");
    evo->add_option("--out", traj_out, "trajectory CSV path");
    evo->add_option("--state-out", state_out, "final state JSON path");

    auto* drs = app.add_subcommand("dress", "solve and dump the dressing pair");
    std::string dress_out = "dressing.json";
    drs->add_option("--out", dress_out, "dump JSON path");

    auto* repc = app.add_subcommand("report", "pretty-print a JSON report");
    std::string rep_in;
    repc->add_option("--in", rep_in, "report JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        cfg.grid.validate();
        if (print_config) {
            std::printf("%s\n", config_json(cfg).dump(2).c_str());
            return 0;
        }
        if (ver->parsed()) return cmd_verify(cfg, suite, rep_out, csv_out);
        if (evo->parsed()) return cmd_evolve(cfg, flow, dt, steps, traj_out, state_out);
        if (drs->parsed()) return cmd_dress(cfg, dress_out);
        if (repc->parsed()) return cmd_report(rep_in);
        std::printf("%s\n", app.help().c_str());
        return 2;
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const BlowUp& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "numeric precondition: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
