#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "meth/random.hpp"
#include "meth/serialize.hpp"

using namespace meth;
using nlohmann::json;

namespace {
const GridSpec grid{};

double fn_dist(const CoeffFn& a, const CoeffFn& b) { return sup_norm(a - b, grid); }

double op_dist(const DiffOp& a, const DiffOp& b) {
    double w = 0.0;
    for (int k = std::min(a.kmin(), b.kmin()); k <= std::max(a.kmax(), b.kmax()); ++k)
        w = std::max(w, fn_dist(a.coeff(k), b.coeff(k)));
    return w;
}
}  // namespace

TEST_CASE("CoeffFn round-trips exactly, secular blocks included") {
    std::mt19937_64 rng(7);
    CoeffFn f = random_field(rng, grid, 0.2);
    f += CoeffFn::monomial(2, cplx{0.3, -0.1});  // x^2 block
    f.ledger = 1.5e-9;
    json j = f;
    CoeffFn g = j.get<CoeffFn>();
    CHECK(fn_dist(f, g) == 0.0);
    CHECK(g.xdeg() == f.xdeg());
    CHECK(g.half() == f.half());
    CHECK(g.ledger == f.ledger);
    // text round-trip: shortest-exact double formatting
    CoeffFn h = json::parse(j.dump()).get<CoeffFn>();
    CHECK(fn_dist(f, h) == 0.0);
}

TEST_CASE("DiffOp round-trips with certification state") {
    std::mt19937_64 rng(7);
    CoeffFn u = random_field(rng, grid, 0.2);
    CoeffFn v = random_field(rng, grid, 0.2);
    DiffOp S = solve_dressing(u, v, 8, grid).S;
    json j = S;
    DiffOp R = j.get<DiffOp>();
    CHECK(op_dist(S, R) == 0.0);
    CHECK(R.kmin() == S.kmin());
    CHECK(R.kmax() == S.kmax());
    CHECK(R.trust.lo == S.trust.lo);
    CHECK(R.trust.hi == S.trust.hi);
    CHECK(R.supp.lo == S.supp.lo);
    CHECK(R.supp.hi == S.supp.hi);
    CHECK(R.ledger == doctest::Approx(S.ledger).epsilon(1e-15));
}

TEST_CASE("MixedOp round-trips through the parts map") {
    std::mt19937_64 rng(7);
    CoeffFn u = random_field(rng, grid, 0.2);
    CoeffFn v = random_field(rng, grid, 0.2);
    DressingPair P = solve_dressing(u, v, 8, grid);
    MixedOp lp = log_plus(P, grid);
    json j = lp;
    MixedOp R = j.get<MixedOp>();
    REQUIRE(R.parts().size() == lp.parts().size());
    for (auto& [d, p] : lp.parts()) CHECK(op_dist(p, R.part(d)) == 0.0);
}

TEST_CASE("GridSpec and LatticeState round-trip; invalid grids are rejected") {
    std::mt19937_64 rng(9);
    LatticeState st{random_field(rng, grid, 0.2), random_field(rng, grid, 0.2),
                    {{{0, 1}, 0.3}, {{1, 0}, -0.25}}, grid};
    json j = st;
    LatticeState r = j.get<LatticeState>();
    CHECK(fn_dist(st.u, r.u) == 0.0);
    CHECK(fn_dist(st.v, r.v) == 0.0);
    CHECK(r.times == st.times);
    CHECK(r.grid.epsilon == st.grid.epsilon);
    CHECK(r.grid.Jwork == st.grid.Jwork);

    json bad = json(grid);
    bad["epsilon"] = -1.0;
    GridSpec g;
    CHECK_THROWS_AS(bad.get_to(g), Error);
}

TEST_CASE("a reloaded dressing pair reproduces its residuals") {
    std::mt19937_64 rng(11);
    CoeffFn u = random_field(rng, grid, 0.2);
    CoeffFn v = random_field(rng, grid, 0.2);
    DressingPair P = solve_dressing(u, v, 10, grid);
    DiffOp L = lax_operator(u, exp_fn(v, grid));
    auto [r1, r2] = conjugation_residuals(P, L, grid);

    DressingPair Q = json::parse(json(P).dump()).get<DressingPair>();
    auto [q1, q2] = conjugation_residuals(Q, L, grid);
    CHECK(std::abs(q1 - r1) < 1e-12);
    CHECK(std::abs(q2 - r2) < 1e-12);
    CHECK(Q.order == P.order);
    CHECK(fn_dist(Q.logw0, P.logw0) == 0.0);
}
