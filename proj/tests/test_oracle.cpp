#include "doctest.h"

#include <string>

#include "latentmol/oracle.hpp"
#include "latentmol/rng.hpp"
#include "latentmol/selfies.hpp"

using namespace latentmol;

namespace {

MolGraph single_carbon() {
    MolGraph g;
    g.atoms = {Element::C};
    return g;
}

}  // namespace

TEST_CASE("pseudo synthetic accessibility formula") {
    // single C: clamp(1 + 0 + 0.08 + 0, 1, 10) = 1.08
    CHECK(pseudo_sa(single_carbon()) == doctest::Approx(1.08));

    // big branched multi-ring graph saturates at 10
    MolGraph big;
    for (int i = 0; i < 60; ++i) big.atoms.push_back(Element::C);
    for (int i = 1; i < 60; ++i) big.bonds.push_back({(i - 1) / 2, i, 1});
    CHECK(pseudo_sa(big) <= 10.0);
}

TEST_CASE("pseudo drug likeness peaks at 23 atoms and 2 rings") {
    // 23 heavy atoms, 2 rings: chain of 23 C with two extra closing bonds.
    MolGraph g;
    for (int i = 0; i < 23; ++i) g.atoms.push_back(Element::C);
    for (int i = 1; i < 23; ++i) g.bonds.push_back({i - 1, i, 1});
    g.bonds.push_back({0, 5, 1});
    g.bonds.push_back({10, 15, 1});
    REQUIRE(validate(g).valid);
    DescriptorVector d = descriptors(g);
    REQUIRE(d.heavy_atoms == 23);
    REQUIRE(d.ring_count == 2);
    CHECK(pseudo_qed(g) == doctest::Approx(1.0));
}

TEST_CASE("builtin ranges hold over random decodes") {
    RngStream rs(50, 0);
    const std::vector<Token>& alpha = base_alphabet();
    for (int trial = 0; trial < 500; ++trial) {
        TokenSeq seq;
        int len = 1 + static_cast<int>(rs.uniform_int(40));
        for (int i = 0; i < len; ++i)
            seq.push_back(alpha[rs.uniform_int(static_cast<uint32_t>(alpha.size()))]);
        MolGraph g = decode(seq);
        if (g.num_atoms() == 0) continue;
        double sa = pseudo_sa(g), qed = pseudo_qed(g);
        CHECK(sa >= 1.0);
        CHECK(sa <= 10.0);
        CHECK(qed > 0.0);
        CHECK(qed <= 1.0);
    }
}

TEST_CASE("builtin scoring is pure") {
    std::vector<MolGraph> mols(5, single_carbon());
    OracleSpec spec = OracleSpec::make_builtin("pseudoSA");
    ScoreResult a = score(spec, mols), b = score(spec, mols);
    CHECK(a.values == b.values);
    CHECK(a.failures == 0);
    CHECK_THROWS_AS(OracleSpec::make_builtin("nope"), UnknownProperty);
}

TEST_CASE("objective value: signs, linearity, errors") {
    PropertyVector pv{{"sa", 3.0}, {"qed", 0.8}};
    Objective obj{{"sa", 1.0, false}, {"qed", 1.0, true}};
    CHECK(objective_value(pv, obj) == doctest::Approx(3.0 - 0.8));
    CHECK(objective_value(pv, {{"sa", 1.0, false}}) == doctest::Approx(3.0));
    CHECK(objective_value(pv, {{"qed", 2.0, true}}) == doctest::Approx(-1.6));
    // linear in each property
    PropertyVector pv2 = pv;
    pv2["sa"] = 6.0;
    CHECK(objective_value(pv2, {{"sa", 1.0, false}}) ==
          doctest::Approx(2 * objective_value(pv, {{"sa", 1.0, false}})));
    CHECK_THROWS_AS(objective_value(pv, {}), BadObjective);
    CHECK_THROWS_AS(objective_value(pv, {{"missing", 1.0, false}}), UnknownProperty);
}

TEST_CASE("external oracle: values, NA convention, unavailability") {
    std::string bin = FAKE_ORACLE_PATH;
    std::vector<MolGraph> mols(4, single_carbon());

    // "len" mode replies with the canonical string length ("C" -> 1).
    OracleSpec ok = OracleSpec::make_external("len", bin + " len", 2, 10);
    ScoreResult r = score(ok, mols);
    REQUIRE(r.values.size() == 4);
    for (double v : r.values) CHECK(v == doctest::Approx(1.0));
    CHECK(r.failures == 0);

    // "na" mode: every second reply is NA -> value 0 and a failure tally.
    OracleSpec na = OracleSpec::make_external("na", bin + " na", 4, 10);
    ScoreResult rn = score(na, mols);
    CHECK(rn.values[0] == doctest::Approx(1.0));
    CHECK(rn.values[1] == doctest::Approx(0.0));
    CHECK(rn.failures == 2);

    // nonzero exit -> OracleUnavailable
    OracleSpec bad = OracleSpec::make_external("bad", bin + " fail", 4, 10);
    CHECK_THROWS_AS(score(bad, mols), OracleUnavailable);

    // missing binary (sh exits 127) -> OracleUnavailable
    OracleSpec missing =
        OracleSpec::make_external("missing", "/no/such/binary-xyz", 4, 10);
    CHECK_THROWS_AS(score(missing, mols), OracleUnavailable);

    // timeout -> per-molecule failures, not an exception
    OracleSpec hang = OracleSpec::make_external("hang", bin + " hang", 4, 0.5);
    ScoreResult rh = score(hang, mols);
    CHECK(rh.failures == 4);
    for (double v : rh.values) CHECK(v == 0.0);
}
