#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "latentmol/molgraph.hpp"
#include "latentmol/rng.hpp"

using namespace latentmol;

namespace {

MolGraph permuted(const MolGraph& g, const std::vector<int>& perm) {
    // perm[i] = new index of original atom i
    MolGraph out;
    out.atoms.resize(g.atoms.size());
    for (int i = 0; i < g.num_atoms(); ++i) out.atoms[perm[i]] = g.atoms[i];
    for (const Bond& b : g.bonds) out.bonds.push_back({perm[b.a], perm[b.b], b.order});
    return out;
}

// Random valence-valid connected graph: spanning tree plus a few extra
// single bonds where slack allows.
MolGraph random_graph(RngStream& rs, int n) {
    MolGraph g;
    for (int i = 0; i < n; ++i)
        g.atoms.push_back(static_cast<Element>(rs.uniform_int(kNumElements)));
    for (int i = 1; i < n; ++i) {
        int parent = static_cast<int>(rs.uniform_int(i));
        int order = 1 + static_cast<int>(rs.uniform_int(3));
        order = std::min({order, g.valence_slack(parent), g.valence_slack(i) + order});
        // valence_slack(i) counts no bonds yet for i, so only parent limits us
        order = std::max(1, std::min(order, max_valence(g.atoms[i])));
        if (g.valence_slack(parent) < 1) {
            // pick any atom with slack instead
            parent = -1;
            for (int j = 0; j < i; ++j)
                if (g.valence_slack(j) > 0) parent = j;
            if (parent < 0) {
                g.atoms.resize(i);  // cannot grow further
                break;
            }
            order = 1;
        }
        order = std::min(order, g.valence_slack(parent));
        g.bonds.push_back({parent, i, order});
    }
    int extra = static_cast<int>(rs.uniform_int(3));
    for (int e = 0; e < extra && g.num_atoms() > 2; ++e) {
        int a = static_cast<int>(rs.uniform_int(g.num_atoms()));
        int b = static_cast<int>(rs.uniform_int(g.num_atoms()));
        if (a == b || g.has_bond(a, b)) continue;
        if (g.valence_slack(a) >= 1 && g.valence_slack(b) >= 1) g.bonds.push_back({a, b, 1});
    }
    return g;
}

}  // namespace

TEST_CASE("valence table") {
    CHECK(max_valence(Element::C) == 4);
    CHECK(max_valence(Element::N) == 3);
    CHECK(max_valence(Element::O) == 2);
    CHECK(max_valence(Element::F) == 1);
    CHECK(max_valence(Element::S) == 6);
    CHECK(max_valence(Element::P) == 5);
    CHECK(max_valence(Element::Cl) == 1);
    CHECK(max_valence(Element::Br) == 1);
    CHECK(max_valence(Element::I) == 1);
}

TEST_CASE("validate flags over-valent atoms") {
    MolGraph g;
    g.atoms = {Element::O, Element::C, Element::C};
    g.bonds = {{0, 1, 2}, {0, 2, 2}};  // O with valence 4
    ValidityReport r = validate(g);
    CHECK_FALSE(r.valid);
    CHECK_FALSE(r.violations.empty());

    g.bonds = {{0, 1, 1}, {0, 2, 1}};
    CHECK(validate(g).valid);
}

TEST_CASE("descriptors: ring count and branch index") {
    // cyclopropane with a methyl branch
    MolGraph g;
    g.atoms = {Element::C, Element::C, Element::C, Element::C};
    g.bonds = {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}, {0, 3, 1}};
    DescriptorVector d = descriptors(g);
    CHECK(d.heavy_atoms == 4);
    CHECK(d.ring_count == 1);
    CHECK(d.branch_index == 1);  // atom 0 has degree 3
}

TEST_CASE("canonical string is permutation invariant") {
    RngStream rs(11, 0);
    for (int trial = 0; trial < 200; ++trial) {
        MolGraph g = random_graph(rs, 2 + static_cast<int>(rs.uniform_int(9)));
        REQUIRE(validate(g).valid);
        std::string base = canonical_string(g);
        std::vector<int> perm(g.num_atoms());
        std::iota(perm.begin(), perm.end(), 0);
        for (size_t i = 0; i + 1 < perm.size(); ++i)
            std::swap(perm[i], perm[i + rs.uniform_int(static_cast<uint32_t>(perm.size() - i))]);
        CHECK(canonical_string(permuted(g, perm)) == base);
    }
}

TEST_CASE("canonical round trip through the parser") {
    RngStream rs(12, 0);
    for (int trial = 0; trial < 200; ++trial) {
        MolGraph g = random_graph(rs, 2 + static_cast<int>(rs.uniform_int(9)));
        std::string s = canonical_string(g);
        MolGraph back = parse_canonical(s);
        CHECK(canonical_string(back) == s);
        CHECK(back.num_atoms() == g.num_atoms());
        CHECK(back.num_bonds() == g.num_bonds());
    }
}

TEST_CASE("simple known strings") {
    MolGraph methane;
    methane.atoms = {Element::C};
    CHECK(canonical_string(methane) == "C");

    MolGraph co2;
    co2.atoms = {Element::C, Element::O, Element::O};
    co2.bonds = {{0, 1, 2}, {0, 2, 2}};
    // start atom is the unique minimum-rank atom (the carbon)
    CHECK(canonical_string(co2) == "C(=O)=O");
    CHECK(canonical_string(parse_canonical("O=C=O")) == "C(=O)=O");

    MolGraph ring;
    ring.atoms = {Element::C, Element::C, Element::C};
    ring.bonds = {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}};
    CHECK(canonical_string(ring) == "C1CC1");
}

TEST_CASE("disconnected components are sorted and dot joined") {
    MolGraph g;
    g.atoms = {Element::O, Element::C};
    std::string s = canonical_string(g);
    CHECK(s == "C.O");
    MolGraph back = parse_canonical(s);
    CHECK(back.num_atoms() == 2);
    CHECK(back.num_components() == 2);
}

TEST_CASE("parser rejects malformed input") {
    CHECK_THROWS_AS(parse_canonical("C1CC"), InvalidGraph);   // open ring
    CHECK_THROWS_AS(parse_canonical("C(C"), InvalidGraph);    // open branch
    CHECK_THROWS_AS(parse_canonical("Xy"), InvalidGraph);     // unknown element
    CHECK_THROWS_AS(parse_canonical(""), InvalidGraph);
}

TEST_CASE("canonical order output maps string atoms to graph atoms") {
    MolGraph g;
    g.atoms = {Element::O, Element::C, Element::N};
    g.bonds = {{1, 0, 1}, {1, 2, 1}};
    std::vector<int> order;
    std::string s = canonical_string(g, &order);
    CHECK(order.size() == 3);
    // order[k] is the original index of the k-th atom written
    std::vector<bool> seen(3, false);
    for (int i : order) {
        REQUIRE(i >= 0);
        REQUIRE(i < 3);
        seen[i] = true;
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
}
