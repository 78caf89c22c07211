#pragma once

// Molecular graph with a fixed valence model. Hydrogens are implicit;
// no aromaticity, charges, isotopes or stereochemistry.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace latentmol {

struct InvalidGraph : std::runtime_error {
    explicit InvalidGraph(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Element : int { C = 0, N, O, F, S, P, Cl, Br, I };
inline constexpr int kNumElements = 9;

// Valence table: C=4, N=3, O=2, F=1, S=6, P=5, Cl=1, Br=1, I=1.
int max_valence(Element e);
const char* element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view s);

struct Bond {
    int a = 0;
    int b = 0;
    int order = 1;
};

struct MolGraph {
    std::vector<Element> atoms;
    std::vector<Bond> bonds;

    int num_atoms() const { return static_cast<int>(atoms.size()); }
    int num_bonds() const { return static_cast<int>(bonds.size()); }

    // Sum of bond orders at atom i.
    int valence_used(int i) const;
    int valence_slack(int i) const { return max_valence(atoms[i]) - valence_used(i); }
    int implicit_h(int i) const { return valence_slack(i); }
    int degree(int i) const;
    bool has_bond(int a, int b) const;
    int num_components() const;
    bool connected() const { return num_atoms() <= 1 || num_components() == 1; }
    std::vector<std::vector<int>> adjacency() const;  // neighbor atom indices
};

struct ValidityReport {
    bool valid = true;
    std::vector<int> slack;               // per-atom valence slack
    std::vector<std::string> violations;  // human-readable
};

ValidityReport validate(const MolGraph& g);

struct DescriptorVector {
    int heavy_atoms = 0;
    int ring_count = 0;    // |bonds| - |atoms| + #components
    int branch_index = 0;  // atoms with degree >= 3
};

DescriptorVector descriptors(const MolGraph& g);

// Deterministic SMILES-subset notation; invariant under atom-index
// permutation. Disconnected components are canonicalized separately,
// sorted, and joined with '.'.
std::string canonical_string(const MolGraph& g);

// Same, also reporting the atom order used in the output string
// (out_order[k] = original index of the k-th written atom).
std::string canonical_string(const MolGraph& g, std::vector<int>* out_order);

// Parses the canonical subset (elements, =/# bonds, ring digits,
// parenthesized branches, '.'). Not a general SMILES parser.
MolGraph parse_canonical(std::string_view s);

}  // namespace latentmol
