#pragma once

// Property oracles: cheap built-in descriptor scorers plus a line-protocol
// subprocess bridge for external scorers. Values that cannot be computed
// score 0 and are counted, not raised.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentmol/molgraph.hpp"

namespace latentmol {

struct OracleUnavailable : std::runtime_error {
    explicit OracleUnavailable(const std::string& m) : std::runtime_error(m) {}
};
struct UnknownProperty : std::runtime_error {
    explicit UnknownProperty(const std::string& m) : std::runtime_error(m) {}
};
struct BadObjective : std::runtime_error {
    explicit BadObjective(const std::string& m) : std::runtime_error(m) {}
};

using PropertyVector = std::map<std::string, double>;

enum class BuiltinOracle { PseudoSa, PseudoQed, HeavyAtoms, RingCount };

struct OracleSpec {
    std::string name;
    bool external = false;
    BuiltinOracle builtin = BuiltinOracle::PseudoSa;
    std::string command;      // external: run via sh -c
    int batch_size = 256;     // external
    double timeout_sec = 30;  // external, per batch

    static OracleSpec make_builtin(const std::string& name);  // throws UnknownProperty
    static OracleSpec make_external(const std::string& name, const std::string& command,
                                    int batch_size = 256, double timeout_sec = 30);
};

// Synthetic stand-ins with SA/QED-like ranges; not chemically meaningful.
double pseudo_sa(const MolGraph& g);    // in [1, 10], lower is easier
double pseudo_qed(const MolGraph& g);   // in (0, 1], higher is more drug-like

struct ScoreResult {
    std::vector<double> values;  // one per molecule, 0 on per-molecule failure
    long failures = 0;
};

// External specs receive canonical strings, one per line, and must reply one
// float or NA per line in order. Nonzero child exit raises OracleUnavailable.
ScoreResult score(const OracleSpec& spec, const std::vector<MolGraph>& molecules);

std::vector<PropertyVector> score_all(const std::vector<OracleSpec>& specs,
                                      const std::vector<MolGraph>& molecules,
                                      long* failures = nullptr);

struct ObjectiveTerm {
    std::string property;
    double weight = 1.0;
    bool maximize = false;
};

// Lower is better: sum of weight * value for min terms, minus for max terms.
using Objective = std::vector<ObjectiveTerm>;

double objective_value(const PropertyVector& props, const Objective& objective);

}  // namespace latentmol
