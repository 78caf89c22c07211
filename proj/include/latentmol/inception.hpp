#pragma once

// Reverse optimization through the latent space: many Gaussian starts,
// plain gradient descent on the surrogate objective, decode of every final
// point, oracle-based ranking.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "latentmol/oracle.hpp"
#include "latentmol/surrogate.hpp"

namespace latentmol {

struct StartResult {
    long start_index = 0;
    std::vector<float> z0, z_final;
    std::vector<double> trajectory;  // surrogate objective, length steps + 1
    std::string molecule;            // canonical string of the decoded graph
    PropertyVector surrogate_props;
    PropertyVector oracle_props;
    double objective_surrogate = 0.0;
    double objective_oracle = 0.0;
    bool aborted = false;  // non-finite gradient encountered
};

struct OptimizeConfig {
    long n_starts = 10000;
    int steps = 50;
    float lr = 0.1f;
    uint64_t seed = 0;
    int workers = 1;
    int cmlmc_iterations = 5;
};

// Differentiable scalar objective over z; fills grad (same size as z) and
// returns the value.
using LatentObjective =
    std::function<double(const std::vector<float>& z, std::vector<float>& grad)>;

// z <- z - lr * grad, `steps` times. Aborts (flag set) on a non-finite
// gradient, leaving z at its last finite value.
std::vector<float> descend(const LatentObjective& f, std::vector<float> z, int steps, float lr,
                           std::vector<double>* trajectory, bool* aborted);

LatentObjective surrogate_objective(SurrogateModel& sur, const Objective& objective);

// Each start draws z0 from stream (seed, start index), so results are
// independent of worker count and execution order.
std::vector<StartResult> optimize(VaeModel& vae, SurrogateModel& sur, const Vocab& vocab,
                                  const GroupDict* dict, const Objective& objective,
                                  const std::vector<OracleSpec>& oracles,
                                  const OptimizeConfig& cfg);

struct SelectionReport {
    // Indices into the results vector, best first, exact-duplicate molecule
    // strings removed, ties broken by molecule string.
    std::map<std::string, std::vector<size_t>> top_by_property;
    std::vector<size_t> top_by_objective;
    std::map<std::string, double> population_means;  // oracle values over all scored
    double mean_objective = 0.0;
    long scored = 0;
};

SelectionReport rank_and_select(const std::vector<StartResult>& results,
                                const Objective& objective, int top_k);

}  // namespace latentmol
