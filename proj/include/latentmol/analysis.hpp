#pragma once

// Latent-space quality metrics: Dirichlet energy of a property signal over a
// KNN graph, surrogate fit (MSE, local Pearson), and 2-D landscape slices.

#include <array>
#include <functional>
#include <stdexcept>
#include <vector>

#include "latentmol/surrogate.hpp"

namespace latentmol {

struct TooFewPoints : std::runtime_error {
    explicit TooFewPoints(const std::string& m) : std::runtime_error(m) {}
};
struct DegenerateSet : std::runtime_error {
    explicit DegenerateSet(const std::string& m) : std::runtime_error(m) {}
};

struct KnnGraph {
    int n = 0, k = 0;
    std::vector<std::vector<int>> knn;  // k nearest per node, ties by lower index
    std::vector<std::vector<int>> adj;  // union-symmetrized, sorted, no self loops
    std::vector<int> degree() const;
    bool adjacent(int i, int j) const;
};

// Euclidean brute force; requires at least k+1 points.
KnnGraph build_knn(const std::vector<std::vector<float>>& points, int k);

// (1/N) * y' (D - A) y over the symmetrized adjacency; >= 0.
double dirichlet_energy(const KnnGraph& graph, const std::vector<double>& y);

struct FitMetrics {
    double mse = 0.0;
    double local_pearson = 0.0;
    int anchors_used = 0;
    int anchors_skipped = 0;  // zero-variance neighborhoods
};

// Anchors are the eval sequences' encoded means. MSE compares the surrogate
// objective to the oracle objective pointwise; local Pearson correlates the
// two across each anchor's k-neighborhood (anchor + its k nearest).
FitMetrics surrogate_fit_metrics(VaeModel& vae, SurrogateModel& sur, const Objective& objective,
                                 const IdBatch& eval_ids,
                                 const std::vector<double>& oracle_objectives, int k = 5);

// Objective evaluated on a resolution x resolution grid spanning
// [-extent, extent]^2 along two random orthonormal directions from `center`.
// Rows are (u, v, objective).
std::vector<std::array<double, 3>> landscape_slice(
    const std::vector<float>& center,
    const std::function<double(const std::vector<float>&)>& objective_at, float extent,
    int resolution, uint64_t seed, std::vector<float>* u_out = nullptr,
    std::vector<float>* v_out = nullptr);

}  // namespace latentmol
