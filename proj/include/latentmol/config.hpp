#pragma once

// Run configuration: one JSON file drives every command. Unknown keys are
// rejected so experiment grids stay auditable.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentmol/oracle.hpp"
#include "latentmol/vae.hpp"

namespace latentmol {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct RunConfig {
    uint64_t seed = 0;
    int workers = 1;

    std::string tokenizer = "selfies";  // or "group_selfies"
    std::string dict_path;              // group_selfies only
    std::string decoder = "nar";        // nar | ar | cmlmc
    std::string surrogate_mode = "sequential";  // or "joint"

    ModelDims model{0, 64, 64, 2, 4, 128};  // vocab filled from the vocab file

    // training
    long steps = 5000;
    int batch = 64;
    double lr_max = 1e-3;
    double lr_min = -1.0;  // < 0: lr_max / 100
    double beta_max = 0.1;
    long cycle_length = 1000;
    double ramp_fraction = 0.5;
    double gamma = 1.0;
    double corruption = 0.15;
    int cmlmc_iterations = 5;
    long surrogate_samples = 2000;
    long surrogate_steps = 2000;

    Objective objective;
    std::vector<OracleSpec> oracles;

    // optimization
    long n_starts = 10000;
    int opt_steps = 50;
    double opt_lr = 0.1;
    int top_k = 100;

    // analysis
    int knn_k = 5;
    double landscape_extent = 3.0;
    int landscape_resolution = 21;

    // paths
    std::string corpus_path;
    std::string vocab_path;
    std::string properties_path;
    std::string output_dir = ".";

    static RunConfig defaults();
    static RunConfig load(const std::string& path);  // throws ConfigError
    std::string dump() const;                        // canonical JSON, defaults filled
    uint64_t digest() const;
    void apply_env_overrides();  // LATENTMOL_SEED, LATENTMOL_WORKERS
};

}  // namespace latentmol
