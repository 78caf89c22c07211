#pragma once

// Differentiable property predictor from latent z, trained either against a
// frozen generator (sequential) or inside the generator loss (joint).

#include <stdexcept>
#include <string>
#include <vector>

#include "latentmol/oracle.hpp"
#include "latentmol/selfies.hpp"
#include "latentmol/vae.hpp"

namespace latentmol {

struct DimMismatch : std::runtime_error {
    explicit DimMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct EmptyTrainingSet : std::runtime_error {
    explicit EmptyTrainingSet(const std::string& m) : std::runtime_error(m) {}
};
struct MissingProperties : std::runtime_error {
    explicit MissingProperties(const std::string& m) : std::runtime_error(m) {}
};

class SurrogateModel {
public:
    SurrogateModel(int latent, std::vector<std::string> properties, int hidden,
                   uint64_t init_seed);

    const std::vector<std::string>& properties() const { return props_; }
    int latent() const { return latent_; }

    // Per-property target normalization; stds are floored at 1e-6.
    void set_normalization(std::vector<double> means, std::vector<double> stds);
    const std::vector<double>& means() const { return means_; }
    const std::vector<double>& stds() const { return stds_; }
    void fit_normalization(const std::vector<std::vector<double>>& targets);

    std::vector<Tensor> parameters();

    // (B, P) in normalized target space.
    Tensor predict_normalized(Tape& t, const Tensor& z);
    // (B, P) denormalized; differentiable end to end.
    Tensor predict(Tape& t, const Tensor& z);
    PropertyVector predict_point(const std::vector<float>& z);

    Checkpoint to_checkpoint() const;
    static SurrogateModel from_checkpoint(const Checkpoint& ck);

    Tensor& param(const std::string& name);

private:
    int latent_;
    int hidden_;
    std::vector<std::string> props_;
    std::vector<double> means_, stds_;
    std::map<std::string, Tensor> params_;
};

struct SurrogateTrainConfig {
    long n_samples = 2000;     // sequential: prior samples to label
    long steps = 2000;
    int batch = 64;
    AdamConfig adam;
    uint64_t seed = 0;
    int cmlmc_iterations = 5;
    float gamma = 1.0f;        // joint loss weight
    int hidden = 128;
};

// Samples z from the prior, decodes with the frozen generator, labels with
// the oracles, fits by MSE. Returns held-out MSE on a 10% split
// (denormalized, averaged over properties). Generator tensors are not
// modified.
double train_sequential(SurrogateModel& sur, VaeModel& vae, const Vocab& vocab,
                        const GroupDict* dict, const std::vector<OracleSpec>& oracles,
                        const SurrogateTrainConfig& cfg);

// One optimizer over generator + surrogate; loss = ELBO + gamma * MSE on the
// reparameterized z. Targets must cover every property for every sequence.
void train_joint(VaeModel& vae, SurrogateModel& sur, const IdBatch& corpus_ids,
                 const std::vector<PropertyVector>& targets, const TrainOptions& vae_opt,
                 float gamma, std::vector<TrainLogRow>* log = nullptr);

}  // namespace latentmol
