#pragma once

// Sequence beta-VAE: MLP encoder to a Gaussian latent, three decoder
// families (one-shot MLP, causal transformer, iterative mask-predict),
// the beta-weighted ELBO, and the cyclic beta schedule.

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentmol/checkpoint.hpp"
#include "latentmol/optim.hpp"
#include "latentmol/rng.hpp"
#include "latentmol/tensor.hpp"

namespace latentmol {

struct DivergedLoss : std::runtime_error {
    explicit DivergedLoss(const std::string& m) : std::runtime_error(m) {}
};
struct BadIterationCount : std::runtime_error {
    explicit BadIterationCount(const std::string& m) : std::runtime_error(m) {}
};

enum class DecoderKind { Nar, Ar, Cmlmc };
std::string decoder_kind_name(DecoderKind k);
DecoderKind decoder_kind_from(const std::string& name);

struct ModelDims {
    int vocab = 0;    // includes pad=0, bos=1, eos=2
    int max_len = 0;  // fixed padded sequence length
    int latent = 64;
    int layers = 2;
    int heads = 4;
    int hidden = 128;
};

struct BetaSchedule {
    float beta_max = 0.1f;
    long cycle_length = 1000;
    float ramp_fraction = 0.5f;  // in (0, 1]

    // Linear ramp 0 -> beta_max over the first ramp_fraction*cycle steps of
    // each cycle, then hold.
    float at(long step) const;
};

// Token id batch, one row per sequence, every row padded to max_len.
using IdBatch = std::vector<std::vector<int>>;

class VaeModel {
public:
    VaeModel(DecoderKind kind, ModelDims dims, uint64_t init_seed);

    DecoderKind kind() const { return kind_; }
    const ModelDims& dims() const { return dims_; }
    int mask_id() const { return dims_.vocab; }  // cmlmc only

    std::vector<Tensor> parameters();
    Checkpoint to_checkpoint() const;
    static VaeModel from_checkpoint(const Checkpoint& ck);

    struct Encoded {
        Tensor mu, logvar, z;  // each (B, latent)
    };
    // noise == nullptr uses z = mu.
    Encoded encode(Tape& t, const IdBatch& ids, RngStream* noise);

    // (B, max_len, vocab) logits.
    Tensor nar_logits(Tape& t, const Tensor& z);
    // Teacher forcing: input is [bos, target[0..max_len-2]] built internally.
    Tensor ar_logits(Tape& t, const Tensor& z, const IdBatch& targets);
    // Input may contain mask_id tokens; no causal mask.
    Tensor cmlmc_logits(Tape& t, const Tensor& z, const IdBatch& ids);
    // (B, max_len + 1) classes over sequence length.
    Tensor length_logits(Tape& t, const Tensor& z);

    // Inference (tape disabled internally); z is a single (latent,) vector.
    std::vector<int> decode_nar(const std::vector<float>& z);
    std::vector<int> decode_ar(const std::vector<float>& z, bool sample = false,
                               RngStream* rng = nullptr);
    std::vector<int> decode_cmlmc(const std::vector<float>& z, int iterations);

    Tensor& param(const std::string& name);

private:
    Tensor transformer(Tape& t, const Tensor& z, const IdBatch& ids, bool causal);
    Tensor latent_row(const std::vector<float>& z) const;

    DecoderKind kind_;
    ModelDims dims_;
    std::map<std::string, Tensor> params_;
};

// Masks in play entering each of T iterations for a length-n sequence:
// ceil(n*(T-t)/T) for t = 0..T-1. Ends at > 0; after the last iteration
// zero masks remain.
std::vector<int> cmlmc_mask_counts(int n, int T);

struct ElboTerms {
    Tensor loss;   // recon + beta * kl
    Tensor recon;  // cross-entropy summed over non-pad positions, mean over batch
    Tensor kl;     // closed-form KL to the unit normal, mean over batch
};

// loss_weight: per flattened position (B*max_len); non-negative. For plain
// ELBO pass 1 on non-pad positions, 0 elsewhere.
ElboTerms elbo_loss(Tape& t, const Tensor& logits, const IdBatch& targets,
                    const std::vector<float>& loss_weight, const Tensor& mu,
                    const Tensor& logvar, float beta);

std::vector<float> nonpad_weight(const IdBatch& targets);

struct TrainOptions {
    long steps = 5000;
    int batch = 64;
    AdamConfig adam;  // total_steps <= 0 means use `steps`
    BetaSchedule beta;
    uint64_t seed = 0;
    float corruption = 0.15f;  // token-denoising substitution rate (cmlmc)
};

struct TrainLogRow {
    long step;
    double recon, kl, beta, lr, mse;
};

// Optional extra loss term added to the ELBO (e.g. a property-regression
// penalty on z). Returns the term tensor and a value to log.
using ExtraLoss =
    std::function<std::pair<Tensor, double>(Tape&, const Tensor& z, const std::vector<int>& rows)>;

void train_model(VaeModel& model, const IdBatch& corpus_ids, const TrainOptions& opt,
                 std::vector<TrainLogRow>* log = nullptr, const ExtraLoss& extra = nullptr,
                 std::vector<Tensor> extra_params = {});

// Fraction of non-pad target tokens recovered by argmax under deterministic
// encoding (z = mu) and teacher forcing / one-shot prediction.
double reconstruction_accuracy(VaeModel& model, const IdBatch& corpus_ids);

}  // namespace latentmol
