#include "latentmol/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace latentmol {

namespace {

Tensor gauss_init(std::vector<int> shape, uint64_t seed, const std::string& name, float stddev) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    RngStream rs(seed, "init/" + name);
    for (float& v : t.data()) v = rs.gaussian() * stddev;
    return t;
}

Tensor linear(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(t, matmul(t, x, w), b);
}

}  // namespace

SurrogateModel::SurrogateModel(int latent, std::vector<std::string> properties, int hidden,
                               uint64_t init_seed)
    : latent_(latent), hidden_(hidden), props_(std::move(properties)) {
    const int P = static_cast<int>(props_.size());
    if (P == 0) throw MissingProperties("surrogate needs at least one property");
    means_.assign(P, 0.0);
    stds_.assign(P, 1.0);
    params_["sur.h1.w"] = gauss_init({latent_, hidden_}, init_seed, "sur.h1.w",
                                     std::sqrt(2.0f / latent_));
    params_["sur.h1.b"] = Tensor::zeros({hidden_}, true);
    params_["sur.h2.w"] = gauss_init({hidden_, hidden_}, init_seed, "sur.h2.w",
                                     std::sqrt(2.0f / hidden_));
    params_["sur.h2.b"] = Tensor::zeros({hidden_}, true);
    params_["sur.out.w"] = gauss_init({hidden_, P}, init_seed, "sur.out.w", 0.02f);
    params_["sur.out.b"] = Tensor::zeros({P}, true);
}

void SurrogateModel::set_normalization(std::vector<double> means, std::vector<double> stds) {
    if (means.size() != props_.size() || stds.size() != props_.size())
        throw DimMismatch("normalization size != property count");
    for (double& s : stds) s = std::max(s, 1e-6);
    means_ = std::move(means);
    stds_ = std::move(stds);
}

void SurrogateModel::fit_normalization(const std::vector<std::vector<double>>& targets) {
    const size_t P = props_.size();
    std::vector<double> mean(P, 0.0), var(P, 0.0);
    if (targets.empty()) throw EmptyTrainingSet("no targets to normalize against");
    for (const auto& row : targets) {
        if (row.size() != P) throw DimMismatch("target row width != property count");
        for (size_t j = 0; j < P; ++j) mean[j] += row[j];
    }
    for (double& m : mean) m /= static_cast<double>(targets.size());
    for (const auto& row : targets)
        for (size_t j = 0; j < P; ++j) var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
    std::vector<double> std(P);
    for (size_t j = 0; j < P; ++j)
        std[j] = std::sqrt(var[j] / static_cast<double>(targets.size()));
    set_normalization(std::move(mean), std::move(std));
}

std::vector<Tensor> SurrogateModel::parameters() {
    std::vector<Tensor> out;
    for (auto& [_, t] : params_) out.push_back(t);
    return out;
}

Tensor& SurrogateModel::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw BadCheckpoint("no such parameter: " + name);
    return it->second;
}

Tensor SurrogateModel::predict_normalized(Tape& t, const Tensor& z) {
    if (z.shape().size() != 2 || z.shape()[1] != latent_)
        throw DimMismatch("predict: z shape " + shape_str(z.shape()) + ", latent dim " +
                          std::to_string(latent_));
    Tensor h = relu(t, linear(t, z, params_["sur.h1.w"], params_["sur.h1.b"]));
    h = relu(t, linear(t, h, params_["sur.h2.w"], params_["sur.h2.b"]));
    return linear(t, h, params_["sur.out.w"], params_["sur.out.b"]);
}

Tensor SurrogateModel::predict(Tape& t, const Tensor& z) {
    const int P = static_cast<int>(props_.size());
    Tensor norm = predict_normalized(t, z);
    std::vector<float> sv(P), mv(P);
    for (int j = 0; j < P; ++j) {
        sv[j] = static_cast<float>(stds_[j]);
        mv[j] = static_cast<float>(means_[j]);
    }
    return add(t, mul(t, norm, Tensor::from({P}, sv)), Tensor::from({P}, mv));
}

PropertyVector SurrogateModel::predict_point(const std::vector<float>& z) {
    Tape t;
    t.enabled = false;
    Tensor out = predict(t, Tensor::from({1, latent_}, z));
    PropertyVector pv;
    for (size_t j = 0; j < props_.size(); ++j) pv[props_[j]] = out.data()[j];
    return pv;
}

Checkpoint SurrogateModel::to_checkpoint() const {
    Checkpoint ck;
    ck.meta["arch"] = "surrogate_mlp";
    ck.meta["latent"] = std::to_string(latent_);
    ck.meta["hidden"] = std::to_string(hidden_);
    std::string names;
    for (const std::string& p : props_) names += (names.empty() ? "" : ",") + p;
    ck.meta["properties"] = names;
    for (const auto& [name, t] : params_) ck.put(name, t);
    const int P = static_cast<int>(props_.size());
    Tensor mt = Tensor::zeros({P}), st = Tensor::zeros({P});
    for (int j = 0; j < P; ++j) {
        mt.data()[j] = static_cast<float>(means_[j]);
        st.data()[j] = static_cast<float>(stds_[j]);
    }
    ck.put("sur.norm.mean", mt);
    ck.put("sur.norm.std", st);
    return ck;
}

SurrogateModel SurrogateModel::from_checkpoint(const Checkpoint& ck) {
    std::vector<std::string> props;
    std::istringstream ps(ck.meta_str("properties"));
    std::string name;
    while (std::getline(ps, name, ',')) props.push_back(name);
    SurrogateModel m(static_cast<int>(ck.meta_long("latent")), props,
                     static_cast<int>(ck.meta_long("hidden")), 0);
    for (auto& [pname, t] : m.params_) {
        Tensor loaded = ck.get(pname);
        if (loaded.shape() != t.shape()) throw BadCheckpoint("shape mismatch for " + pname);
        t.data() = loaded.data();
    }
    Tensor mt = ck.get("sur.norm.mean"), st = ck.get("sur.norm.std");
    std::vector<double> means(mt.data().begin(), mt.data().end());
    std::vector<double> stds(st.data().begin(), st.data().end());
    m.set_normalization(means, stds);
    return m;
}

namespace {

std::vector<int> decode_ids(VaeModel& vae, const std::vector<float>& z, int cmlmc_iters) {
    switch (vae.kind()) {
        case DecoderKind::Nar: return vae.decode_nar(z);
        case DecoderKind::Ar: return vae.decode_ar(z);
        case DecoderKind::Cmlmc: return vae.decode_cmlmc(z, cmlmc_iters);
    }
    return {};
}

}  // namespace

double train_sequential(SurrogateModel& sur, VaeModel& vae, const Vocab& vocab,
                        const GroupDict* dict, const std::vector<OracleSpec>& oracles,
                        const SurrogateTrainConfig& cfg) {
    if (cfg.n_samples <= 0) throw EmptyTrainingSet("n_samples must be positive");
    const int d = vae.dims().latent;
    const int P = static_cast<int>(sur.properties().size());

    std::vector<std::vector<float>> zs;
    std::vector<MolGraph> mols;
    for (long i = 0; i < cfg.n_samples; ++i) {
        RngStream rs(cfg.seed, "surrogate/prior", static_cast<uint64_t>(i));
        std::vector<float> z(d);
        for (float& v : z) v = rs.gaussian();
        std::vector<int> ids = decode_ids(vae, z, cfg.cmlmc_iterations);
        TokenSeq seq;
        for (int id : ids) seq.push_back(vocab.tokens[id]);
        mols.push_back(decode(seq, dict));
        zs.push_back(std::move(z));
    }

    std::vector<PropertyVector> props = score_all(oracles, mols);
    std::vector<std::vector<double>> targets(props.size());
    for (size_t i = 0; i < props.size(); ++i)
        for (const std::string& pn : sur.properties()) {
            auto it = props[i].find(pn);
            if (it == props[i].end())
                throw MissingProperties("oracle set does not produce property " + pn);
            targets[i].push_back(it->second);
        }

    // Deterministic 90/10 split: every 10th sample held out.
    std::vector<int> train_idx, test_idx;
    for (long i = 0; i < cfg.n_samples; ++i)
        (i % 10 == 9 ? test_idx : train_idx).push_back(static_cast<int>(i));
    if (train_idx.empty()) throw EmptyTrainingSet("no samples left after split");

    sur.fit_normalization(targets);

    AdamConfig acfg = cfg.adam;
    if (acfg.total_steps <= 0) acfg.total_steps = static_cast<int>(cfg.steps);
    Adam adam(sur.parameters(), acfg);
    RngStream brs(cfg.seed, "surrogate/batch");
    const int B = std::min<int>(cfg.batch, static_cast<int>(train_idx.size()));

    for (long step = 0; step < cfg.steps; ++step) {
        Tape t;
        std::vector<float> zb(static_cast<size_t>(B) * d);
        std::vector<float> yb(static_cast<size_t>(B) * P);
        for (int i = 0; i < B; ++i) {
            int r = train_idx[brs.uniform_int(static_cast<uint32_t>(train_idx.size()))];
            std::copy(zs[r].begin(), zs[r].end(), zb.begin() + i * d);
            for (int j = 0; j < P; ++j)
                yb[i * P + j] = static_cast<float>((targets[r][j] - sur.means()[j]) /
                                                   sur.stds()[j]);
        }
        Tensor z = Tensor::from({B, d}, zb);
        Tensor y = Tensor::from({B, P}, yb);
        Tensor diff = add(t, sur.predict_normalized(t, z), scale(t, y, -1.0f));
        Tensor loss = scale(t, sum_all(t, mul(t, diff, diff)), 1.0f / (B * P));
        t.backward(loss);
        adam.step();
        adam.zero_grad();
    }

    // Held-out MSE in original units, averaged over properties.
    double mse = 0.0;
    if (!test_idx.empty()) {
        Tape t;
        t.enabled = false;
        std::vector<float> zb;
        for (int r : test_idx) zb.insert(zb.end(), zs[r].begin(), zs[r].end());
        Tensor pred = sur.predict(t, Tensor::from({static_cast<int>(test_idx.size()), d}, zb));
        for (size_t i = 0; i < test_idx.size(); ++i)
            for (int j = 0; j < P; ++j) {
                double e = pred.data()[i * P + j] - targets[test_idx[i]][j];
                mse += e * e;
            }
        mse /= static_cast<double>(test_idx.size() * P);
    }
    return mse;
}

void train_joint(VaeModel& vae, SurrogateModel& sur, const IdBatch& corpus_ids,
                 const std::vector<PropertyVector>& targets, const TrainOptions& vae_opt,
                 float gamma, std::vector<TrainLogRow>* log) {
    if (targets.size() != corpus_ids.size())
        throw MissingProperties("property rows != corpus size");
    const int P = static_cast<int>(sur.properties().size());
    std::vector<std::vector<double>> rows(targets.size());
    for (size_t i = 0; i < targets.size(); ++i)
        for (const std::string& pn : sur.properties()) {
            auto it = targets[i].find(pn);
            if (it == targets[i].end())
                throw MissingProperties("sequence " + std::to_string(i) +
                                        " lacks property " + pn);
            rows[i].push_back(it->second);
        }
    sur.fit_normalization(rows);

    if (gamma == 0.0f) {
        train_model(vae, corpus_ids, vae_opt, log);
        return;
    }

    ExtraLoss extra = [&](Tape& t, const Tensor& z, const std::vector<int>& batch_rows)
        -> std::pair<Tensor, double> {
        const int B = static_cast<int>(batch_rows.size());
        std::vector<float> yb(static_cast<size_t>(B) * P);
        for (int i = 0; i < B; ++i)
            for (int j = 0; j < P; ++j)
                yb[i * P + j] = static_cast<float>((rows[batch_rows[i]][j] - sur.means()[j]) /
                                                   sur.stds()[j]);
        Tensor y = Tensor::from({B, P}, yb);
        Tensor diff = add(t, sur.predict_normalized(t, z), scale(t, y, -1.0f));
        Tensor mse = scale(t, sum_all(t, mul(t, diff, diff)), 1.0f / (B * P));
        return {scale(t, mse, gamma), mse.item()};
    };
    train_model(vae, corpus_ids, vae_opt, log, extra, sur.parameters());
}

}  // namespace latentmol
