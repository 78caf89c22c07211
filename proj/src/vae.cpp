#include "latentmol/vae.hpp"

#include "latentmol/selfies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace latentmol {

std::string decoder_kind_name(DecoderKind k) {
    switch (k) {
        case DecoderKind::Nar: return "nar_mlp";
        case DecoderKind::Ar: return "ar_transformer";
        case DecoderKind::Cmlmc: return "cmlmc";
    }
    return "?";
}

DecoderKind decoder_kind_from(const std::string& name) {
    if (name == "nar_mlp" || name == "nar") return DecoderKind::Nar;
    if (name == "ar_transformer" || name == "ar") return DecoderKind::Ar;
    if (name == "cmlmc") return DecoderKind::Cmlmc;
    throw std::runtime_error("unknown decoder kind: " + name);
}

float BetaSchedule::at(long step) const {
    long phase = step % cycle_length;
    double ramp = ramp_fraction * static_cast<double>(cycle_length);
    if (static_cast<double>(phase) < ramp)
        return static_cast<float>(beta_max * phase / ramp);
    return beta_max;
}

std::vector<int> cmlmc_mask_counts(int n, int T) {
    if (T < 1) throw BadIterationCount("iterations must be >= 1, got " + std::to_string(T));
    std::vector<int> counts;
    for (int t = 0; t < T; ++t)
        counts.push_back(static_cast<int>(
            std::ceil(static_cast<double>(n) * (T - t) / static_cast<double>(T))));
    return counts;
}

namespace {

Tensor gauss_init(std::vector<int> shape, uint64_t seed, const std::string& name, float stddev) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    RngStream rs(seed, "init/" + name);
    for (float& v : t.data()) v = rs.gaussian() * stddev;
    return t;
}

Tensor const_init(std::vector<int> shape, float v) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
}

Tensor linear(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(t, matmul(t, x, w), b);
}

std::vector<int> flatten(const IdBatch& ids) {
    std::vector<int> flat;
    flat.reserve(ids.size() * (ids.empty() ? 0 : ids[0].size()));
    for (const auto& row : ids) flat.insert(flat.end(), row.begin(), row.end());
    return flat;
}

}  // namespace

VaeModel::VaeModel(DecoderKind kind, ModelDims dims, uint64_t init_seed)
    : kind_(kind), dims_(dims) {
    const int V = dims_.vocab, L = dims_.max_len, d = dims_.latent, H = dims_.hidden;
    auto W = [&](const std::string& name, std::vector<int> shape, float stddev) {
        params_[name] = gauss_init(std::move(shape), init_seed, name, stddev);
    };
    auto B = [&](const std::string& name, int n, float v = 0.0f) {
        params_[name] = const_init({n}, v);
    };

    W("enc.in.w", {L * V, H}, std::sqrt(2.0f / L));
    B("enc.in.b", H);
    W("enc.h.w", {H, H}, std::sqrt(2.0f / H));
    B("enc.h.b", H);
    W("enc.mu.w", {H, d}, 0.02f);
    B("enc.mu.b", d);
    W("enc.lv.w", {H, d}, 0.02f);
    B("enc.lv.b", d);

    if (kind_ == DecoderKind::Nar) {
        W("dec.h1.w", {d, H}, std::sqrt(2.0f / d));
        B("dec.h1.b", H);
        W("dec.h2.w", {H, H}, std::sqrt(2.0f / H));
        B("dec.h2.b", H);
        W("dec.out.w", {H, L * V}, 0.02f);
        B("dec.out.b", L * V);
        return;
    }

    const int S = L + 1;  // latent memory token at position 0
    const int rows = kind_ == DecoderKind::Cmlmc ? V + 1 : V;  // +1 = mask token
    W("dec.emb", {rows, H}, 0.02f);
    W("dec.pos", {S, H}, 0.02f);
    W("dec.zproj.w", {d, H}, 0.02f);
    B("dec.zproj.b", H);
    for (int i = 0; i < dims_.layers; ++i) {
        std::string p = "dec.l" + std::to_string(i) + ".";
        for (const char* m : {"wq", "wk", "wv", "wo"}) {
            W(p + m + ".w", {H, H}, 0.02f);
            B(p + m + ".b", H);
        }
        B(p + "ln1.g", H, 1.0f);
        B(p + "ln1.b", H);
        B(p + "ln2.g", H, 1.0f);
        B(p + "ln2.b", H);
        W(p + "ff1.w", {H, 2 * H}, 0.02f);
        B(p + "ff1.b", 2 * H);
        W(p + "ff2.w", {2 * H, H}, 0.02f);
        B(p + "ff2.b", H);
    }
    B("dec.lnf.g", H, 1.0f);
    B("dec.lnf.b", H);
    W("dec.out.w", {H, V}, 0.02f);
    B("dec.out.b", V);
    if (kind_ == DecoderKind::Cmlmc) {
        W("dec.len.w", {d, L + 1}, 0.02f);
        B("dec.len.b", L + 1);
    }
}

Tensor& VaeModel::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw BadCheckpoint("no such parameter: " + name);
    return it->second;
}

std::vector<Tensor> VaeModel::parameters() {
    std::vector<Tensor> out;
    for (auto& [_, t] : params_) out.push_back(t);
    return out;
}

Checkpoint VaeModel::to_checkpoint() const {
    Checkpoint ck;
    ck.meta["arch"] = decoder_kind_name(kind_);
    ck.meta["vocab"] = std::to_string(dims_.vocab);
    ck.meta["max_len"] = std::to_string(dims_.max_len);
    ck.meta["latent"] = std::to_string(dims_.latent);
    ck.meta["layers"] = std::to_string(dims_.layers);
    ck.meta["heads"] = std::to_string(dims_.heads);
    ck.meta["hidden"] = std::to_string(dims_.hidden);
    for (const auto& [name, t] : params_) ck.put(name, t);
    return ck;
}

VaeModel VaeModel::from_checkpoint(const Checkpoint& ck) {
    ModelDims dims;
    dims.vocab = static_cast<int>(ck.meta_long("vocab"));
    dims.max_len = static_cast<int>(ck.meta_long("max_len"));
    dims.latent = static_cast<int>(ck.meta_long("latent"));
    dims.layers = static_cast<int>(ck.meta_long("layers"));
    dims.heads = static_cast<int>(ck.meta_long("heads"));
    dims.hidden = static_cast<int>(ck.meta_long("hidden"));
    VaeModel m(decoder_kind_from(ck.meta_str("arch")), dims, 0);
    for (auto& [name, t] : m.params_) {
        Tensor loaded = ck.get(name);
        if (loaded.shape() != t.shape())
            throw BadCheckpoint("shape mismatch for " + name);
        t.data() = loaded.data();
    }
    return m;
}

VaeModel::Encoded VaeModel::encode(Tape& t, const IdBatch& ids, RngStream* noise) {
    const int B = static_cast<int>(ids.size());
    const int L = dims_.max_len, V = dims_.vocab, d = dims_.latent;
    std::vector<int> flat;
    flat.reserve(static_cast<size_t>(B) * L);
    for (const auto& row : ids) {
        if (static_cast<int>(row.size()) != L)
            throw ShapeMismatch("encode: sequence length " + std::to_string(row.size()) +
                                " != max_len " + std::to_string(L));
        for (int p = 0; p < L; ++p) {
            if (row[p] < 0 || row[p] >= V) throw ShapeMismatch("encode: token id out of vocab");
            flat.push_back(p * V + row[p]);
        }
    }
    // One-hot (max_len x V) MLP realized as a position-tagged embedding sum.
    Tensor e = embedding(t, params_["enc.in.w"], flat);            // (B*L, H)
    e = reshape(t, e, {B, L, dims_.hidden});
    Tensor h = add(t, sum_axis(t, e, 1), params_["enc.in.b"]);     // (B, H)
    h = relu(t, h);
    h = relu(t, linear(t, h, params_["enc.h.w"], params_["enc.h.b"]));
    Encoded out;
    out.mu = linear(t, h, params_["enc.mu.w"], params_["enc.mu.b"]);
    out.logvar = clamp(t, linear(t, h, params_["enc.lv.w"], params_["enc.lv.b"]), -10.0f, 10.0f);
    if (noise) {
        Tensor eps = Tensor::zeros({B, d});
        for (float& v : eps.data()) v = noise->gaussian();
        out.z = gaussian_reparam(t, out.mu, out.logvar, eps);
    } else {
        out.z = out.mu;
    }
    return out;
}

Tensor VaeModel::nar_logits(Tape& t, const Tensor& z) {
    const int B = z.shape()[0];
    Tensor h = relu(t, linear(t, z, params_["dec.h1.w"], params_["dec.h1.b"]));
    h = relu(t, linear(t, h, params_["dec.h2.w"], params_["dec.h2.b"]));
    Tensor logits = linear(t, h, params_["dec.out.w"], params_["dec.out.b"]);
    return reshape(t, logits, {B, dims_.max_len, dims_.vocab});
}

Tensor VaeModel::transformer(Tape& t, const Tensor& z, const IdBatch& ids, bool causal) {
    const int B = static_cast<int>(ids.size());
    const int L = dims_.max_len, H = dims_.hidden, S = L + 1;
    const int dh = H / dims_.heads;

    Tensor emb = embedding(t, params_["dec.emb"], flatten(ids));  // (B*L, H)
    emb = reshape(t, emb, {B, L, H});
    Tensor mem = linear(t, z, params_["dec.zproj.w"], params_["dec.zproj.b"]);  // (B, H)
    mem = reshape(t, mem, {B, 1, H});
    Tensor x = concat(t, {mem, emb}, 1);  // (B, S, H)
    x = add(t, x, params_["dec.pos"]);

    Tensor mask;
    if (causal) {
        mask = Tensor::zeros({S, S});
        for (int i = 0; i < S; ++i)
            for (int j = i + 1; j < S; ++j) mask.data()[i * S + j] = -1e9f;
    }

    auto ln = [&](const Tensor& v, const std::string& g, const std::string& b) {
        return add(t, mul(t, layernorm_lastdim(t, v), params_[g]), params_[b]);
    };

    for (int li = 0; li < dims_.layers; ++li) {
        std::string p = "dec.l" + std::to_string(li) + ".";
        Tensor n1 = ln(x, p + "ln1.g", p + "ln1.b");
        Tensor q = linear(t, n1, params_[p + "wq.w"], params_[p + "wq.b"]);
        Tensor k = linear(t, n1, params_[p + "wk.w"], params_[p + "wk.b"]);
        Tensor v = linear(t, n1, params_[p + "wv.w"], params_[p + "wv.b"]);
        std::vector<Tensor> heads;
        for (int h = 0; h < dims_.heads; ++h) {
            Tensor qh = slice(t, q, 2, h * dh, (h + 1) * dh);
            Tensor kh = slice(t, k, 2, h * dh, (h + 1) * dh);
            Tensor vh = slice(t, v, 2, h * dh, (h + 1) * dh);
            Tensor scores = scale(t, matmul(t, qh, transpose_last2(t, kh)),
                                  1.0f / std::sqrt(static_cast<float>(dh)));
            if (causal) scores = add(t, scores, mask);
            heads.push_back(matmul(t, softmax_lastdim(t, scores), vh));
        }
        Tensor att = linear(t, concat(t, heads, 2), params_[p + "wo.w"], params_[p + "wo.b"]);
        x = add(t, x, att);
        Tensor n2 = ln(x, p + "ln2.g", p + "ln2.b");
        Tensor f = relu(t, linear(t, n2, params_[p + "ff1.w"], params_[p + "ff1.b"]));
        f = linear(t, f, params_[p + "ff2.w"], params_[p + "ff2.b"]);
        x = add(t, x, f);
    }
    x = ln(x, "dec.lnf.g", "dec.lnf.b");
    Tensor logits = linear(t, x, params_["dec.out.w"], params_["dec.out.b"]);  // (B, S, V)
    return slice(t, logits, 1, 1, S);  // position i predicts target token i
}

Tensor VaeModel::ar_logits(Tape& t, const Tensor& z, const IdBatch& targets) {
    IdBatch shifted(targets.size());
    for (size_t i = 0; i < targets.size(); ++i) {
        shifted[i].assign(dims_.max_len, 0);
        shifted[i][0] = 1;  // bos
        for (int p = 1; p < dims_.max_len; ++p) shifted[i][p] = targets[i][p - 1];
    }
    return transformer(t, z, shifted, true);
}

Tensor VaeModel::cmlmc_logits(Tape& t, const Tensor& z, const IdBatch& ids) {
    return transformer(t, z, ids, false);
}

Tensor VaeModel::length_logits(Tape& t, const Tensor& z) {
    return linear(t, z, params_["dec.len.w"], params_["dec.len.b"]);
}

Tensor VaeModel::latent_row(const std::vector<float>& z) const {
    if (static_cast<int>(z.size()) != dims_.latent)
        throw ShapeMismatch("latent size " + std::to_string(z.size()) + " != " +
                            std::to_string(dims_.latent));
    return Tensor::from({1, dims_.latent}, z);
}

std::vector<int> VaeModel::decode_nar(const std::vector<float>& z) {
    Tape t;
    t.enabled = false;
    Tensor logits = nar_logits(t, latent_row(z));
    const int L = dims_.max_len, V = dims_.vocab;
    std::vector<int> out;
    for (int p = 0; p < L; ++p) {
        const float* row = logits.data().data() + p * V;
        int best = static_cast<int>(std::max_element(row, row + V) - row);
        if (best == 2) break;  // eos
        out.push_back(best);
    }
    return out;
}

std::vector<int> VaeModel::decode_ar(const std::vector<float>& z, bool sample, RngStream* rng) {
    Tape t;
    t.enabled = false;
    Tensor zr = latent_row(z);
    const int L = dims_.max_len, V = dims_.vocab;
    std::vector<int> out;
    IdBatch target(1);
    target[0].assign(L, 0);
    for (int i = 0; i < L; ++i) {
        Tensor logits = ar_logits(t, zr, target);
        const float* row = logits.data().data() + i * V;
        int tok;
        if (sample && rng) {
            float mx = *std::max_element(row, row + V);
            std::vector<double> p(V);
            double s = 0.0;
            for (int j = 0; j < V; ++j) s += p[j] = std::exp(static_cast<double>(row[j]) - mx);
            double r = rng->next_double() * s, acc = 0.0;
            tok = V - 1;
            for (int j = 0; j < V; ++j) {
                acc += p[j];
                if (r < acc) {
                    tok = j;
                    break;
                }
            }
        } else {
            tok = static_cast<int>(std::max_element(row, row + V) - row);
        }
        if (tok == 2) break;  // eos
        out.push_back(tok);
        target[0][i] = tok;
    }
    return out;
}

std::vector<int> VaeModel::decode_cmlmc(const std::vector<float>& z, int iterations) {
    if (iterations < 1)
        throw BadIterationCount("iterations must be >= 1, got " + std::to_string(iterations));
    Tape t;
    t.enabled = false;
    Tensor zr = latent_row(z);
    const int L = dims_.max_len, V = dims_.vocab;
    Tensor ll = length_logits(t, zr);
    int n = static_cast<int>(std::max_element(ll.data().begin(), ll.data().end()) -
                             ll.data().begin());
    n = std::clamp(n, 1, L);
    std::vector<int> counts = cmlmc_mask_counts(n, iterations);

    IdBatch ids(1);
    ids[0].assign(L, 0);
    std::vector<bool> masked(n, true);
    for (int p = 0; p < n; ++p) ids[0][p] = mask_id();
    std::vector<float> score(n, 0.0f);

    for (int it = 0; it < iterations; ++it) {
        Tensor logits = cmlmc_logits(t, zr, ids);
        for (int p = 0; p < n; ++p) {
            const float* row = logits.data().data() + p * V;
            float mx = *std::max_element(row, row + V);
            double s = 0.0;
            for (int j = 0; j < V; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
            if (masked[p]) {
                int best = static_cast<int>(std::max_element(row, row + V) - row);
                ids[0][p] = best;
                masked[p] = false;
            }
            score[p] = static_cast<float>(std::exp(row[ids[0][p]] - mx) / s);
        }
        if (it + 1 < iterations) {
            int k = counts[it + 1];
            std::vector<int> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return score[a] < score[b]; });
            for (int j = 0; j < k && j < n; ++j) {
                ids[0][order[j]] = mask_id();
                masked[order[j]] = true;
            }
        }
    }
    std::vector<int> out;
    for (int p = 0; p < n; ++p) {
        if (ids[0][p] == 2) break;  // eos
        out.push_back(ids[0][p]);
    }
    return out;
}

std::vector<float> nonpad_weight(const IdBatch& targets) {
    std::vector<float> w;
    for (const auto& row : targets)
        for (int id : row) w.push_back(id == 0 ? 0.0f : 1.0f);
    return w;
}

ElboTerms elbo_loss(Tape& t, const Tensor& logits, const IdBatch& targets,
                    const std::vector<float>& loss_weight, const Tensor& mu,
                    const Tensor& logvar, float beta) {
    const int B = static_cast<int>(targets.size());
    const int L = logits.shape()[1], V = logits.shape()[2];
    if (static_cast<int>(loss_weight.size()) != B * L)
        throw ShapeMismatch("loss_weight length != batch * max_len");
    Tensor flat = reshape(t, logits, {B * L, V});
    Tensor ce = cross_entropy_logits(t, flat, flatten(targets));  // (B*L,)
    Tensor w = Tensor::from({B * L}, loss_weight);
    ElboTerms out;
    out.recon = scale(t, sum_all(t, mul(t, ce, w)), 1.0f / B);

    const int d = mu.shape()[1];
    Tensor mu2 = mul(t, mu, mu);
    Tensor sig2 = exp_op(t, logvar);
    Tensor inner = add(t, add(t, mu2, sig2), scale(t, logvar, -1.0f));
    Tensor neg1 = Tensor::from({d}, std::vector<float>(d, -1.0f));
    inner = add(t, inner, neg1);
    out.kl = scale(t, sum_all(t, inner), 0.5f / B);
    out.loss = add(t, out.recon, scale(t, out.kl, beta));
    return out;
}

void train_model(VaeModel& model, const IdBatch& corpus_ids, const TrainOptions& opt,
                 std::vector<TrainLogRow>* log, const ExtraLoss& extra,
                 std::vector<Tensor> extra_params) {
    if (corpus_ids.empty()) throw EmptyCorpus("train: empty corpus");
    const int N = static_cast<int>(corpus_ids.size());
    const int L = model.dims().max_len, V = model.dims().vocab;

    AdamConfig acfg = opt.adam;
    if (acfg.total_steps <= 0) acfg.total_steps = static_cast<int>(opt.steps);
    std::vector<Tensor> params = model.parameters();
    for (Tensor& p : extra_params) params.push_back(p);
    Adam adam(params, acfg);

    RngStream batch_rs(opt.seed, "batch");

    for (long step = 0; step < opt.steps; ++step) {
        std::vector<int> rows(opt.batch);
        for (int& r : rows) r = static_cast<int>(batch_rs.uniform_int(N));
        IdBatch batch(opt.batch);
        for (int i = 0; i < opt.batch; ++i) batch[i] = corpus_ids[rows[i]];

        Tape t;
        RngStream eps(opt.seed, "reparam", static_cast<uint64_t>(step));
        VaeModel::Encoded enc = model.encode(t, batch, &eps);

        Tensor logits;
        std::vector<float> weight;
        Tensor length_term;  // cmlmc only
        if (model.kind() == DecoderKind::Nar) {
            logits = model.nar_logits(t, enc.z);
            weight = nonpad_weight(batch);
        } else if (model.kind() == DecoderKind::Ar) {
            logits = model.ar_logits(t, enc.z, batch);
            weight = nonpad_weight(batch);
        } else {
            // Mask-predict training: per sequence mask k ~ U[1, n] positions;
            // corrupt a fraction of the unmasked ones for the denoising term.
            RngStream mrs(opt.seed, "mask", static_cast<uint64_t>(step));
            IdBatch masked = batch;
            weight.assign(static_cast<size_t>(opt.batch) * L, 0.0f);
            std::vector<int> lengths(opt.batch);
            for (int i = 0; i < opt.batch; ++i) {
                int n = 0;
                while (n < L && batch[i][n] != 0) ++n;
                lengths[i] = n;
                if (n == 0) continue;
                int k = 1 + static_cast<int>(mrs.uniform_int(n));
                std::vector<int> pos(n);
                std::iota(pos.begin(), pos.end(), 0);
                for (int j = 0; j < k; ++j)
                    std::swap(pos[j], pos[j + mrs.uniform_int(n - j)]);
                for (int j = 0; j < k; ++j) {
                    masked[i][pos[j]] = model.mask_id();
                    weight[i * L + pos[j]] = 1.0f;
                }
                for (int j = k; j < n; ++j) {
                    if (mrs.next_float() < opt.corruption) {
                        masked[i][pos[j]] = 3 + static_cast<int>(mrs.uniform_int(V - 3));
                        weight[i * L + pos[j]] = 1.0f;
                    }
                }
            }
            logits = model.cmlmc_logits(t, enc.z, masked);
            Tensor ll = model.length_logits(t, enc.z);
            length_term =
                scale(t, sum_all(t, cross_entropy_logits(t, ll, lengths)), 1.0f / opt.batch);
        }

        float beta = opt.beta.at(step);
        ElboTerms terms = elbo_loss(t, logits, batch, weight, enc.mu, enc.logvar, beta);
        Tensor loss = terms.loss;
        if (length_term.defined()) loss = add(t, loss, length_term);
        double mse_log = 0.0;
        if (extra) {
            auto [term, mse] = extra(t, enc.z, rows);
            loss = add(t, loss, term);
            mse_log = mse;
        }

        if (!std::isfinite(loss.item()))
            throw DivergedLoss("non-finite loss at step " + std::to_string(step) +
                               " (recon=" + std::to_string(terms.recon.item()) +
                               ", kl=" + std::to_string(terms.kl.item()) + ")");

        t.backward(loss);
        adam.step();
        adam.zero_grad();

        if (log)
            log->push_back({step, terms.recon.item(), terms.kl.item(), beta,
                            acfg.lr_at(static_cast<int>(step)), mse_log});
    }
}

double reconstruction_accuracy(VaeModel& model, const IdBatch& corpus_ids) {
    Tape t;
    t.enabled = false;
    const int L = model.dims().max_len, V = model.dims().vocab;
    long correct = 0, total = 0;
    const int chunk = 64;
    for (size_t off = 0; off < corpus_ids.size(); off += chunk) {
        IdBatch batch(corpus_ids.begin() + off,
                      corpus_ids.begin() + std::min(corpus_ids.size(), off + chunk));
        VaeModel::Encoded enc = model.encode(t, batch, nullptr);
        Tensor logits;
        if (model.kind() == DecoderKind::Nar) {
            logits = model.nar_logits(t, enc.z);
        } else if (model.kind() == DecoderKind::Ar) {
            logits = model.ar_logits(t, enc.z, batch);
        } else {
            IdBatch masked = batch;
            for (auto& row : masked)
                for (int& id : row)
                    if (id != 0) id = model.mask_id();
            logits = model.cmlmc_logits(t, enc.z, masked);
        }
        for (size_t i = 0; i < batch.size(); ++i)
            for (int p = 0; p < L; ++p) {
                if (batch[i][p] == 0) continue;
                const float* row = logits.data().data() + (i * L + p) * V;
                int best = static_cast<int>(std::max_element(row, row + V) - row);
                correct += best == batch[i][p];
                ++total;
            }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

}  // namespace latentmol
