#include "latentmol/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <queue>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "latentmol/analysis.hpp"
#include "latentmol/inception.hpp"
#include "latentmol/surrogate.hpp"

namespace latentmol {

namespace fs = std::filesystem;

DirLock::DirLock(const std::string& dir) {
    fs::create_directories(dir);
    path_ = (fs::path(dir) / ".lock").string();
    int fd = open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        path_.clear();
        throw LockError("output directory is locked by another run: " + dir);
    }
    close(fd);
}

DirLock::~DirLock() {
    if (!path_.empty()) unlink(path_.c_str());
}

IdBatch tokenize_padded(const std::vector<TokenSeq>& corpus, const Vocab& vocab, int max_len) {
    IdBatch out;
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (static_cast<int>(corpus[i].size()) + 1 > max_len)
            throw IoError("sequence " + std::to_string(i) + " has " +
                          std::to_string(corpus[i].size()) +
                          " tokens; max_len " + std::to_string(max_len) +
                          " leaves no room for eos");
        std::vector<int> ids;
        for (const Token& t : corpus[i]) {
            int id = vocab.id_of(t);
            if (id < 0) throw IoError("token " + t.text() + " not in vocabulary");
            ids.push_back(id);
        }
        ids.push_back(vocab.eos_id());
        ids.resize(max_len, vocab.pad_id());
        out.push_back(std::move(ids));
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << content;
}

GroupDict load_dict_if_any(const RunConfig& cfg) {
    if (cfg.tokenizer == "group_selfies") return GroupDict::load(cfg.dict_path);
    return {};
}

const GroupDict* dict_ptr(const RunConfig& cfg, const GroupDict& dict) {
    return cfg.tokenizer == "group_selfies" ? &dict : nullptr;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

Vocab load_vocab(const RunConfig& cfg) {
    if (cfg.vocab_path.empty()) throw ConfigError("paths.vocab is required for this command");
    return Vocab::load(cfg.vocab_path);
}

// Connected component containing atom 0, atoms reindexed.
MolGraph main_component(const MolGraph& g) {
    if (g.num_atoms() <= 1) return g;
    std::vector<int> map(g.num_atoms(), -1);
    std::vector<std::vector<int>> adj = g.adjacency();
    std::queue<int> q;
    q.push(0);
    map[0] = 0;
    int next = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (map[v] < 0) {
                map[v] = next++;
                q.push(v);
            }
    }
    MolGraph out;
    out.atoms.resize(next);
    for (int i = 0; i < g.num_atoms(); ++i)
        if (map[i] >= 0) out.atoms[map[i]] = g.atoms[i];
    for (const Bond& b : g.bonds)
        if (map[b.a] >= 0 && map[b.b] >= 0) out.bonds.push_back({map[b.a], map[b.b], b.order});
    return out;
}

std::vector<MolGraph> decode_corpus(const std::vector<TokenSeq>& corpus, const GroupDict* dict) {
    std::vector<MolGraph> out;
    out.reserve(corpus.size());
    for (const TokenSeq& seq : corpus) out.push_back(decode(seq, dict));
    return out;
}

struct LoadedModels {
    VaeModel vae;
    SurrogateModel sur;
};

LoadedModels load_models(const RunConfig& cfg, const Vocab& vocab) {
    Checkpoint vck = Checkpoint::load(out_path(cfg, "vae.ckpt"));
    Checkpoint sck = Checkpoint::load(out_path(cfg, "surrogate.ckpt"));
    VaeModel vae = VaeModel::from_checkpoint(vck);
    SurrogateModel sur = SurrogateModel::from_checkpoint(sck);
    if (vae.dims().latent != cfg.model.latent || vae.dims().max_len != cfg.model.max_len ||
        vae.dims().vocab != vocab.size() || sur.latent() != vae.dims().latent)
        throw IncompatibleCheckpoint("checkpoint dims do not match config/vocab");
    if (vck.meta.count("vocab_hash") &&
        vck.meta_str("vocab_hash") != std::to_string(vocab.hash()))
        throw IncompatibleCheckpoint("checkpoint was trained with a different vocabulary");
    return {std::move(vae), std::move(sur)};
}

std::vector<std::string> oracle_names(const RunConfig& cfg) {
    std::vector<std::string> names;
    for (const OracleSpec& o : cfg.oracles) names.push_back(o.name);
    return names;
}

void write_effective_config(const RunConfig& cfg) {
    write_text(out_path(cfg, "config.effective.json"), cfg.dump());
}

std::vector<double> oracle_objective_values(const RunConfig& cfg,
                                            const std::vector<PropertyVector>& props) {
    std::vector<double> y;
    y.reserve(props.size());
    for (const PropertyVector& pv : props) y.push_back(objective_value(pv, cfg.objective));
    return y;
}

void run_landscape(const RunConfig& cfg, const Vocab& vocab, const GroupDict* dp,
                   LoadedModels& m) {
    auto objective_at = [&](const std::vector<float>& z) {
        std::vector<int> ids;
        switch (m.vae.kind()) {
            case DecoderKind::Nar: ids = m.vae.decode_nar(z); break;
            case DecoderKind::Ar: ids = m.vae.decode_ar(z); break;
            case DecoderKind::Cmlmc: ids = m.vae.decode_cmlmc(z, cfg.cmlmc_iterations); break;
        }
        TokenSeq seq;
        for (int id : ids) seq.push_back(vocab.tokens[id]);
        MolGraph g = decode(seq, dp);
        std::vector<MolGraph> one{g};
        PropertyVector pv = score_all(cfg.oracles, one)[0];
        return objective_value(pv, cfg.objective);
    };

    std::vector<float> center(m.vae.dims().latent, 0.0f);
    auto rows = landscape_slice(center, objective_at, static_cast<float>(cfg.landscape_extent),
                                cfg.landscape_resolution, cfg.seed);
    std::ostringstream csv;
    csv << "u,v,objective\n";
    for (const auto& r : rows)
        csv << fmt(r[0]) << "," << fmt(r[1]) << "," << fmt(r[2]) << "\n";
    write_text(out_path(cfg, "landscape.csv"), csv.str());
}

}  // namespace

void cmd_gen_corpus(const RunConfig& cfg, long count, int max_raw_tokens) {
    DirLock lock(cfg.output_dir);
    GroupDict dict = load_dict_if_any(cfg);
    const GroupDict* dp = dict_ptr(cfg, dict);
    const std::vector<Token>& alphabet = base_alphabet();
    int extra = dp && !dp->empty() ? static_cast<int>(dp->groups.size()) : 0;

    std::vector<TokenSeq> corpus;
    long attempts = 0;
    for (uint64_t i = 0; static_cast<long>(corpus.size()) < count; ++i) {
        if (++attempts > count * 200L)
            throw IoError("corpus generation is not converging; lower model.max_len "
                          "or raise the raw token budget");
        RngStream rs(cfg.seed, "gen", i);
        int len = 1 + static_cast<int>(rs.uniform_int(max_raw_tokens));
        TokenSeq raw;
        for (int j = 0; j < len; ++j) {
            int pick = static_cast<int>(rs.uniform_int(
                static_cast<uint32_t>(alphabet.size() + extra)));
            if (pick < static_cast<int>(alphabet.size()))
                raw.push_back(alphabet[pick]);
            else
                raw.push_back(Token::group(pick - static_cast<int>(alphabet.size())));
        }
        MolGraph g = main_component(decode(raw, dp));
        if (g.num_atoms() == 0) continue;
        try {
            TokenSeq seq = encode(g, dp, cfg.model.max_len - 1);
            corpus.push_back(std::move(seq));
        } catch (const UnencodableGraph&) {
            continue;
        }
    }
    std::string path = cfg.corpus_path.empty() ? out_path(cfg, "corpus.txt") : cfg.corpus_path;
    save_corpus(corpus, path);
    std::cout << "wrote " << corpus.size() << " molecules to " << path << "\n";
}

void cmd_build_vocab(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    if (cfg.corpus_path.empty()) throw ConfigError("paths.corpus is required");
    std::vector<TokenSeq> corpus = load_corpus(cfg.corpus_path);
    Vocab vocab = Vocab::from_corpus(corpus);
    CorpusStats stats = corpus_stats(corpus, vocab);
    std::string vpath = cfg.vocab_path.empty() ? out_path(cfg, "vocab.txt") : cfg.vocab_path;
    vocab.save(vpath);

    std::ostringstream rep;
    rep << "total_tokens=" << stats.total_tokens << "\n"
        << "max_len=" << stats.max_len << "\n"
        << "avg_len=" << fmt(stats.avg_len) << "\n";
    write_text(out_path(cfg, "vocab_stats.txt"), rep.str());
    std::cout << rep.str();
}

void cmd_extract_groups(const RunConfig& cfg, long min_freq, int min_atoms) {
    DirLock lock(cfg.output_dir);
    if (cfg.corpus_path.empty()) throw ConfigError("paths.corpus is required");
    std::vector<TokenSeq> corpus = load_corpus(cfg.corpus_path);
    std::vector<MolGraph> graphs = decode_corpus(corpus, nullptr);
    GroupDict dict = extract_groups(graphs, min_freq, min_atoms);
    dict.provenance = "corpus=" + cfg.corpus_path + " min_freq=" + std::to_string(min_freq) +
                      " min_atoms=" + std::to_string(min_atoms);
    std::string path = out_path(cfg, "groups.tsv");
    dict.save(path);
    std::cout << "wrote " << dict.groups.size() << " groups to " << path << "\n";
}

void cmd_train(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    if (cfg.corpus_path.empty()) throw ConfigError("paths.corpus is required");
    std::vector<TokenSeq> corpus = load_corpus(cfg.corpus_path);
    if (corpus.empty()) throw EmptyCorpus(cfg.corpus_path);
    Vocab vocab = load_vocab(cfg);
    GroupDict dict = load_dict_if_any(cfg);
    const GroupDict* dp = dict_ptr(cfg, dict);

    ModelDims dims = cfg.model;
    dims.vocab = vocab.size();
    IdBatch ids = tokenize_padded(corpus, vocab, dims.max_len);

    VaeModel vae(decoder_kind_from(cfg.decoder), dims, cfg.seed);
    TrainOptions opt;
    opt.steps = cfg.steps;
    opt.batch = cfg.batch;
    opt.adam.lr_max = static_cast<float>(cfg.lr_max);
    opt.adam.lr_min = static_cast<float>(cfg.lr_min);
    opt.beta.beta_max = static_cast<float>(cfg.beta_max);
    opt.beta.cycle_length = cfg.cycle_length;
    opt.beta.ramp_fraction = static_cast<float>(cfg.ramp_fraction);
    opt.seed = cfg.seed;
    opt.corruption = static_cast<float>(cfg.corruption);

    std::vector<TrainLogRow> log;
    SurrogateModel sur(dims.latent, oracle_names(cfg), 128, cfg.seed);
    double heldout_mse = -1.0;

    if (cfg.surrogate_mode == "joint") {
        std::vector<PropertyVector> props;
        if (!cfg.properties_path.empty()) {
            std::vector<TokenSeq> pc;
            load_property_dataset(cfg.properties_path, pc, props);
            if (pc.size() != corpus.size())
                throw MissingProperties("property dataset size != corpus size");
        } else {
            props = score_all(cfg.oracles, decode_corpus(corpus, dp));
        }
        train_joint(vae, sur, ids, props, opt, static_cast<float>(cfg.gamma), &log);
    } else {
        train_model(vae, ids, opt, &log);
        SurrogateTrainConfig scfg;
        scfg.n_samples = cfg.surrogate_samples;
        scfg.steps = cfg.surrogate_steps;
        scfg.batch = cfg.batch;
        scfg.seed = cfg.seed;
        scfg.cmlmc_iterations = cfg.cmlmc_iterations;
        heldout_mse = train_sequential(sur, vae, vocab, dp, cfg.oracles, scfg);
    }

    Checkpoint vck = vae.to_checkpoint();
    vck.meta["seed"] = std::to_string(cfg.seed);
    vck.meta["vocab_hash"] = std::to_string(vocab.hash());
    vck.meta["beta_max"] = fmt(cfg.beta_max);
    vck.meta["cycle_length"] = std::to_string(cfg.cycle_length);
    vck.meta["ramp_fraction"] = fmt(cfg.ramp_fraction);
    vck.meta["config_digest"] = std::to_string(cfg.digest());
    vck.save(out_path(cfg, "vae.ckpt"));

    Checkpoint sck = sur.to_checkpoint();
    sck.meta["seed"] = std::to_string(cfg.seed);
    sck.meta["config_digest"] = std::to_string(cfg.digest());
    sck.save(out_path(cfg, "surrogate.ckpt"));

    std::ostringstream csv;
    csv << "step,recon,kl,beta,lr,mse\n";
    for (const TrainLogRow& r : log)
        csv << r.step << "," << fmt(r.recon) << "," << fmt(r.kl) << "," << fmt(r.beta) << ","
            << fmt(r.lr) << "," << fmt(r.mse) << "\n";
    write_text(out_path(cfg, "train_log.csv"), csv.str());
    write_effective_config(cfg);

    std::cout << "trained " << cfg.decoder << "/" << cfg.surrogate_mode << " for " << cfg.steps
              << " steps";
    if (heldout_mse >= 0) std::cout << "; surrogate held-out mse " << fmt(heldout_mse);
    std::cout << "\n";
}

void cmd_optimize(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    Vocab vocab = load_vocab(cfg);
    GroupDict dict = load_dict_if_any(cfg);
    const GroupDict* dp = dict_ptr(cfg, dict);
    LoadedModels m = load_models(cfg, vocab);

    OptimizeConfig ocfg;
    ocfg.n_starts = cfg.n_starts;
    ocfg.steps = cfg.opt_steps;
    ocfg.lr = static_cast<float>(cfg.opt_lr);
    ocfg.seed = cfg.seed;
    ocfg.workers = cfg.workers;
    ocfg.cmlmc_iterations = cfg.cmlmc_iterations;

    std::vector<StartResult> results =
        optimize(m.vae, m.sur, vocab, dp, cfg.objective, cfg.oracles, ocfg);
    SelectionReport rep = rank_and_select(results, cfg.objective, cfg.top_k);

    std::vector<std::string> props;
    for (const auto& [name, _] : rep.population_means) props.push_back(name);

    std::ostringstream csv;
    csv << "start_index,molecule,objective_surrogate,objective_oracle";
    for (const std::string& p : props) csv << ",prop:" << p;
    csv << "\n";
    for (const StartResult& r : results) {
        csv << r.start_index << "," << r.molecule << "," << fmt(r.objective_surrogate) << ","
            << fmt(r.objective_oracle);
        for (const std::string& p : props) csv << "," << fmt(r.oracle_props.at(p));
        csv << "\n";
    }
    write_text(out_path(cfg, "results.csv"), csv.str());

    std::ostringstream sum;
    sum << "scored=" << rep.scored << "\n";
    sum << "mean_objective=" << fmt(rep.mean_objective) << "\n";
    for (const std::string& p : props)
        sum << "mean_" << p << "=" << fmt(rep.population_means.at(p)) << "\n";
    write_text(out_path(cfg, "summary.txt"), sum.str());

    auto write_top = [&](const std::string& name, const std::vector<size_t>& idx,
                         const std::string& key) {
        std::ostringstream os;
        os << "rank,start_index,molecule," << key << "\n";
        for (size_t r = 0; r < idx.size(); ++r) {
            const StartResult& sr = results[idx[r]];
            double v = key == "objective" ? sr.objective_oracle : sr.oracle_props.at(key);
            os << r + 1 << "," << sr.start_index << "," << sr.molecule << "," << fmt(v) << "\n";
        }
        write_text(out_path(cfg, name), os.str());
    };
    for (const auto& [p, idx] : rep.top_by_property) write_top("top_" + p + ".csv", idx, p);
    write_top("top_objective.csv", rep.top_by_objective, "objective");
    write_effective_config(cfg);

    std::cout << "optimized " << cfg.n_starts << " starts; mean oracle objective "
              << fmt(rep.mean_objective) << "\n";
}

void cmd_analyze(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    if (cfg.corpus_path.empty() && cfg.properties_path.empty())
        throw ConfigError("paths.corpus or paths.properties is required");
    Vocab vocab = load_vocab(cfg);
    GroupDict dict = load_dict_if_any(cfg);
    const GroupDict* dp = dict_ptr(cfg, dict);
    LoadedModels m = load_models(cfg, vocab);

    std::vector<TokenSeq> corpus;
    std::vector<PropertyVector> props;
    if (!cfg.properties_path.empty()) {
        load_property_dataset(cfg.properties_path, corpus, props);
    } else {
        corpus = load_corpus(cfg.corpus_path);
        props = score_all(cfg.oracles, decode_corpus(corpus, dp));
    }
    if (corpus.empty()) throw EmptyCorpus("analysis corpus is empty");

    IdBatch ids = tokenize_padded(corpus, vocab, cfg.model.max_len);
    std::vector<double> y = oracle_objective_values(cfg, props);

    FitMetrics fit = surrogate_fit_metrics(m.vae, m.sur, cfg.objective, ids, y, cfg.knn_k);

    Tape t;
    t.enabled = false;
    const int d = m.vae.dims().latent;
    std::vector<std::vector<float>> mu(ids.size());
    for (size_t off = 0; off < ids.size(); off += 128) {
        IdBatch batch(ids.begin() + off, ids.begin() + std::min(ids.size(), off + 128));
        VaeModel::Encoded enc = m.vae.encode(t, batch, nullptr);
        for (size_t i = 0; i < batch.size(); ++i)
            mu[off + i].assign(enc.mu.data().begin() + i * d,
                               enc.mu.data().begin() + (i + 1) * d);
    }
    KnnGraph g = build_knn(mu, cfg.knn_k);
    double lambda = dirichlet_energy(g, y);

    std::ostringstream rep;
    rep << "mse=" << fmt(fit.mse) << "\n"
        << "local_pearson=" << fmt(fit.local_pearson) << "\n"
        << "lambda_y=" << fmt(lambda) << "\n"
        << "anchors_used=" << fit.anchors_used << "\n"
        << "anchors_skipped=" << fit.anchors_skipped << "\n"
        << "knn_k=" << cfg.knn_k << "\n"
        << "n_points=" << corpus.size() << "\n"
        << "config_digest=" << cfg.digest() << "\n";
    write_text(out_path(cfg, "metrics.txt"), rep.str());
    std::cout << rep.str();

    run_landscape(cfg, vocab, dp, m);
    write_effective_config(cfg);
}

void cmd_landscape(const RunConfig& cfg) {
    DirLock lock(cfg.output_dir);
    Vocab vocab = load_vocab(cfg);
    GroupDict dict = load_dict_if_any(cfg);
    const GroupDict* dp = dict_ptr(cfg, dict);
    LoadedModels m = load_models(cfg, vocab);
    run_landscape(cfg, vocab, dp, m);
    std::cout << "wrote " << out_path(cfg, "landscape.csv") << "\n";
}

void save_property_dataset(const std::string& path, const std::vector<TokenSeq>& corpus,
                           const std::vector<PropertyVector>& props) {
    if (corpus.size() != props.size()) throw IoError("corpus/property size mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    for (size_t i = 0; i < corpus.size(); ++i) {
        os << tokens_to_string(corpus[i]) << "\t";
        bool first = true;
        for (const auto& [name, v] : props[i]) {
            os << (first ? "" : ";") << name << "=" << fmt(v);
            first = false;
        }
        os << "\n";
    }
}

void load_property_dataset(const std::string& path, std::vector<TokenSeq>& corpus,
                           std::vector<PropertyVector>& props) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    corpus.clear();
    props.clear();
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("missing tab separator", lineno);
        try {
            corpus.push_back(tokens_from_string(line.substr(0, tab)));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        }
        PropertyVector pv;
        std::istringstream ps(line.substr(tab + 1));
        std::string pair;
        while (std::getline(ps, pair, ';')) {
            size_t eq = pair.find('=');
            if (eq == std::string::npos) throw ParseError("bad name=value pair: " + pair, lineno);
            try {
                pv[pair.substr(0, eq)] = std::stod(pair.substr(eq + 1));
            } catch (const std::exception&) {
                throw ParseError("bad property value in: " + pair, lineno);
            }
        }
        props.push_back(std::move(pv));
    }
}

}  // namespace latentmol
