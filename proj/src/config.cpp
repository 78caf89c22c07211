#include "latentmol/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace latentmol {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.objective = {{"pseudoSA", 1.0 / 9.0, false}, {"pseudoQED", 1.0, true}};
    c.oracles = {OracleSpec::make_builtin("pseudoSA"), OracleSpec::make_builtin("pseudoQED")};
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }

    RunConfig c = defaults();
    check_keys(j, {"seed", "workers", "tokenizer", "decoder", "surrogate_mode", "model",
                   "train", "objective", "oracles", "optimize", "analyze", "paths"},
               path);
    get(j, "seed", c.seed);
    get(j, "workers", c.workers);
    if (j.contains("tokenizer")) {
        const json& t = j["tokenizer"];
        check_keys(t, {"kind", "dict_path"}, "tokenizer");
        get(t, "kind", c.tokenizer);
        get(t, "dict_path", c.dict_path);
        if (c.tokenizer != "selfies" && c.tokenizer != "group_selfies")
            throw ConfigError("tokenizer.kind must be selfies or group_selfies");
        if (c.tokenizer == "group_selfies" && c.dict_path.empty())
            throw ConfigError("group_selfies tokenizer needs tokenizer.dict_path");
    }
    get(j, "decoder", c.decoder);
    if (c.decoder != "nar" && c.decoder != "ar" && c.decoder != "cmlmc")
        throw ConfigError("decoder must be nar, ar, or cmlmc");
    get(j, "surrogate_mode", c.surrogate_mode);
    if (c.surrogate_mode != "sequential" && c.surrogate_mode != "joint")
        throw ConfigError("surrogate_mode must be sequential or joint");
    if (j.contains("model")) {
        const json& m = j["model"];
        check_keys(m, {"latent", "layers", "heads", "hidden", "max_len"}, "model");
        get(m, "latent", c.model.latent);
        get(m, "layers", c.model.layers);
        get(m, "heads", c.model.heads);
        get(m, "hidden", c.model.hidden);
        get(m, "max_len", c.model.max_len);
        if (c.model.latent < 1 || c.model.layers < 1 || c.model.heads < 1 ||
            c.model.hidden < c.model.heads || c.model.max_len < 1 ||
            c.model.hidden % c.model.heads != 0)
            throw ConfigError("model dims out of range (hidden must be a multiple of heads)");
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        check_keys(t,
                   {"steps", "batch", "lr_max", "lr_min", "beta_max", "cycle_length",
                    "ramp_fraction", "gamma", "corruption", "cmlmc_iterations",
                    "surrogate_samples", "surrogate_steps"},
                   "train");
        get(t, "steps", c.steps);
        get(t, "batch", c.batch);
        get(t, "lr_max", c.lr_max);
        get(t, "lr_min", c.lr_min);
        get(t, "beta_max", c.beta_max);
        get(t, "cycle_length", c.cycle_length);
        get(t, "ramp_fraction", c.ramp_fraction);
        get(t, "gamma", c.gamma);
        get(t, "corruption", c.corruption);
        get(t, "cmlmc_iterations", c.cmlmc_iterations);
        get(t, "surrogate_samples", c.surrogate_samples);
        get(t, "surrogate_steps", c.surrogate_steps);
        if (c.steps < 1 || c.batch < 1 || c.lr_max <= 0 || c.beta_max < 0 ||
            c.cycle_length < 1 || c.ramp_fraction <= 0 || c.ramp_fraction > 1 ||
            c.corruption < 0 || c.corruption > 1 || c.cmlmc_iterations < 1)
            throw ConfigError("train values out of range");
    }
    if (j.contains("objective")) {
        c.objective.clear();
        for (const json& term : j["objective"]) {
            check_keys(term, {"property", "weight", "direction"}, "objective term");
            ObjectiveTerm ot;
            ot.property = term.at("property").get<std::string>();
            get(term, "weight", ot.weight);
            std::string dir = "min";
            get(term, "direction", dir);
            if (dir != "min" && dir != "max")
                throw ConfigError("objective direction must be min or max");
            ot.maximize = dir == "max";
            c.objective.push_back(ot);
        }
        if (c.objective.empty()) throw ConfigError("objective must have at least one term");
    }
    if (j.contains("oracles")) {
        c.oracles.clear();
        for (const json& o : j["oracles"]) {
            check_keys(o, {"name", "kind", "command", "batch_size", "timeout_sec"}, "oracle");
            std::string kind = o.at("kind").get<std::string>();
            std::string oname = o.at("name").get<std::string>();
            if (kind == "builtin") {
                c.oracles.push_back(OracleSpec::make_builtin(oname));
            } else if (kind == "external") {
                int bs = 256;
                double to = 30.0;
                std::string cmd;
                get(o, "command", cmd);
                get(o, "batch_size", bs);
                get(o, "timeout_sec", to);
                if (cmd.empty()) throw ConfigError("external oracle needs a command");
                if (to <= 0) throw ConfigError("oracle timeout must be positive");
                c.oracles.push_back(OracleSpec::make_external(oname, cmd, bs, to));
            } else {
                throw ConfigError("oracle kind must be builtin or external");
            }
        }
    }
    if (j.contains("optimize")) {
        const json& o = j["optimize"];
        check_keys(o, {"n_starts", "steps", "lr", "top_k"}, "optimize");
        get(o, "n_starts", c.n_starts);
        get(o, "steps", c.opt_steps);
        get(o, "lr", c.opt_lr);
        get(o, "top_k", c.top_k);
        if (c.n_starts < 1 || c.opt_steps < 0 || c.top_k < 1)
            throw ConfigError("optimize values out of range");
    }
    if (j.contains("analyze")) {
        const json& a = j["analyze"];
        check_keys(a, {"knn_k", "landscape_extent", "landscape_resolution"}, "analyze");
        get(a, "knn_k", c.knn_k);
        get(a, "landscape_extent", c.landscape_extent);
        get(a, "landscape_resolution", c.landscape_resolution);
        if (c.knn_k < 1 || c.landscape_resolution < 2)
            throw ConfigError("analyze values out of range");
    }
    if (j.contains("paths")) {
        const json& p = j["paths"];
        check_keys(p, {"corpus", "vocab", "properties", "output_dir"}, "paths");
        get(p, "corpus", c.corpus_path);
        get(p, "vocab", c.vocab_path);
        get(p, "properties", c.properties_path);
        get(p, "output_dir", c.output_dir);
    }
    for (const std::string* p : {&c.dict_path, &c.corpus_path, &c.vocab_path,
                                 &c.properties_path})
        if (!p->empty() && !std::filesystem::exists(*p))
            throw ConfigError("referenced path does not exist: " + *p);
    return c;
}

std::string RunConfig::dump() const {
    json j;
    j["seed"] = seed;
    j["workers"] = workers;
    j["tokenizer"] = {{"kind", tokenizer}, {"dict_path", dict_path}};
    j["decoder"] = decoder;
    j["surrogate_mode"] = surrogate_mode;
    j["model"] = {{"latent", model.latent},
                  {"layers", model.layers},
                  {"heads", model.heads},
                  {"hidden", model.hidden},
                  {"max_len", model.max_len}};
    j["train"] = {{"steps", steps},
                  {"batch", batch},
                  {"lr_max", lr_max},
                  {"lr_min", lr_min},
                  {"beta_max", beta_max},
                  {"cycle_length", cycle_length},
                  {"ramp_fraction", ramp_fraction},
                  {"gamma", gamma},
                  {"corruption", corruption},
                  {"cmlmc_iterations", cmlmc_iterations},
                  {"surrogate_samples", surrogate_samples},
                  {"surrogate_steps", surrogate_steps}};
    j["objective"] = json::array();
    for (const ObjectiveTerm& t : objective)
        j["objective"].push_back({{"property", t.property},
                                  {"weight", t.weight},
                                  {"direction", t.maximize ? "max" : "min"}});
    j["oracles"] = json::array();
    for (const OracleSpec& o : oracles) {
        json oj = {{"name", o.name}, {"kind", o.external ? "external" : "builtin"}};
        if (o.external) {
            oj["command"] = o.command;
            oj["batch_size"] = o.batch_size;
            oj["timeout_sec"] = o.timeout_sec;
        }
        j["oracles"].push_back(oj);
    }
    j["optimize"] = {{"n_starts", n_starts}, {"steps", opt_steps}, {"lr", opt_lr},
                     {"top_k", top_k}};
    j["analyze"] = {{"knn_k", knn_k},
                    {"landscape_extent", landscape_extent},
                    {"landscape_resolution", landscape_resolution}};
    j["paths"] = {{"corpus", corpus_path},
                  {"vocab", vocab_path},
                  {"properties", properties_path},
                  {"output_dir", output_dir}};
    return j.dump(2) + "\n";
}

uint64_t RunConfig::digest() const { return fnv1a64(dump()); }

void RunConfig::apply_env_overrides() {
    if (const char* s = std::getenv("LATENTMOL_SEED")) seed = std::stoull(s);
    if (const char* w = std::getenv("LATENTMOL_WORKERS")) workers = std::stoi(w);
}

}  // namespace latentmol
