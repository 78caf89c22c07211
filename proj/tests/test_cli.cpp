#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() /
                   ("latentmol-cli-" + std::to_string(getpid()) + "-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args, const fs::path& log, const std::string& env = "") {
    std::string cmd = env + (env.empty() ? "" : " ") + LATENTMOL_CLI_PATH + " " + args +
                      " >" + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    REQUIRE(os);
    os << content;
}

// Shared tiny-run settings; `paths` varies by pipeline stage.
std::string config_body(const std::string& paths) {
    return R"({
  "seed": 11,
  "decoder": "nar",
  "surrogate_mode": "sequential",
  "model": {"latent": 4, "layers": 1, "heads": 2, "hidden": 16, "max_len": 10},
  "train": {"steps": 30, "batch": 8, "cycle_length": 20,
            "surrogate_samples": 30, "surrogate_steps": 50},
  "optimize": {"n_starts": 6, "steps": 3, "lr": 0.05, "top_k": 4},
  "analyze": {"knn_k": 3, "landscape_resolution": 3, "landscape_extent": 1.0},
  "paths": )" + paths + "\n}\n";
}

}  // namespace

TEST_CASE("usage errors and help") {
    fs::path dir = fresh_dir("usage");
    fs::path log = dir / "log.txt";
    CHECK(run("--help", log) == 0);
    CHECK(run("no-such-command", log) == 1);
    CHECK(run("", log) == 1);  // a subcommand is required
    CHECK(run("train --bogus-flag", log) == 1);
}

TEST_CASE("config errors exit with the data error code") {
    fs::path dir = fresh_dir("config");
    fs::path log = dir / "log.txt";
    CHECK(run("-c " + (dir / "missing.json").string() + " train", log) == 2);

    spit(dir / "bad.json", "{ not json");
    CHECK(run("-c " + (dir / "bad.json").string() + " train", log) == 2);

    spit(dir / "unknown.json", R"({"seed": 1, "no_such_key": true})");
    CHECK(run("-c " + (dir / "unknown.json").string() + " train", log) == 2);

    spit(dir / "range.json", R"({"model": {"hidden": 15, "heads": 2}})");
    CHECK(run("-c " + (dir / "range.json").string() + " train", log) == 2);

    // empty corpus is a data error
    spit(dir / "empty.txt", "");
    fs::path out = dir / "out";
    spit(dir / "empty.json",
         config_body("{\"corpus\": \"" + (dir / "empty.txt").string() +
                     "\", \"output_dir\": \"" + out.string() + "\"}"));
    CHECK(run("-c " + (dir / "empty.json").string() + " build-vocab", log) == 2);
}

TEST_CASE("full pipeline on a tiny run") {
    fs::path dir = fresh_dir("pipeline");
    fs::path out = dir / "out";
    fs::path log = dir / "log.txt";
    std::string corpus = (out / "corpus.txt").string();
    std::string vocab = (out / "vocab.txt").string();

    fs::path cfg_gen = dir / "gen.json";
    spit(cfg_gen, config_body("{\"output_dir\": \"" + out.string() + "\"}"));
    REQUIRE(run("-c " + cfg_gen.string() + " gen-corpus --count 30 --raw-tokens 8", log) == 0);
    REQUIRE(fs::exists(corpus));

    fs::path cfg_vocab = dir / "vocab.json";
    spit(cfg_vocab, config_body("{\"corpus\": \"" + corpus + "\", \"output_dir\": \"" +
                                out.string() + "\"}"));
    REQUIRE(run("-c " + cfg_vocab.string() + " build-vocab", log) == 0);
    REQUIRE(fs::exists(vocab));
    CHECK(slurp(out / "vocab_stats.txt").find("total_tokens=") == 0);

    fs::path cfg = dir / "run.json";
    spit(cfg, config_body("{\"corpus\": \"" + corpus + "\", \"vocab\": \"" + vocab +
                          "\", \"output_dir\": \"" + out.string() + "\"}"));
    REQUIRE(run("-c " + cfg.string() + " train", log) == 0);
    CHECK(fs::exists(out / "vae.ckpt"));
    CHECK(fs::exists(out / "surrogate.ckpt"));
    CHECK(slurp(out / "train_log.csv").find("step,recon,kl,beta,lr,mse\n") == 0);
    CHECK(fs::exists(out / "config.effective.json"));

    REQUIRE(run("-c " + cfg.string() + " optimize", log) == 0);
    CHECK(fs::exists(out / "summary.txt"));
    CHECK(fs::exists(out / "top_objective.csv"));
    CHECK(fs::exists(out / "top_pseudoSA.csv"));
    CHECK(fs::exists(out / "top_pseudoQED.csv"));
    std::string results = slurp(out / "results.csv");
    CHECK(results.find("start_index,molecule,objective_surrogate,objective_oracle") == 0);
    // header + one row per start
    CHECK(std::count(results.begin(), results.end(), '\n') == 7);

    // reruns are byte-identical; worker count does not change the output
    REQUIRE(run("-c " + cfg.string() + " optimize", log, "LATENTMOL_WORKERS=4") == 0);
    CHECK(slurp(out / "results.csv") == results);

    // a different seed changes it
    REQUIRE(run("-c " + cfg.string() + " optimize", log, "LATENTMOL_SEED=99") == 0);
    CHECK(slurp(out / "results.csv") != results);
    REQUIRE(run("-c " + cfg.string() + " optimize", log) == 0);
    CHECK(slurp(out / "results.csv") == results);

    REQUIRE(run("-c " + cfg.string() + " analyze", log) == 0);
    std::string metrics = slurp(out / "metrics.txt");
    CHECK(metrics.find("mse=") == 0);
    CHECK(metrics.find("lambda_y=") != std::string::npos);
    CHECK(metrics.find("n_points=30") != std::string::npos);
    std::string landscape = slurp(out / "landscape.csv");
    CHECK(landscape.find("u,v,objective\n") == 0);
    CHECK(std::count(landscape.begin(), landscape.end(), '\n') == 10);  // header + 3x3

    REQUIRE(run("-c " + cfg.string() + " landscape", log) == 0);
    CHECK(slurp(out / "landscape.csv") == landscape);

    // a concurrent run holding the lock blocks this one with a runtime error
    spit(out / ".lock", "");
    CHECK(run("-c " + cfg.string() + " landscape", log) == 3);
    fs::remove(out / ".lock");
    CHECK(run("-c " + cfg.string() + " landscape", log) == 0);

    // checkpoints trained against one vocabulary are rejected with another
    fs::path cfg_badvocab = dir / "badvocab.json";
    fs::path out2 = dir / "out2";
    fs::create_directories(out2);
    fs::copy_file(out / "vae.ckpt", out2 / "vae.ckpt");
    fs::copy_file(out / "surrogate.ckpt", out2 / "surrogate.ckpt");
    spit(dir / "corpus2.txt", "[C][C]\n[O]\n[N][C]\n");
    spit(cfg_badvocab,
         config_body("{\"corpus\": \"" + (dir / "corpus2.txt").string() +
                     "\", \"output_dir\": \"" + out2.string() + "\"}"));
    REQUIRE(run("-c " + cfg_badvocab.string() + " build-vocab", log) == 0);
    fs::path cfg_conflict = dir / "conflict.json";
    spit(cfg_conflict,
         config_body("{\"corpus\": \"" + corpus + "\", \"vocab\": \"" +
                     (out2 / "vocab.txt").string() + "\", \"output_dir\": \"" +
                     out2.string() + "\"}"));
    CHECK(run("-c " + cfg_conflict.string() + " optimize", log) == 2);

    // missing checkpoints are a data error
    fs::path out3 = dir / "out3";
    fs::path cfg3 = dir / "out3.json";
    spit(cfg3, config_body("{\"corpus\": \"" + corpus + "\", \"vocab\": \"" + vocab +
                           "\", \"output_dir\": \"" + out3.string() + "\"}"));
    CHECK(run("-c " + cfg3.string() + " optimize", log) == 2);
}
