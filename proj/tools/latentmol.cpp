// latentmol: molecular generation and latent-space optimization toolkit.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime error.

#include <iostream>

#include "CLI11.hpp"

#include "latentmol/pipeline.hpp"

using namespace latentmol;

int main(int argc, char** argv) {
    CLI::App app{"latentmol: molecule generation and latent optimization"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("-c,--config", config_path, "run configuration (JSON)");

    long gen_count = 1000;
    int gen_raw = 40;
    auto* gen = app.add_subcommand("gen-corpus", "generate a random molecule corpus");
    gen->add_option("--count", gen_count, "molecules to generate");
    gen->add_option("--raw-tokens", gen_raw, "raw token budget per draw");

    auto* vocab = app.add_subcommand("build-vocab", "build vocabulary and corpus stats");

    long min_freq = 20;
    int min_atoms = 3;
    auto* groups = app.add_subcommand("extract-groups", "mine frequent fragments");
    groups->add_option("--min-freq", min_freq, "minimum fragment frequency");
    groups->add_option("--min-atoms", min_atoms, "minimum fragment size");

    auto* train = app.add_subcommand("train", "train generator and surrogate");
    auto* opt = app.add_subcommand("optimize", "latent-space property optimization");
    auto* analyze = app.add_subcommand("analyze", "latent-space quality metrics");
    auto* landscape = app.add_subcommand("landscape", "2-D objective slice");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // 1 = usage error, 0 = help/version
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::load(config_path);
        cfg.apply_env_overrides();

        if (gen->parsed()) cmd_gen_corpus(cfg, gen_count, gen_raw);
        else if (vocab->parsed()) cmd_build_vocab(cfg);
        else if (groups->parsed()) cmd_extract_groups(cfg, min_freq, min_atoms);
        else if (train->parsed()) cmd_train(cfg);
        else if (opt->parsed()) cmd_optimize(cfg);
        else if (analyze->parsed()) cmd_analyze(cfg);
        else if (landscape->parsed()) cmd_landscape(cfg);
        return 0;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what();
        if (e.line_number >= 0) std::cerr << " (line " << e.line_number << ")";
        std::cerr << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const EmptyCorpus& e) {
        std::cerr << "data error: empty corpus: " << e.what() << "\n";
        return 2;
    } catch (const EmptyDictionary& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const BadCheckpoint& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const IncompatibleCheckpoint& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
}
