#pragma once

// End-to-end workflow commands behind the CLI: corpus generation,
// vocabulary/group extraction, training, optimization, analysis.

#include <stdexcept>
#include <string>

#include "latentmol/config.hpp"
#include "latentmol/selfies.hpp"

namespace latentmol {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct LockError : std::runtime_error {
    explicit LockError(const std::string& m) : std::runtime_error(m) {}
};
struct IncompatibleCheckpoint : std::runtime_error {
    explicit IncompatibleCheckpoint(const std::string& m) : std::runtime_error(m) {}
};

// Exclusive lock on an output directory (lock file, O_EXCL). Released on
// destruction.
class DirLock {
public:
    explicit DirLock(const std::string& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::string path_;
};

// Pads each sequence with eos + pad to max_len; rejects unknown tokens and
// over-long sequences.
IdBatch tokenize_padded(const std::vector<TokenSeq>& corpus, const Vocab& vocab, int max_len);

// `token_string<TAB>name=value;name=value...` per line.
void save_property_dataset(const std::string& path, const std::vector<TokenSeq>& corpus,
                           const std::vector<PropertyVector>& props);
void load_property_dataset(const std::string& path, std::vector<TokenSeq>& corpus,
                           std::vector<PropertyVector>& props);

// Commands write their outputs under cfg.output_dir and print a short
// summary to stdout. Errors are thrown; the CLI maps them to exit codes.
void cmd_gen_corpus(const RunConfig& cfg, long count, int max_raw_tokens);
void cmd_build_vocab(const RunConfig& cfg);
void cmd_extract_groups(const RunConfig& cfg, long min_freq, int min_atoms);
void cmd_train(const RunConfig& cfg);
void cmd_optimize(const RunConfig& cfg);
void cmd_analyze(const RunConfig& cfg);
void cmd_landscape(const RunConfig& cfg);

}  // namespace latentmol
