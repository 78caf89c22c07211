#pragma once

// Robust molecular string grammar: every token sequence decodes to a valid
// graph. Plain tokens follow a simplified SELFIES derivation; group tokens
// splice dictionary fragments.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentmol/molgraph.hpp"

namespace latentmol {

struct UnencodableGraph : std::runtime_error {
    explicit UnencodableGraph(const std::string& m) : std::runtime_error(m) {}
};
struct EmptyDictionary : std::runtime_error {
    explicit EmptyDictionary(const std::string& m) : std::runtime_error(m) {}
};
struct EmptyCorpus : std::runtime_error {
    explicit EmptyCorpus(const std::string& m) : std::runtime_error(m) {}
};
struct ParseError : std::runtime_error {
    ParseError(const std::string& m, int line) : std::runtime_error(m), line_number(line) {}
    int line_number;
};

struct Token {
    enum class Kind { Atom, Branch, Ring, Group, Pad, Bos, Eos };
    Kind kind = Kind::Pad;
    Element elem = Element::C;  // Atom
    int order = 1;              // Atom / Group bond order
    int length_class = 1;       // Branch / Ring, in {1,2,3}
    int group_id = 0;           // Group

    std::string text() const;
    static std::optional<Token> parse(std::string_view s);

    static Token atom(Element e, int order = 1) { return {Kind::Atom, e, order, 1, 0}; }
    static Token branch(int lc) { return {Kind::Branch, Element::C, 1, lc, 0}; }
    static Token ring(int lc) { return {Kind::Ring, Element::C, 1, lc, 0}; }
    static Token group(int id, int order = 1) { return {Kind::Group, Element::C, order, 1, id}; }
    static Token pad() { return {Kind::Pad, Element::C, 1, 1, 0}; }
    static Token bos() { return {Kind::Bos, Element::C, 1, 1, 0}; }
    static Token eos() { return {Kind::Eos, Element::C, 1, 1, 0}; }

    bool operator==(const Token& o) const;
};

using TokenSeq = std::vector<Token>;

// Fixed base alphabet (atom, branch, ring tokens) in canonical order; the
// first 16 entries double as index digits for branch/ring length payloads.
const std::vector<Token>& base_alphabet();
int index_value(const Token& t);  // value in [0,16)
Token digit_token(int d);         // token whose index value is d, d in [0,16)

// Fragment with attachment points (open valence positions); atoms are in
// canonical order and attachments index into it, first one lowest.
struct GroupFragment {
    MolGraph graph;
    std::vector<int> attachments;
    long frequency = 0;
    std::string key() const;  // canonical string + attachment indices
};

struct GroupDict {
    std::vector<GroupFragment> groups;  // sorted by desc frequency, tie by key
    std::string provenance;
    bool empty() const { return groups.empty(); }
    void save(const std::string& path) const;
    static GroupDict load(const std::string& path);
};

// Total decoder: any token sequence yields a valence-valid graph. Over-valent
// bond requests are downgraded and dropped at zero slack; bos/pad are skipped
// and eos terminates.
MolGraph decode(const TokenSeq& seq, const GroupDict* dict = nullptr);

// Inverse of decode up to isomorphism; with a dict, greedy largest-first
// non-overlapping fragment matches become group tokens.
TokenSeq encode(const MolGraph& graph, const GroupDict* dict = nullptr, int max_len = 1000000);

// Cuts acyclic single bonds at (ring, non-ring) and (non-ring, non-ring with
// both degrees >= 2) boundaries; frequent fragments become dictionary entries.
GroupDict extract_groups(const std::vector<MolGraph>& corpus, long min_freq = 20,
                         int min_atoms = 3);

struct Vocab {
    std::vector<Token> tokens;  // index = id; pad=0, bos=1, eos=2
    int pad_id() const { return 0; }
    int bos_id() const { return 1; }
    int eos_id() const { return 2; }
    int size() const { return static_cast<int>(tokens.size()); }
    int id_of(const Token& t) const;  // -1 if absent
    static Vocab from_corpus(const std::vector<TokenSeq>& corpus);
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);
    uint64_t hash() const;
};

struct CorpusStats {
    int total_tokens = 0;  // distinct non-special tokens
    int max_len = 0;
    double avg_len = 0.0;  // rounded to 2 decimals
};

CorpusStats corpus_stats(const std::vector<TokenSeq>& corpus, const Vocab& vocab);

// Token-string text form, e.g. "[C][=O]".
std::string tokens_to_string(const TokenSeq& seq);
TokenSeq tokens_from_string(std::string_view line);  // throws ParseError (line -1)

std::vector<TokenSeq> load_corpus(const std::string& path);
void save_corpus(const std::vector<TokenSeq>& corpus, const std::string& path);

}  // namespace latentmol
