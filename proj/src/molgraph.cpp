#include "latentmol/molgraph.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>

namespace latentmol {

namespace {
constexpr int kValence[kNumElements] = {4, 3, 2, 1, 6, 5, 1, 1, 1};
constexpr const char* kSymbol[kNumElements] = {"C", "N", "O", "F", "S", "P", "Cl", "Br", "I"};
}  // namespace

int max_valence(Element e) { return kValence[static_cast<int>(e)]; }
const char* element_symbol(Element e) { return kSymbol[static_cast<int>(e)]; }

std::optional<Element> element_from_symbol(std::string_view s) {
    for (int i = 0; i < kNumElements; ++i)
        if (s == kSymbol[i]) return static_cast<Element>(i);
    return std::nullopt;
}

int MolGraph::valence_used(int i) const {
    int v = 0;
    for (const Bond& b : bonds)
        if (b.a == i || b.b == i) v += b.order;
    return v;
}

int MolGraph::degree(int i) const {
    int d = 0;
    for (const Bond& b : bonds)
        if (b.a == i || b.b == i) ++d;
    return d;
}

bool MolGraph::has_bond(int a, int b) const {
    for (const Bond& bd : bonds)
        if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a)) return true;
    return false;
}

std::vector<std::vector<int>> MolGraph::adjacency() const {
    std::vector<std::vector<int>> adj(atoms.size());
    for (const Bond& b : bonds) {
        adj[b.a].push_back(b.b);
        adj[b.b].push_back(b.a);
    }
    return adj;
}

int MolGraph::num_components() const {
    int n = num_atoms();
    if (n == 0) return 0;
    auto adj = adjacency();
    std::vector<char> seen(n, 0);
    int comps = 0;
    for (int s = 0; s < n; ++s) {
        if (seen[s]) continue;
        ++comps;
        std::vector<int> stack{s};
        seen[s] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : adj[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
        }
    }
    return comps;
}

ValidityReport validate(const MolGraph& g) {
    ValidityReport rep;
    int n = g.num_atoms();
    rep.slack.assign(n, 0);
    std::vector<int> used(n, 0);
    for (size_t i = 0; i < g.bonds.size(); ++i) {
        const Bond& b = g.bonds[i];
        if (b.a < 0 || b.a >= n || b.b < 0 || b.b >= n) {
            rep.valid = false;
            rep.violations.push_back("bond " + std::to_string(i) + ": endpoint out of range");
            continue;
        }
        if (b.a == b.b) {
            rep.valid = false;
            rep.violations.push_back("bond " + std::to_string(i) + ": self-loop");
            continue;
        }
        if (b.order < 1 || b.order > 3) {
            rep.valid = false;
            rep.violations.push_back("bond " + std::to_string(i) + ": order " +
                                     std::to_string(b.order) + " outside {1,2,3}");
            continue;
        }
        for (size_t j = 0; j < i; ++j) {
            const Bond& c = g.bonds[j];
            if ((c.a == b.a && c.b == b.b) || (c.a == b.b && c.b == b.a)) {
                rep.valid = false;
                rep.violations.push_back("duplicate bond between atoms " + std::to_string(b.a) +
                                         " and " + std::to_string(b.b));
            }
        }
        used[b.a] += b.order;
        used[b.b] += b.order;
    }
    for (int i = 0; i < n; ++i) {
        rep.slack[i] = max_valence(g.atoms[i]) - used[i];
        if (rep.slack[i] < 0) {
            rep.valid = false;
            rep.violations.push_back("atom " + std::to_string(i) + " (" +
                                     element_symbol(g.atoms[i]) + ") exceeds valence by " +
                                     std::to_string(-rep.slack[i]));
        }
    }
    return rep;
}

DescriptorVector descriptors(const MolGraph& g) {
    ValidityReport rep = validate(g);
    if (!rep.valid)
        throw InvalidGraph("descriptors: " + (rep.violations.empty() ? std::string("invalid graph")
                                                                     : rep.violations[0]));
    DescriptorVector d;
    d.heavy_atoms = g.num_atoms();
    d.ring_count = g.num_bonds() - g.num_atoms() + g.num_components();
    for (int i = 0; i < g.num_atoms(); ++i)
        if (g.degree(i) >= 3) ++d.branch_index;
    return d;
}

// ---------------------------------------------------------------------------
// Canonicalization. Morgan-style iterative refinement assigns invariant
// ranks; a minimum-DFS-code search then picks the canonical traversal,
// permuting neighbor order only within rank ties. The candidate set is
// invariant under atom relabeling, so its minimum code is too.

namespace {

struct AdjItem {
    int v;
    int order;
    int eid;
};

std::vector<int> refine_ranks(const MolGraph& g, const std::vector<int>& nodes,
                              const std::vector<std::vector<AdjItem>>& adj) {
    int n = g.num_atoms();
    std::vector<int> rank(n, 0);
    {
        std::vector<std::pair<std::pair<int, int>, int>> keyed;
        for (int u : nodes) keyed.push_back({{static_cast<int>(g.atoms[u]), g.degree(u)}, u});
        std::sort(keyed.begin(), keyed.end());
        int r = -1;
        std::pair<int, int> prev{-1, -1};
        for (auto& [k, u] : keyed) {
            if (k != prev) { ++r; prev = k; }
            rank[u] = r;
        }
    }
    for (size_t iter = 0; iter < 2 * nodes.size() + 2; ++iter) {
        std::vector<std::pair<std::vector<int>, int>> keyed;
        for (int u : nodes) {
            std::vector<int> key{rank[u]};
            std::vector<std::pair<int, int>> nb;
            for (const AdjItem& it : adj[u]) nb.push_back({it.order, rank[it.v]});
            std::sort(nb.begin(), nb.end());
            for (auto& [o, r] : nb) { key.push_back(o); key.push_back(r); }
            keyed.push_back({std::move(key), u});
        }
        std::sort(keyed.begin(), keyed.end());
        std::vector<int> newrank(rank);
        int r = -1;
        const std::vector<int>* prev = nullptr;
        for (auto& [k, u] : keyed) {
            if (!prev || k != *prev) { ++r; prev = &k; }
            newrank[u] = r;
        }
        bool changed = false;
        for (int u : nodes)
            if (newrank[u] != rank[u]) { changed = true; break; }
        rank = newrank;
        if (!changed) break;
    }
    return rank;
}

// Code tokens: atom = element index (0..8); ring closure = 1000 + pos*4 +
// order; branch enter = 5000 + order; branch close = 9000. A complete code
// for a component with m atoms and e edges has m + (e-(m-1)) + 2(m-1) tokens,
// so completion is detected by length.
struct CanonSearch {
    const MolGraph& g;
    const std::vector<std::vector<AdjItem>>& adj;
    const std::vector<int>& rank;
    size_t target_len;

    std::vector<char> visited;
    std::vector<char> eused;
    std::vector<int> pos;
    int nv = 0;
    std::vector<int> cur;
    std::vector<int> best;
    std::vector<int> best_order;  // visit order (original atom indices)
    bool have_best = false;
    int cmp = 1;  // 0 = equal to best prefix so far, 1 = already smaller
    std::vector<int> j_atoms, j_edges;

    // Invoked when a node's adjacency list is exhausted; resumes the
    // parent's remaining items so tie-group exploration covers the whole
    // remaining traversal, not just the local suffix.
    using Cont = std::function<bool()>;

    CanonSearch(const MolGraph& gr, const std::vector<std::vector<AdjItem>>& a,
                const std::vector<int>& rk, size_t tlen)
        : g(gr), adj(a), rank(rk), target_len(tlen),
          visited(gr.num_atoms(), 0), eused(gr.num_bonds(), 0), pos(gr.num_atoms(), 0) {}

    bool emit(int tok) {
        if (have_best && cmp == 0) {
            int b = best[cur.size()];
            if (tok > b) return false;
            if (tok < b) cmp = 1;
        }
        cur.push_back(tok);
        if (cur.size() == target_len) {
            if (!have_best || cur < best) {
                best = cur;
                best_order = j_atoms;
                have_best = true;
            }
        }
        return true;
    }

    bool visit(int u, int parent_eid, const Cont& cont) {
        visited[u] = 1;
        pos[u] = nv++;
        j_atoms.push_back(u);
        if (!emit(static_cast<int>(g.atoms[u]))) return false;
        std::vector<AdjItem> items;
        for (const AdjItem& it : adj[u])
            if (it.eid != parent_eid) items.push_back(it);
        std::sort(items.begin(), items.end(), [&](const AdjItem& a, const AdjItem& b) {
            if (rank[a.v] != rank[b.v]) return rank[a.v] < rank[b.v];
            if (a.order != b.order) return a.order < b.order;
            return a.v < b.v;
        });
        return perm_items(u, items, 0, cont);
    }

    // Processes items[i..], then the continuation. For a tie group, tries
    // every member first and rolls back between attempts; best is recorded
    // inside emit, so a false return after full exploration is fine.
    bool perm_items(int u, std::vector<AdjItem>& items, size_t i, const Cont& cont) {
        if (i == items.size()) return cont();
        size_t j = i + 1;
        while (j < items.size() && rank[items[j].v] == rank[items[i].v] &&
               items[j].order == items[i].order)
            ++j;
        if (j == i + 1) return step_item(u, items, i, cont);
        for (size_t k = i; k < j; ++k) {
            std::swap(items[i], items[k]);
            size_t am = j_atoms.size(), em = j_edges.size(), cm = cur.size();
            int nvm = nv, cmpm = cmp;
            step_item(u, items, i, cont);
            rollback(am, em, cm, nvm, cmpm);
            std::swap(items[i], items[k]);
        }
        return false;  // all orderings explored; state restored to group entry
    }

    bool step_item(int u, std::vector<AdjItem>& items, size_t i, const Cont& cont) {
        const AdjItem it = items[i];
        if (eused[it.eid]) return perm_items(u, items, i + 1, cont);
        if (visited[it.v]) {
            eused[it.eid] = 1;
            j_edges.push_back(it.eid);
            if (!emit(1000 + pos[it.v] * 4 + it.order)) return false;
            return perm_items(u, items, i + 1, cont);
        }
        eused[it.eid] = 1;
        j_edges.push_back(it.eid);
        if (!emit(5000 + it.order)) return false;
        return visit(it.v, it.eid, [&]() {
            if (!emit(9000)) return false;
            return perm_items(u, items, i + 1, cont);
        });
    }

    void rollback(size_t a_mark, size_t e_mark, size_t c_mark, int nv_mark, int cmp_mark) {
        while (j_atoms.size() > a_mark) {
            visited[j_atoms.back()] = 0;
            j_atoms.pop_back();
        }
        while (j_edges.size() > e_mark) {
            eused[j_edges.back()] = 0;
            j_edges.pop_back();
        }
        cur.resize(c_mark);
        nv = nv_mark;
        cmp = cmp_mark;
    }

    void run_from(int start) {
        cmp = have_best ? 0 : 1;
        visit(start, -1, [] { return true; });
        rollback(0, 0, 0, 0, 1);
    }
};

// Renders a complete DFS code to the SMILES subset. Atoms are written in
// code order; the last child of each node is not parenthesized.
std::string render_code(const std::vector<int>& code) {
    struct RNode {
        int elem = 0;
        std::vector<int> children;
        std::vector<int> child_order;
        std::vector<std::pair<int, int>> rings;  // (earlier atom code-pos, order)
    };
    std::vector<RNode> rn;
    std::vector<int> stack;
    int pending_order = 0;
    for (int tok : code) {
        if (tok < 100) {
            RNode node;
            node.elem = tok;
            int id = static_cast<int>(rn.size());
            rn.push_back(node);
            if (!stack.empty()) {
                rn[stack.back()].children.push_back(id);
                rn[stack.back()].child_order.push_back(pending_order);
            }
            stack.push_back(id);
        } else if (tok >= 1000 && tok < 5000) {
            int x = tok - 1000;
            rn[stack.back()].rings.push_back({x / 4, x % 4});
        } else if (tok >= 5000 && tok < 9000) {
            pending_order = tok - 5000;
        } else {
            stack.pop_back();
        }
    }
    int n = static_cast<int>(rn.size());
    std::vector<std::vector<std::pair<int, int>>> open_at(n), close_at(n);  // (digit, order)
    int next_digit = 1;
    for (int u = 0; u < n; ++u) {
        for (auto& [tp, ord] : rn[u].rings) {
            open_at[tp].push_back({next_digit, ord});
            close_at[u].push_back({next_digit, ord});
            ++next_digit;
        }
    }
    std::string out;
    auto append_ring = [&](std::pair<int, int> r) {
        if (r.second == 2) out += "=";
        else if (r.second == 3) out += "#";
        out += r.first <= 9 ? std::to_string(r.first) : "%" + std::to_string(r.first);
    };
    struct Writer {
        std::vector<RNode>& rn;
        std::vector<std::vector<std::pair<int, int>>>& open_at;
        std::vector<std::vector<std::pair<int, int>>>& close_at;
        std::string& out;
        std::function<void(std::pair<int, int>)> append_ring;
        void write(int u) {
            out += kSymbol[rn[u].elem];
            for (auto& r : open_at[u]) append_ring(r);
            for (auto& r : close_at[u]) append_ring(r);
            int k = static_cast<int>(rn[u].children.size());
            for (int i = 0; i < k; ++i) {
                int c = rn[u].children[i];
                int o = rn[u].child_order[i];
                std::string bs = o == 2 ? "=" : o == 3 ? "#" : "";
                if (i + 1 < k) {
                    out += "(" + bs;
                    write(c);
                    out += ")";
                } else {
                    out += bs;
                    write(c);
                }
            }
        }
    };
    Writer w{rn, open_at, close_at, out, append_ring};
    if (n > 0) w.write(0);
    return out;
}

}  // namespace

std::string canonical_string(const MolGraph& g, std::vector<int>* out_order) {
    ValidityReport rep = validate(g);
    if (!rep.valid)
        throw InvalidGraph("canonical_string: " + (rep.violations.empty()
                                                       ? std::string("invalid graph")
                                                       : rep.violations[0]));
    if (out_order) out_order->clear();
    int n = g.num_atoms();
    if (n == 0) return "";
    std::vector<std::vector<AdjItem>> adj(n);
    for (int e = 0; e < g.num_bonds(); ++e) {
        const Bond& b = g.bonds[e];
        adj[b.a].push_back({b.b, b.order, e});
        adj[b.b].push_back({b.a, b.order, e});
    }
    std::vector<int> comp(n, -1);
    int ncomp = 0;
    for (int s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        std::vector<int> stack{s};
        comp[s] = ncomp;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (const AdjItem& it : adj[u])
                if (comp[it.v] < 0) { comp[it.v] = ncomp; stack.push_back(it.v); }
        }
        ++ncomp;
    }
    std::vector<std::pair<std::string, std::vector<int>>> pieces;
    for (int c = 0; c < ncomp; ++c) {
        std::vector<int> nodes;
        for (int u = 0; u < n; ++u)
            if (comp[u] == c) nodes.push_back(u);
        int edges = 0;
        for (const Bond& b : g.bonds)
            if (comp[b.a] == c) ++edges;
        size_t m = nodes.size();
        size_t target = m + (edges - (m - 1)) + 2 * (m - 1);
        std::vector<int> rank = refine_ranks(g, nodes, adj);
        int minrank = rank[nodes[0]];
        for (int u : nodes) minrank = std::min(minrank, rank[u]);
        CanonSearch search(g, adj, rank, target);
        for (int u : nodes)
            if (rank[u] == minrank) search.run_from(u);
        pieces.push_back({render_code(search.best), search.best_order});
    }
    std::sort(pieces.begin(), pieces.end());
    std::string out;
    for (size_t i = 0; i < pieces.size(); ++i) {
        if (i) out += ".";
        out += pieces[i].first;
        if (out_order)
            out_order->insert(out_order->end(), pieces[i].second.begin(), pieces[i].second.end());
    }
    return out;
}

std::string canonical_string(const MolGraph& g) { return canonical_string(g, nullptr); }

// ---------------------------------------------------------------------------
// Parser for the canonical subset.

namespace {

struct Parser {
    std::string_view s;
    size_t p = 0;
    MolGraph g;
    std::map<int, std::pair<int, int>> open_rings;  // digit -> (atom, order)

    bool eof() const { return p >= s.size(); }
    char peek() const { return p < s.size() ? s[p] : '\0'; }

    [[noreturn]] void fail(const std::string& msg) {
        throw InvalidGraph("parse_canonical: " + msg + " at position " + std::to_string(p));
    }

    int read_bond_sym() {
        if (peek() == '=') { ++p; return 2; }
        if (peek() == '#') { ++p; return 3; }
        return 1;
    }

    int read_element() {
        if (p + 1 < s.size()) {
            auto two = element_from_symbol(s.substr(p, 2));
            if (two) {
                p += 2;
                g.atoms.push_back(*two);
                return g.num_atoms() - 1;
            }
        }
        auto one = element_from_symbol(s.substr(p, 1));
        if (!one) fail("expected element symbol");
        ++p;
        g.atoms.push_back(*one);
        return g.num_atoms() - 1;
    }

    bool at_ringref() const {
        size_t q = p;
        if (q < s.size() && (s[q] == '=' || s[q] == '#')) ++q;
        return q < s.size() && (std::isdigit(static_cast<unsigned char>(s[q])) || s[q] == '%');
    }

    void read_ringref(int atom) {
        int order = read_bond_sym();
        int digit;
        if (peek() == '%') {
            ++p;
            if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("bad % ring ref");
            digit = 0;
            int k = 0;
            while (k < 2 && std::isdigit(static_cast<unsigned char>(peek()))) {
                digit = digit * 10 + (peek() - '0');
                ++p;
                ++k;
            }
        } else {
            digit = peek() - '0';
            ++p;
        }
        auto it = open_rings.find(digit);
        if (it == open_rings.end()) {
            open_rings[digit] = {atom, order};
        } else {
            g.bonds.push_back({it->second.first, atom, std::max(order, it->second.second)});
            open_rings.erase(it);
        }
    }

    void parse_chain(int prev, int incoming_order) {
        while (true) {
            int a = read_element();
            if (prev >= 0) g.bonds.push_back({prev, a, incoming_order});
            while (at_ringref()) read_ringref(a);
            while (peek() == '(') {
                ++p;
                int o = read_bond_sym();
                parse_chain(a, o);
                if (peek() != ')') fail("expected ')'");
                ++p;
            }
            if (eof() || peek() == ')' || peek() == '.') return;
            incoming_order = read_bond_sym();
            prev = a;
        }
    }

    MolGraph run() {
        if (s.empty()) fail("empty molecule string");
        while (true) {
            parse_chain(-1, 1);
            if (eof()) break;
            if (peek() == '.') { ++p; continue; }
            fail("unexpected character");
        }
        if (!open_rings.empty()) fail("unmatched ring closure digit");
        return g;
    }
};

}  // namespace

MolGraph parse_canonical(std::string_view s) {
    Parser parser;
    parser.s = s;
    return parser.run();
}

}  // namespace latentmol
