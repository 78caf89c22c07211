#include "latentmol/selfies.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "latentmol/rng.hpp"

namespace latentmol {

// ---------------------------------------------------------------------------
// Tokens

bool Token::operator==(const Token& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
        case Kind::Atom: return elem == o.elem && order == o.order;
        case Kind::Branch:
        case Kind::Ring: return length_class == o.length_class;
        case Kind::Group: return group_id == o.group_id && order == o.order;
        default: return true;
    }
}

std::string Token::text() const {
    auto bond_prefix = [](int o) { return o == 2 ? "=" : o == 3 ? "#" : ""; };
    switch (kind) {
        case Kind::Atom:
            return std::string("[") + bond_prefix(order) + element_symbol(elem) + "]";
        case Kind::Branch: return "[Branch" + std::to_string(length_class) + "]";
        case Kind::Ring: return "[Ring" + std::to_string(length_class) + "]";
        case Kind::Group:
            return std::string("[") + bond_prefix(order) + "Group" + std::to_string(group_id) + "]";
        case Kind::Pad: return "[pad]";
        case Kind::Bos: return "[bos]";
        case Kind::Eos: return "[eos]";
    }
    return "[?]";
}

std::optional<Token> Token::parse(std::string_view s) {
    if (s.size() < 3 || s.front() != '[' || s.back() != ']') return std::nullopt;
    std::string_view body = s.substr(1, s.size() - 2);
    if (body == "pad") return Token::pad();
    if (body == "bos") return Token::bos();
    if (body == "eos") return Token::eos();
    int order = 1;
    if (!body.empty() && (body[0] == '=' || body[0] == '#')) {
        order = body[0] == '=' ? 2 : 3;
        body.remove_prefix(1);
    }
    auto num_suffix = [&](std::string_view prefix) -> std::optional<int> {
        if (body.size() <= prefix.size() || body.substr(0, prefix.size()) != prefix)
            return std::nullopt;
        std::string_view num = body.substr(prefix.size());
        int v = 0;
        for (char c : num) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return v;
    };
    if (auto v = num_suffix("Branch")) {
        if (order != 1 || *v < 1 || *v > 3) return std::nullopt;
        return Token::branch(*v);
    }
    if (auto v = num_suffix("Ring")) {
        if (order != 1 || *v < 1 || *v > 3) return std::nullopt;
        return Token::ring(*v);
    }
    if (auto v = num_suffix("Group")) return Token::group(*v, order);
    if (auto e = element_from_symbol(body)) return Token::atom(*e, order);
    return std::nullopt;
}

const std::vector<Token>& base_alphabet() {
    static const std::vector<Token> alphabet = [] {
        std::vector<Token> v;
        for (int ei = 0; ei < kNumElements; ++ei) {
            Element e = static_cast<Element>(ei);
            int maxo = std::min(3, max_valence(e));
            for (int o = 1; o <= maxo; ++o) v.push_back(Token::atom(e, o));
        }
        for (int lc = 1; lc <= 3; ++lc) v.push_back(Token::branch(lc));
        for (int lc = 1; lc <= 3; ++lc) v.push_back(Token::ring(lc));
        return v;
    }();
    return alphabet;
}

int index_value(const Token& t) {
    const auto& ab = base_alphabet();
    if (t.kind == Token::Kind::Group) return (24 + t.group_id) % 16;
    for (size_t i = 0; i < ab.size(); ++i)
        if (ab[i] == t) return static_cast<int>(i % 16);
    return 0;
}

Token digit_token(int d) { return base_alphabet()[d]; }

// ---------------------------------------------------------------------------
// Decode

namespace {

struct DecodeRun {
    const TokenSeq& toks;
    const GroupDict* dict;
    size_t pos = 0;
    bool done = false;
    MolGraph g;

    int slack(int a) const { return g.valence_slack(a); }

    int read_index(int length_class, size_t end) {
        int n = 0;
        for (int i = 0; i < length_class && pos < end; ++i) {
            n = n * 16 + index_value(toks[pos]);
            ++pos;
        }
        return n;
    }

    int place_atom(int cur, Element e, int order) {
        g.atoms.push_back(e);
        int idx = g.num_atoms() - 1;
        if (cur >= 0) {
            int eff = std::min({order, slack(cur), max_valence(e)});
            if (eff >= 1) g.bonds.push_back({cur, idx, eff});
        }
        return idx;
    }

    void make_ring(int cur, int n) {
        if (cur < 1) return;
        int target = cur - 1 - (n % cur);
        if (target == cur || g.has_bond(cur, target)) return;
        int eff = std::min({1, slack(cur), slack(target)});
        if (eff >= 1) g.bonds.push_back({target, cur, eff});
    }

    int place_group(int cur, const Token& t) {
        if (!dict || dict->empty()) return cur;
        const GroupFragment& frag =
            dict->groups[static_cast<size_t>(t.group_id) % dict->groups.size()];
        int base = g.num_atoms();
        for (Element e : frag.graph.atoms) g.atoms.push_back(e);
        for (const Bond& b : frag.graph.bonds) g.bonds.push_back({b.a + base, b.b + base, b.order});
        int attach = base + (frag.attachments.empty() ? 0 : frag.attachments[0]);
        if (cur >= 0) {
            int eff = std::min({t.order, slack(cur), slack(attach)});
            if (eff >= 1) g.bonds.push_back({cur, attach, eff});
        }
        return attach;
    }

    void derive(int cur, size_t end) {
        while (pos < end && !done) {
            Token t = toks[pos++];
            switch (t.kind) {
                case Token::Kind::Pad:
                case Token::Kind::Bos: break;
                case Token::Kind::Eos: done = true; return;
                case Token::Kind::Atom: cur = place_atom(cur, t.elem, t.order); break;
                case Token::Kind::Group: cur = place_group(cur, t); break;
                case Token::Kind::Ring: {
                    int n = read_index(t.length_class, end);
                    make_ring(cur, n);
                    break;
                }
                case Token::Kind::Branch: {
                    int n = read_index(t.length_class, end);
                    size_t rem = end - pos;
                    if (rem == 0) break;
                    size_t blen = 1 + (static_cast<size_t>(n) % rem);
                    size_t bend = pos + blen;
                    derive(cur, bend);
                    if (!done) pos = bend;
                    break;
                }
            }
        }
    }
};

}  // namespace

MolGraph decode(const TokenSeq& seq, const GroupDict* dict) {
    DecodeRun run{seq, dict};
    run.derive(-1, seq.size());
    return run.g;
}

// ---------------------------------------------------------------------------
// Encode

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

struct Region {
    int frag_id = 0;
    std::vector<int> map;  // fragment atom -> graph atom
    int entry = 0;         // image of first attachment
};

// Enumerates induced subgraph matches of frag into g where every
// non-entry fragment atom keeps its full degree (no external bonds).
void find_fragment_matches(const MolGraph& g, const GroupFragment& frag, int frag_id,
                           std::vector<Region>& out) {
    int fn = frag.graph.num_atoms();
    if (fn == 0 || fn > g.num_atoms()) return;
    auto fadj = frag.graph.adjacency();
    auto gadj = g.adjacency();
    std::vector<int> fdeg(fn), gdeg(g.num_atoms());
    for (int i = 0; i < fn; ++i) fdeg[i] = frag.graph.degree(i);
    for (int i = 0; i < g.num_atoms(); ++i) gdeg[i] = g.degree(i);
    int first_attach = frag.attachments.empty() ? 0 : frag.attachments[0];

    // fragment atom visit order: DFS from first_attach (fragment is connected)
    std::vector<int> order;
    std::vector<int> parent(fn, -1);
    {
        std::vector<char> seen(fn, 0);
        std::vector<int> stack{first_attach};
        seen[first_attach] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            order.push_back(u);
            for (int v : fadj[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    parent[v] = u;
                    stack.push_back(v);
                }
        }
        if (static_cast<int>(order.size()) != fn) return;  // disconnected fragment
    }
    auto bond_order_in = [](const MolGraph& m, int a, int b) {
        for (const Bond& bd : m.bonds)
            if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a)) return bd.order;
        return 0;
    };

    std::vector<int> map(fn, -1);
    std::vector<char> used(g.num_atoms(), 0);
    std::set<std::vector<int>> seen_sets;

    std::function<void(size_t)> rec = [&](size_t oi) {
        if (oi == order.size()) {
            // full verification: induced equality + degree constraints
            for (int i = 0; i < fn; ++i) {
                for (int j = i + 1; j < fn; ++j) {
                    if (bond_order_in(frag.graph, i, j) != bond_order_in(g, map[i], map[j])) return;
                }
                if (i != first_attach && gdeg[map[i]] != fdeg[i]) return;
            }
            std::vector<int> key(map);
            std::sort(key.begin(), key.end());
            key.push_back(map[first_attach]);
            if (seen_sets.insert(key).second) out.push_back({frag_id, map, map[first_attach]});
            return;
        }
        int fu = order[oi];
        if (parent[fu] < 0) {
            for (int gv = 0; gv < g.num_atoms(); ++gv) {
                if (used[gv] || g.atoms[gv] != frag.graph.atoms[fu]) continue;
                if (fu != first_attach && gdeg[gv] != fdeg[fu]) continue;
                if (gdeg[gv] < fdeg[fu]) continue;
                map[fu] = gv;
                used[gv] = 1;
                rec(oi + 1);
                used[gv] = 0;
                map[fu] = -1;
            }
        } else {
            int anchor = map[parent[fu]];
            int need = bond_order_in(frag.graph, fu, parent[fu]);
            for (int gv : gadj[anchor]) {
                if (used[gv] || g.atoms[gv] != frag.graph.atoms[fu]) continue;
                if (bond_order_in(g, anchor, gv) != need) continue;
                if (fu != first_attach && gdeg[gv] != fdeg[fu]) continue;
                map[fu] = gv;
                used[gv] = 1;
                rec(oi + 1);
                used[gv] = 0;
                map[fu] = -1;
            }
        }
    };
    rec(0);
}

int digits16(int n) {
    if (n < 16) return 1;
    if (n < 256) return 2;
    return 3;
}

struct Encoder {
    const MolGraph& g;
    const GroupDict* dict;
    std::vector<Region> regions;
    std::vector<int> region_of;   // atom -> region index or -1
    std::vector<char> interior;   // region atom that is not the entry
    std::vector<std::vector<std::pair<int, int>>> tree;  // u -> (v, order)
    std::vector<std::vector<std::pair<int, int>>> back;  // u -> (v, order), both dirs
    std::vector<char> back_done;  // per back edge id
    std::vector<std::pair<int, int>> back_edges;
    std::vector<std::vector<std::pair<int, int>>> back_at;  // u -> (edge id, v)
    std::vector<int> place_idx;
    int place_count = 0;

    explicit Encoder(const MolGraph& graph, const GroupDict* d)
        : g(graph), dict(d), region_of(graph.num_atoms(), -1), interior(graph.num_atoms(), 0),
          tree(graph.num_atoms()), back(graph.num_atoms()), back_at(graph.num_atoms()),
          place_idx(graph.num_atoms(), -1) {}

    void choose_regions() {
        if (!dict || dict->empty()) return;
        // canonical atom ranks for deterministic tie-breaking
        std::vector<int> canon_order;
        canonical_string(g, &canon_order);
        std::vector<int> rank(g.num_atoms(), 0);
        for (size_t i = 0; i < canon_order.size(); ++i) rank[canon_order[i]] = static_cast<int>(i);

        // fragment ids ordered largest-first, tie by key
        std::vector<int> frag_order(dict->groups.size());
        std::iota(frag_order.begin(), frag_order.end(), 0);
        std::stable_sort(frag_order.begin(), frag_order.end(), [&](int a, int b) {
            int na = dict->groups[a].graph.num_atoms();
            int nb = dict->groups[b].graph.num_atoms();
            if (na != nb) return na > nb;
            return dict->groups[a].key() < dict->groups[b].key();
        });
        for (int fid : frag_order) {
            std::vector<Region> cands;
            find_fragment_matches(g, dict->groups[fid], fid, cands);
            std::stable_sort(cands.begin(), cands.end(), [&](const Region& a, const Region& b) {
                std::vector<int> ka, kb;
                for (int x : a.map) ka.push_back(rank[x]);
                for (int x : b.map) kb.push_back(rank[x]);
                std::sort(ka.begin(), ka.end());
                std::sort(kb.begin(), kb.end());
                return ka < kb;
            });
            for (const Region& r : cands) {
                bool free = true;
                for (int a : r.map)
                    if (region_of[a] >= 0) { free = false; break; }
                if (!free) continue;
                int rid = static_cast<int>(regions.size());
                regions.push_back(r);
                for (int a : r.map) {
                    region_of[a] = rid;
                    if (a != r.entry) interior[a] = 1;
                }
            }
        }
    }

    void build_tree() {
        // visible edges: not internal to a region
        std::vector<std::pair<int, const Bond*>> multi, single;
        for (const Bond& b : g.bonds) {
            bool internal = region_of[b.a] >= 0 && region_of[b.a] == region_of[b.b];
            if (internal) continue;
            if (interior[b.a] || interior[b.b])
                throw UnencodableGraph("fragment match with interior external bond");
            if (b.order > 1) multi.push_back({b.order, &b});
            else single.push_back({1, &b});
        }
        UnionFind uf(g.num_atoms());
        // contract regions
        for (const Region& r : regions)
            for (int a : r.map) uf.unite(a, r.entry);
        for (auto& [o, b] : multi) {
            if (!uf.unite(b->a, b->b))
                throw UnencodableGraph("cycle of multi-order bonds cannot be ring-closed");
            tree[b->a].push_back({b->b, b->order});
            tree[b->b].push_back({b->a, b->order});
        }
        for (auto& [o, b] : single) {
            if (uf.unite(b->a, b->b)) {
                tree[b->a].push_back({b->b, b->order});
                tree[b->b].push_back({b->a, b->order});
            } else {
                int id = static_cast<int>(back_edges.size());
                back_edges.push_back({b->a, b->b});
                back_at[b->a].push_back({id, b->b});
                back_at[b->b].push_back({id, b->a});
            }
        }
        back_done.assign(back_edges.size(), 0);
        for (auto& t : tree)
            std::sort(t.begin(), t.end());
        for (auto& t : back_at)
            std::sort(t.begin(), t.end(), [](auto& a, auto& b) { return a.second < b.second; });
    }

    void place_atom(int u) { place_idx[u] = place_count++; }

    void place_region(const Region& r) {
        for (int a : r.map) place_idx[a] = place_count++;
    }

    void emit_rings(int u, TokenSeq& out) {
        // back edges whose other endpoint is already placed close here
        std::vector<std::pair<int, int>> ready;  // (place of v, edge id)
        for (auto& [id, v] : back_at[u])
            if (!back_done[id] && place_idx[v] >= 0) ready.push_back({place_idx[v], id});
        std::sort(ready.begin(), ready.end());
        for (auto& [pv, id] : ready) {
            back_done[id] = 1;
            int p = place_idx[u];
            int n = p - 1 - pv;
            int l = digits16(n);
            out.push_back(Token::ring(l));
            for (int i = l - 1; i >= 0; --i) out.push_back(digit_token((n >> (4 * i)) & 15));
        }
    }

    TokenSeq emit_chain(int u, int incoming_order) {
        TokenSeq out;
        if (region_of[u] >= 0) {
            const Region& r = regions[region_of[u]];
            out.push_back(Token::group(r.frag_id, incoming_order));
            place_region(r);
        } else {
            out.push_back(Token::atom(g.atoms[u], incoming_order));
            place_atom(u);
        }
        emit_rings(u, out);
        std::vector<std::pair<int, int>> children;
        for (auto& [v, o] : tree[u])
            if (place_idx[v] < 0) children.push_back({v, o});
        for (size_t i = 0; i < children.size(); ++i) {
            auto [v, o] = children[i];
            TokenSeq body = emit_chain(v, o);
            if (i + 1 < children.size()) {
                int n = static_cast<int>(body.size()) - 1;
                if (n >= 4096) throw UnencodableGraph("branch too long to index");
                int l = digits16(n);
                out.push_back(Token::branch(l));
                for (int k = l - 1; k >= 0; --k) out.push_back(digit_token((n >> (4 * k)) & 15));
            }
            out.insert(out.end(), body.begin(), body.end());
        }
        return out;
    }

    TokenSeq run(int max_len) {
        ValidityReport rep = validate(g);
        if (!rep.valid)
            throw InvalidGraph("encode: " + (rep.violations.empty() ? std::string("invalid graph")
                                                                    : rep.violations[0]));
        if (g.num_atoms() == 0) throw InvalidGraph("encode: empty graph");
        if (!g.connected()) throw InvalidGraph("encode: graph must be connected");
        choose_regions();
        build_tree();
        int start = 0;
        while (interior[start]) ++start;
        if (region_of[start] >= 0) start = regions[region_of[start]].entry;
        TokenSeq out = emit_chain(start, 1);
        out.push_back(Token::eos());
        for (size_t i = 0; i < back_done.size(); ++i)
            if (!back_done[i]) throw UnencodableGraph("unclosed ring edge");
        if (static_cast<int>(out.size()) > max_len)
            throw UnencodableGraph("tokenization exceeds max_len (" + std::to_string(out.size()) +
                                   " > " + std::to_string(max_len) + ")");
        return out;
    }
};

}  // namespace

TokenSeq encode(const MolGraph& graph, const GroupDict* dict, int max_len) {
    Encoder enc(graph, dict);
    return enc.run(max_len);
}

// ---------------------------------------------------------------------------
// Group extraction

std::string GroupFragment::key() const {
    std::string k = canonical_string(graph) + "|";
    for (size_t i = 0; i < attachments.size(); ++i) {
        if (i) k += ",";
        k += std::to_string(attachments[i]);
    }
    return k;
}

namespace {

// Edges that lie on some cycle (non-bridges).
std::vector<char> cycle_edges(const MolGraph& g) {
    std::vector<char> in_cycle(g.num_bonds(), 0);
    for (int e = 0; e < g.num_bonds(); ++e) {
        const Bond& b = g.bonds[e];
        // BFS from b.a to b.b avoiding edge e
        std::vector<char> seen(g.num_atoms(), 0);
        std::vector<int> stack{b.a};
        seen[b.a] = 1;
        bool reached = false;
        while (!stack.empty() && !reached) {
            int u = stack.back();
            stack.pop_back();
            for (int e2 = 0; e2 < g.num_bonds(); ++e2) {
                if (e2 == e) continue;
                const Bond& c = g.bonds[e2];
                int v = c.a == u ? c.b : c.b == u ? c.a : -1;
                if (v < 0 || seen[v]) continue;
                if (v == b.b) { reached = true; break; }
                seen[v] = 1;
                stack.push_back(v);
            }
        }
        in_cycle[e] = reached;
    }
    return in_cycle;
}

}  // namespace

GroupDict extract_groups(const std::vector<MolGraph>& corpus, long min_freq, int min_atoms) {
    if (corpus.empty()) throw EmptyCorpus("extract_groups: empty corpus");
    if (min_atoms < 2) min_atoms = 2;
    std::map<std::string, GroupFragment> table;
    for (const MolGraph& g : corpus) {
        ValidityReport rep = validate(g);
        if (!rep.valid) throw InvalidGraph("extract_groups: invalid corpus graph");
        std::vector<char> in_cycle = cycle_edges(g);
        std::vector<char> ring_atom(g.num_atoms(), 0);
        for (int e = 0; e < g.num_bonds(); ++e)
            if (in_cycle[e]) {
                ring_atom[g.bonds[e].a] = 1;
                ring_atom[g.bonds[e].b] = 1;
            }
        std::vector<char> cut(g.num_bonds(), 0);
        for (int e = 0; e < g.num_bonds(); ++e) {
            const Bond& b = g.bonds[e];
            if (in_cycle[e] || b.order != 1) continue;
            bool ra = ring_atom[b.a], rb = ring_atom[b.b];
            if (ra != rb) cut[e] = 1;
            else if (!ra && !rb && g.degree(b.a) >= 2 && g.degree(b.b) >= 2) cut[e] = 1;
        }
        // components after removing cut edges
        std::vector<int> comp(g.num_atoms(), -1);
        int ncomp = 0;
        for (int s = 0; s < g.num_atoms(); ++s) {
            if (comp[s] >= 0) continue;
            std::vector<int> stack{s};
            comp[s] = ncomp;
            while (!stack.empty()) {
                int u = stack.back();
                stack.pop_back();
                for (int e = 0; e < g.num_bonds(); ++e) {
                    if (cut[e]) continue;
                    const Bond& b = g.bonds[e];
                    int v = b.a == u ? b.b : b.b == u ? b.a : -1;
                    if (v >= 0 && comp[v] < 0) { comp[v] = comp[u]; stack.push_back(v); }
                }
            }
            ++ncomp;
        }
        for (int c = 0; c < ncomp; ++c) {
            std::vector<int> local(g.num_atoms(), -1);
            MolGraph frag;
            for (int u = 0; u < g.num_atoms(); ++u)
                if (comp[u] == c) {
                    local[u] = frag.num_atoms();
                    frag.atoms.push_back(g.atoms[u]);
                }
            if (frag.num_atoms() < min_atoms) continue;
            for (int e = 0; e < g.num_bonds(); ++e) {
                const Bond& b = g.bonds[e];
                if (!cut[e] && comp[b.a] == c && comp[b.b] == c)
                    frag.bonds.push_back({local[b.a], local[b.b], b.order});
            }
            std::vector<int> attach;  // one entry per cut incident
            for (int e = 0; e < g.num_bonds(); ++e) {
                if (!cut[e]) continue;
                const Bond& b = g.bonds[e];
                if (comp[b.a] == c) attach.push_back(local[b.a]);
                if (comp[b.b] == c) attach.push_back(local[b.b]);
            }
            if (attach.empty()) continue;  // whole molecule, not a fragment
            // remap to canonical order
            std::vector<int> order;
            canonical_string(frag, &order);
            std::vector<int> inv(frag.num_atoms());
            for (size_t i = 0; i < order.size(); ++i) inv[order[i]] = static_cast<int>(i);
            MolGraph cf;
            for (int i = 0; i < frag.num_atoms(); ++i) cf.atoms.push_back(frag.atoms[order[i]]);
            for (const Bond& b : frag.bonds) {
                int a = inv[b.a], d = inv[b.b];
                cf.bonds.push_back({std::min(a, d), std::max(a, d), b.order});
            }
            std::sort(cf.bonds.begin(), cf.bonds.end(), [](const Bond& x, const Bond& y) {
                return std::tie(x.a, x.b) < std::tie(y.a, y.b);
            });
            GroupFragment gf;
            gf.graph = cf;
            for (int a : attach) gf.attachments.push_back(inv[a]);
            std::sort(gf.attachments.begin(), gf.attachments.end());
            gf.frequency = 1;
            std::string key = gf.key();
            auto it = table.find(key);
            if (it == table.end()) table.emplace(key, gf);
            else it->second.frequency += 1;
        }
    }
    GroupDict dict;
    for (auto& [key, gf] : table)
        if (gf.frequency >= min_freq) dict.groups.push_back(gf);
    std::sort(dict.groups.begin(), dict.groups.end(), [](const GroupFragment& a, const GroupFragment& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return canonical_string(a.graph) < canonical_string(b.graph);
    });
    if (dict.groups.empty()) throw EmptyDictionary("extract_groups: no fragment passes thresholds");
    return dict;
}

void GroupDict::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "groupdict v1\n";
    for (const GroupFragment& gf : groups) {
        f << canonical_string(gf.graph) << "\t";
        for (size_t i = 0; i < gf.attachments.size(); ++i)
            f << (i ? "," : "") << gf.attachments[i];
        f << "\t" << gf.frequency << "\n";
    }
}

GroupDict GroupDict::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(f, line) || line != "groupdict v1")
        throw ParseError("groupdict: bad header in " + path, 1);
    GroupDict dict;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = line.find('\t', t1 == std::string::npos ? 0 : t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw ParseError("groupdict: expected 3 tab-separated fields", lineno);
        GroupFragment gf;
        gf.graph = parse_canonical(line.substr(0, t1));
        std::string att = line.substr(t1 + 1, t2 - t1 - 1);
        std::stringstream ss(att);
        std::string part;
        while (std::getline(ss, part, ',')) gf.attachments.push_back(std::stoi(part));
        gf.frequency = std::stol(line.substr(t2 + 1));
        dict.groups.push_back(gf);
    }
    return dict;
}

// ---------------------------------------------------------------------------
// Vocab / corpus

namespace {
std::vector<int> token_sort_key(const Token& t) {
    switch (t.kind) {
        case Token::Kind::Atom: return {0, static_cast<int>(t.elem), t.order};
        case Token::Kind::Branch: return {1, t.length_class};
        case Token::Kind::Ring: return {2, t.length_class};
        case Token::Kind::Group: return {3, t.group_id, t.order};
        default: return {-1, static_cast<int>(t.kind)};
    }
}
}  // namespace

int Vocab::id_of(const Token& t) const {
    for (size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == t) return static_cast<int>(i);
    return -1;
}

Vocab Vocab::from_corpus(const std::vector<TokenSeq>& corpus) {
    if (corpus.empty()) throw EmptyCorpus("vocab: empty corpus");
    std::map<std::vector<int>, Token> seen;
    for (const TokenSeq& seq : corpus)
        for (const Token& t : seq) {
            if (t.kind == Token::Kind::Pad || t.kind == Token::Kind::Bos) continue;
            if (t.kind == Token::Kind::Eos) continue;
            seen.emplace(token_sort_key(t), t);
        }
    Vocab v;
    v.tokens = {Token::pad(), Token::bos(), Token::eos()};
    for (auto& [k, t] : seen) v.tokens.push_back(t);
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const Token& t : tokens) f << t.text() << "\n";
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    Vocab v;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto t = Token::parse(line);
        if (!t) throw ParseError("vocab: bad token '" + line + "'", lineno);
        v.tokens.push_back(*t);
    }
    if (v.size() < 3 || !(v.tokens[0] == Token::pad()) || !(v.tokens[1] == Token::bos()) ||
        !(v.tokens[2] == Token::eos()))
        throw ParseError("vocab: first three entries must be [pad] [bos] [eos]", 1);
    return v;
}

uint64_t Vocab::hash() const {
    std::string all;
    for (const Token& t : tokens) all += t.text() + "\n";
    return fnv1a64(all);
}

CorpusStats corpus_stats(const std::vector<TokenSeq>& corpus, const Vocab& vocab) {
    (void)vocab;
    if (corpus.empty()) throw EmptyCorpus("corpus_stats: empty corpus");
    std::set<std::string> distinct;
    long total_len = 0;
    int max_len = 0;
    for (const TokenSeq& seq : corpus) {
        int len = 0;
        for (const Token& t : seq) {
            if (t.kind == Token::Kind::Pad || t.kind == Token::Kind::Bos ||
                t.kind == Token::Kind::Eos)
                continue;
            distinct.insert(t.text());
            ++len;
        }
        total_len += len;
        max_len = std::max(max_len, len);
    }
    CorpusStats s;
    s.total_tokens = static_cast<int>(distinct.size());
    s.max_len = max_len;
    double avg = static_cast<double>(total_len) / static_cast<double>(corpus.size());
    s.avg_len = std::round(avg * 100.0) / 100.0;
    return s;
}

std::string tokens_to_string(const TokenSeq& seq) {
    std::string out;
    for (const Token& t : seq) {
        if (t.kind == Token::Kind::Pad || t.kind == Token::Kind::Bos) continue;
        if (t.kind == Token::Kind::Eos) break;
        out += t.text();
    }
    return out;
}

TokenSeq tokens_from_string(std::string_view line) {
    TokenSeq seq;
    size_t p = 0;
    while (p < line.size()) {
        if (line[p] != '[') throw ParseError("expected '['", -1);
        size_t q = line.find(']', p);
        if (q == std::string_view::npos) throw ParseError("missing ']'", -1);
        auto t = Token::parse(line.substr(p, q - p + 1));
        if (!t) throw ParseError("bad token '" + std::string(line.substr(p, q - p + 1)) + "'", -1);
        seq.push_back(*t);
        p = q + 1;
    }
    return seq;
}

std::vector<TokenSeq> load_corpus(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<TokenSeq> corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            corpus.push_back(tokens_from_string(line));
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()) + " in " + path, lineno);
        }
    }
    return corpus;
}

void save_corpus(const std::vector<TokenSeq>& corpus, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const TokenSeq& seq : corpus) f << tokens_to_string(seq) << "\n";
}

}  // namespace latentmol
