#include "latentmol/inception.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

namespace latentmol {

std::vector<float> descend(const LatentObjective& f, std::vector<float> z, int steps, float lr,
                           std::vector<double>* trajectory, bool* aborted) {
    if (aborted) *aborted = false;
    std::vector<float> grad(z.size());
    for (int s = 0; s <= steps; ++s) {
        double v = f(z, grad);
        if (trajectory) trajectory->push_back(v);
        if (s == steps) break;
        bool finite = std::isfinite(v);
        for (float g : grad) finite = finite && std::isfinite(g);
        if (!finite) {
            if (aborted) *aborted = true;
            break;
        }
        for (size_t i = 0; i < z.size(); ++i) z[i] -= lr * grad[i];
    }
    return z;
}

LatentObjective surrogate_objective(SurrogateModel& sur, const Objective& objective) {
    const auto& props = sur.properties();
    std::vector<float> coeff(props.size(), 0.0f);
    bool any = false;
    for (const ObjectiveTerm& term : objective) {
        auto it = std::find(props.begin(), props.end(), term.property);
        if (it == props.end())
            throw UnknownProperty("surrogate does not predict " + term.property);
        coeff[it - props.begin()] +=
            static_cast<float>(term.weight * (term.maximize ? -1.0 : 1.0));
        any = true;
    }
    if (!any) throw BadObjective("objective must have at least one term");
    const int d = sur.latent();
    const int P = static_cast<int>(props.size());
    return [&sur, coeff, d, P](const std::vector<float>& z, std::vector<float>& grad) {
        Tape t;
        Tensor zt = Tensor::from({1, d}, z, true);
        Tensor pred = sur.predict(t, zt);
        Tensor val = sum_all(t, mul(t, pred, Tensor::from({P}, coeff)));
        t.backward(val);
        grad.assign(zt.grad().begin(), zt.grad().end());
        return static_cast<double>(val.item());
    };
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

std::vector<StartResult> optimize(VaeModel& vae, SurrogateModel& sur, const Vocab& vocab,
                                  const GroupDict* dict, const Objective& objective,
                                  const std::vector<OracleSpec>& oracles,
                                  const OptimizeConfig& cfg) {
    const int d = vae.dims().latent;
    LatentObjective f = surrogate_objective(sur, objective);
    std::vector<StartResult> results(static_cast<size_t>(cfg.n_starts));
    std::vector<MolGraph> graphs(static_cast<size_t>(cfg.n_starts));

    std::atomic<long> next{0};
    auto worker = [&]() {
        for (;;) {
            long i = next.fetch_add(1);
            if (i >= cfg.n_starts) return;
            StartResult r;
            r.start_index = i;
            RngStream rs(cfg.seed, static_cast<uint64_t>(i));
            r.z0.resize(d);
            for (float& v : r.z0) v = rs.gaussian();
            r.z_final = descend(f, r.z0, cfg.steps, cfg.lr, &r.trajectory, &r.aborted);
            std::vector<int> ids = decode_ids(vae, r.z_final, cfg.cmlmc_iterations);
            TokenSeq seq;
            for (int id : ids) seq.push_back(vocab.tokens[id]);
            MolGraph g = decode(seq, dict);
            r.molecule = canonical_string(g);
            r.surrogate_props = sur.predict_point(r.z_final);
            r.objective_surrogate = r.trajectory.empty() ? 0.0 : r.trajectory.back();
            graphs[static_cast<size_t>(i)] = std::move(g);
            results[static_cast<size_t>(i)] = std::move(r);
        }
    };
    int nw = std::max(1, cfg.workers);
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Oracle scoring after the merge keeps external child processes out of
    // the worker threads and the output independent of scheduling.
    std::vector<PropertyVector> props = score_all(oracles, graphs);
    for (size_t i = 0; i < results.size(); ++i) {
        results[i].oracle_props = props[i];
        results[i].objective_oracle = objective_value(props[i], objective);
    }
    return results;
}

SelectionReport rank_and_select(const std::vector<StartResult>& results,
                                const Objective& objective, int top_k) {
    SelectionReport rep;
    rep.scored = static_cast<long>(results.size());
    if (results.empty()) return rep;

    for (const StartResult& r : results) {
        for (const auto& [name, v] : r.oracle_props) rep.population_means[name] += v;
        rep.mean_objective += r.objective_oracle;
    }
    for (auto& [_, v] : rep.population_means) v /= static_cast<double>(results.size());
    rep.mean_objective /= static_cast<double>(results.size());

    auto top = [&](auto key, bool ascending) {
        std::vector<size_t> idx(results.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            double ka = key(results[a]), kb = key(results[b]);
            if (ka != kb) return ascending ? ka < kb : ka > kb;
            return results[a].molecule < results[b].molecule;
        });
        std::vector<size_t> out;
        std::set<std::string> seen;
        for (size_t i : idx) {
            if (!seen.insert(results[i].molecule).second) continue;
            out.push_back(i);
            if (static_cast<int>(out.size()) == top_k) break;
        }
        return out;
    };

    std::set<std::string> done;
    for (const ObjectiveTerm& term : objective) {
        if (!done.insert(term.property).second) continue;
        std::string name = term.property;
        bool ascending = !term.maximize;  // best first
        rep.top_by_property[name] = top(
            [name](const StartResult& r) {
                auto it = r.oracle_props.find(name);
                return it == r.oracle_props.end() ? 0.0 : it->second;
            },
            ascending);
    }
    rep.top_by_objective = top([](const StartResult& r) { return r.objective_oracle; }, true);
    return rep;
}

}  // namespace latentmol
