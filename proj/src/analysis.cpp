#include "latentmol/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace latentmol {

std::vector<int> KnnGraph::degree() const {
    std::vector<int> d(n);
    for (int i = 0; i < n; ++i) d[i] = static_cast<int>(adj[i].size());
    return d;
}

bool KnnGraph::adjacent(int i, int j) const {
    return std::binary_search(adj[i].begin(), adj[i].end(), j);
}

KnnGraph build_knn(const std::vector<std::vector<float>>& points, int k) {
    const int n = static_cast<int>(points.size());
    if (k < 1 || n < k + 1)
        throw TooFewPoints("need at least k+1 = " + std::to_string(k + 1) + " points, got " +
                           std::to_string(n));
    KnnGraph g;
    g.n = n;
    g.k = k;
    g.knn.resize(n);
    g.adj.assign(n, {});
    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (size_t c = 0; c < points[i].size(); ++c) {
                double d = static_cast<double>(points[i][c]) - points[j][c];
                s += d * d;
            }
            dist[j] = {s, j};
        }
        dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int j = 0; j < k; ++j) g.knn[i].push_back(dist[j].second);
    }
    std::vector<std::set<int>> adj(n);
    for (int i = 0; i < n; ++i)
        for (int j : g.knn[i]) {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    for (int i = 0; i < n; ++i) g.adj[i].assign(adj[i].begin(), adj[i].end());
    return g;
}

double dirichlet_energy(const KnnGraph& graph, const std::vector<double>& y) {
    if (static_cast<int>(y.size()) != graph.n)
        throw DimMismatch("signal length " + std::to_string(y.size()) + " != graph size " +
                          std::to_string(graph.n));
    double q = 0.0;
    for (int i = 0; i < graph.n; ++i) {
        q += static_cast<double>(graph.adj[i].size()) * y[i] * y[i];
        for (int j : graph.adj[i]) q -= y[i] * y[j];
    }
    return q / graph.n;
}

namespace {

// Pearson correlation; returns false when either side has zero variance.
bool pearson(const std::vector<double>& a, const std::vector<double>& b, double& out) {
    const size_t n = a.size();
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sa = 0.0, sb = 0.0, sab = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sa += (a[i] - ma) * (a[i] - ma);
        sb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (sa <= 0.0 || sb <= 0.0) return false;
    out = sab / std::sqrt(sa * sb);
    return true;
}

}  // namespace

FitMetrics surrogate_fit_metrics(VaeModel& vae, SurrogateModel& sur, const Objective& objective,
                                 const IdBatch& eval_ids,
                                 const std::vector<double>& oracle_objectives, int k) {
    if (eval_ids.size() != oracle_objectives.size())
        throw DimMismatch("eval set and oracle value count differ");
    const int n = static_cast<int>(eval_ids.size());
    const int d = vae.dims().latent;

    Tape t;
    t.enabled = false;
    std::vector<std::vector<float>> mu(n);
    const int chunk = 128;
    for (int off = 0; off < n; off += chunk) {
        IdBatch batch(eval_ids.begin() + off,
                      eval_ids.begin() + std::min<size_t>(n, off + chunk));
        VaeModel::Encoded enc = vae.encode(t, batch, nullptr);
        for (size_t i = 0; i < batch.size(); ++i)
            mu[off + i].assign(enc.mu.data().begin() + i * d,
                               enc.mu.data().begin() + (i + 1) * d);
    }

    std::vector<double> pred(n);
    for (int i = 0; i < n; ++i)
        pred[i] = objective_value(sur.predict_point(mu[i]), objective);

    FitMetrics m;
    for (int i = 0; i < n; ++i) {
        double e = pred[i] - oracle_objectives[i];
        m.mse += e * e;
    }
    m.mse /= n;

    KnnGraph g = build_knn(mu, k);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> a{pred[i]}, b{oracle_objectives[i]};
        for (int j : g.knn[i]) {
            a.push_back(pred[j]);
            b.push_back(oracle_objectives[j]);
        }
        double r;
        if (pearson(a, b, r)) {
            sum += r;
            ++m.anchors_used;
        } else {
            ++m.anchors_skipped;
        }
    }
    if (m.anchors_used == 0) throw DegenerateSet("all anchor neighborhoods have zero variance");
    m.local_pearson = sum / m.anchors_used;
    return m;
}

std::vector<std::array<double, 3>> landscape_slice(
    const std::vector<float>& center,
    const std::function<double(const std::vector<float>&)>& objective_at, float extent,
    int resolution, uint64_t seed, std::vector<float>* u_out, std::vector<float>* v_out) {
    const size_t d = center.size();
    RngStream ru(seed, "landscape/u"), rv(seed, "landscape/v");
    std::vector<float> u(d), v(d);
    for (float& x : u) x = ru.gaussian();
    for (float& x : v) x = rv.gaussian();
    auto norm = [](std::vector<float>& w) {
        double s = 0.0;
        for (float x : w) s += static_cast<double>(x) * x;
        s = std::sqrt(s);
        for (float& x : w) x = static_cast<float>(x / s);
    };
    norm(u);
    double dot = 0.0;
    for (size_t i = 0; i < d; ++i) dot += static_cast<double>(u[i]) * v[i];
    for (size_t i = 0; i < d; ++i) v[i] -= static_cast<float>(dot * u[i]);
    norm(v);
    if (u_out) *u_out = u;
    if (v_out) *v_out = v;

    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            double a = resolution == 1 ? 0.0
                                       : -extent + 2.0 * extent * i / (resolution - 1);
            double b = resolution == 1 ? 0.0
                                       : -extent + 2.0 * extent * j / (resolution - 1);
            std::vector<float> z(d);
            for (size_t c = 0; c < d; ++c)
                z[c] = center[c] + static_cast<float>(a) * u[c] + static_cast<float>(b) * v[c];
            rows.push_back({a, b, objective_at(z)});
        }
    return rows;
}

}  // namespace latentmol
