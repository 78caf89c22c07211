#include "latentmol/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace latentmol {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    for (int d : t.node_->shape)
        if (d <= 0) throw ShapeMismatch("non-positive extent in " + shape_str(t.node_->shape));
    t.node_->value.assign(shape_numel(t.node_->shape), 0.0f);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeMismatch("data length " + std::to_string(data.size()) + " != numel of " +
                            shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(float v, bool requires_grad) {
    return Tensor::from({1}, {v}, requires_grad);
}

std::vector<float>& Tensor::grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0f);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

float Tensor::item() const {
    if (numel() != 1) throw NotScalar("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

bool Tape::should_record(std::initializer_list<Tensor> inputs) const {
    if (!enabled) return false;
    for (const Tensor& t : inputs)
        if (t.defined() && t.requires_grad()) return true;
    return false;
}

void Tape::record(Tensor out, std::function<void()> backward) {
    records_.push_back({std::move(out), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw NotScalar("backward: loss has shape " + shape_str(loss.shape()));
    if (consumed_) throw TapeConsumed("backward: tape already consumed");
    consumed_ = true;
    Tensor l = loss;
    l.grad()[0] = 1.0f;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->back();
}

void Tape::reset() {
    records_.clear();
    consumed_ = false;
}

// ---------------------------------------------------------------------------
// kernels

namespace {

// C(m,n) += A(m,k) B(k,n)
void mm_acc(const float* A, const float* B, float* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            float a = A[i * k + p];
            if (a == 0.0f) continue;
            const float* brow = B + p * n;
            float* crow = C + i * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
}

// C(m,k) += A(m,n) B(k,n)^T
void mm_acc_nt(const float* A, const float* B, float* C, int m, int n, int k) {
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const float* arow = A + i * n;
            const float* brow = B + p * n;
            float s = 0.0f;
            for (int j = 0; j < n; ++j) s += arow[j] * brow[j];
            C[i * k + p] += s;
        }
}

// C(k,n) += A(m,k)^T B(m,n)
void mm_acc_tn(const float* A, const float* B, float* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            float a = A[i * k + p];
            if (a == 0.0f) continue;
            const float* brow = B + i * n;
            float* crow = C + p * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
}

bool suffix_of(const std::vector<int>& small, const std::vector<int>& big) {
    if (small.size() > big.size()) return false;
    size_t off = big.size() - small.size();
    for (size_t i = 0; i < small.size(); ++i)
        if (small[i] != big[off + i]) return false;
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// primitives

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    Tensor out;
    if (as.size() == 2 && bs.size() == 2 && as[1] == bs[0]) {
        int m = as[0], k = as[1], n = bs[1];
        out = Tensor::zeros({m, n});
        mm_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
        if (t.should_record({a, b})) {
            out.set_requires_grad(true);
            Tensor ac = a, bc = b, oc = out;
            t.record(out, [ac, bc, oc, m, k, n]() mutable {
                if (ac.requires_grad())
                    mm_acc_nt(oc.grad().data(), bc.data().data(), ac.grad().data(), m, n, k);
                if (bc.requires_grad())
                    mm_acc_tn(ac.data().data(), oc.grad().data(), bc.grad().data(), m, k, n);
            });
        }
        return out;
    }
    if (as.size() == 3 && bs.size() == 2 && as[2] == bs[0]) {
        int B = as[0], m = as[1], k = as[2], n = bs[1];
        out = Tensor::zeros({B, m, n});
        for (int i = 0; i < B; ++i)
            mm_acc(a.data().data() + i * m * k, b.data().data(), out.data().data() + i * m * n,
                   m, k, n);
        if (t.should_record({a, b})) {
            out.set_requires_grad(true);
            Tensor ac = a, bc = b, oc = out;
            t.record(out, [ac, bc, oc, B, m, k, n]() mutable {
                for (int i = 0; i < B; ++i) {
                    if (ac.requires_grad())
                        mm_acc_nt(oc.grad().data() + i * m * n, bc.data().data(),
                                  ac.grad().data() + i * m * k, m, n, k);
                    if (bc.requires_grad())
                        mm_acc_tn(ac.data().data() + i * m * k, oc.grad().data() + i * m * n,
                                  bc.grad().data(), m, k, n);
                }
            });
        }
        return out;
    }
    if (as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == bs[1]) {
        int B = as[0], m = as[1], k = as[2], n = bs[2];
        out = Tensor::zeros({B, m, n});
        for (int i = 0; i < B; ++i)
            mm_acc(a.data().data() + i * m * k, b.data().data() + i * k * n,
                   out.data().data() + i * m * n, m, k, n);
        if (t.should_record({a, b})) {
            out.set_requires_grad(true);
            Tensor ac = a, bc = b, oc = out;
            t.record(out, [ac, bc, oc, B, m, k, n]() mutable {
                for (int i = 0; i < B; ++i) {
                    if (ac.requires_grad())
                        mm_acc_nt(oc.grad().data() + i * m * n, bc.data().data() + i * k * n,
                                  ac.grad().data() + i * m * k, m, n, k);
                    if (bc.requires_grad())
                        mm_acc_tn(ac.data().data() + i * m * k, oc.grad().data() + i * m * n,
                                  bc.grad().data() + i * k * n, m, k, n);
                }
            });
        }
        return out;
    }
    throw ShapeMismatch("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
}

namespace {

enum class EwKind { Add, Mul };

Tensor elementwise_bcast(Tape& t, const Tensor& a, const Tensor& b, EwKind kind) {
    const char* name = kind == EwKind::Add ? "add" : "mul";
    if (!suffix_of(b.shape(), a.shape()))
        throw ShapeMismatch(std::string(name) + ": " + shape_str(b.shape()) +
                            " does not broadcast over " + shape_str(a.shape()));
    int64_t bn = b.numel();
    int64_t an = a.numel();
    Tensor out = Tensor::zeros(a.shape());
    const float* ap = a.data().data();
    const float* bp = b.data().data();
    float* op = out.data().data();
    if (kind == EwKind::Add)
        for (int64_t i = 0; i < an; ++i) op[i] = ap[i] + bp[i % bn];
    else
        for (int64_t i = 0; i < an; ++i) op[i] = ap[i] * bp[i % bn];
    if (t.should_record({a, b})) {
        out.set_requires_grad(true);
        Tensor ac = a, bc = b, oc = out;
        t.record(out, [ac, bc, oc, an, bn, kind]() mutable {
            const float* g = oc.grad().data();
            if (ac.requires_grad()) {
                float* da = ac.grad().data();
                if (kind == EwKind::Add)
                    for (int64_t i = 0; i < an; ++i) da[i] += g[i];
                else {
                    const float* bp = bc.data().data();
                    for (int64_t i = 0; i < an; ++i) da[i] += g[i] * bp[i % bn];
                }
            }
            if (bc.requires_grad()) {
                float* db = bc.grad().data();
                if (kind == EwKind::Add)
                    for (int64_t i = 0; i < an; ++i) db[i % bn] += g[i];
                else {
                    const float* ap = ac.data().data();
                    for (int64_t i = 0; i < an; ++i) db[i % bn] += g[i] * ap[i];
                }
            }
        });
    }
    return out;
}

Tensor unary(Tape& t, const Tensor& x, float (*fwd)(float),
             const std::function<float(float xv, float yv)>& dfn) {
    Tensor out = Tensor::zeros(x.shape());
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = fwd(x.data()[i]);
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        auto d = dfn;
        t.record(out, [xc, oc, n, d]() mutable {
            const float* g = oc.grad().data();
            float* dx = xc.grad().data();
            for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * d(xc.data()[i], oc.data()[i]);
        });
    }
    return out;
}

}  // namespace

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
    return elementwise_bcast(t, a, b, EwKind::Add);
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
    return elementwise_bcast(t, a, b, EwKind::Mul);
}

Tensor relu(Tape& t, const Tensor& x) {
    return unary(t, x, [](float v) { return v > 0.0f ? v : 0.0f; },
                 [](float xv, float) { return xv > 0.0f ? 1.0f : 0.0f; });
}

Tensor tanh_op(Tape& t, const Tensor& x) {
    return unary(t, x, [](float v) { return std::tanh(v); },
                 [](float, float yv) { return 1.0f - yv * yv; });
}

Tensor exp_op(Tape& t, const Tensor& x) {
    return unary(t, x, [](float v) { return std::exp(v); },
                 [](float, float yv) { return yv; });
}

Tensor log_op(Tape& t, const Tensor& x) {
    return unary(t, x, [](float v) { return std::log(v); },
                 [](float xv, float) { return 1.0f / xv; });
}

Tensor clamp(Tape& t, const Tensor& x, float lo, float hi) {
    Tensor out = Tensor::zeros(x.shape());
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = std::min(hi, std::max(lo, x.data()[i]));
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc, n, lo, hi]() mutable {
            const float* g = oc.grad().data();
            float* dx = xc.grad().data();
            for (int64_t i = 0; i < n; ++i)
                if (xc.data()[i] >= lo && xc.data()[i] <= hi) dx[i] += g[i];
        });
    }
    return out;
}

Tensor scale(Tape& t, const Tensor& x, float c) {
    Tensor out = Tensor::zeros(x.shape());
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc, n, c]() mutable {
            const float* g = oc.grad().data();
            float* dx = xc.grad().data();
            for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * c;
        });
    }
    return out;
}

Tensor softmax_lastdim(Tape& t, const Tensor& x) {
    if (x.shape().empty()) throw ShapeMismatch("softmax: rank-0 input");
    int v = x.shape().back();
    int64_t rows = x.numel() / v;
    Tensor out = Tensor::zeros(x.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = x.data().data() + r * v;
        float* yr = out.data().data() + r * v;
        float mx = xr[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
        float s = 0.0f;
        for (int j = 0; j < v; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        for (int j = 0; j < v; ++j) yr[j] /= s;
    }
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc, rows, v]() mutable {
            const float* g = oc.grad().data();
            const float* y = oc.data().data();
            float* dx = xc.grad().data();
            for (int64_t r = 0; r < rows; ++r) {
                float dot = 0.0f;
                for (int j = 0; j < v; ++j) dot += g[r * v + j] * y[r * v + j];
                for (int j = 0; j < v; ++j)
                    dx[r * v + j] += y[r * v + j] * (g[r * v + j] - dot);
            }
        });
    }
    return out;
}

Tensor layernorm_lastdim(Tape& t, const Tensor& x, float eps) {
    if (x.shape().empty()) throw ShapeMismatch("layernorm: rank-0 input");
    int v = x.shape().back();
    int64_t rows = x.numel() / v;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<float> inv_sigma(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = x.data().data() + r * v;
        float* yr = out.data().data() + r * v;
        float m = 0.0f;
        for (int j = 0; j < v; ++j) m += xr[j];
        m /= v;
        float var = 0.0f;
        for (int j = 0; j < v; ++j) var += (xr[j] - m) * (xr[j] - m);
        var /= v;
        float is = 1.0f / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (int j = 0; j < v; ++j) yr[j] = (xr[j] - m) * is;
    }
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc, rows, v, inv_sigma]() mutable {
            const float* g = oc.grad().data();
            const float* y = oc.data().data();
            float* dx = xc.grad().data();
            for (int64_t r = 0; r < rows; ++r) {
                float gm = 0.0f, gym = 0.0f;
                for (int j = 0; j < v; ++j) {
                    gm += g[r * v + j];
                    gym += g[r * v + j] * y[r * v + j];
                }
                gm /= v;
                gym /= v;
                for (int j = 0; j < v; ++j)
                    dx[r * v + j] += inv_sigma[r] * (g[r * v + j] - gm - y[r * v + j] * gym);
            }
        });
    }
    return out;
}

Tensor embedding(Tape& t, const Tensor& table, const std::vector<int>& ids) {
    if (table.shape().size() != 2) throw ShapeMismatch("embedding: table must be rank 2");
    int V = table.shape()[0], d = table.shape()[1];
    int n = static_cast<int>(ids.size());
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
        int id = ids[i];
        if (id < 0 || id >= V) throw ShapeMismatch("embedding: id " + std::to_string(id) +
                                                   " out of range [0," + std::to_string(V) + ")");
        std::copy_n(table.data().data() + id * d, d, out.data().data() + i * d);
    }
    if (t.should_record({table})) {
        out.set_requires_grad(true);
        Tensor tc = table, oc = out;
        t.record(out, [tc, oc, ids, d]() mutable {
            const float* g = oc.grad().data();
            float* dt = tc.grad().data();
            for (size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j) dt[ids[i] * d + j] += g[i * d + j];
        });
    }
    return out;
}

Tensor reshape(Tape& t, const Tensor& x, std::vector<int> shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeMismatch("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor out = Tensor::from(std::move(shape), x.data());
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc]() mutable {
            const float* g = oc.grad().data();
            float* dx = xc.grad().data();
            for (int64_t i = 0; i < xc.numel(); ++i) dx[i] += g[i];
        });
    }
    return out;
}

Tensor transpose_last2(Tape& t, const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() < 2) throw ShapeMismatch("transpose_last2: rank < 2");
    int m = s[s.size() - 2], n = s[s.size() - 1];
    int64_t batch = x.numel() / (static_cast<int64_t>(m) * n);
    std::vector<int> os(s);
    std::swap(os[os.size() - 2], os[os.size() - 1]);
    Tensor out = Tensor::zeros(os);
    for (int64_t b = 0; b < batch; ++b) {
        const float* xb = x.data().data() + b * m * n;
        float* ob = out.data().data() + b * m * n;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ob[j * m + i] = xb[i * n + j];
    }
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc, batch, m, n]() mutable {
            const float* g = oc.grad().data();
            float* dx = xc.grad().data();
            for (int64_t b = 0; b < batch; ++b)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) dx[b * m * n + i * n + j] += g[b * m * n + j * m + i];
        });
    }
    return out;
}

namespace {
void axis_split(const std::vector<int>& shape, int axis, int64_t& outer, int& dim, int64_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw ShapeMismatch("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[i];
    dim = shape[axis];
    for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}
}  // namespace

Tensor concat(Tape& t, const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw ShapeMismatch("concat: no inputs");
    std::vector<int> os = xs[0].shape();
    int64_t outer, inner;
    int dim0;
    axis_split(os, axis, outer, dim0, inner);
    int total = 0;
    for (const Tensor& x : xs) {
        std::vector<int> s = x.shape();
        if (s.size() != os.size()) throw ShapeMismatch("concat: rank mismatch");
        for (size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis && s[i] != os[i])
                throw ShapeMismatch("concat: shape mismatch " + shape_str(s));
        total += s[axis];
    }
    os[axis] = total;
    Tensor out = Tensor::zeros(os);
    int off = 0;
    for (const Tensor& x : xs) {
        int dim = x.shape()[axis];
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(x.data().data() + o * dim * inner, dim * inner,
                        out.data().data() + (o * total + off) * inner);
        off += dim;
    }
    bool rec = false;
    for (const Tensor& x : xs)
        if (t.should_record({x})) rec = true;
    if (rec) {
        out.set_requires_grad(true);
        std::vector<Tensor> xc(xs);
        Tensor oc = out;
        t.record(out, [xc, oc, outer, inner, total, axis]() mutable {
            const float* g = oc.grad().data();
            int off = 0;
            for (Tensor& x : xc) {
                int dim = x.shape()[axis];
                if (x.requires_grad()) {
                    float* dx = x.grad().data();
                    for (int64_t o = 0; o < outer; ++o)
                        for (int64_t i = 0; i < dim * inner; ++i)
                            dx[o * dim * inner + i] += g[(o * total + off) * inner + i];
                }
                off += dim;
            }
        });
    }
    return out;
}

Tensor slice(Tape& t, const Tensor& x, int axis, int start, int end) {
    int64_t outer, inner;
    int dim;
    axis_split(x.shape(), axis, outer, dim, inner);
    if (start < 0 || end > dim || start >= end)
        throw ShapeMismatch("slice: bad range [" + std::to_string(start) + "," +
                            std::to_string(end) + ") on extent " + std::to_string(dim));
    std::vector<int> os = x.shape();
    os[axis] = end - start;
    int w = end - start;
    Tensor out = Tensor::zeros(os);
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(x.data().data() + (o * dim + start) * inner, w * inner,
                    out.data().data() + o * w * inner);
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc, outer, inner, dim, start, w]() mutable {
            const float* g = oc.grad().data();
            float* dx = xc.grad().data();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < w * inner; ++i)
                    dx[(o * dim + start) * inner + i] += g[o * w * inner + i];
        });
    }
    return out;
}

namespace {
Tensor reduce_axis(Tape& t, const Tensor& x, int axis, bool mean) {
    int64_t outer, inner;
    int dim;
    axis_split(x.shape(), axis, outer, dim, inner);
    std::vector<int> os;
    for (int i = 0; i < static_cast<int>(x.shape().size()); ++i)
        if (i != axis) os.push_back(x.shape()[i]);
    if (os.empty()) os.push_back(1);
    Tensor out = Tensor::zeros(os);
    float factor = mean ? 1.0f / dim : 1.0f;
    for (int64_t o = 0; o < outer; ++o)
        for (int d = 0; d < dim; ++d)
            for (int64_t i = 0; i < inner; ++i)
                out.data()[o * inner + i] += x.data()[(o * dim + d) * inner + i] * factor;
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc, outer, inner, dim, factor]() mutable {
            const float* g = oc.grad().data();
            float* dx = xc.grad().data();
            for (int64_t o = 0; o < outer; ++o)
                for (int d = 0; d < dim; ++d)
                    for (int64_t i = 0; i < inner; ++i)
                        dx[(o * dim + d) * inner + i] += g[o * inner + i] * factor;
        });
    }
    return out;
}
}  // namespace

Tensor sum_axis(Tape& t, const Tensor& x, int axis) { return reduce_axis(t, x, axis, false); }
Tensor mean_axis(Tape& t, const Tensor& x, int axis) { return reduce_axis(t, x, axis, true); }

Tensor sum_all(Tape& t, const Tensor& x) {
    Tensor out = Tensor::zeros({1});
    double s = 0.0;
    for (float v : x.data()) s += v;
    out.data()[0] = static_cast<float>(s);
    if (t.should_record({x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        t.record(out, [xc, oc]() mutable {
            float g = oc.grad()[0];
            float* dx = xc.grad().data();
            for (int64_t i = 0; i < xc.numel(); ++i) dx[i] += g;
        });
    }
    return out;
}

Tensor cross_entropy_logits(Tape& t, const Tensor& logits, const std::vector<int>& targets) {
    if (logits.shape().size() != 2) throw ShapeMismatch("cross_entropy: logits must be rank 2");
    int n = logits.shape()[0], v = logits.shape()[1];
    if (static_cast<int>(targets.size()) != n)
        throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(n) + " rows");
    Tensor out = Tensor::zeros({n});
    std::vector<float> probs(static_cast<size_t>(n) * v);
    for (int r = 0; r < n; ++r) {
        const float* xr = logits.data().data() + r * v;
        float mx = xr[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
        double s = 0.0;
        for (int j = 0; j < v; ++j) s += std::exp(static_cast<double>(xr[j]) - mx);
        double lse = mx + std::log(s);
        int tgt = targets[r];
        if (tgt < 0 || tgt >= v) throw ShapeMismatch("cross_entropy: target out of range");
        out.data()[r] = static_cast<float>(lse - xr[tgt]);
        for (int j = 0; j < v; ++j)
            probs[r * v + j] = static_cast<float>(std::exp(xr[j] - lse));
    }
    if (t.should_record({logits})) {
        out.set_requires_grad(true);
        Tensor lc = logits, oc = out;
        t.record(out, [lc, oc, probs, targets, n, v]() mutable {
            const float* g = oc.grad().data();
            float* dx = lc.grad().data();
            for (int r = 0; r < n; ++r) {
                for (int j = 0; j < v; ++j) dx[r * v + j] += g[r] * probs[r * v + j];
                dx[r * v + targets[r]] -= g[r];
            }
        });
    }
    return out;
}

Tensor gaussian_reparam(Tape& t, const Tensor& mu, const Tensor& logvar, const Tensor& eps) {
    if (mu.shape() != logvar.shape() || mu.shape() != eps.shape())
        throw ShapeMismatch("gaussian_reparam: shapes differ");
    int64_t n = mu.numel();
    Tensor out = Tensor::zeros(mu.shape());
    for (int64_t i = 0; i < n; ++i)
        out.data()[i] = mu.data()[i] + std::exp(0.5f * logvar.data()[i]) * eps.data()[i];
    if (t.should_record({mu, logvar})) {
        out.set_requires_grad(true);
        Tensor mc = mu, lc = logvar, ec = eps, oc = out;
        t.record(out, [mc, lc, ec, oc, n]() mutable {
            const float* g = oc.grad().data();
            if (mc.requires_grad()) {
                float* dm = mc.grad().data();
                for (int64_t i = 0; i < n; ++i) dm[i] += g[i];
            }
            if (lc.requires_grad()) {
                float* dl = lc.grad().data();
                for (int64_t i = 0; i < n; ++i)
                    dl[i] += g[i] * 0.5f * std::exp(0.5f * lc.data()[i]) * ec.data()[i];
            }
        });
    }
    return out;
}

}  // namespace latentmol
