#pragma once

// Minimal dense float32 tensors with a reverse-mode gradient tape.
// Row-major layout, rank <= 3 in practice, broadcasting only over
// leading axes.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentmol {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct NotScalar : std::runtime_error {
    explicit NotScalar(const std::string& m) : std::runtime_error(m) {}
};
struct TapeConsumed : std::runtime_error {
    explicit TapeConsumed(const std::string& m) : std::runtime_error(m) {}
};
struct MissingGradient : std::runtime_error {
    explicit MissingGradient(const std::string& m) : std::runtime_error(m) {}
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<float> data,
                       bool requires_grad = false);
    static Tensor scalar(float v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
    std::vector<float>& data() { return node_->value; }
    const std::vector<float>& data() const { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }

    // Gradient buffer, allocated (zeroed) on first access.
    std::vector<float>& grad();
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    void zero_grad();
    float item() const;

    bool same_node(const Tensor& o) const { return node_ == o.node_; }

private:
    struct Node {
        std::vector<int> shape;
        std::vector<float> value;
        std::vector<float> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Node> node_;
    friend class Tape;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

class Tape {
public:
    // When disabled, no records are kept and outputs do not require grad.
    bool enabled = true;

    void record(Tensor out, std::function<void()> backward);
    bool should_record(std::initializer_list<Tensor> inputs) const;

    // Populates gradients of every requires-grad node reachable from loss.
    // A tape may be consumed exactly once.
    void backward(const Tensor& loss);
    void reset();
    size_t size() const { return records_.size(); }

private:
    struct Record {
        Tensor out;
        std::function<void()> back;
    };
    std::vector<Record> records_;
    bool consumed_ = false;
};

// --- primitives -----------------------------------------------------------

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, const Tensor& b);   // b broadcast over leading axes
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);   // same broadcast rule
Tensor relu(Tape& t, const Tensor& x);
Tensor tanh_op(Tape& t, const Tensor& x);
Tensor exp_op(Tape& t, const Tensor& x);
Tensor log_op(Tape& t, const Tensor& x);
Tensor clamp(Tape& t, const Tensor& x, float lo, float hi);
Tensor scale(Tape& t, const Tensor& x, float c);
Tensor softmax_lastdim(Tape& t, const Tensor& x);
Tensor layernorm_lastdim(Tape& t, const Tensor& x, float eps = 1e-5f);
Tensor embedding(Tape& t, const Tensor& table, const std::vector<int>& ids);
Tensor reshape(Tape& t, const Tensor& x, std::vector<int> shape);
Tensor transpose_last2(Tape& t, const Tensor& x);
Tensor concat(Tape& t, const std::vector<Tensor>& xs, int axis);
Tensor slice(Tape& t, const Tensor& x, int axis, int start, int end);
Tensor sum_axis(Tape& t, const Tensor& x, int axis);
Tensor mean_axis(Tape& t, const Tensor& x, int axis);
Tensor sum_all(Tape& t, const Tensor& x);
// Per-row negative log-likelihood of integer targets under softmax(logits).
Tensor cross_entropy_logits(Tape& t, const Tensor& logits, const std::vector<int>& targets);
// z = mu + exp(0.5*logvar) * eps; eps is treated as a constant.
Tensor gaussian_reparam(Tape& t, const Tensor& mu, const Tensor& logvar, const Tensor& eps);

}  // namespace latentmol
