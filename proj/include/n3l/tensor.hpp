#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "n3l/real.hpp"

namespace n3l::nn {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

struct TensorNode {
    Shape shape;
    std::vector<real> data;
    std::vector<real> grad;  // empty until a backward pass reaches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward;  // pushes this->grad into parents' grads

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), real{0});
    }
};

// Dense row-major array with a reverse-mode tape. Copies share storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, real fill = 0, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<real> data, bool requires_grad = false);
    static Tensor scalar(real value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    int rows() const;
    int cols() const;

    std::span<real> data() { return node_->data; }
    std::span<const real> data() const { return node_->data; }
    bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
    std::span<real> grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<const real> grad() const { return node_->grad; }
    real item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad.assign(node_->data.size(), real{0}); }

    // Reverse pass from a scalar. Leaf gradients accumulate across calls;
    // intermediate gradients are recomputed each time. Throws UsageError when
    // the tensor is not scalar or not attached to the tape.
    void backward();

    // New leaf holding a copy of the data, off the tape.
    Tensor detach() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

    // Builds an op result. Parents and the backward closure are kept only when
    // gradient recording is on and some parent requires grad.
    static Tensor make_op(Shape shape, std::vector<real> data, std::vector<Tensor> parents,
                          std::function<void(TensorNode& out)> backward);

private:
    std::shared_ptr<TensorNode> node_;
};

bool grad_enabled();

// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---- ops -------------------------------------------------------------------
// Shape mismatches throw DimensionError naming both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k] x [k,n]
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& a, real factor);
Tensor add_bias(const Tensor& x, const Tensor& bias);     // [m,n] + [n]
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);                             // tanh approximation
Tensor softmax(const Tensor& a);                          // over the last axis of [m,n]
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = 1e-5);
Tensor embedding(const Tensor& table, std::span<const int> ids);  // [V,D] -> [ids,D]

// q, k, v: [batch*seq, dim]; heads split dim evenly. Position t attends to
// positions <= t only.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int seq, int heads);

// Mean of -log softmax(logits)[target] over rows whose target != ignore_index.
// Throws std::out_of_range for other targets outside [0, vocab).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index = -1);

}  // namespace n3l::nn
