#include "n3l/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "n3l/errors.hpp"
#include "n3l/kernels.hpp"

namespace n3l::nn {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t product(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw DimensionError("negative dimension in " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

// Grad buffer of a parent, or nullptr when the parent is off the tape.
real* grad_of(const Tensor& t) {
    auto& node = *t.node();
    if (!node.requires_grad) return nullptr;
    node.ensure_grad();
    return node.grad.data();
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, real fill, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
    const std::size_t n = product(shape);
    node_->shape = std::move(shape);
    node_->data.assign(n, fill);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data, bool requires_grad) {
    if (product(shape) != data.size())
        throw DimensionError("data of length " + std::to_string(data.size()) + " does not fit " + shape_string(shape));
    Tensor t;
    t.node_ = std::make_shared<TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

int Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows() on " + shape_string(shape()));
    return node_->shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols() on " + shape_string(shape()));
    return node_->shape[1];
}

real Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on " + shape_string(shape()));
    return node_->data[0];
}

Tensor Tensor::detach() const { return from_data(shape(), node_->data, false); }

Tensor Tensor::make_op(Shape shape, std::vector<real> data, std::vector<Tensor> parents,
                       std::function<void(TensorNode& out)> backward) {
    Tensor out = from_data(std::move(shape), std::move(data), false);
    if (!g_grad_enabled) return out;
    const bool any = std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
    if (!any) return out;
    TensorNode* self = out.node_.get();
    self->requires_grad = true;
    for (auto& p : parents) self->parents.push_back(p.node_);
    self->backward = [self, fn = std::move(backward)] { fn(*self); };
    return out;
}

void Tensor::backward() {
    if (!defined() || numel() != 1) throw UsageError("backward() needs a scalar tensor");
    if (!node_->requires_grad) throw UsageError("backward() on a tensor that is not on the tape");

    // Iterative post-order DFS gives a topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (TensorNode* node : order)
        if (node->backward) node->grad.assign(node->data.size(), real{0});
    node_->ensure_grad();
    node_->grad[0] += 1;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward) (*it)->backward();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    if (a.cols() != b.rows()) mismatch("matmul", a, b);
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<real> out(static_cast<std::size_t>(m) * n);
    kernels::omp::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
    return Tensor::make_op({m, n}, std::move(out), {a, b}, [a, b, m, n, k](TensorNode& o) {
        if (real* ga = grad_of(a)) kernels::omp::gemm_nt(m, k, n, o.grad.data(), b.data().data(), ga);
        if (real* gb = grad_of(b)) kernels::omp::gemm_tn(m, n, k, a.data().data(), o.grad.data(), gb);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) mismatch("add", a, b);
    std::vector<real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& o) {
        if (real* ga = grad_of(a))
            for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
        if (real* gb = grad_of(b))
            for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) mismatch("sub", a, b);
    std::vector<real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& o) {
        if (real* ga = grad_of(a))
            for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
        if (real* gb = grad_of(b))
            for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) mismatch("mul", a, b);
    std::vector<real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& o) {
        if (real* ga = grad_of(a))
            for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * b.data()[i];
        if (real* gb = grad_of(b))
            for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * a.data()[i];
    });
}

Tensor scale(const Tensor& a, real factor) {
    std::vector<real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
    return Tensor::make_op(a.shape(), std::move(out), {a}, [a, factor](TensorNode& o) {
        if (real* ga = grad_of(a))
            for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * factor;
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_rank2("add_bias", x);
    if (bias.rank() != 1 || bias.dim(0) != x.cols()) mismatch("add_bias", x, bias);
    const int m = x.rows(), n = x.cols();
    std::vector<real> out(x.numel());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = x.data()[static_cast<std::size_t>(i) * n + j] + bias.data()[j];
    return Tensor::make_op(x.shape(), std::move(out), {x, bias}, [x, bias, m, n](TensorNode& o) {
        if (real* gx = grad_of(x))
            for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
        if (real* gb = grad_of(bias))
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gb[j] += o.grad[static_cast<std::size_t>(i) * n + j];
    });
}

Tensor sum(const Tensor& a) {
    real total = 0;
    for (real v : a.data()) total += v;
    return Tensor::make_op({}, {total}, {a}, [a](TensorNode& o) {
        if (real* ga = grad_of(a))
            for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += o.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(a), real{1} / static_cast<real>(a.numel()));
}

Tensor relu(const Tensor& a) {
    std::vector<real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0 ? a.data()[i] : real{0};
    return Tensor::make_op(a.shape(), std::move(out), {a}, [a](TensorNode& o) {
        if (real* ga = grad_of(a))
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                if (a.data()[i] > 0) ga[i] += o.grad[i];
    });
}

Tensor gelu(const Tensor& a) {
    constexpr real c = static_cast<real>(0.7978845608028654);  // sqrt(2/pi)
    constexpr real k = static_cast<real>(0.044715);
    std::vector<real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const real x = a.data()[i];
        out[i] = real{0.5} * x * (1 + std::tanh(c * (x + k * x * x * x)));
    }
    return Tensor::make_op(a.shape(), std::move(out), {a}, [a](TensorNode& o) {
        real* ga = grad_of(a);
        if (!ga) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const real x = a.data()[i];
            const real t = std::tanh(c * (x + k * x * x * x));
            const real d = real{0.5} * (1 + t) + real{0.5} * x * (1 - t * t) * c * (1 + 3 * k * x * x);
            ga[i] += o.grad[i] * d;
        }
    });
}

Tensor softmax(const Tensor& a) {
    require_rank2("softmax", a);
    const int m = a.rows(), n = a.cols();
    std::vector<real> out(a.numel());
    for (int i = 0; i < m; ++i) {
        const real* row = a.data().data() + static_cast<std::size_t>(i) * n;
        real* dst = out.data() + static_cast<std::size_t>(i) * n;
        const real mx = *std::max_element(row, row + n);
        real z = 0;
        for (int j = 0; j < n; ++j) z += (dst[j] = std::exp(row[j] - mx));
        for (int j = 0; j < n; ++j) dst[j] /= z;
    }
    return Tensor::make_op(a.shape(), std::move(out), {a}, [a, m, n](TensorNode& o) {
        real* ga = grad_of(a);
        if (!ga) return;
        for (int i = 0; i < m; ++i) {
            const real* p = o.data.data() + static_cast<std::size_t>(i) * n;
            const real* g = o.grad.data() + static_cast<std::size_t>(i) * n;
            real dot = 0;
            for (int j = 0; j < n; ++j) dot += p[j] * g[j];
            for (int j = 0; j < n; ++j) ga[static_cast<std::size_t>(i) * n + j] += p[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    require_rank2("layer_norm", x);
    const int m = x.rows(), n = x.cols();
    if (gamma.rank() != 1 || gamma.dim(0) != n) mismatch("layer_norm", x, gamma);
    if (beta.rank() != 1 || beta.dim(0) != n) mismatch("layer_norm", x, beta);
    std::vector<real> xhat(x.numel());
    std::vector<real> inv_std(static_cast<std::size_t>(m));
    std::vector<real> out(x.numel());
    for (int i = 0; i < m; ++i) {
        const real* row = x.data().data() + static_cast<std::size_t>(i) * n;
        real mu = 0;
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<real>(n);
        real var = 0;
        for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<real>(n);
        const real is = real{1} / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < n; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * n + j;
            xhat[idx] = (row[j] - mu) * is;
            out[idx] = xhat[idx] * gamma.data()[j] + beta.data()[j];
        }
    }
    return Tensor::make_op(x.shape(), std::move(out), {x, gamma, beta},
                           [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& o) {
        real* gx = grad_of(x);
        real* gg = grad_of(gamma);
        real* gb = grad_of(beta);
        for (int i = 0; i < m; ++i) {
            const std::size_t base = static_cast<std::size_t>(i) * n;
            real mean_d = 0, mean_dx = 0;
            for (int j = 0; j < n; ++j) {
                const real dy = o.grad[base + j];
                if (gg) gg[j] += dy * xhat[base + j];
                if (gb) gb[j] += dy;
                const real dxh = dy * gamma.data()[j];
                mean_d += dxh;
                mean_dx += dxh * xhat[base + j];
            }
            if (!gx) continue;
            mean_d /= static_cast<real>(n);
            mean_dx /= static_cast<real>(n);
            for (int j = 0; j < n; ++j) {
                const real dxh = o.grad[base + j] * gamma.data()[j];
                gx[base + j] += inv_std[static_cast<std::size_t>(i)] * (dxh - mean_d - xhat[base + j] * mean_dx);
            }
        }
    });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_rank2("embedding", table);
    const int vocab = table.rows(), d = table.cols();
    std::vector<int> idx(ids.begin(), ids.end());
    std::vector<real> out(idx.size() * static_cast<std::size_t>(d));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= vocab)
            throw std::out_of_range("embedding id " + std::to_string(idx[r]) + " outside [0, " + std::to_string(vocab) + ")");
        std::copy_n(table.data().data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
    }
    const int rows = static_cast<int>(idx.size());
    return Tensor::make_op({rows, d}, std::move(out), {table}, [table, d, idx = std::move(idx)](TensorNode& o) {
        real* gt = grad_of(table);
        if (!gt) return;
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < d; ++j) gt[static_cast<std::size_t>(idx[r]) * d + j] += o.grad[r * d + j];
    });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int seq, int heads) {
    require_rank2("causal_attention", q);
    if (q.shape() != k.shape()) mismatch("causal_attention", q, k);
    if (q.shape() != v.shape()) mismatch("causal_attention", q, v);
    const int d = q.cols();
    if (q.rows() != batch * seq) throw DimensionError("causal_attention: rows " + std::to_string(q.rows()) + " != batch*seq");
    if (heads < 1 || d % heads != 0) throw DimensionError("causal_attention: dim not divisible by heads");
    const int hd = d / heads;
    const real inv = real{1} / std::sqrt(static_cast<real>(hd));
    const std::size_t tt = static_cast<std::size_t>(seq) * seq;
    // probs[(b*heads + h)*seq*seq + t*seq + s], zero for s > t
    std::vector<real> probs(static_cast<std::size_t>(batch) * heads * tt, real{0});
    std::vector<real> out(q.numel(), real{0});
    const real* Q = q.data().data();
    const real* K = k.data().data();
    const real* V = v.data().data();

#pragma omp parallel for collapse(2) schedule(static) if (static_cast<long>(batch) * heads * seq * seq * hd > (1L << 16))
    for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
            real* P = probs.data() + (static_cast<std::size_t>(b) * heads + h) * tt;
            for (int t = 0; t < seq; ++t) {
                const real* qt = Q + (static_cast<std::size_t>(b) * seq + t) * d + h * hd;
                real* prow = P + static_cast<std::size_t>(t) * seq;
                real mx = -std::numeric_limits<real>::infinity();
                for (int s = 0; s <= t; ++s) {
                    const real* ks = K + (static_cast<std::size_t>(b) * seq + s) * d + h * hd;
                    real dot = 0;
                    for (int e = 0; e < hd; ++e) dot += qt[e] * ks[e];
                    prow[s] = dot * inv;
                    mx = std::max(mx, prow[s]);
                }
                real z = 0;
                for (int s = 0; s <= t; ++s) z += (prow[s] = std::exp(prow[s] - mx));
                real* ot = out.data() + (static_cast<std::size_t>(b) * seq + t) * d + h * hd;
                for (int s = 0; s <= t; ++s) {
                    prow[s] /= z;
                    const real* vs = V + (static_cast<std::size_t>(b) * seq + s) * d + h * hd;
                    for (int e = 0; e < hd; ++e) ot[e] += prow[s] * vs[e];
                }
            }
        }
    }

    return Tensor::make_op(q.shape(), std::move(out), {q, k, v},
                           [q, k, v, batch, seq, heads, d, hd, inv, tt, probs = std::move(probs)](TensorNode& o) {
        real* gq = grad_of(q);
        real* gk = grad_of(k);
        real* gv = grad_of(v);
        const real* Q = q.data().data();
        const real* K = k.data().data();
        const real* V = v.data().data();
        std::vector<real> dp(static_cast<std::size_t>(seq));
        // Batches touch disjoint rows, so they can run in parallel.
#pragma omp parallel for schedule(static) firstprivate(dp) if (static_cast<long>(batch) * heads * seq * seq * hd > (1L << 16))
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < heads; ++h) {
                const real* P = probs.data() + (static_cast<std::size_t>(b) * heads + h) * tt;
                for (int t = 0; t < seq; ++t) {
                    const std::size_t trow = (static_cast<std::size_t>(b) * seq + t) * d + h * hd;
                    const real* go = o.grad.data() + trow;
                    const real* prow = P + static_cast<std::size_t>(t) * seq;
                    real dot = 0;
                    for (int s = 0; s <= t; ++s) {
                        const std::size_t srow = (static_cast<std::size_t>(b) * seq + s) * d + h * hd;
                        real acc = 0;
                        for (int e = 0; e < hd; ++e) acc += go[e] * V[srow + e];
                        dp[static_cast<std::size_t>(s)] = acc;
                        dot += prow[s] * acc;
                        if (gv)
                            for (int e = 0; e < hd; ++e) gv[srow + e] += prow[s] * go[e];
                    }
                    for (int s = 0; s <= t; ++s) {
                        const real ds = prow[s] * (dp[static_cast<std::size_t>(s)] - dot) * inv;
                        if (ds == 0) continue;
                        const std::size_t srow = (static_cast<std::size_t>(b) * seq + s) * d + h * hd;
                        if (gq)
                            for (int e = 0; e < hd; ++e) gq[trow + e] += ds * K[srow + e];
                        if (gk)
                            for (int e = 0; e < hd; ++e) gk[srow + e] += ds * Q[trow + e];
                    }
                }
            }
        }
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index) {
    require_rank2("cross_entropy", logits);
    const int m = logits.rows(), vocab = logits.cols();
    if (static_cast<int>(targets.size()) != m)
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + shape_string(logits.shape()));
    std::vector<int> tgt(targets.begin(), targets.end());
    std::vector<real> probs(logits.numel(), real{0});
    real total = 0;
    int counted = 0;
    for (int i = 0; i < m; ++i) {
        const int t = tgt[static_cast<std::size_t>(i)];
        if (t == ignore_index) continue;
        if (t < 0 || t >= vocab)
            throw std::out_of_range("cross_entropy target " + std::to_string(t) + " outside [0, " + std::to_string(vocab) + ")");
        const real* row = logits.data().data() + static_cast<std::size_t>(i) * vocab;
        real* p = probs.data() + static_cast<std::size_t>(i) * vocab;
        const real mx = *std::max_element(row, row + vocab);
        real z = 0;
        for (int j = 0; j < vocab; ++j) z += (p[j] = std::exp(row[j] - mx));
        for (int j = 0; j < vocab; ++j) p[j] /= z;
        total += std::log(z) + mx - row[t];
        ++counted;
    }
    const real loss = counted ? total / static_cast<real>(counted) : real{0};
    return Tensor::make_op({}, {loss}, {logits}, [logits, tgt = std::move(tgt), probs = std::move(probs), vocab, counted, ignore_index](TensorNode& o) {
        real* gl = grad_of(logits);
        if (!gl || counted == 0) return;
        const real g = o.grad[0] / static_cast<real>(counted);
        for (std::size_t i = 0; i < tgt.size(); ++i) {
            if (tgt[i] == ignore_index) continue;
            const std::size_t base = i * static_cast<std::size_t>(vocab);
            for (int j = 0; j < vocab; ++j) gl[base + j] += g * probs[base + j];
            gl[base + static_cast<std::size_t>(tgt[i])] -= g;
        }
    });
}

}  // namespace n3l::nn
