#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "n3l/tensor.hpp"

namespace n3l::nn {

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

// Ordered, uniquely named parameter set of one model.
class ParamList {
public:
    // Throws ContractViolation on duplicate names.
    Tensor add(std::string name, Tensor tensor, bool trainable = true);
    const Parameter* find(const std::string& name) const;

    std::vector<Parameter>& items() { return params_; }
    const std::vector<Parameter>& items() const { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t count() const;  // scalars across all parameters

    void zero_grad();
    // Deep copy of the values (for best-checkpoint snapshots).
    std::vector<std::vector<real>> values() const;
    void set_values(const std::vector<std::vector<real>>& values);

private:
    std::vector<Parameter> params_;
};

Tensor normal_init(Shape shape, real stddev, std::mt19937_64& rng);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear create(ParamList& params, const std::string& prefix, int in, int out, real stddev, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    static LayerNorm create(ParamList& params, const std::string& prefix, int dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

struct AdamConfig {
    real lr = 1e-3;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
    real weight_decay = 0;
};

struct OptimizerState {
    AdamConfig config;
    std::int64_t t = 0;
    std::vector<std::vector<real>> m;
    std::vector<std::vector<real>> v;
};

// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
// adam_step ignores weight_decay. Both throw UsageError when a trainable
// parameter has no gradient.
void adamw_step(ParamList& params, OptimizerState& state);
void adam_step(ParamList& params, OptimizerState& state);

// lr0 * factor^floor(step / interval)
real step_decay_lr(real lr0, std::int64_t step, std::int64_t interval, real factor = 0.8);

// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
real clip_grad_norm(ParamList& params, real max_norm);

// JSON checkpoint: {"format": "n3l-checkpoint", "version": 1, "meta": {...},
// "tensors": {name: {"shape": [...], "data": [...]}}, "optimizer": {...}}.
void save_checkpoint(const std::string& path, const ParamList& params, const OptimizerState* optimizer,
                     const nlohmann::json& meta);
// Throws LoadError on I/O problems, missing tensors or shape mismatches.
nlohmann::json load_checkpoint(const std::string& path, ParamList& params, OptimizerState* optimizer);
nlohmann::json read_checkpoint_meta(const std::string& path);

}  // namespace n3l::nn
