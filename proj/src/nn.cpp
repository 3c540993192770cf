#include "n3l/nn.hpp"

#include <cmath>
#include <fstream>

#include "n3l/errors.hpp"

namespace n3l::nn {

using nlohmann::json;

Tensor ParamList::add(std::string name, Tensor tensor, bool trainable) {
    if (find(name)) throw ContractViolation("duplicate parameter name '" + name + "'");
    tensor.set_requires_grad(trainable);
    params_.push_back({std::move(name), tensor, trainable});
    return tensor;
}

const Parameter* ParamList::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

std::size_t ParamList::count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.tensor.numel();
    return total;
}

void ParamList::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<std::vector<real>> ParamList::values() const {
    std::vector<std::vector<real>> out;
    for (const auto& p : params_) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

void ParamList::set_values(const std::vector<std::vector<real>>& values) {
    if (values.size() != params_.size()) throw ContractViolation("parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto dst = params_[i].tensor.data();
        if (dst.size() != values[i].size()) throw ContractViolation("parameter size mismatch for " + params_[i].name);
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

Tensor normal_init(Shape shape, real stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (real& x : t.data()) x = static_cast<real>(dist(rng));
    return t;
}

Linear Linear::create(ParamList& params, const std::string& prefix, int in, int out, real stddev, std::mt19937_64& rng) {
    Linear l;
    l.weight = params.add(prefix + ".weight", normal_init({in, out}, stddev, rng));
    l.bias = params.add(prefix + ".bias", Tensor({out}));
    return l;
}

LayerNorm LayerNorm::create(ParamList& params, const std::string& prefix, int dim) {
    LayerNorm ln;
    ln.gamma = params.add(prefix + ".gamma", Tensor({dim}, 1));
    ln.beta = params.add(prefix + ".beta", Tensor({dim}));
    return ln;
}

namespace {

void adam_update(ParamList& params, OptimizerState& state, real weight_decay) {
    auto& items = params.items();
    for (const auto& p : items)
        if (p.trainable && !p.tensor.has_grad()) throw UsageError("parameter '" + p.name + "' has no gradient");
    if (state.m.size() != items.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& p : items) {
            state.m.emplace_back(p.tensor.numel(), real{0});
            state.v.emplace_back(p.tensor.numel(), real{0});
        }
    }
    ++state.t;
    const auto& c = state.config;
    const real bc1 = 1 - std::pow(c.beta1, static_cast<real>(state.t));
    const real bc2 = 1 - std::pow(c.beta2, static_cast<real>(state.t));
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].trainable) continue;
        auto theta = items[i].tensor.data();
        auto grad = items[i].tensor.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const real g = grad[j];
            m[j] = c.beta1 * m[j] + (1 - c.beta1) * g;
            v[j] = c.beta2 * v[j] + (1 - c.beta2) * g * g;
            const real mhat = m[j] / bc1;
            const real vhat = v[j] / bc2;
            theta[j] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + weight_decay * theta[j]);
        }
    }
}

}  // namespace

void adamw_step(ParamList& params, OptimizerState& state) { adam_update(params, state, state.config.weight_decay); }
void adam_step(ParamList& params, OptimizerState& state) { adam_update(params, state, 0); }

real step_decay_lr(real lr0, std::int64_t step, std::int64_t interval, real factor) {
    if (interval <= 0) return lr0;
    return lr0 * std::pow(factor, static_cast<real>(step / interval));
}

real clip_grad_norm(ParamList& params, real max_norm) {
    real sq = 0;
    for (auto& p : params.items())
        if (p.tensor.has_grad())
            for (real g : p.tensor.grad()) sq += g * g;
    const real norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const real f = max_norm / norm;
        for (auto& p : params.items())
            if (p.tensor.has_grad())
                for (real& g : p.tensor.grad()) g *= f;
    }
    return norm;
}

void save_checkpoint(const std::string& path, const ParamList& params, const OptimizerState* optimizer, const json& meta) {
    json j;
    j["format"] = "n3l-checkpoint";
    j["version"] = 1;
    j["meta"] = meta;
    json tensors = json::object();
    for (const auto& p : params.items())
        tensors[p.name] = {{"shape", p.tensor.shape()}, {"data", std::vector<real>(p.tensor.data().begin(), p.tensor.data().end())}};
    j["tensors"] = std::move(tensors);
    if (optimizer) {
        const auto& c = optimizer->config;
        json opt = {{"t", optimizer->t},
                    {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
        json m = json::object(), v = json::object();
        for (std::size_t i = 0; i < optimizer->m.size() && i < params.size(); ++i) {
            m[params.items()[i].name] = optimizer->m[i];
            v[params.items()[i].name] = optimizer->v[i];
        }
        opt["m"] = std::move(m);
        opt["v"] = std::move(v);
        j["optimizer"] = std::move(opt);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump();
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path, 0, "cannot open file");
    try {
        json j = json::parse(in);
        if (!j.is_object() || j.value("format", "") != "n3l-checkpoint") throw LoadError(path, 0, "not an n3l checkpoint");
        if (j.value("version", 0) != 1) throw LoadError(path, 0, "unsupported checkpoint version");
        return j;
    } catch (const json::exception& e) {
        throw LoadError(path, 0, std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace

json read_checkpoint_meta(const std::string& path) { return read_json(path).value("meta", json::object()); }

json load_checkpoint(const std::string& path, ParamList& params, OptimizerState* optimizer) {
    const json j = read_json(path);
    try {
        const json& tensors = j.at("tensors");
        for (auto& p : params.items()) {
            if (!tensors.contains(p.name)) throw LoadError(path, 0, "missing tensor '" + p.name + "'");
            const json& t = tensors.at(p.name);
            if (t.at("shape").get<Shape>() != p.tensor.shape())
                throw LoadError(path, 0, "shape mismatch for '" + p.name + "': checkpoint " +
                                             shape_string(t.at("shape").get<Shape>()) + " vs model " + shape_string(p.tensor.shape()));
            const auto data = t.at("data").get<std::vector<real>>();
            if (data.size() != p.tensor.numel()) throw LoadError(path, 0, "data length mismatch for '" + p.name + "'");
            std::copy(data.begin(), data.end(), p.tensor.data().begin());
        }
        if (optimizer && j.contains("optimizer")) {
            const json& opt = j.at("optimizer");
            optimizer->t = opt.at("t").get<std::int64_t>();
            optimizer->config.lr = opt.at("lr").get<real>();
            optimizer->config.beta1 = opt.at("beta1").get<real>();
            optimizer->config.beta2 = opt.at("beta2").get<real>();
            optimizer->config.eps = opt.at("eps").get<real>();
            optimizer->config.weight_decay = opt.at("weight_decay").get<real>();
            optimizer->m.clear();
            optimizer->v.clear();
            if (opt.at("m").empty()) return j.value("meta", json::object());
            for (const auto& p : params.items()) {
                optimizer->m.push_back(opt.at("m").at(p.name).get<std::vector<real>>());
                optimizer->v.push_back(opt.at("v").at(p.name).get<std::vector<real>>());
                if (optimizer->m.back().size() != p.tensor.numel() || optimizer->v.back().size() != p.tensor.numel())
                    throw LoadError(path, 0, "optimizer moment size mismatch for '" + p.name + "'");
            }
        }
    } catch (const json::exception& e) {
        throw LoadError(path, 0, std::string("malformed checkpoint: ") + e.what());
    }
    return j.value("meta", json::object());
}

}  // namespace n3l::nn
