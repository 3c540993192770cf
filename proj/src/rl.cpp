#include "n3l/rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "n3l/errors.hpp"
#include "n3l/seed.hpp"

namespace n3l::rl {

using nn::Tensor;
using nlohmann::json;

const char* mask_mode_name(MaskMode mode) { return mode == MaskMode::occupied ? "occupied" : "strict"; }

MaskMode parse_mask_mode(const std::string& name) {
    if (name == "occupied") return MaskMode::occupied;
    if (name == "strict") return MaskMode::strict;
    throw ContractViolation("unknown mask mode '" + name + "'");
}

// ---- environment ---------------------------------------------------------------

Env::Env(int n, MaskMode mode)
    : n_(n), mode_(mode), table_(std::make_shared<const LineTable>(n >= 2 ? n : 2)), tally_(*table_) {
    if (n < 2) throw ContractViolation("environment needs n >= 2");
    reset();
}

void Env::reset() {
    state_ = EnvState{GridConfig(n_), 0, 0, false, false};
    tally_ = LineTally(*table_);
}

int Env::triples_completed(int cell) const {
    if (state_.grid.occupied(cell)) return 0;
    int total = 0;
    for (int line : table_->lines_hit(cell)) {
        const int c = tally_.count(static_cast<std::size_t>(line));
        total += c * (c - 1) / 2;
    }
    return total;
}

std::vector<std::uint8_t> Env::mask() const {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(actions()), 0);
    for (int cell = 0; cell < actions(); ++cell) {
        if (state_.grid.occupied(cell)) continue;
        if (mode_ == MaskMode::strict && !tally_.can_place(cell)) continue;
        m[static_cast<std::size_t>(cell)] = 1;
    }
    return m;
}

void Env::observe(real* out) const {
    for (int cell = 0; cell < actions(); ++cell) out[cell] = state_.grid.occupied(cell) ? real{1} : real{0};
}

StepResult Env::step(int action) {
    if (action < 0 || action >= actions()) throw ContractViolation("action " + std::to_string(action) + " outside the grid");
    if (state_.done) throw UsageError("step() after the episode finished");
    StepResult r;
    if (state_.grid.occupied(action)) {
        r.kind = StepKind::occupied;
        r.reward = reward::occupied;
        return r;
    }
    r.new_triples = triples_completed(action);
    state_.grid.add(from_token(action, n_));
    tally_.place(action);
    ++state_.k;
    if (r.new_triples > 0) {
        state_.violations += r.new_triples;
        r.kind = StepKind::violation;
        r.reward = reward::violation;
    } else {
        r.reward = reward::valid;
    }
    if (state_.k == 2 * n_) {
        r.reward += state_.violations == 0 ? reward::clean_finish : reward::dirty_finish;
        state_.done = true;
    } else if (mode_ == MaskMode::strict) {
        const auto m = mask();
        if (std::none_of(m.begin(), m.end(), [](std::uint8_t x) { return x != 0; })) {
            state_.done = true;
            state_.forced = true;
        }
    }
    r.done = state_.done;
    return r;
}

// ---- GAE -----------------------------------------------------------------------

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, const std::vector<std::uint8_t>& dones,
              double gamma, double lambda) {
    const std::size_t L = rewards.size();
    if (values.size() != L + 1) throw ContractViolation("gae: values must have rewards.size() + 1 entries");
    if (dones.size() != L) throw ContractViolation("gae: dones and rewards differ in length");
    GaeResult out;
    out.advantages.assign(L, 0);
    out.returns.assign(L, 0);
    double next = 0;
    for (std::size_t i = L; i-- > 0;) {
        const double live = dones[i] ? 0.0 : 1.0;
        const double delta = rewards[i] + gamma * values[i + 1] * live - values[i];
        next = delta + gamma * lambda * live * next;
        out.advantages[i] = next;
        out.returns[i] = next + values[i];
    }
    return out;
}

// ---- losses --------------------------------------------------------------------

std::vector<double> masked_log_softmax(const real* logits, const std::uint8_t* mask, int actions) {
    std::vector<double> out(static_cast<std::size_t>(actions), -std::numeric_limits<double>::infinity());
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < actions; ++j)
        if (mask[j]) mx = std::max(mx, static_cast<double>(logits[j]));
    if (!std::isfinite(mx)) throw ContractViolation("every action is masked");
    double z = 0;
    for (int j = 0; j < actions; ++j)
        if (mask[j]) z += std::exp(logits[j] - mx);
    const double lz = std::log(z) + mx;
    for (int j = 0; j < actions; ++j)
        if (mask[j]) out[static_cast<std::size_t>(j)] = logits[j] - lz;
    return out;
}

double masked_entropy(const std::vector<double>& log_probs) {
    double h = 0;
    for (double lp : log_probs)
        if (std::isfinite(lp)) h -= std::exp(lp) * lp;
    return h;
}

PpoLosses ppo_losses(const Tensor& logits, const Tensor& values, const PpoLossInput& in, const PpoLossConfig& cfg) {
    const int B = logits.rows(), A = logits.cols();
    if (values.rank() != 2 || values.rows() != B || values.cols() != 1)
        throw DimensionError("ppo_losses: values " + nn::shape_string(values.shape()) + " vs logits " + nn::shape_string(logits.shape()));
    const auto b = static_cast<std::size_t>(B);
    if (in.actions.size() != b || in.old_log_probs.size() != b || in.advantages.size() != b || in.returns.size() != b ||
        in.masks.size() != b * static_cast<std::size_t>(A))
        throw ContractViolation("ppo_losses: batch arrays disagree with logits");

    PpoLosses out;
    std::vector<real> dlogits(logits.numel(), real{0});
    std::vector<real> dvalues(b, real{0});
    double clip_sum = 0, vf_sum = 0, ent_sum = 0, kl_sum = 0;
    int clipped = 0;
    for (int i = 0; i < B; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * A;
        const auto lp = masked_log_softmax(logits.data().data() + row, in.masks.data() + row, A);
        const int a = in.actions[static_cast<std::size_t>(i)];
        if (a < 0 || a >= A || !in.masks[row + static_cast<std::size_t>(a)]) throw ContractViolation("ppo_losses: action is masked");
        const double logp = lp[static_cast<std::size_t>(a)];
        const double ratio = std::exp(logp - in.old_log_probs[static_cast<std::size_t>(i)]);
        const double adv = in.advantages[static_cast<std::size_t>(i)];
        const double unclipped = ratio * adv;
        const double clipped_ratio = std::clamp(ratio, 1 - cfg.clip, 1 + cfg.clip);
        const double surrogate = std::min(unclipped, clipped_ratio * adv);
        const double dlogp = unclipped <= clipped_ratio * adv ? ratio * adv : 0.0;
        if (std::abs(ratio - 1) > cfg.clip) ++clipped;
        const double h = masked_entropy(lp);
        clip_sum += surrogate;
        ent_sum += h;
        kl_sum += in.old_log_probs[static_cast<std::size_t>(i)] - logp;
        for (int j = 0; j < A; ++j) {
            const double l = lp[static_cast<std::size_t>(j)];
            if (!std::isfinite(l)) continue;
            const double p = std::exp(l);
            const double d_surr = dlogp * ((j == a ? 1.0 : 0.0) - p);
            const double d_ent = -p * (l + h);
            dlogits[row + static_cast<std::size_t>(j)] = static_cast<real>((-d_surr - cfg.entropy_coef * d_ent) / B);
        }
        const double err = values.data()[static_cast<std::size_t>(i)] - in.returns[static_cast<std::size_t>(i)];
        vf_sum += err * err;
        dvalues[static_cast<std::size_t>(i)] = static_cast<real>(cfg.value_coef * 2 * err / B);
    }
    out.clip_objective = clip_sum / B;
    out.value_loss = vf_sum / B;
    out.entropy = ent_sum / B;
    out.approx_kl = kl_sum / B;
    out.clip_fraction = static_cast<double>(clipped) / B;
    const double total = -out.clip_objective + cfg.value_coef * out.value_loss - cfg.entropy_coef * out.entropy;
    out.total = Tensor::make_op({}, {static_cast<real>(total)}, {logits, values},
                                [logits, values, dlogits = std::move(dlogits), dvalues = std::move(dvalues)](nn::TensorNode& o) {
        const real g = o.grad[0];
        if (logits.requires_grad()) {
            auto& gl = logits.node()->grad;
            logits.node()->ensure_grad();
            for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g * dlogits[i];
        }
        if (values.requires_grad()) {
            auto& gv = values.node()->grad;
            values.node()->ensure_grad();
            for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g * dvalues[i];
        }
    });
    return out;
}

// ---- actor-critic ----------------------------------------------------------------

ActorCritic::ActorCritic(int n, const std::vector<int>& hidden, std::uint64_t seed) : n_(n), hidden_(hidden) {
    if (n < 2) throw ContractViolation("policy needs n >= 2");
    if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](int h) { return h < 1; }))
        throw ContractViolation("hidden sizes must be positive");
    std::mt19937_64 rng(seed);
    const int A = n * n;
    auto build = [&](std::vector<nn::Linear>& layers, const std::string& prefix, int out, real head_std) {
        int in = A;
        for (std::size_t l = 0; l < hidden.size(); ++l) {
            layers.push_back(nn::Linear::create(params_, prefix + "." + std::to_string(l), in, hidden[l],
                                                static_cast<real>(std::sqrt(2.0 / in)), rng));
            in = hidden[l];
        }
        layers.push_back(nn::Linear::create(params_, prefix + ".out", in, out, head_std, rng));
    };
    // Small policy head keeps the initial policy near uniform.
    build(pi_, "pi", A, real{0.01});
    build(vf_, "vf", 1, real{1} / static_cast<real>(std::sqrt(static_cast<double>(hidden.back()))));
}

std::pair<Tensor, Tensor> ActorCritic::forward(const Tensor& obs) const {
    auto run = [&obs](const std::vector<nn::Linear>& layers) {
        Tensor x = obs;
        for (std::size_t l = 0; l + 1 < layers.size(); ++l) x = nn::relu(layers[l](x));
        return layers.back()(x);
    };
    return {run(pi_), run(vf_)};
}

int ActorCritic::greedy_action(const Env& env) const {
    nn::NoGradGuard no_grad;
    Tensor obs({1, env.actions()});
    env.observe(obs.data().data());
    const Tensor logits = forward(obs).first;
    const auto mask = env.mask();
    int best = -1;
    for (int j = 0; j < env.actions(); ++j)
        if (mask[static_cast<std::size_t>(j)] && (best < 0 || logits.data()[static_cast<std::size_t>(j)] > logits.data()[static_cast<std::size_t>(best)]))
            best = j;
    if (best < 0) throw UsageError("no selectable action");
    return best;
}

void save_policy(const std::string& path, const ActorCritic& policy, const json& meta) {
    json m = meta;
    m["policy"] = {{"n", policy.n()}, {"hidden", policy.hidden()}};
    nn::save_checkpoint(path, policy.params(), nullptr, m);
}

ActorCritic load_policy(const std::string& path, int expect_n) {
    const json meta = nn::read_checkpoint_meta(path);
    if (!meta.contains("policy")) throw LoadError(path, 0, "checkpoint holds no policy");
    int n = 0;
    std::vector<int> hidden;
    try {
        n = meta.at("policy").at("n").get<int>();
        hidden = meta.at("policy").at("hidden").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw LoadError(path, 0, std::string("bad policy header: ") + e.what());
    }
    if (expect_n > 0 && n != expect_n)
        throw LoadError(path, 0, "policy trained for n=" + std::to_string(n) + ", requested n=" + std::to_string(expect_n));
    ActorCritic policy(n, hidden, 0);
    nn::load_checkpoint(path, policy.params(), nullptr);
    return policy;
}

// ---- evaluation ------------------------------------------------------------------

Policy greedy_policy(const ActorCritic& model) {
    return [&model](const Env& env, std::mt19937_64&) { return model.greedy_action(env); };
}

Policy uniform_policy() {
    return [](const Env& env, std::mt19937_64& rng) {
        const auto mask = env.mask();
        std::vector<int> allowed;
        for (int j = 0; j < env.actions(); ++j)
            if (mask[static_cast<std::size_t>(j)]) allowed.push_back(j);
        if (allowed.empty()) throw UsageError("no selectable action");
        return allowed[std::uniform_int_distribution<std::size_t>(0, allowed.size() - 1)(rng)];
    };
}

Policy scripted_policy(std::vector<int> cells) {
    return [cells = std::move(cells)](const Env& env, std::mt19937_64&) {
        for (int c : cells)
            if (!env.state().grid.occupied(c)) return c;
        for (int c = 0; c < env.actions(); ++c)
            if (!env.state().grid.occupied(c)) return c;
        return 0;
    };
}

json EvalMetrics::to_json() const {
    return {{"episodes", episodes},         {"success_rate", success_rate}, {"mean_points", mean_points},
            {"mean_violations", mean_violations}, {"mean_return", mean_return},   {"composite", composite}};
}

EvalMetrics evaluate(const Policy& policy, int n, MaskMode mode, int episodes, std::uint64_t seed) {
    EvalMetrics m;
    m.episodes = episodes;
    if (episodes <= 0) return m;
    Env env(n, mode);
    const int max_steps = 4 * n * n;
    for (int e = 0; e < episodes; ++e) {
        env.reset();
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
        double ret = 0;
        for (int s = 0; s < max_steps && !env.state().done; ++s) ret += env.step(policy(env, rng)).reward;
        const auto& st = env.state();
        const bool success = st.done && st.k == 2 * n && st.violations == 0;
        m.success_rate += success;
        m.mean_points += st.k;
        m.mean_violations += st.violations;
        m.mean_return += ret;
        m.composite += st.k - 5.0 * st.violations + 20.0 * success;
    }
    for (double* x : {&m.success_rate, &m.mean_points, &m.mean_violations, &m.mean_return, &m.composite}) *x /= episodes;
    return m;
}

// ---- config ------------------------------------------------------------------------

PpoConfig PpoConfig::desk(int n) {
    PpoConfig c;
    c.n = n;
    return c;
}

void PpoConfig::validate() const {
    if (n < 2) throw ContractViolation("n must be at least 2");
    if (envs < 1 || rollout < 1 || minibatch < 1 || epochs < 1 || total_steps < 1 || eval_episodes < 0)
        throw ContractViolation("PPO counts must be positive");
    if (!(clip > 0 && clip < 1)) throw ContractViolation("clip must lie in (0, 1)");
    if (!(gamma > 0 && gamma <= 1) || !(lambda > 0 && lambda <= 1)) throw ContractViolation("gamma and lambda must lie in (0, 1]");
    if (!(lr > 0)) throw ContractViolation("lr must be positive");
    if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](int h) { return h < 1; }))
        throw ContractViolation("hidden sizes must be positive");
}

json PpoConfig::to_json() const {
    return {{"n", n},
            {"mask_mode", mask_mode_name(mask_mode)},
            {"envs", envs},
            {"rollout", rollout},
            {"minibatch", minibatch},
            {"epochs", epochs},
            {"total_steps", total_steps},
            {"hidden", hidden},
            {"lr", lr},
            {"lr_decay_interval", lr_decay_interval},
            {"lr_decay_factor", lr_decay_factor},
            {"gamma", gamma},
            {"lambda", lambda},
            {"clip", clip},
            {"value_coef", value_coef},
            {"entropy_coef", entropy_coef},
            {"max_grad_norm", max_grad_norm},
            {"normalize_advantages", normalize_advantages},
            {"eval_interval", eval_interval},
            {"eval_episodes", eval_episodes},
            {"seed", seed}};
}

PpoConfig PpoConfig::from_json(const json& j) {
    try {
        PpoConfig c = desk(j.at("n").get<int>());
        c.mask_mode = parse_mask_mode(j.value("mask_mode", std::string(mask_mode_name(c.mask_mode))));
        c.envs = j.value("envs", c.envs);
        c.rollout = j.value("rollout", c.rollout);
        c.minibatch = j.value("minibatch", c.minibatch);
        c.epochs = j.value("epochs", c.epochs);
        c.total_steps = j.value("total_steps", c.total_steps);
        c.hidden = j.value("hidden", c.hidden);
        c.lr = j.value("lr", c.lr);
        c.lr_decay_interval = j.value("lr_decay_interval", c.lr_decay_interval);
        c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
        c.gamma = j.value("gamma", c.gamma);
        c.lambda = j.value("lambda", c.lambda);
        c.clip = j.value("clip", c.clip);
        c.value_coef = j.value("value_coef", c.value_coef);
        c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
        c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
        c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
        c.eval_interval = j.value("eval_interval", c.eval_interval);
        c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ContractViolation(std::string("bad PPO config: ") + e.what());
    }
}

void write_update_log(std::ostream& out, const std::vector<UpdateLogRow>& rows) {
    out << "update,mean_return,success_rate,avg_violations,entropy,lr\n";
    for (const auto& r : rows)
        out << r.update << ',' << r.mean_return << ',' << r.success_rate << ',' << r.avg_violations << ',' << r.entropy << ','
            << r.lr << '\n';
}

// ---- training ------------------------------------------------------------------------

namespace {

enum : std::uint64_t { kPolicySeed = 1, kEnvSeed = 2, kShuffleSeed = 3, kEvalSeed = 4 };

struct Episode {
    double ret = 0;
    bool success = false;
    int violations = 0;
};

}  // namespace

PpoResult train_ppo(const PpoConfig& cfg) {
    cfg.validate();
    const int A = cfg.n * cfg.n;
    const int E = cfg.envs, L = cfg.rollout;
    const std::size_t B = static_cast<std::size_t>(E) * L;

    ActorCritic model(cfg.n, cfg.hidden, mix_seed(cfg.seed, kPolicySeed));
    nn::OptimizerState opt;
    opt.config.beta1 = 0.9;
    opt.config.beta2 = 0.999;
    opt.config.eps = 1e-8;

    std::vector<Env> envs;
    std::vector<std::mt19937_64> rngs;
    std::vector<double> running_return(static_cast<std::size_t>(E), 0);
    for (int e = 0; e < E; ++e) {
        envs.emplace_back(cfg.n, cfg.mask_mode);
        rngs.emplace_back(mix_seed(cfg.seed, kEnvSeed, static_cast<std::uint64_t>(e)));
    }

    // Rollout storage, indexed [t * E + e].
    std::vector<real> obs(B * A);
    std::vector<std::uint8_t> masks(B * A);
    std::vector<int> actions(B);
    std::vector<double> logps(B), values(B), rewards(B), entropies(B);
    std::vector<std::uint8_t> dones(B);

    PpoResult result{ActorCritic(cfg.n, cfg.hidden, 0), ActorCritic(cfg.n, cfg.hidden, 0), {}, 0, {}, {}, false};
    std::vector<std::vector<real>> best_values = model.params().values();
    double best_composite = -std::numeric_limits<double>::infinity();

    const std::int64_t updates = std::max<std::int64_t>(1, cfg.total_steps / static_cast<std::int64_t>(B));
    std::int64_t env_steps = 0;
    const PpoLossConfig loss_cfg{cfg.clip, cfg.value_coef, cfg.entropy_coef};

    for (std::int64_t u = 1; u <= updates; ++u) {
        const double lr = nn::step_decay_lr(cfg.lr, env_steps, cfg.lr_decay_interval, cfg.lr_decay_factor);
        opt.config.lr = static_cast<real>(lr);
        std::vector<Episode> finished;

        // ---- rollout ----
        for (int t = 0; t < L; ++t) {
            const std::size_t base = static_cast<std::size_t>(t) * E;
            Tensor batch_obs({E, A});
            for (int e = 0; e < E; ++e) {
                envs[static_cast<std::size_t>(e)].observe(batch_obs.data().data() + static_cast<std::size_t>(e) * A);
                const auto m = envs[static_cast<std::size_t>(e)].mask();
                std::copy(m.begin(), m.end(), masks.begin() + static_cast<std::ptrdiff_t>((base + e) * A));
            }
            std::copy(batch_obs.data().begin(), batch_obs.data().end(), obs.begin() + static_cast<std::ptrdiff_t>(base * A));
            Tensor logits, vals;
            {
                nn::NoGradGuard no_grad;
                std::tie(logits, vals) = model.forward(batch_obs);
            }
            for (int e = 0; e < E; ++e) {
                const std::size_t i = base + static_cast<std::size_t>(e);
                const auto lp = masked_log_softmax(logits.data().data() + static_cast<std::size_t>(e) * A, masks.data() + i * A, A);
                std::vector<double> probs(lp.size());
                for (std::size_t j = 0; j < lp.size(); ++j) probs[j] = std::isfinite(lp[j]) ? std::exp(lp[j]) : 0.0;
                const int a = std::discrete_distribution<int>(probs.begin(), probs.end())(rngs[static_cast<std::size_t>(e)]);
                Env& env = envs[static_cast<std::size_t>(e)];
                if (env.state().grid.occupied(a)) result.occupied_action_seen = true;
                const StepResult sr = env.step(a);
                actions[i] = a;
                logps[i] = lp[static_cast<std::size_t>(a)];
                values[i] = vals.data()[static_cast<std::size_t>(e)];
                entropies[i] = masked_entropy(lp);
                rewards[i] = sr.reward;
                dones[i] = sr.done;
                running_return[static_cast<std::size_t>(e)] += sr.reward;
                if (sr.done) {
                    const auto& st = env.state();
                    finished.push_back({running_return[static_cast<std::size_t>(e)], st.k == 2 * cfg.n && st.violations == 0, st.violations});
                    running_return[static_cast<std::size_t>(e)] = 0;
                    env.reset();
                }
            }
        }
        env_steps += static_cast<std::int64_t>(B);

        // ---- advantages ----
        std::vector<double> bootstrap(static_cast<std::size_t>(E));
        {
            nn::NoGradGuard no_grad;
            Tensor batch_obs({E, A});
            for (int e = 0; e < E; ++e) envs[static_cast<std::size_t>(e)].observe(batch_obs.data().data() + static_cast<std::size_t>(e) * A);
            const Tensor v = model.forward(batch_obs).second;
            for (int e = 0; e < E; ++e) bootstrap[static_cast<std::size_t>(e)] = v.data()[static_cast<std::size_t>(e)];
        }
        std::vector<double> advantages(B), returns(B);
        for (int e = 0; e < E; ++e) {
            std::vector<double> r(static_cast<std::size_t>(L)), v(static_cast<std::size_t>(L) + 1);
            std::vector<std::uint8_t> d(static_cast<std::size_t>(L));
            for (int t = 0; t < L; ++t) {
                const std::size_t i = static_cast<std::size_t>(t) * E + e;
                r[static_cast<std::size_t>(t)] = rewards[i];
                v[static_cast<std::size_t>(t)] = values[i];
                d[static_cast<std::size_t>(t)] = dones[i];
            }
            v.back() = bootstrap[static_cast<std::size_t>(e)];
            const GaeResult g = gae(r, v, d, cfg.gamma, cfg.lambda);
            for (int t = 0; t < L; ++t) {
                const std::size_t i = static_cast<std::size_t>(t) * E + e;
                advantages[i] = g.advantages[static_cast<std::size_t>(t)];
                returns[i] = g.returns[static_cast<std::size_t>(t)];
            }
        }

        // ---- updates ----
        std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, kShuffleSeed, static_cast<std::uint64_t>(u)));
        std::vector<std::size_t> order(B);
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            for (std::size_t start = 0; start < B; start += static_cast<std::size_t>(cfg.minibatch)) {
                const std::size_t end = std::min(B, start + static_cast<std::size_t>(cfg.minibatch));
                const int mb = static_cast<int>(end - start);
                Tensor mb_obs({mb, A});
                PpoLossInput in;
                in.masks.resize(static_cast<std::size_t>(mb) * A);
                for (int k = 0; k < mb; ++k) {
                    const std::size_t i = order[start + static_cast<std::size_t>(k)];
                    std::copy_n(obs.begin() + static_cast<std::ptrdiff_t>(i * A), A, mb_obs.data().begin() + static_cast<std::ptrdiff_t>(k) * A);
                    std::copy_n(masks.begin() + static_cast<std::ptrdiff_t>(i * A), A, in.masks.begin() + static_cast<std::ptrdiff_t>(k) * A);
                    in.actions.push_back(actions[i]);
                    in.old_log_probs.push_back(logps[i]);
                    in.advantages.push_back(advantages[i]);
                    in.returns.push_back(returns[i]);
                }
                if (cfg.normalize_advantages && mb > 1) {
                    const double mean = std::accumulate(in.advantages.begin(), in.advantages.end(), 0.0) / mb;
                    double var = 0;
                    for (double a : in.advantages) var += (a - mean) * (a - mean);
                    const double sd = std::sqrt(var / (mb - 1));
                    for (double& a : in.advantages) a = (a - mean) / (sd + 1e-8);
                }
                model.params().zero_grad();
                auto [logits, vals] = model.forward(mb_obs);
                PpoLosses losses = ppo_losses(logits, vals, in, loss_cfg);
                losses.total.backward();
                nn::clip_grad_norm(model.params(), static_cast<real>(cfg.max_grad_norm));
                nn::adam_step(model.params(), opt);
            }
        }

        UpdateLogRow row;
        row.update = static_cast<int>(u);
        row.env_steps = env_steps;
        row.lr = lr;
        row.episodes = static_cast<int>(finished.size());
        row.entropy = std::accumulate(entropies.begin(), entropies.end(), 0.0) / static_cast<double>(B);
        for (const auto& ep : finished) {
            row.mean_return += ep.ret;
            row.success_rate += ep.success;
            row.avg_violations += ep.violations;
        }
        if (!finished.empty())
            for (double* x : {&row.mean_return, &row.success_rate, &row.avg_violations}) *x /= static_cast<double>(finished.size());
        result.log.push_back(row);

        if ((cfg.eval_interval > 0 && u % cfg.eval_interval == 0) || u == updates) {
            const EvalMetrics m = evaluate(greedy_policy(model), cfg.n, cfg.mask_mode, cfg.eval_episodes, mix_seed(cfg.seed, kEvalSeed));
            result.evals.emplace_back(static_cast<int>(u), m);
            if (m.composite > best_composite) {
                best_composite = m.composite;
                best_values = model.params().values();
                result.best_eval = m;
                result.best_update = static_cast<int>(u);
            }
        }
    }
    result.best.params().set_values(best_values);
    result.final_policy.params().set_values(model.params().values());
    return result;
}

}  // namespace n3l::rl
