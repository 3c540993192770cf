#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "n3l/errors.hpp"
#include "n3l/rl.hpp"
#include "test_support.hpp"

using namespace n3l;
using namespace n3l::rl;

namespace {

// Independent reward oracle: recomputes violations from scratch with the
// determinant test.
double oracle_reward(const GridConfig& before, int action, int n, int violations_before, int& violations_after, bool& done) {
    done = false;
    const Point p = from_token(action, n);
    if (before.occupied(p)) {
        violations_after = violations_before;
        return -1.0;
    }
    GridConfig after = before;
    after.add(p);
    const auto created = violation_count(after) - violation_count(before);
    violations_after = violations_before + static_cast<int>(created);
    double r = created > 0 ? -10.0 : 1.0;
    if (static_cast<int>(after.size()) == 2 * n) {
        r += violations_after == 0 ? 100.0 : 10.0;
        done = true;
    }
    return r;
}

}  // namespace

TEST_CASE("reward cases") {
    Env env(5, MaskMode::occupied);
    CHECK(env.step(7).reward == 1.0);
    CHECK(env.state().k == 1);

    auto r = env.step(7);
    CHECK(r.reward == -1.0);
    CHECK(r.kind == StepKind::occupied);
    CHECK(env.state().k == 1);

    env.reset();
    env.step(0);
    env.step(1);
    r = env.step(2);  // third point on row 0
    CHECK(r.reward == -10.0);
    CHECK(r.kind == StepKind::violation);
    CHECK(env.state().k == 3);
    CHECK(env.state().violations == 1);
    CHECK(env.state().grid.occupied(2));

    CHECK_THROWS_AS(env.step(25), ContractViolation);
    CHECK_THROWS_AS(env.step(-1), ContractViolation);
    CHECK_THROWS_AS(Env(1, MaskMode::occupied), ContractViolation);
}

TEST_CASE("terminal bonus lands on the final placement") {
    const auto opt = n3l::testing::known_optimum_5();
    Env env(5, MaskMode::occupied);
    double total = 0;
    StepResult last;
    for (auto p : opt.points()) total += (last = env.step(to_token(p, 5))).reward;
    CHECK(last.done);
    CHECK(last.reward == 101.0);
    CHECK(total == 110.0);
    CHECK_THROWS_AS(env.step(0), UsageError);

    // A dirty finish gets +10.
    Env dirty(2, MaskMode::occupied);
    dirty.step(0);
    dirty.step(1);
    dirty.step(2);
    auto r = dirty.step(3);
    CHECK(r.done);
    CHECK(r.reward == 1.0 + 100.0);  // 4 points on 2x2 never make a triple
    Env row3(3, MaskMode::occupied);
    for (int c : {0, 1, 2, 4, 5}) row3.step(c);
    CHECK(row3.state().violations == 1);
    r = row3.step(7);  // (2,1): makes column 1 full
    CHECK(r.done);
    CHECK(r.reward == -10.0 + 10.0);
}

TEST_CASE("random replay matches the five-case reward oracle") {
    for (int n : {3, 5}) {
        std::mt19937_64 rng(n);
        Env env(n, MaskMode::occupied);
        GridConfig shadow(n);
        int violations = 0;
        for (int step = 0; step < 10000; ++step) {
            const int a = std::uniform_int_distribution<int>(0, n * n - 1)(rng);
            int v_after = 0;
            bool done = false;
            const double expected = oracle_reward(shadow, a, n, violations, v_after, done);
            const auto r = env.step(a);
            REQUIRE(r.reward == expected);
            REQUIRE(r.done == done);
            if (!shadow.occupied(from_token(a, n))) shadow.add(from_token(a, n));
            violations = v_after;
            REQUIRE(env.state().violations == violations);
            REQUIRE(env.state().done == (env.state().k == 2 * n));
            REQUIRE(env.state().k == static_cast<int>(shadow.size()));
            if (env.state().done) {
                env.reset();
                shadow = GridConfig(n);
                violations = 0;
            }
        }
    }
}

TEST_CASE("action masks") {
    Env env(4, MaskMode::occupied);
    auto m = env.mask();
    CHECK(std::count(m.begin(), m.end(), 1) == 16);
    env.step(5);
    m = env.mask();
    CHECK(std::count(m.begin(), m.end(), 1) == 15);
    CHECK(m[5] == 0);

    Env strict(3, MaskMode::strict);
    strict.step(0);
    strict.step(1);
    m = strict.mask();
    CHECK(m[2] == 0);
    CHECK(std::count(m.begin(), m.end(), 1) == 6);

    // Centre first on 3x3 caps the grid at 5 points, so strict mode dead-ends.
    Env dead(3, MaskMode::strict);
    for (int c : {4, 0, 1, 5}) REQUIRE_FALSE(dead.step(c).done);
    auto r = dead.step(6);
    CHECK(r.done);
    CHECK(dead.state().forced);
    CHECK(dead.state().k == 5);
    CHECK(r.reward == 1.0);
    m = dead.mask();
    CHECK(std::count(m.begin(), m.end(), 1) == 0);
}

TEST_CASE("gae identities") {
    auto one = gae({1.0}, {0.0, 0.0}, {1}, 0.99, 0.95);
    CHECK(one.advantages[0] == 1.0);
    CHECK(one.returns[0] == 1.0);

    auto zero = gae({0, 0, 0}, {0, 0, 0, 0}, {0, 0, 1}, 0.99, 0.95);
    for (double a : zero.advantages) CHECK(a == 0);

    // Scalar hand recursion, gamma = lambda = 1, terminal at the end.
    auto two = gae({0, 1}, {0.5, 0.5, 7.0}, {0, 1}, 1, 1);
    const double d1 = 1 - 0.5;              // bootstrap masked by done
    const double d0 = 0 + 0.5 - 0.5;
    CHECK(two.advantages[1] == d1);
    CHECK(two.advantages[0] == d0 + d1);

    // lambda = gamma = 1 reduces to Monte-Carlo return minus value, across episode boundaries.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    std::vector<double> r(12), v(13);
    std::vector<std::uint8_t> d(12, 0);
    for (auto& x : r) x = u(rng);
    for (auto& x : v) x = u(rng);
    d[4] = d[11] = 1;
    auto mc = gae(r, v, d, 1, 1);
    for (int t = 0; t < 12; ++t) {
        double g = 0;
        for (int s = t; s < 12; ++s) {
            g += r[s];
            if (d[s]) break;
        }
        CHECK(mc.advantages[t] == doctest::Approx(g - v[t]).epsilon(1e-12));
        CHECK(mc.returns[t] == doctest::Approx(g).epsilon(1e-12));
    }
    CHECK_THROWS_AS(gae({1, 2}, {0, 0}, {0, 0}, 1, 1), ContractViolation);
    CHECK_THROWS_AS(gae({1, 2}, {0, 0, 0}, {0}, 1, 1), ContractViolation);
}

namespace {

struct LossCase {
    nn::Tensor logits;
    nn::Tensor values;
    PpoLossInput in;
};

LossCase random_case(std::mt19937_64& rng, int batch, int actions, double ratio_spread) {
    std::normal_distribution<double> g(0, 1);
    LossCase c{nn::Tensor({batch, actions}, 0, true), nn::Tensor({batch, 1}, 0, true), {}};
    for (real& x : c.logits.data()) x = static_cast<real>(g(rng));
    for (real& x : c.values.data()) x = static_cast<real>(g(rng));
    c.in.masks.assign(static_cast<std::size_t>(batch * actions), 1);
    for (int i = 0; i < batch; ++i) {
        // Mask a couple of actions, never the chosen one.
        const int a = std::uniform_int_distribution<int>(0, actions - 1)(rng);
        c.in.masks[static_cast<std::size_t>(i * actions + (a + 1) % actions)] = 0;
        c.in.actions.push_back(a);
        const auto lp = masked_log_softmax(c.logits.data().data() + i * actions, c.in.masks.data() + i * actions, actions);
        c.in.old_log_probs.push_back(lp[static_cast<std::size_t>(a)] + ratio_spread * g(rng));
        c.in.advantages.push_back(g(rng));
        c.in.returns.push_back(g(rng));
    }
    return c;
}

}  // namespace

TEST_CASE("clipped surrogate examples") {
    auto single = [](double ratio, double adv, double eps) {
        nn::Tensor logits({1, 2}, 0, true);
        nn::Tensor values({1, 1}, 0, true);
        PpoLossInput in{{0}, {1, 1}, {std::log(0.5) - std::log(ratio)}, {adv}, {0}};
        return ppo_losses(logits, values, in, {eps, 0.5, 0.0}).clip_objective;
    };
    CHECK(single(1.0, 0.7, 0.2) == doctest::Approx(0.7));
    CHECK(single(1.5, 1.0, 0.2) == doctest::Approx(1.2));
    CHECK(single(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
    CHECK(single(0.5, 1.0, 0.2) == doctest::Approx(0.5));
}

TEST_CASE("clip identity: huge epsilon gives the unclipped surrogate") {
    std::mt19937_64 rng(8);
    auto c = random_case(rng, 16, 6, 0.8);
    auto losses = ppo_losses(c.logits, c.values, c.in, {1e9, 0.5, 0.01});
    double unclipped = 0;
    for (int i = 0; i < 16; ++i) {
        const auto lp = masked_log_softmax(c.logits.data().data() + i * 6, c.in.masks.data() + i * 6, 6);
        unclipped += std::exp(lp[static_cast<std::size_t>(c.in.actions[i])] - c.in.old_log_probs[i]) * c.in.advantages[i];
    }
    CHECK(losses.clip_objective == unclipped / 16);
    CHECK(losses.clip_fraction == 0);
}

TEST_CASE("fused loss value and gradient") {
    for (int trial = 0; trial < 10; ++trial) {
        std::mt19937_64 rng(50 + trial);
        auto c = random_case(rng, 8, 5, 0.3);
        const PpoLossConfig cfg{0.2, 0.5, 0.01};
        auto losses = ppo_losses(c.logits, c.values, c.in, cfg);
        CHECK(losses.total.item() ==
              doctest::Approx(-losses.clip_objective + 0.5 * losses.value_loss - 0.01 * losses.entropy).epsilon(n3l::testing::value_tol));
        auto r = n3l::testing::grad_check([&] { return ppo_losses(c.logits, c.values, c.in, cfg).total; }, {c.logits, c.values});
        INFO(r.detail);
        CHECK(r.ok);
        // Masked logits never receive gradient.
        c.logits.zero_grad();
        ppo_losses(c.logits, c.values, c.in, cfg).total.backward();
        for (std::size_t i = 0; i < c.in.masks.size(); ++i)
            if (!c.in.masks[i]) CHECK(c.logits.grad()[i] == 0);
    }
}

TEST_CASE("masked categorical") {
    const real logits[4] = {3, 1, 100, -2};
    const std::uint8_t mask[4] = {1, 1, 0, 1};
    auto lp = masked_log_softmax(logits, mask, 4);
    CHECK(std::isinf(lp[2]));
    double total = 0;
    for (double x : lp)
        if (std::isfinite(x)) total += std::exp(x);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    const real flat[3] = {0, 0, 0};
    const std::uint8_t two[3] = {1, 0, 1};
    CHECK(masked_entropy(masked_log_softmax(flat, two, 3)) == doctest::Approx(std::log(2.0)));
    const std::uint8_t none[3] = {0, 0, 0};
    CHECK_THROWS_AS(masked_log_softmax(flat, none, 3), ContractViolation);
}

TEST_CASE("actor-critic gradients match finite differences") {
    ActorCritic model(3, {16, 16}, 4);
    std::mt19937_64 rng(2);
    auto c = random_case(rng, 6, 9, 0.2);
    nn::Tensor obs({6, 9});
    for (real& x : obs.data()) x = static_cast<real>(std::bernoulli_distribution(0.4)(rng));
    std::vector<nn::Tensor> params;
    for (auto& p : model.params().items()) params.push_back(p.tensor);
    auto r = n3l::testing::grad_check(
        [&] {
            auto [logits, values] = model.forward(obs);
            return ppo_losses(logits, values, c.in, {0.2, 0.5, 0.01}).total;
        },
        params);
    INFO(r.detail);
    CHECK(r.ok);
}

TEST_CASE("evaluation with scripted, uniform and trained policies") {
    const auto opt = n3l::testing::known_optimum_5();
    std::vector<int> cells;
    for (auto p : opt.points()) cells.push_back(to_token(p, 5));
    auto oracle = evaluate(scripted_policy(cells), 5, MaskMode::occupied, 5, 0);
    CHECK(oracle.success_rate == 1.0);
    CHECK(oracle.mean_points == 10);
    CHECK(oracle.mean_violations == 0);
    CHECK(oracle.composite == 30);

    auto random = evaluate(uniform_policy(), 5, MaskMode::occupied, 200, 1);
    CHECK(random.success_rate < 0.05);
    CHECK(random.mean_points == 10);
    CHECK(random.mean_violations > 0);
    CHECK(random.to_json().dump() == evaluate(uniform_policy(), 5, MaskMode::occupied, 200, 1).to_json().dump());

    ActorCritic model(4, {8}, 1);
    auto a = evaluate(greedy_policy(model), 4, MaskMode::occupied, 3, 9);
    auto b = evaluate(greedy_policy(model), 4, MaskMode::occupied, 3, 9);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("policy checkpoint") {
    auto dir = std::filesystem::temp_directory_path() / "n3l_test_rl";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "policy.ckpt").string();
    ActorCritic model(3, {8, 4}, 6);
    save_policy(path, model);
    auto loaded = load_policy(path, 3);
    CHECK(loaded.params().values() == model.params().values());
    CHECK(loaded.hidden() == model.hidden());
    CHECK_THROWS_AS(load_policy(path, 4), LoadError);
}

TEST_CASE("config round trip and validation") {
    auto c = PpoConfig::desk(4);
    c.mask_mode = MaskMode::strict;
    CHECK(PpoConfig::from_json(c.to_json()).to_json() == c.to_json());
    auto bad = c.to_json();
    bad["clip"] = 1.5;
    CHECK_THROWS_AS(PpoConfig::from_json(bad), ContractViolation);
    bad = c.to_json();
    bad["gamma"] = 0;
    CHECK_THROWS_AS(PpoConfig::from_json(bad), ContractViolation);
}

TEST_CASE("short training run is deterministic and never selects occupied cells") {
    PpoConfig cfg = PpoConfig::desk(3);
    cfg.envs = 2;
    cfg.rollout = 32;
    cfg.minibatch = 16;
    cfg.epochs = 2;
    cfg.total_steps = 256;
    cfg.hidden = {16, 16};
    cfg.eval_interval = 2;
    cfg.eval_episodes = 2;
    auto a = train_ppo(cfg);
    auto b = train_ppo(cfg);
    CHECK_FALSE(a.occupied_action_seen);
    CHECK(a.log.size() == 4);
    CHECK(a.final_policy.params().values() == b.final_policy.params().values());
    CHECK(a.best.params().values() == b.best.params().values());
    CHECK(a.evals.size() == 2);
    for (const auto& row : a.log) CHECK(row.lr == static_cast<real>(cfg.lr));
}
