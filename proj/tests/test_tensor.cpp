#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "n3l/errors.hpp"
#include "n3l/kernels.hpp"
#include "n3l/tensor.hpp"

using namespace n3l;
using namespace n3l::nn;
using n3l::testing::grad_check;
using n3l::testing::value_tol;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape), 0, true);
    std::normal_distribution<double> dist(0, scale);
    for (real& x : t.data()) x = static_cast<real>(dist(rng));
    return t;
}

// Fixed random projection so vector-valued ops reduce to a scalar with
// non-trivial upstream gradients.
Tensor project(const Tensor& y, std::mt19937_64& rng) {
    Tensor w(y.shape());
    std::uniform_real_distribution<double> dist(-1, 1);
    for (real& x : w.data()) x = static_cast<real>(dist(rng));
    return sum(mul(y, w));
}

}  // namespace

TEST_CASE("softmax of zeros is uniform and rows sum to one") {
    auto p = softmax(Tensor({1, 3}));
    for (real x : p.data()) CHECK(x == doctest::Approx(1.0 / 3));

    std::mt19937_64 rng(5);
    auto q = softmax(random_tensor({4, 7}, rng, 3.0));
    for (int i = 0; i < 4; ++i) {
        double total = 0;
        for (int j = 0; j < 7; ++j) total += q.data()[i * 7 + j];
        CHECK(std::abs(total - 1) < value_tol);
    }
}

TEST_CASE("relu and gelu point values") {
    auto r = relu(Tensor::from_data({3}, {-2, 0, 1.5}));
    CHECK(r.data()[0] == 0);
    CHECK(r.data()[1] == 0);
    CHECK(r.data()[2] == 1.5);
    auto g = gelu(Tensor::from_data({3}, {0, 1, -1}));
    CHECK(g.data()[0] == 0);
    CHECK(g.data()[1] == doctest::Approx(0.841192).epsilon(1e-5));
    CHECK(g.data()[2] == doctest::Approx(-0.158808).epsilon(1e-5));
}

TEST_CASE("attention over a length-one sequence returns the value row") {
    std::mt19937_64 rng(1);
    auto q = random_tensor({2, 4}, rng);
    auto k = random_tensor({2, 4}, rng);
    auto v = random_tensor({2, 4}, rng);
    auto out = causal_attention(q, k, v, 2, 1, 2);
    for (std::size_t i = 0; i < v.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(v.data()[i]));
}

TEST_CASE("attention weights are row-stochastic: constant values pass through") {
    std::mt19937_64 rng(2);
    const int batch = 2, seq = 5, dim = 6;
    auto q = random_tensor({batch * seq, dim}, rng);
    auto k = random_tensor({batch * seq, dim}, rng);
    Tensor v({batch * seq, dim}, 0.75);
    auto out = causal_attention(q, k, v, batch, seq, 3);
    for (real x : out.data()) CHECK(std::abs(x - 0.75) < value_tol);
}

TEST_CASE("attention is causal under perturbation of later positions") {
    std::mt19937_64 rng(3);
    const int batch = 1, seq = 6, dim = 8;
    auto q = random_tensor({seq, dim}, rng);
    auto k = random_tensor({seq, dim}, rng);
    auto v = random_tensor({seq, dim}, rng);
    auto base = causal_attention(q, k, v, batch, seq, 2);
    for (int j = 1; j < seq; ++j) {
        auto q2 = q.detach(), k2 = k.detach(), v2 = v.detach();
        for (int e = 0; e < dim; ++e) {
            q2.data()[j * dim + e] += 3;
            k2.data()[j * dim + e] -= 2;
            v2.data()[j * dim + e] += 5;
        }
        auto out = causal_attention(q2, k2, v2, batch, seq, 2);
        for (int i = 0; i < j; ++i)
            for (int e = 0; e < dim; ++e) CHECK(out.data()[i * dim + e] == base.data()[i * dim + e]);
    }
}

TEST_CASE("cross entropy values and errors") {
    Tensor uniform({3, 25});
    std::vector<int> t{0, 7, 24};
    CHECK(cross_entropy(uniform, t).item() == doctest::Approx(std::log(25.0)));

    auto confident = Tensor::from_data({1, 3}, {0, 60, 0});
    std::vector<int> one{1};
    CHECK(cross_entropy(confident, one).item() < 1e-20);

    std::vector<int> bad{25, 0, 0};
    CHECK_THROWS_AS(cross_entropy(uniform, bad), std::out_of_range);
    std::vector<int> neg{-3, 0, 0};
    CHECK_THROWS_AS(cross_entropy(uniform, neg), std::out_of_range);

    // Ignored rows change neither the value nor the gradient.
    std::mt19937_64 rng(9);
    auto logits = random_tensor({3, 5}, rng);
    std::vector<int> masked{2, -1, 4};
    auto loss = cross_entropy(logits, masked);
    loss.backward();
    for (int j = 0; j < 5; ++j) CHECK(logits.grad()[5 + j] == 0);
    std::vector<int> rows02{2, 4};
    Tensor sub_logits = Tensor::from_data({2, 5}, {logits.data()[0], logits.data()[1], logits.data()[2], logits.data()[3],
                                                   logits.data()[4], logits.data()[10], logits.data()[11], logits.data()[12],
                                                   logits.data()[13], logits.data()[14]});
    CHECK(loss.item() == doctest::Approx(cross_entropy(sub_logits, rows02).item()).epsilon(1e-12));
}

TEST_CASE("shape mismatches name both shapes") {
    Tensor a({2, 3}), b({2, 3}), c({4, 2});
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
    }
    try {
        add(a, c);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[4, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(layer_norm(a, Tensor({2}), Tensor({3})), DimensionError);
    std::vector<int> ids{0, 5};
    CHECK_THROWS_AS(embedding(Tensor({5, 2}), ids), std::out_of_range);
}

TEST_CASE("backward basics") {
    auto w = Tensor::from_data({3}, {0.5, -1, 2}, true);
    auto x = Tensor::from_data({3}, {4, 5, 6});
    auto loss = sum(mul(w, x));
    loss.backward();
    for (int i = 0; i < 3; ++i) CHECK(w.grad()[i] == x.data()[i]);

    SUBCASE("a second backward accumulates into leaves") {
        loss.backward();
        for (int i = 0; i < 3; ++i) CHECK(w.grad()[i] == 2 * x.data()[i]);
        w.zero_grad();
        loss.backward();
        for (int i = 0; i < 3; ++i) CHECK(w.grad()[i] == x.data()[i]);
    }
    SUBCASE("untracked and non-scalar tensors are rejected") {
        CHECK_THROWS_AS(sum(x).backward(), UsageError);
        CHECK_THROWS_AS(mul(w, x).backward(), UsageError);
    }
    SUBCASE("no-grad guard stops recording") {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        CHECK_THROWS_AS(sum(mul(w, x)).backward(), UsageError);
    }
    CHECK(grad_enabled());
}

TEST_CASE("gradients match finite differences for every op") {
    for (int trial = 0; trial < 10; ++trial) {
        CAPTURE(trial);
        std::mt19937_64 rng(100 + trial);
        const int m = 3, k = 4, n = 5;
        auto a = random_tensor({m, k}, rng);
        auto b = random_tensor({k, n}, rng);
        auto c = random_tensor({m, n}, rng);
        auto bias = random_tensor({n}, rng);
        auto gamma = random_tensor({n}, rng);
        auto beta = random_tensor({n}, rng);
        auto seed = rng();

        auto rng_for = [seed] { return std::mt19937_64(seed); };
        auto check = [](const char* name, auto&& f, std::vector<Tensor> in) {
            auto r = grad_check(f, in);
            INFO(name << ": " << r.detail);
            CHECK(r.ok);
        };
        check("matmul", [&] { auto r = rng_for(); return project(matmul(a, b), r); }, {a, b});
        check("add", [&] { auto r = rng_for(); return project(add(matmul(a, b), c), r); }, {a, b, c});
        check("sub", [&] { auto r = rng_for(); return project(sub(c, matmul(a, b)), r); }, {a, b, c});
        check("mul", [&] { auto r = rng_for(); return project(mul(c, c), r); }, {c});
        check("scale", [&] { auto r = rng_for(); return project(scale(c, 1.7), r); }, {c});
        check("add_bias", [&] { auto r = rng_for(); return project(add_bias(c, bias), r); }, {c, bias});
        check("mean", [&] { return mean(mul(c, c)); }, {c});
        check("relu", [&] { auto r = rng_for(); return project(relu(c), r); }, {c});
        check("gelu", [&] { auto r = rng_for(); return project(gelu(c), r); }, {c});
        check("softmax", [&] { auto r = rng_for(); return project(softmax(c), r); }, {c});
        check("layer_norm", [&] { auto r = rng_for(); return project(layer_norm(c, gamma, beta), r); }, {c, gamma, beta});

        auto table = random_tensor({6, 4}, rng);
        std::vector<int> ids{1, 5, 1, 0};
        check("embedding", [&] { auto r = rng_for(); return project(embedding(table, ids), r); }, {table});

        auto logits = random_tensor({4, 6}, rng, 2.0);
        std::vector<int> targets{3, -1, 0, 5};
        check("cross_entropy", [&] { return cross_entropy(logits, targets); }, {logits});

        const int batch = 2, seq = 4, dim = 6;
        auto q = random_tensor({batch * seq, dim}, rng);
        auto kk = random_tensor({batch * seq, dim}, rng);
        auto v = random_tensor({batch * seq, dim}, rng);
        check("attention", [&] { auto r = rng_for(); return project(causal_attention(q, kk, v, batch, seq, 2), r); }, {q, kk, v});
    }
}

TEST_CASE("two-layer MLP gradients match finite differences") {
    std::mt19937_64 rng(77);
    auto x = random_tensor({5, 4}, rng);
    auto w1 = random_tensor({4, 8}, rng, 0.5);
    auto b1 = random_tensor({8}, rng, 0.1);
    auto w2 = random_tensor({8, 3}, rng, 0.5);
    auto b2 = random_tensor({3}, rng, 0.1);
    std::vector<int> y{0, 2, 1, 1, 0};
    auto loss = [&] { return cross_entropy(add_bias(matmul(gelu(add_bias(matmul(x, w1), b1)), w2), b2), y); };
    auto r = grad_check(loss, {x, w1, b1, w2, b2});
    INFO(r.detail);
    CHECK(r.ok);
    CHECK(r.checked == 20 + 32 + 8 + 24 + 3);
}

TEST_CASE("parallel kernels agree bit-for-bit with the serial reference") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (auto [m, n, k] : {std::tuple{3, 5, 7}, std::tuple{64, 48, 40}, std::tuple{97, 33, 65}}) {
        std::vector<real> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n), bt(static_cast<std::size_t>(n) * k),
            g(static_cast<std::size_t>(m) * n);
        for (auto* v : {&a, &b, &bt, &g})
            for (real& x : *v) x = static_cast<real>(dist(rng));
        std::vector<real> c1(g.size()), c2(g.size());
        kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c1.data(), false);
        kernels::omp::gemm_nn(m, n, k, a.data(), b.data(), c2.data(), false);
        CHECK(c1 == c2);

        // Independent oracle for the plain product.
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0;
                for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
                CHECK(std::abs(c1[i * n + j] - acc) < 1e3 * k * value_tol);
            }

        std::vector<real> d1(g.size(), 1), d2(g.size(), 1);
        kernels::serial::gemm_nt(m, n, k, a.data(), bt.data(), d1.data());
        kernels::omp::gemm_nt(m, n, k, a.data(), bt.data(), d2.data());
        CHECK(d1 == d2);

        std::vector<real> e1(b.size(), 0), e2(b.size(), 0);
        kernels::serial::gemm_tn(m, n, k, a.data(), g.data(), e1.data());
        kernels::omp::gemm_tn(m, n, k, a.data(), g.data(), e2.data());
        CHECK(e1 == e2);
    }
}
