#include <doctest.h>

#include <cmath>

#include "veil/rng.hpp"
#include "veil/tensor.hpp"

using namespace veil;

TEST_CASE("matmul of all-ones 2x3 and 3x2") {
    Tape t;
    auto a = make_tensor({2, 3}, 1.0);
    auto b = make_tensor({3, 2}, 1.0);
    auto c = t.matmul(a, b);
    REQUIRE(c->shape == std::vector<size_t>({2, 2}));
    for (double v : c->value) CHECK(v == 3.0);
}

TEST_CASE("matmul shape mismatch names the shapes") {
    Tape t;
    auto a = make_tensor({2, 3}, 1.0);
    auto b = make_tensor({2, 2}, 1.0);
    CHECK_THROWS_WITH_AS(t.matmul(a, b),
                         doctest::Contains("[2x3]"), TensorError);
}

TEST_CASE("softmax of zeros is uniform, sums to one, strictly positive") {
    Tape t;
    auto x = make_tensor({3}, 0.0);
    auto y = t.softmax(x);
    for (double v : y->value) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> v(8);
        for (double& x2 : v) x2 = 10.0 * (rng.uniform() - 0.5);
        Tape t2;
        auto out = t2.softmax(make_tensor({8}, v));
        double sum = 0.0;
        for (double p : out->value) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("layer norm of a constant vector is zero before affine") {
    Tape t;
    auto x = make_tensor({1, 4}, 5.0);
    auto g = make_tensor({4}, 1.0);
    auto b = make_tensor({4}, 0.0);
    auto y = t.layer_norm(x, g, b);
    for (double v : y->value) CHECK(v == 0.0);
}

TEST_CASE("cross entropy hand values") {
    // uniform two-way: -log(1/2)
    {
        Tape t;
        auto ce = t.cross_entropy(make_tensor({2}, 0.0), 0);
        CHECK(ce->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    // [10,-10]: -log sigma(20) = log1p(exp(-20)), computed by hand as the
    // independent route against the logsumexp implementation
    {
        Tape t;
        auto ce = t.cross_entropy(make_tensor({2}, {10.0, -10.0}), 0);
        const double expected = std::log1p(std::exp(-20.0));
        CHECK(ce->value[0] == doctest::Approx(expected).epsilon(1e-12));
        CHECK(ce->value[0] > 0.0);
        CHECK(ce->value[0] < 3e-9);
    }
    {
        Tape t;
        auto ce = t.cross_entropy(make_tensor({2}, {10.0, -10.0}), 1);
        const double expected = 20.0 + std::log1p(std::exp(-20.0));
        CHECK(ce->value[0] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("cross entropy rejects out-of-range targets") {
    Tape t;
    auto logits = make_tensor({4}, 0.0);
    CHECK_THROWS_AS(t.cross_entropy(logits, 4), TensorError);
    CHECK_THROWS_AS(t.cross_entropy(logits, -1), TensorError);
}

TEST_CASE("gather rejects out-of-vocabulary ids") {
    Tape t;
    auto table = make_tensor({5, 2}, 1.0);
    CHECK_THROWS_AS(t.gather_rows(table, {0, 5}), TensorError);
}

TEST_CASE("backward of sum(x*x)") {
    Tape t;
    auto x = make_tensor({3}, {1.0, 2.0, 3.0}, true);
    auto root = t.scale(t.mean(t.mul(x, x)), 3.0);
    t.backward(root);
    CHECK(x->grad == std::vector<double>({2.0, 4.0, 6.0}));
}

TEST_CASE("backward of cross entropy is softmax minus onehot") {
    Tape t;
    auto logits = make_tensor({2}, 0.0, true);
    auto ce = t.cross_entropy(logits, 0);
    t.backward(ce);
    CHECK(logits->grad[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(logits->grad[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("backward accumulates leaf grads exactly across calls") {
    Tape t;
    auto x = make_tensor({3}, {1.0, 2.0, 3.0}, true);
    auto root = t.scale(t.mean(t.mul(x, x)), 3.0);
    t.backward(root);
    const auto once = x->grad;
    t.backward(root);
    for (size_t i = 0; i < once.size(); ++i)
        CHECK(x->grad[i] == 2.0 * once[i]);
}

TEST_CASE("backward rejects non-scalar roots") {
    Tape t;
    auto x = make_tensor({3}, 1.0, true);
    auto y = t.relu(x);
    CHECK_THROWS_AS(t.backward(y), TensorError);
}

TEST_CASE("tensor untouched by the root keeps a zero grad") {
    Tape t;
    auto x = make_tensor({2}, 1.0, true);
    auto z = make_tensor({2}, 1.0, true);
    z->ensure_grad();
    auto root = t.mean(t.mul(x, x));
    t.backward(root);
    for (double g : z->grad) CHECK(g == 0.0);
}

TEST_CASE("ops reject non-finite outputs instead of propagating") {
    Tape t;
    auto big = make_tensor({2}, 1e308);
    CHECK_THROWS_AS(t.scale(t.scale(big, 10.0), 10.0), TensorError);
}

TEST_CASE("check_gradient on sum of squares and on a constant") {
    auto f = [](Tape& t, const TensorPtr& x) {
        return t.scale(t.mean(t.mul(x, x)), double(x->value.size()));
    };
    Rng rng(11);
    std::vector<double> v(6);
    for (double& x : v) x = 2.0 * rng.uniform() - 1.0;
    auto x = make_tensor({6}, v);
    CHECK(check_gradient(f, x, 1e-5) < 1e-6);

    auto fc = [](Tape& t, const TensorPtr& x) {
        auto c = make_tensor({1}, 3.0);
        (void)x;
        return t.scale(c, 2.0);
    };
    CHECK(check_gradient(fc, x, 1e-5) == 0.0);
}

// property: every op matches central differences at seeded random points
TEST_CASE("gradient check across the op set") {
    Rng seed_rng(12345);
    auto rand_tensor = [&](std::vector<size_t> shape, Rng& rng, double lo,
                           double hi) {
        std::vector<double> v(numel(shape));
        for (double& x : v) x = lo + (hi - lo) * rng.uniform();
        return make_tensor(std::move(shape), std::move(v));
    };

    // each f maps x through one op, then to a scalar via fixed random weights
    for (int point = 0; point < 10; ++point) {
        Rng rng(seed_rng.next_u64());
        auto w_for = [&](size_t n) {
            std::vector<double> w(n);
            for (double& x : w) x = 2.0 * rng.uniform() - 1.0;
            return w;
        };

        auto reduce = [](Tape& t, const TensorPtr& y,
                         const std::vector<double>& w) {
            auto wt = make_tensor(y->shape, w);
            return t.scale(t.mean(t.mul(y, wt)), double(y->value.size()));
        };

        {  // matmul, both operands
            auto b = rand_tensor({3, 4}, rng, -1, 1);
            auto w = w_for(8);
            auto f = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.matmul(x, b), w);
            };
            CHECK(check_gradient(f, rand_tensor({2, 3}, rng, -1, 1), 1e-6) < 1e-4);
            auto a = rand_tensor({2, 3}, rng, -1, 1);
            auto fb = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.matmul(a, x), w);
            };
            CHECK(check_gradient(fb, rand_tensor({3, 4}, rng, -1, 1), 1e-6) < 1e-4);
            auto ft = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.matmul(a, x, true), w);
            };
            CHECK(check_gradient(ft, rand_tensor({4, 3}, rng, -1, 1), 1e-6) < 1e-4);
        }
        {  // add (same-shape and bias), mul, scale
            auto b = rand_tensor({2, 3}, rng, -1, 1);
            auto w = w_for(6);
            auto f = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.add(x, b), w);
            };
            CHECK(check_gradient(f, rand_tensor({2, 3}, rng, -1, 1), 1e-6) < 1e-4);
            auto fbias = [&](Tape& t, const TensorPtr& x) {
                auto a = make_tensor({2, 3}, 0.5);
                return reduce(t, t.add(a, x), w);
            };
            CHECK(check_gradient(fbias, rand_tensor({3}, rng, -1, 1), 1e-6) < 1e-4);
            auto fm = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.mul(x, b), w);
            };
            CHECK(check_gradient(fm, rand_tensor({2, 3}, rng, -1, 1), 1e-6) < 1e-4);
            auto fs = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.scale(x, -1.7), w);
            };
            CHECK(check_gradient(fs, rand_tensor({2, 3}, rng, -1, 1), 1e-6) < 1e-4);
        }
        {  // relu away from the kink
            auto w = w_for(6);
            auto f = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.relu(x), w);
            };
            std::vector<double> v(6);
            for (double& x : v) {
                x = 2.0 * rng.uniform() - 1.0;
                if (std::abs(x) < 0.05) x = 0.1;
            }
            CHECK(check_gradient(f, make_tensor({6}, v), 1e-6) < 1e-4);
        }
        {  // layer_norm: input, gamma, beta
            auto g = rand_tensor({4}, rng, 0.5, 1.5);
            auto b = rand_tensor({4}, rng, -0.5, 0.5);
            auto w = w_for(8);
            auto f = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.layer_norm(x, g, b), w);
            };
            CHECK(check_gradient(f, rand_tensor({2, 4}, rng, -1, 1), 1e-6) < 1e-4);
            auto xin = rand_tensor({2, 4}, rng, -1, 1);
            auto fg = [&](Tape& t, const TensorPtr& gg) {
                return reduce(t, t.layer_norm(xin, gg, b), w);
            };
            CHECK(check_gradient(fg, rand_tensor({4}, rng, 0.5, 1.5), 1e-6) < 1e-4);
        }
        {  // softmax
            auto w = w_for(5);
            auto f = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.softmax(x), w);
            };
            CHECK(check_gradient(f, rand_tensor({5}, rng, -2, 2), 1e-6) < 1e-4);
        }
        {  // gather
            auto w = w_for(4);
            auto f = [&](Tape& t, const TensorPtr& x) {
                return reduce(t, t.gather_rows(x, {2, 0}), w);
            };
            CHECK(check_gradient(f, rand_tensor({3, 2}, rng, -1, 1), 1e-6) < 1e-4);
        }
        {  // reshape / slices / concat
            auto w = w_for(4);
            auto f = [&](Tape& t, const TensorPtr& x) {
                auto a = t.slice_rows(x, 0, 1);
                auto b = t.slice_rows(x, 2, 3);
                auto cat = t.concat_rows({a, b});
                auto cols = t.slice_cols(cat, 1, 3);
                return reduce(t, t.reshape(cols, {4, 1}), w);
            };
            CHECK(check_gradient(f, rand_tensor({3, 4}, rng, -1, 1), 1e-6) < 1e-4);
        }
        {  // mean and cross entropy
            auto f = [&](Tape& t, const TensorPtr& x) { return t.mean(x); };
            CHECK(check_gradient(f, rand_tensor({7}, rng, -1, 1), 1e-6) < 1e-4);
            auto fce = [&](Tape& t, const TensorPtr& x) {
                auto ce = t.cross_entropy(x, std::vector<int>{1, 0});
                return t.mean(ce);
            };
            CHECK(check_gradient(fce, rand_tensor({2, 3}, rng, -2, 2), 1e-6) < 1e-4);
        }
    }
}
