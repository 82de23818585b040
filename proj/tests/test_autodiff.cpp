#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"
#include "mcm/autodiff.hpp"
#include "mcm/nn.hpp"
#include "mcm/rng.hpp"

using namespace mcm;

TEST_CASE("elementwise ops forward values") {
    auto a = ad::var(Tensor::full({3}, 2.0), true);
    auto b = ad::var(Tensor::full({3}, 3.0), true);
    CHECK(ad::add(a, b)->value.data[0] == doctest::Approx(5.0));
    CHECK(ad::sub(a, b)->value.data[1] == doctest::Approx(-1.0));
    CHECK(ad::mul(a, b)->value.data[2] == doctest::Approx(6.0));
    CHECK(ad::scale(a, -2.0)->value.data[0] == doctest::Approx(-4.0));
    CHECK(ad::add_scalar(a, 0.5)->value.data[0] == doctest::Approx(2.5));
    CHECK(ad::square(b)->value.data[0] == doctest::Approx(9.0));
    CHECK(ad::relu(ad::scale(a, -1.0))->value.data[0] == doctest::Approx(0.0));
    CHECK(ad::mean_all(ad::add(a, b))->value.data[0] == doctest::Approx(5.0));
}

TEST_CASE("backward accumulates through a shared subexpression") {
    auto x = ad::var(Tensor::full({1}, 3.0), true);
    // y = x*x + 2x  ->  dy/dx = 2x + 2 = 8
    auto y = ad::add(ad::mul(x, x), ad::scale(x, 2.0));
    ad::backward(ad::sum_all(y));
    CHECK(x->grad.data[0] == doctest::Approx(8.0));
}

TEST_CASE("finite differences: dense elementwise chain") {
    auto g = derive_rng(11, "fd.chain");
    auto a = ad::var(Tensor::randn({4, 5}, g), true);
    auto b = ad::var(Tensor::randn({4, 5}, g), true);
    auto loss = [&] {
        auto h = ad::silu(ad::add(ad::mul(a, b), ad::scale(a, 0.3)));
        h = ad::tanh_op(ad::add_scalar(h, 0.1));
        return ad::mean_all(ad::square(h));
    };
    auto r = fdcheck::run({a, b}, loss);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: matmul + rowvec bias + relu") {
    auto g = derive_rng(12, "fd.matmul");
    auto x = ad::var(Tensor::randn({3, 4}, g), true);
    auto w = ad::var(Tensor::randn({4, 6}, g), true);
    auto b = ad::var(Tensor::randn({6}, g), true);
    auto loss = [&] {
        return ad::mean_all(ad::square(ad::relu(ad::add_rowvec(ad::matmul(x, w), b))));
    };
    auto r = fdcheck::run({x, w, b}, loss);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: conv2d + channel bias + pooling") {
    auto g = derive_rng(13, "fd.conv");
    auto x = ad::var(Tensor::randn({2, 6, 6}, g), true);
    auto w = ad::var(Tensor::randn({3, 2, 3, 3}, g), true);
    auto b = ad::var(Tensor::randn({3}, g), true);
    auto cb = ad::var(Tensor::randn({3}, g), true);
    auto loss = [&] {
        auto y = ad::conv2d(x, w, b, 1);
        y = ad::silu(ad::add_channel_bias(y, cb));
        y = ad::avg_pool2(y);
        return ad::mean_all(ad::square(y));
    };
    auto r = fdcheck::run({x, w, b, cb}, loss);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: gather with duplicate rows") {
    auto g = derive_rng(14, "fd.gather");
    auto x = ad::var(Tensor::randn({5, 3}, g), true);
    auto loss = [&] {
        auto y = ad::gather_first(x, {0, 2, 2, 4});
        return ad::mean_all(ad::square(y));
    };
    auto r = fdcheck::run({x}, loss);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("conv2d forward matches hand-computed 1x1 case") {
    // 1x1 kernel, one channel: plain scale + bias.
    auto x = ad::var(Tensor::full({1, 2, 2}, 3.0), false);
    Tensor wt({1, 1, 1, 1});
    wt.data[0] = 2.0;
    Tensor bt({1});
    bt.data[0] = -1.0;
    auto y = ad::conv2d(x, ad::constant(wt), ad::constant(bt), 0);
    for (double v : y->value.data) CHECK(v == doctest::Approx(5.0));
}

TEST_CASE("huber distance: zero at equal inputs, L2 limit, gradient") {
    auto g = derive_rng(15, "fd.huber");
    auto a = ad::var(Tensor::randn({7}, g), true);
    auto b = ad::var(Tensor::randn({7}, g), true);

    CHECK(ad::huber_distance(a, a, 0.01)->value.data[0] == doctest::Approx(0.0));

    double l2 = l2_norm(a->value - b->value);
    CHECK(ad::huber_distance(a, b, 1e-9)->value.data[0] == doctest::Approx(l2).epsilon(1e-6));

    auto loss = [&] { return ad::huber_distance(a, b, 0.05); };
    auto r = fdcheck::run({a, b}, loss);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    auto a = ad::var(Tensor::full({2}, 1.0), true);
    ad::VarPtr y;
    {
        ad::NoGradGuard ng;
        y = ad::sum_all(ad::mul(a, a));
    }
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
    CHECK(ad::grad_enabled());
}

TEST_CASE("detach cuts the tape but keeps the value") {
    auto a = ad::var(Tensor::full({2}, 2.0), true);
    auto d = ad::detach(ad::mul(a, a));
    CHECK(d->value.data[0] == doctest::Approx(4.0));
    auto y = ad::sum_all(ad::mul(d, a));  // y = 4*a, but 4 is constant
    ad::backward(y);
    CHECK(a->grad.data[0] == doctest::Approx(4.0));
}

TEST_CASE("backward requires scalar root") {
    auto a = ad::var(Tensor::full({3}, 1.0), true);
    CHECK_THROWS_AS(ad::backward(ad::mul(a, a)), ShapeError);
}

TEST_CASE("shape mismatches are rejected") {
    auto a = ad::var(Tensor::zeros({2, 3}), false);
    auto b = ad::var(Tensor::zeros({3, 2}), false);
    CHECK_THROWS_AS(ad::add(a, b), ShapeError);
    CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
}

TEST_CASE("Adam drives a quadratic toward its minimum") {
    auto g = derive_rng(16, "adam");
    auto x = ad::var(Tensor::randn({4}, g), true);
    Tensor target = Tensor::full({4}, 1.5);
    nn::Adam opt({{"x", x}}, 0.05);
    for (int i = 0; i < 400; ++i) {
        opt.zero_grad();
        auto diff = ad::sub(x, ad::constant(target));
        ad::backward(ad::mean_all(ad::square(diff)));
        opt.step();
    }
    CHECK(max_abs_diff(x->value, target) < 1e-3);
}

TEST_CASE("EMA update interpolates parameter values") {
    auto src = ad::var(Tensor::full({3}, 1.0), true);
    auto dst = ad::var(Tensor::full({3}, 0.0), true);
    nn::ParamList s{{"p", src}}, d{{"p", dst}};
    nn::ema_update(d, s, 0.9);
    CHECK(dst->value.data[0] == doctest::Approx(0.1));
    nn::ema_update(d, s, 0.9);
    CHECK(dst->value.data[0] == doctest::Approx(0.19));
    // mu = 1 freezes the target; mu = 0 hard-copies.
    nn::ema_update(d, s, 1.0);
    CHECK(dst->value.data[0] == doctest::Approx(0.19));
    nn::ema_update(d, s, 0.0);
    CHECK(dst->value.data[0] == doctest::Approx(1.0));
}

TEST_CASE("params fingerprint is order- and value-sensitive") {
    auto a = ad::var(Tensor::full({2}, 1.0), true);
    auto b = ad::var(Tensor::full({2}, 2.0), true);
    nn::ParamList ab{{"a", a}, {"b", b}};
    nn::ParamList ba{{"b", b}, {"a", a}};
    CHECK(nn::params_fingerprint(ab) != nn::params_fingerprint(ba));
    auto h0 = nn::params_fingerprint(ab);
    a->value.data[0] += 1e-12;
    CHECK(nn::params_fingerprint(ab) != h0);
}
