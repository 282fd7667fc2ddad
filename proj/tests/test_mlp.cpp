#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "voisim/mlp.hpp"

using namespace voisim;

namespace {

// relative agreement suited to gradients crossing zero
double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1e-8, std::fabs(a) + std::fabs(b)); }

// scalar objective f(params) = output(x) . u, evaluated by forward pass
double objective(const Mlp& net, const Vec& x, const Vec& u) {
    Vec y = mlp_forward(net, x);
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y[i] * u[i];
    return s;
}

void check_gradients(Mlp net, const Vec& x, const Vec& u, double tol) {
    MlpGrads g = mlp_backward(net, x, u);
    const double h = 1e-5;
    for (size_t l = 0; l < net.n_layers(); ++l) {
        for (size_t i = 0; i < net.w[l].a.size(); ++i) {
            double saved = net.w[l].a[i];
            net.w[l].a[i] = saved + h;
            double fp = objective(net, x, u);
            net.w[l].a[i] = saved - h;
            double fm = objective(net, x, u);
            net.w[l].a[i] = saved;
            double fd = (fp - fm) / (2 * h);
            ASSERT_LE(rel_err(g.w[l].a[i], fd), tol) << "layer " << l << " w[" << i << "]";
        }
        for (size_t i = 0; i < net.b[l].size(); ++i) {
            double saved = net.b[l][i];
            net.b[l][i] = saved + h;
            double fp = objective(net, x, u);
            net.b[l][i] = saved - h;
            double fm = objective(net, x, u);
            net.b[l][i] = saved;
            double fd = (fp - fm) / (2 * h);
            ASSERT_LE(rel_err(g.b[l][i], fd), tol) << "layer " << l << " b[" << i << "]";
        }
    }
    // input gradient against the same oracle
    Vec xp = x;
    for (size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        double fp = objective(net, xp, u);
        xp[i] = x[i] - h;
        double fm = objective(net, xp, u);
        xp[i] = x[i];
        ASSERT_LE(rel_err(g.x[i], (fp - fm) / (2 * h)), tol) << "input " << i;
    }
}

}  // namespace

TEST(MlpForward, HandExamplesAndErrors) {
    Mlp zero = make_zero_mlp({2, 3, 2}, Act::tanh_act);
    EXPECT_EQ(mlp_forward(zero, {1.0, -1.0}), (Vec{0.0, 0.0}));

    Mlp lin = make_zero_mlp({1, 1}, Act::tanh_act);
    lin.w[0](0, 0) = 2.0;
    lin.b[0][0] = 1.0;
    EXPECT_EQ(mlp_forward(lin, {3.0}), (Vec{7.0}));

    Mlp sat = make_mlp({1, 4, 1}, Act::tanh_act, 5, Act::tanh_act);
    for (double x : {1e3, -1e3, 1e6}) {
        double y = mlp_forward(sat, {x})[0];
        EXPECT_GT(y, -1.0);
        EXPECT_LT(y, 1.0);
    }

    EXPECT_THROW(mlp_forward(lin, {1.0, 2.0}), contract_violation);
    EXPECT_THROW(make_mlp({3}, Act::tanh_act, 0), contract_violation);
}

TEST(MlpForward, ParamCount) {
    Mlp net = make_mlp({3, 5, 2}, Act::tanh_act, 1);
    EXPECT_EQ(net.param_count(), static_cast<size_t>((3 + 1) * 5 + (5 + 1) * 2));
}

TEST(MlpBackward, LinearLayerHandGradient) {
    Mlp lin = make_zero_mlp({2, 1}, Act::tanh_act);
    lin.w[0](0, 0) = 0.3;
    lin.w[0](0, 1) = -0.7;
    MlpGrads g = mlp_backward(lin, {2.0, 5.0}, {1.0});
    EXPECT_DOUBLE_EQ(g.w[0](0, 0), 2.0);
    EXPECT_DOUBLE_EQ(g.w[0](0, 1), 5.0);
    EXPECT_DOUBLE_EQ(g.b[0][0], 1.0);
    EXPECT_DOUBLE_EQ(g.x[0], 0.3);
    EXPECT_DOUBLE_EQ(g.x[1], -0.7);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGrads) {
    Mlp net = make_mlp({3, 8, 2}, Act::tanh_act, 9);
    MlpGrads g = mlp_backward(net, {0.1, -0.2, 0.4}, {0.0, 0.0});
    for (const auto& m : g.w)
        for (double v : m.a) EXPECT_EQ(v, 0.0);
    for (const auto& b : g.b)
        for (double v : b) EXPECT_EQ(v, 0.0);
}

TEST(MlpBackward, FiniteDifferenceOracleTwentyNets) {
    Rng rng(2718);
    for (int trial = 0; trial < 20; ++trial) {
        int in = 1 + static_cast<int>(rng.randint(4));
        int h1 = 2 + static_cast<int>(rng.randint(6));
        int out = 1 + static_cast<int>(rng.randint(3));
        std::vector<int> sizes = trial % 2 ? std::vector<int>{in, h1, out}
                                           : std::vector<int>{in, h1, h1, out};
        Mlp net = make_mlp(sizes, Act::tanh_act, 5000 + trial);
        Vec x(in), u(out);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        for (double& v : u) v = rng.uniform(-1.0, 1.0);
        check_gradients(net, x, u, 1e-4);
    }
}

TEST(MlpBackward, ReluGradientAwayFromKink) {
    Rng rng(33);
    for (int trial = 0; trial < 5; ++trial) {
        Mlp net = make_mlp({2, 6, 1}, Act::relu, 600 + trial);
        Vec x{rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
        // retry inputs that land a pre-activation near the relu kink
        MlpCache cache;
        mlp_forward_cached(net, x, cache);
        bool near_kink = false;
        for (double p : cache.pre[0]) near_kink |= std::fabs(p) < 1e-3;
        if (near_kink) continue;
        check_gradients(net, x, {1.0}, 1e-4);
    }
}

TEST(Adam, FitsLinearMap) {
    Mlp net = make_mlp({1, 1}, Act::tanh_act, 7);
    Adam opt(net, 0.05);
    MlpGrads g;
    g.init_like(net);
    MlpCache cache;
    Rng rng(1);
    for (int it = 0; it < 2000; ++it) {
        g.zero();
        for (int b = 0; b < 8; ++b) {
            double x = rng.uniform(-1.0, 1.0);
            double y = 2.0 * x + 1.0;
            double p = mlp_forward_cached(net, {x}, cache)[0];
            mlp_backward_cached(net, cache, {2.0 * (p - y) / 8.0}, g);
        }
        opt.step(net, g);
    }
    EXPECT_NEAR(net.w[0](0, 0), 2.0, 1e-3);
    EXPECT_NEAR(net.b[0][0], 1.0, 1e-3);
}

TEST(MlpCheckpoint, RoundTripExact) {
    Mlp net = make_mlp({3, 16, 2}, Act::relu, 99, Act::tanh_act);
    const std::string path = "mlp_ckpt.txt";
    mlp_save(net, path);
    Mlp back = mlp_load(path);
    std::remove(path.c_str());
    ASSERT_EQ(back.layer_sizes, net.layer_sizes);
    EXPECT_EQ(back.hidden, net.hidden);
    EXPECT_EQ(back.out, net.out);
    for (size_t l = 0; l < net.n_layers(); ++l) {
        EXPECT_EQ(back.w[l].a, net.w[l].a);
        EXPECT_EQ(back.b[l], net.b[l]);
    }
    Vec x{0.3, -0.7, 1.1};
    EXPECT_EQ(mlp_forward(back, x), mlp_forward(net, x));
}
