#include <gtest/gtest.h>

#include <cstdio>

#include "voisim/random_models.hpp"
#include "voisim/td3.hpp"

using namespace voisim;

namespace {

// one-step decision problem: reward peaks at a* = 0.5
SsdpSpec bandit_spec(double noise_std = 0.0) {
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.5;
    spec.horizon = 1;
    spec.transition = [](const Vec& s, const Vec&, const Vec&) { return s; };
    spec.reward = [noise_std](const Vec&, const Vec& a, const Vec& w) {
        return -(a[0] - 0.5) * (a[0] - 0.5) + noise_std * w[0];
    };
    spec.exo = ExoProcess::make_iid_sampler([](Rng& r) { return Vec{r.normal()}; }, 1);
    spec.action_lo = {0.0};
    spec.action_hi = {1.0};
    spec.init_support = {{0.0}};
    spec.init_probs = {1.0};
    return spec;
}

TrainConfig small_config(int steps) {
    TrainConfig cfg;
    cfg.total_steps = steps;
    cfg.start_steps = std::min(500, steps / 4);
    cfg.batch_size = 64;
    cfg.hidden = {32, 32};
    return cfg;
}

}  // namespace

TEST(Replay, RingAndSeededSampling) {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) buf.add({{static_cast<double>(i)}, {0.0}, 0.0, {0.0}, false});
    EXPECT_EQ(buf.size(), 3u);
    // oldest entries were overwritten in ring order
    std::vector<double> seen;
    for (size_t i = 0; i < buf.size(); ++i) seen.push_back(buf[i].s[0]);
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(seen, (std::vector<double>{2.0, 3.0, 4.0}));

    Rng r1(5), r2(5);
    EXPECT_EQ(buf.sample_indices(r1, 10), buf.sample_indices(r2, 10));
    EXPECT_THROW(ReplayBuffer(0), contract_violation);
}

TEST(TrainTd3, BanditFindsOptimum) {
    SsdpEnv env(bandit_spec(), 1);
    Td3Result res = train_td3(env, small_config(5000), 11);
    double a = res.ac.act({0.0})[0];
    EXPECT_NEAR(a, 0.5, 0.05);
    EXPECT_FALSE(res.log.empty());
}

TEST(TrainTd3, ZeroRewardCriticGoesToZero) {
    SsdpSpec spec = bandit_spec();
    spec.reward = [](const Vec&, const Vec&, const Vec&) { return 0.0; };
    spec.horizon = 3;
    SsdpEnv env(spec, 3);
    Td3Result res = train_td3(env, small_config(5000), 21);
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        EXPECT_NEAR(res.ac.q_value(res.ac.critic_q1, {0.0}, {a}), 0.0, 0.01) << "a=" << a;
        EXPECT_NEAR(res.ac.q_value(res.ac.critic_q2, {0.0}, {a}), 0.0, 0.01) << "a=" << a;
    }
}

TEST(TrainTd3, SeededDeterminism) {
    SsdpEnv env1(bandit_spec(), 1);
    SsdpEnv env2(bandit_spec(), 1);
    TrainConfig cfg = small_config(600);
    Td3Result r1 = train_td3(env1, cfg, 77);
    Td3Result r2 = train_td3(env2, cfg, 77);
    ASSERT_EQ(r1.log.size(), r2.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) {
        EXPECT_EQ(r1.log[i].ret, r2.log[i].ret);
        EXPECT_EQ(r1.log[i].critic_loss, r2.log[i].critic_loss);
    }
    for (size_t l = 0; l < r1.ac.actor.n_layers(); ++l) EXPECT_EQ(r1.ac.actor.w[l].a, r2.ac.actor.w[l].a);
}

TEST(TrainTd3, TargetsEqualMainsAtInit) {
    SsdpEnv env(bandit_spec(), 1);
    TrainConfig cfg = small_config(8);  // fewer steps than start_steps: no updates
    cfg.start_steps = 100;
    Td3Result res = train_td3(env, cfg, 3);
    for (size_t l = 0; l < res.ac.actor.n_layers(); ++l)
        EXPECT_EQ(res.ac.target_actor.w[l].a, res.ac.actor.w[l].a);
    for (size_t l = 0; l < res.ac.critic_q1.n_layers(); ++l)
        EXPECT_EQ(res.ac.target_q1.w[l].a, res.ac.critic_q1.w[l].a);
}

TEST(TrainTd3, SoftUpdateIsExactMix) {
    Mlp main = make_mlp({2, 4, 1}, Act::tanh_act, 1);
    Mlp target = make_mlp({2, 4, 1}, Act::tanh_act, 2);
    Mlp target_old = target;
    const double rate = 0.005;
    detail::soft_update(target, main, rate);
    for (size_t l = 0; l < main.n_layers(); ++l)
        for (size_t i = 0; i < main.w[l].a.size(); ++i)
            EXPECT_DOUBLE_EQ(target.w[l].a[i],
                             (1.0 - rate) * target_old.w[l].a[i] + rate * main.w[l].a[i]);
}

TEST(TrainTd3, DivergenceDetectorAborts) {
    SsdpSpec spec = bandit_spec();
    spec.reward = [](const Vec&, const Vec& a, const Vec&) { return 1e7 * a[0]; };
    SsdpEnv env(spec, 1);
    TrainConfig cfg = small_config(3000);
    try {
        train_td3(env, cfg, 5);
        FAIL() << "expected divergence";
    } catch (const contract_violation& e) {
        EXPECT_NE(std::string(e.what()).find("divergence"), std::string::npos);
    }
}

TEST(TrainTd3, WritesTrainingLog) {
    SsdpEnv env(bandit_spec(), 1);
    TrainConfig cfg = small_config(300);
    cfg.log_path = "td3_log.csv";
    Td3Result res = train_td3(env, cfg, 9);
    CsvTable t = read_csv(cfg.log_path);
    std::remove(cfg.log_path.c_str());
    EXPECT_EQ(t.header, (std::vector<std::string>{"episode", "return", "critic_loss"}));
    EXPECT_EQ(t.rows.size(), res.log.size());
}

TEST(TrainTd3, TabularEnvReachesNearOptimal) {
    // DP-checkable environment; mean performance over 5 training seeds must
    // reach 95% of the optimum (exact policy evaluation of the induced policy)
    TabularMdp mdp = random_tabular_mdp(4, 2, 0.9, 424242);
    auto vi = value_iteration(mdp);
    double j_star = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) j_star += mdp.init_dist[s] * vi.v[s];
    ASSERT_GT(std::fabs(j_star), 0.5);

    double j_sum = 0.0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        TabularEnv env(mdp, 40);
        TrainConfig cfg = small_config(6000);
        cfg.start_steps = 800;
        cfg.expl_noise = 0.5;  // strong exploration: 4 states need broad replay coverage
        Td3Result res = train_td3(env, cfg, seed);
        PolicyTable pi(mdp.n_states);
        for (int s = 0; s < mdp.n_states; ++s) pi[s] = env.decode_action(res.ac.act(env.one_hot(s)));
        j_sum += exact_performance(mdp, pi);
    }
    double j_mean = j_sum / 5.0;
    EXPECT_GE(j_mean, j_star - 0.05 * std::fabs(j_star));
}

TEST(Finetune, OnPolicyRefitStaysWithinMcNoise) {
    SsdpSpec spec = bandit_spec(0.1);
    SsdpEnv env(spec, 1);
    Td3Result res = train_td3(env, small_config(5000), 31);
    PolicyFn self = [&res](const Vec& s) { return res.ac.act(s); };
    FinetuneConfig fcfg;
    fcfg.epochs = 40;
    FinetuneResult fr = finetune_q_montecarlo(res.ac, spec, self, 64, 101, fcfg);
    EXPECT_EQ(fr.n_pairs, 64u);
    EXPECT_GT(fr.mean_mc_se, 0.0);
    EXPECT_LE(fr.mean_abs_dq, 2.0 * fr.mean_mc_se + 0.02);
}

TEST(Finetune, RejectsZeroRollouts) {
    SsdpEnv env(bandit_spec(), 1);
    Td3Result res = train_td3(env, small_config(200), 1);
    PolicyFn self = [&res](const Vec& s) { return res.ac.act(s); };
    EXPECT_THROW(finetune_q_montecarlo(res.ac, bandit_spec(), self, 0, 1), contract_violation);
}

TEST(FitAdvantage, ConstantAndContradictoryTargets) {
    std::vector<AdvantageSample> data;
    Rng rng(8);
    for (int i = 0; i < 64; ++i) data.push_back({{rng.uniform(-1.0, 1.0)}, {rng.uniform(-1.0, 1.0)}, 0.7});
    FitConfig cfg;
    cfg.hidden = {16, 16};
    cfg.epochs = 600;
    FitResult fit = fit_advantage_estimator(data, cfg, 3);
    EXPECT_LE(fit.mse, 1e-3);
    for (const AdvantageSample& d : data) {
        Vec in = d.s;
        in.insert(in.end(), d.a.begin(), d.a.end());
        EXPECT_NEAR(mlp_forward(fit.net, in)[0], 0.7, 0.05);
    }

    // duplicate inputs with contradictory labels settle at the mean
    std::vector<AdvantageSample> dup;
    for (int i = 0; i < 32; ++i) dup.push_back({{0.2}, {0.4}, i % 2 ? 1.0 : 0.0});
    FitResult fit2 = fit_advantage_estimator(dup, cfg, 4);
    EXPECT_NEAR(mlp_forward(fit2.net, {0.2, 0.4})[0], 0.5, 0.02);
    EXPECT_NEAR(fit2.mse, 0.25, 0.02);

    EXPECT_THROW(fit_advantage_estimator({}, cfg, 0), contract_violation);
}

TEST(TdError, HandValues) {
    Mlp vzero = make_zero_mlp({2, 4, 1}, Act::tanh_act);
    EXPECT_DOUBLE_EQ(td_error(vzero, {0.0, 0.0}, 1.0, {1.0, 1.0}, 0.9), 1.0);

    Mlp v = make_mlp({1, 8, 1}, Act::tanh_act, 12);
    double vs = mlp_forward(v, {0.3})[0];
    double vn = mlp_forward(v, {0.8})[0];
    EXPECT_DOUBLE_EQ(td_error(v, {0.3}, 0.5, {0.8}, 0.9), 0.5 + 0.9 * vn - vs);
    EXPECT_DOUBLE_EQ(td_error(v, {0.3}, 0.5, {0.8}, 0.9, /*done=*/true), 0.5 - vs);
}

TEST(ActorCriticCheckpoint, RoundTrip) {
    SsdpEnv env(bandit_spec(), 1);
    Td3Result res = train_td3(env, small_config(400), 15);
    const std::string path = "ac_ckpt.txt";
    save_actor_critic(res.ac, path);
    ActorCritic back = load_actor_critic(path);
    std::remove(path.c_str());
    EXPECT_EQ(back.action_lo, res.ac.action_lo);
    EXPECT_EQ(back.act({0.0}), res.ac.act({0.0}));
    EXPECT_EQ(back.q_value(back.critic_q1, {0.0}, {0.3}), res.ac.q_value(res.ac.critic_q1, {0.0}, {0.3}));
    EXPECT_EQ(back.v_value({0.0}), res.ac.v_value({0.0}));
}
