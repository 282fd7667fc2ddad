#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "voisim/env.hpp"
#include "voisim/random_models.hpp"
#include "voisim/voi.hpp"

using namespace voisim;

namespace {

int as_int(const Vec& v) { return static_cast<int>(std::llround(v[0])); }

// Exact critic access for an integer-coded tabular policy pair.
struct TabularPair {
    TabularMdp mdp;
    PolicyTable pi_inf;
    PolicyTable pi_sup;
    Vec v;
    Mat q;
    Mat adv;
    PolicyPair pair;
};

TabularPair make_tabular_pair(uint64_t seed, int n_states = 5, int n_actions = 3, double gamma = 0.9) {
    TabularPair tp;
    tp.mdp = random_tabular_mdp(n_states, n_actions, gamma, seed);
    auto vi = value_iteration(tp.mdp);
    tp.pi_sup = vi.policy;
    tp.pi_inf = random_policy(tp.mdp, derive_seed(seed, 5));
    tp.v = policy_evaluation(tp.mdp, to_stochastic(tp.mdp, tp.pi_sup));
    tp.q = q_from_v(tp.mdp, tp.v);
    tp.adv = advantage_table(tp.q, tp.v);
    tp.pair.pi_inf = policy_fn_from_table(tp.pi_inf);
    tp.pair.pi_sup = policy_fn_from_table(tp.pi_sup);
    Mat q = tp.q;
    tp.pair.q_sup = [q](const Vec& s, const Vec& a) { return q(as_int(s), as_int(a)); };
    Vec v = tp.v;
    tp.pair.v_sup = [v](const Vec& s) { return v[as_int(s)]; };
    return tp;
}

}  // namespace

TEST(Evoi, SubtractionAndDpAgreement) {
    EXPECT_EQ(evoi(-4.0, -4.0), 0.0);
    EXPECT_EQ(evoi(-5.0, -2.0), -3.0);

    TabularPair tp = make_tabular_pair(21);
    double j_inf = exact_performance(tp.mdp, tp.pi_inf);
    double j_sup = exact_performance(tp.mdp, tp.pi_sup);
    PerformanceDifference pd = performance_difference(tp.mdp, tp.pi_inf, tp.pi_sup);
    EXPECT_EQ(evoi(j_inf, j_sup), pd.j_diff);
}

TEST(EvoiMontecarlo, IdenticalPoliciesGiveExactZero) {
    TabularPair tp = make_tabular_pair(3);
    SsdpSpec spec = mdp_as_ssdp(tp.mdp);
    PolicyPair same;
    same.pi_inf = tp.pair.pi_sup;
    same.pi_sup = tp.pair.pi_sup;
    VoiRecord rec = evoi_montecarlo(spec, same, 20, 99);
    EXPECT_EQ(rec.value, 0.0);
    EXPECT_EQ(rec.ci_lo, 0.0);  // paired runs share every draw, zero-width CI
    EXPECT_EQ(rec.ci_hi, 0.0);
    EXPECT_TRUE(rec.has_ci);
    EXPECT_THROW(evoi_montecarlo(spec, same, 1, 99), contract_violation);
}

TEST(EvoiMontecarlo, DeterministicEnvZeroWidthCi) {
    // one action-independent reward per action value, no randomness anywhere
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.5;
    spec.horizon = 4;
    spec.transition = [](const Vec& s, const Vec&, const Vec&) { return s; };
    spec.reward = [](const Vec&, const Vec& a, const Vec&) { return a[0]; };
    spec.exo = ExoProcess::make_iid({{0.0}}, {1.0});
    spec.init_support = {{0.0}};
    spec.init_probs = {1.0};
    PolicyPair pair;
    pair.pi_inf = [](const Vec&) -> Vec { return {0.25}; };
    pair.pi_sup = [](const Vec&) -> Vec { return {1.0}; };
    VoiRecord rec = evoi_montecarlo(spec, pair, 8, 1);
    // geometric sum of (0.25 - 1.0) over 4 steps at gamma 0.5: -0.75 * 1.875
    EXPECT_NEAR(rec.value, -1.40625, 1e-12);
    EXPECT_EQ(rec.ci_lo, rec.ci_hi);
}

TEST(EvoiMontecarlo, CiCoversExactDifference) {
    TabularMdp mdp = random_tabular_mdp(5, 2, 0.8, 77);
    auto vi = value_iteration(mdp);
    PolicyTable pi_inf = random_policy(mdp, 3);
    double exact = exact_performance(mdp, pi_inf) - exact_performance(mdp, vi.policy);
    SsdpSpec spec = mdp_as_ssdp(mdp);
    PolicyPair pair;
    pair.pi_inf = policy_fn_from_table(pi_inf);
    pair.pi_sup = policy_fn_from_table(vi.policy);
    int covered = 0;
    for (uint64_t rep = 1; rep <= 100; ++rep) {
        VoiRecord rec = evoi_montecarlo(spec, pair, 100, derive_seed(909, rep));
        if (rec.ci_lo <= exact && exact <= rec.ci_hi) ++covered;
    }
    EXPECT_GE(covered, 93);
}

TEST(Ivoi, MatchesAdvantageTableExactly) {
    TabularPair tp = make_tabular_pair(11);
    for (int s = 0; s < tp.mdp.n_states; ++s) {
        Vec sv{static_cast<double>(s)};
        EXPECT_NEAR(ivoi(tp.pair, sv), tp.adv(s, tp.pi_inf[s]), 1e-12);
    }
    // the reference action itself has zero advantage
    PolicyPair self = tp.pair;
    self.pi_inf = tp.pair.pi_sup;
    for (int s = 0; s < tp.mdp.n_states; ++s) {
        EXPECT_NEAR(ivoi(self, {static_cast<double>(s)}), 0.0, 1e-10);
    }
}

TEST(Ivoi, MissingCriticNamesAlternatives) {
    PolicyPair bare;
    bare.pi_inf = [](const Vec&) -> Vec { return {0.0}; };
    try {
        ivoi(bare, {0.0});
        FAIL() << "expected contract_violation";
    } catch (const contract_violation& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("critic"), std::string::npos);
        EXPECT_NE(msg.find("ivoi_fit_montecarlo"), std::string::npos);
    }
}

TEST(IvoiFitMontecarlo, IdenticalPoliciesLabelZero) {
    TabularPair tp = make_tabular_pair(7, 4, 2);
    SsdpSpec spec = mdp_as_ssdp(tp.mdp);
    PolicyPair same;
    same.pi_inf = tp.pair.pi_sup;
    same.pi_sup = tp.pair.pi_sup;
    IvoiFitConfig cfg;
    cfg.fit_estimator = false;
    IvoiFitResult res = ivoi_fit_montecarlo(spec, same, 10, 3, 5, cfg);
    ASSERT_EQ(res.data.size(), 10u);
    for (const auto& d : res.data) EXPECT_EQ(d.target, 0.0);  // paired seeds cancel exactly
    EXPECT_EQ(res.mean_label_se, 0.0);
}

TEST(IvoiFitMontecarlo, LabelsAgreeWithAdvantageTable) {
    TabularPair tp = make_tabular_pair(13, 4, 2);
    SsdpSpec spec = mdp_as_ssdp(tp.mdp);
    IvoiFitConfig cfg;
    cfg.fit_estimator = false;
    IvoiFitResult res = ivoi_fit_montecarlo(spec, tp.pair, 12, 40, 17, cfg);
    ASSERT_EQ(res.data.size(), 12u);
    double dev_sum = 0.0, var_sum = 0.0;
    for (size_t i = 0; i < res.data.size(); ++i) {
        int s = as_int(res.data[i].s);
        int a = as_int(res.data[i].a);
        double truth = tp.adv(s, a);
        double dev = res.data[i].target - truth;
        // generous per-state band; the pooled statistic below is the real check
        EXPECT_LE(std::fabs(dev), 5.0 * res.label_se[i] + 1e-6) << "state " << s;
        dev_sum += dev;
        var_sum += res.label_se[i] * res.label_se[i];
    }
    double pooled_se = std::sqrt(var_sum) / static_cast<double>(res.data.size());
    EXPECT_LE(std::fabs(dev_sum / static_cast<double>(res.data.size())), 2.0 * pooled_se + 1e-6);

    EXPECT_THROW(ivoi_fit_montecarlo(spec, tp.pair, 0, 4, 1), contract_violation);
}

TEST(IvoiFromCritic, ExactTablesReproduceAdvantage) {
    TabularPair tp = make_tabular_pair(19);
    IvoiFn f = ivoi_from_critic(tp.pair);
    for (int s = 0; s < tp.mdp.n_states; ++s)
        for (int a = 0; a < tp.mdp.n_actions; ++a)
            EXPECT_NEAR(f({static_cast<double>(s)}, {static_cast<double>(a)}), tp.adv(s, a), 1e-12);

    // without a value head the reference action anchors the difference at 0
    PolicyPair no_v = tp.pair;
    no_v.v_sup = nullptr;
    IvoiFn g = ivoi_from_critic(no_v);
    for (int s = 0; s < tp.mdp.n_states; ++s) {
        Vec sv{static_cast<double>(s)};
        EXPECT_EQ(g(sv, {static_cast<double>(tp.pi_sup[s])}), 0.0);
    }
}

TEST(IvoiFromCritic, ZeroCriticsGiveZeroAndMissingCriticThrows) {
    ActorCritic ac;
    ac.actor = make_zero_mlp({2, 4, 1}, Act::tanh_act);
    ac.critic_q1 = make_zero_mlp({3, 4, 1}, Act::tanh_act);
    ac.critic_q2 = make_zero_mlp({3, 4, 1}, Act::tanh_act);
    ac.action_lo = {-1.0};
    ac.action_hi = {1.0};
    IvoiFn f = ivoi_from_critic(ac);
    EXPECT_EQ(f({0.3, -0.2}, {0.7}), 0.0);
    EXPECT_EQ(f({-1.0, 2.0}, {-0.4}), 0.0);

    PolicyPair bare;
    try {
        ivoi_from_critic(bare);
        FAIL() << "expected contract_violation";
    } catch (const contract_violation& e) {
        EXPECT_NE(std::string(e.what()).find("ivoi_td_errors"), std::string::npos);
    }
}

TEST(IvoiTdErrors, HandValuesAndZeroCase) {
    auto v = [](const Vec& s) { return 2.0 * s[0]; };
    std::vector<Transition> steps{
        {{1.0}, {0.0}, 0.5, {2.0}, false},  // 0.5 + 0.9*4 - 2 = 2.1
        {{2.0}, {0.0}, 1.0, {0.0}, true},   // 1.0 - 4 = -3
    };
    Vec d = ivoi_td_errors(v, steps, 0.9);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_NEAR(d[0], 2.1, 1e-12);
    EXPECT_NEAR(d[1], -3.0, 1e-12);

    auto vz = [](const Vec&) { return 0.0; };
    std::vector<Transition> zero{{{0.0}, {0.0}, 0.0, {1.0}, false}, {{1.0}, {0.0}, 0.0, {0.0}, false}};
    for (double x : ivoi_td_errors(vz, zero, 0.9)) EXPECT_EQ(x, 0.0);
}

TEST(IvoiTdErrors, ExoAveragedEqualsAdvantageTable) {
    // integer-coded finite process discretizes exactly, so the tabular values
    // transfer without error and the averaged residual is the advantage
    SsdpSpec spec = random_finite_ssdp(6, 3, 4, 0.9, 23);
    DiscretizeResult d =
        discretize(spec, {uniform_edges(-0.5, 5.5, 6)}, {uniform_edges(-0.5, 2.5, 3)}, 0, 1);
    auto vi = value_iteration(d.mdp);
    StochasticPolicy pi_sup = to_stochastic(d.mdp, vi.policy);
    Vec v = policy_evaluation(d.mdp, pi_sup);
    Mat adv = advantage_table(q_from_v(d.mdp, v), v);
    auto v_fn = [v](const Vec& s) { return v[as_int(s)]; };
    for (int s = 0; s < 6; ++s)
        for (int a = 0; a < 3; ++a)
            EXPECT_NEAR(ivoi_td_exo_averaged(spec, v_fn, {static_cast<double>(s)}, {static_cast<double>(a)}),
                        adv(s, a), 1e-8);
}

TEST(IvoiTdErrors, LowerVarianceThanRolloutLabels) {
    TabularPair tp = make_tabular_pair(31, 6, 2, 0.95);
    SsdpSpec spec = mdp_as_ssdp(tp.mdp);
    // compare at a state where the policies disagree; where they agree the
    // paired label is identically zero and the comparison is vacuous
    int sd = 0;
    while (tp.pi_inf[sd] == tp.pi_sup[sd]) ++sd;
    const Vec s0{static_cast<double>(sd)};
    const Vec a_inf{static_cast<double>(tp.pi_inf[sd])};
    const Vec a_sup{static_cast<double>(tp.pi_sup[sd])};
    const int n = 300;
    const int horizon = detail::effective_horizon(spec);
    Vec td(n), mc(n);
    Rng rng(4);
    for (int i = 0; i < n; ++i) {
        // one-step sample of the TD residual at (s0, a_inf)
        Vec w{rng.uniform()};
        StepResult sr = step(spec, s0, a_inf, w);
        td[i] = sr.reward + spec.gamma * tp.v[as_int(sr.s_next)] - tp.v[sd];
        // single-rollout paired label at the same state-action
        uint64_t rs = derive_seed(555, static_cast<uint64_t>(i));
        mc[i] = detail::forced_start_return(spec, s0, a_inf, tp.pair.pi_sup, horizon, rs) -
                detail::forced_start_return(spec, s0, a_sup, tp.pair.pi_sup, horizon, rs);
    }
    EXPECT_LE(var_of(td), var_of(mc));
    // both estimate the same advantage
    EXPECT_NEAR(mean_of(td), tp.adv(sd, tp.pi_inf[sd]), 5.0 * stderr_of(td));
    EXPECT_NEAR(mean_of(mc), tp.adv(sd, tp.pi_inf[sd]), 5.0 * stderr_of(mc));
}

TEST(KlCategorical, SupportMismatchReportsInfinity) {
    KlResult same = kl_categorical({0.5, 0.5}, {0.5, 0.5});
    EXPECT_EQ(same.value, 0.0);
    EXPECT_FALSE(same.infinite);

    KlResult bad = kl_categorical({0.5, 0.5}, {1.0, 0.0});
    EXPECT_TRUE(bad.infinite);
    EXPECT_TRUE(std::isinf(bad.value));
    EXPECT_NE(bad.note.find("index 1"), std::string::npos);

    KlResult smoothed = kl_categorical({0.5, 0.5}, {1.0, 0.0}, 1e-9);
    EXPECT_FALSE(smoothed.infinite);
    EXPECT_TRUE(std::isfinite(smoothed.value));
}

namespace {

// independent stream: joint transition = T_S(s'|s) * T_I(i'|i), reward by s
JointModel independent_model() {
    JointModel m = JointModel::zeros(2, 2, 1, {0.0, 1.0});
    const double ts[2][2] = {{0.7, 0.3}, {0.4, 0.6}};
    const double ti[2][2] = {{0.5, 0.5}, {0.2, 0.8}};
    const double rp[2][2] = {{1.0, 0.0}, {0.3, 0.7}};
    for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 2; ++i) {
            m.w(s, i, 0) = 0.25;
            for (int sn = 0; sn < 2; ++sn)
                for (int in = 0; in < 2; ++in) m.t(s, i, 0, sn, in) = ts[s][sn] * ti[i][in];
            for (int r = 0; r < 2; ++r) m.rp(s, i, 0, r) = rp[s][r];
        }
    return m;
}

}  // namespace

TEST(Itvoi, IndependentInformationIsZero) {
    ItvoiResult res = itvoi(independent_model());
    EXPECT_FALSE(res.infinite);
    EXPECT_NEAR(res.total, 0.0, 1e-12);
    EXPECT_NEAR(res.kl_transition, 0.0, 1e-12);
    EXPECT_NEAR(res.kl_reward, 0.0, 1e-12);
}

TEST(Itvoi, DeterministicCouplingIsLogTwo) {
    // next base state copies the stream; the stream itself is a fair coin
    JointModel m = JointModel::zeros(2, 2, 1, {0.7});
    for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 2; ++i) {
            m.w(s, i, 0) = 0.25;
            for (int in = 0; in < 2; ++in) m.t(s, i, 0, i, in) = 0.5;
            m.rp(s, i, 0, 0) = 1.0;
        }
    ItvoiResult res = itvoi(m);
    EXPECT_FALSE(res.infinite);
    EXPECT_NEAR(res.total, std::log(2.0), 1e-12);
    EXPECT_NEAR(res.kl_reward, 0.0, 1e-12);
}

TEST(Itvoi, RedundantEchoOfKnownStateIsZero) {
    // the stream's next value duplicates the current (already known) state
    JointModel m = JointModel::zeros(2, 2, 1, {0.0});
    const double ts[2][2] = {{0.6, 0.4}, {0.1, 0.9}};
    for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 2; ++i) {
            m.w(s, i, 0) = 0.25;
            for (int sn = 0; sn < 2; ++sn) m.t(s, i, 0, sn, s) = ts[s][sn];
            m.rp(s, i, 0, 0) = 1.0;
        }
    ItvoiResult res = itvoi(m);
    EXPECT_NEAR(res.total, 0.0, 1e-12);
}

TEST(Itvoi, RewardDependenceCounted) {
    // transition ignores the stream but the reward reveals it
    JointModel m = JointModel::zeros(1, 2, 1, {0.0, 1.0});
    for (int i = 0; i < 2; ++i) {
        m.w(0, i, 0) = 0.5;
        for (int in = 0; in < 2; ++in) m.t(0, i, 0, 0, in) = 0.5;
        m.rp(0, i, 0, i) = 1.0;  // reward equals the stream value
    }
    ItvoiResult res = itvoi(m);
    EXPECT_NEAR(res.kl_transition, 0.0, 1e-12);
    EXPECT_NEAR(res.kl_reward, std::log(2.0), 1e-12);
}

TEST(ConditionalEntropy, TableOracles) {
    // one context, fair coin: ln 2 exactly
    EXPECT_NEAR(conditional_entropy({0.5, 0.5}, 1, 2), std::log(2.0), 1e-12);
    // deterministic per context: zero
    EXPECT_EQ(conditional_entropy({3.0, 0.0, 0.0, 7.0}, 2, 2), 0.0);
    // counts need not be normalized
    EXPECT_NEAR(conditional_entropy({10.0, 10.0}, 1, 2), std::log(2.0), 1e-12);
    EXPECT_THROW(conditional_entropy({0.0, 0.0}, 1, 2), contract_violation);
}

TEST(ItvoiExoEntropy, ConstantStreamIsExactlyZero) {
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.9;
    spec.horizon = 40;
    spec.transition = [](const Vec& s, const Vec&, const Vec&) { return s; };
    spec.reward = [](const Vec&, const Vec&, const Vec&) { return 0.0; };
    spec.exo = ExoProcess::make_iid({{0.5}}, {1.0});
    spec.init_support = {{0.0}};
    spec.init_probs = {1.0};
    InfoEntropyConfig cfg;
    cfg.state_grid = MultiGrid{{uniform_edges(-1.0, 1.0, 1)}};
    cfg.action_grid = MultiGrid{{uniform_edges(-1.0, 1.0, 1)}};
    cfg.w_grid = MultiGrid{{uniform_edges(0.0, 1.0, 4)}};
    cfg.n_episodes = 5;
    VoiRecord rec = itvoi_exo_entropy(spec, [](const Vec&) -> Vec { return {0.0}; }, cfg, 1);
    EXPECT_EQ(rec.value, 0.0);
    EXPECT_EQ(rec.kind, VoiKind::itvoi);
}

TEST(ItvoiExoEntropy, IndependentFairCoinApproachesLogTwo) {
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.9;
    spec.horizon = 100;
    spec.transition = [](const Vec& s, const Vec&, const Vec&) { return s; };
    spec.reward = [](const Vec&, const Vec&, const Vec&) { return 0.0; };
    spec.exo = ExoProcess::make_iid({{-1.0}, {1.0}}, {0.5, 0.5});
    spec.init_support = {{0.0}};
    spec.init_probs = {1.0};
    InfoEntropyConfig cfg;
    cfg.state_grid = MultiGrid{{uniform_edges(-1.0, 1.0, 1)}};
    cfg.action_grid = MultiGrid{{uniform_edges(-1.0, 1.0, 1)}};
    cfg.w_grid = MultiGrid{{uniform_edges(-2.0, 2.0, 2)}};
    cfg.n_episodes = 50;
    VoiRecord rec = itvoi_exo_entropy(spec, [](const Vec&) -> Vec { return {0.0}; }, cfg, 7);
    EXPECT_NEAR(rec.value, std::log(2.0), 0.01);
}

TEST(ItvoiExoEntropy, StreamDeterminedByStateIsZero) {
    // state alternates 0/1 and the stream value equals the state, so each
    // context cell sees a single stream cell
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.9;
    spec.horizon = 50;
    spec.transition = [](const Vec& s, const Vec&, const Vec&) -> Vec { return {1.0 - s[0]}; };
    spec.reward = [](const Vec&, const Vec&, const Vec&) { return 0.0; };
    spec.exo = ExoProcess::make_trace({{0.0}, {1.0}}, /*wrap=*/true);
    spec.init_support = {{0.0}};
    spec.init_probs = {1.0};
    InfoEntropyConfig cfg;
    cfg.state_grid = MultiGrid{{uniform_edges(-0.5, 1.5, 2)}};
    cfg.action_grid = MultiGrid{{uniform_edges(-1.0, 1.0, 1)}};
    cfg.w_grid = MultiGrid{{uniform_edges(-0.5, 1.5, 2)}};
    cfg.n_episodes = 4;
    VoiRecord rec = itvoi_exo_entropy(spec, [](const Vec&) -> Vec { return {0.0}; }, cfg, 2);
    EXPECT_EQ(rec.value, 0.0);
}

TEST(VoiIdentity, ExactPathHoldsOnRandomInstances) {
    for (uint64_t seed = 1; seed <= 100; ++seed) {
        TabularMdp mdp = random_tabular_mdp(20, 3, 0.9, seed);
        StochasticPolicy pi_inf = random_stochastic_policy(mdp, derive_seed(seed, 1));
        StochasticPolicy pi_sup = random_stochastic_policy(mdp, derive_seed(seed, 2));
        VoiIdentityReport rep = voi_identity_check(mdp, pi_inf, pi_sup);
        EXPECT_TRUE(rep.pass) << "seed " << seed << " diff " << rep.abs_diff;
        EXPECT_LE(rep.abs_diff, 1e-8);
        EXPECT_EQ(rep.path, "exact");
    }
}

TEST(VoiIdentity, IdenticalPoliciesBothSidesZero) {
    TabularPair tp = make_tabular_pair(41);
    VoiIdentityReport rep = voi_identity_check(tp.mdp, tp.pi_sup, tp.pi_sup);
    EXPECT_EQ(rep.evoi, 0.0);
    EXPECT_NEAR(rep.cumulative_ivoi, 0.0, 1e-10);
    EXPECT_TRUE(rep.pass);
}

TEST(VoiIdentity, MonteCarloPathWithinTwoSe) {
    TabularPair tp = make_tabular_pair(47, 6, 2, 0.85);
    SsdpSpec spec = mdp_as_ssdp(tp.mdp);
    Mat adv = tp.adv;
    IvoiFn advantage = [adv](const Vec& s, const Vec& a) { return adv(as_int(s), as_int(a)); };
    VoiIdentityReport rep = voi_identity_check_mc(spec, tp.pair, advantage, 400, 13);
    EXPECT_TRUE(rep.pass) << "residual " << rep.abs_diff << " se " << rep.diff_se;
    EXPECT_EQ(rep.path, "monte_carlo");
    EXPECT_GT(rep.diff_se, 0.0);
}

TEST(VoiNonPositivity, OptimalReferenceBoundsBothMetrics) {
    for (uint64_t seed = 60; seed < 80; ++seed) {
        TabularMdp mdp = random_tabular_mdp(6, 3, 0.9, seed);
        auto vi = value_iteration(mdp);
        Vec v = policy_evaluation(mdp, to_stochastic(mdp, vi.policy));
        Mat adv = advantage_table(q_from_v(mdp, v), v);
        PolicyTable pi_inf = random_policy(mdp, derive_seed(seed, 9));
        double gap = evoi(exact_performance(mdp, pi_inf), exact_performance(mdp, vi.policy));
        EXPECT_LE(gap, 1e-10);
        for (int s = 0; s < 6; ++s) {
            EXPECT_NEAR(adv(s, vi.policy[s]), 0.0, 1e-10);  // reference action: zero
            for (int a = 0; a < 3; ++a) EXPECT_LE(adv(s, a), 1e-10);
        }
    }
}

TEST(VoiRecordCsv, ExportShapesAndNames) {
    std::vector<VoiRecord> recs;
    VoiRecord a;
    a.kind = VoiKind::evomi;
    a.value = -3.12;
    a.has_ci = true;
    a.ci_lo = -3.5;
    a.ci_hi = -2.8;
    a.method = VoiMethod::monte_carlo;
    recs.push_back(a);
    VoiRecord b;
    b.kind = VoiKind::ivomi;
    b.value = -0.25;
    b.method = VoiMethod::critic;
    b.k = 7;
    b.state = {1.0, 2.0, 3.0};
    b.action = {0.5};
    recs.push_back(b);
    const std::string path = "voi_records.csv";
    export_voi_csv(recs, path);
    CsvTable t = read_csv(path);
    std::remove(path.c_str());
    EXPECT_EQ(t.header,
              (std::vector<std::string>{"kind", "value", "ci_lo", "ci_hi", "method", "k", "s0", "s1", "s2", "a0"}));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0][0], "EVoMI");
    EXPECT_EQ(t.rows[0][4], "monte_carlo");
    EXPECT_EQ(t.rows[1][0], "IVoMI");
    EXPECT_EQ(t.rows[1][5], "7");
    EXPECT_EQ(t.rows[1][6], "1");
    EXPECT_EQ(parse_double(t.rows[1][9], "a0"), 0.5);
    EXPECT_EQ(t.rows[0][6], "nan");
}
