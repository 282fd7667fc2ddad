#include <gtest/gtest.h>

#include "voisim/discretize.hpp"
#include "voisim/random_models.hpp"

using namespace voisim;

namespace {

SsdpSpec const_spec(double reward_value) {
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.9;
    spec.transition = [](const Vec&, const Vec&, const Vec&) { return Vec{0.0}; };
    spec.reward = [reward_value](const Vec&, const Vec&, const Vec&) { return reward_value; };
    spec.exo = ExoProcess::make_iid({{0.0}}, {1.0});
    spec.init_support = {{0.0}};
    spec.init_probs = {1.0};
    return spec;
}

}  // namespace

TEST(MultiGrid, CellLookupAndCenters) {
    MultiGrid g;
    g.axes = {uniform_edges(0.0, 1.0, 4), {-1.0, 0.0, 1.0}};
    g.validate();
    EXPECT_EQ(g.n_cells(), 8);
    bool clipped = false;
    EXPECT_EQ(g.axis_cell(0, 0.1, &clipped), 0);
    EXPECT_EQ(g.axis_cell(0, 0.25, &clipped), 1);  // interior edge goes right
    EXPECT_EQ(g.axis_cell(0, 1.0, &clipped), 3);   // top edge stays inside
    EXPECT_FALSE(clipped);
    EXPECT_EQ(g.axis_cell(0, -0.5, &clipped), 0);
    EXPECT_TRUE(clipped);
    clipped = false;
    EXPECT_EQ(g.axis_cell(0, 2.0, &clipped), 3);
    EXPECT_TRUE(clipped);

    for (long i = 0; i < g.n_cells(); ++i) {
        Vec c = g.point_of(i);
        EXPECT_EQ(g.index_of(c), i);
    }
    EXPECT_THROW(g.index_of({0.5}), contract_violation);

    MultiGrid bad;
    bad.axes = {{0.0}};
    EXPECT_THROW(bad.validate(), contract_violation);
}

TEST(Discretize, OneStateOneAction) {
    auto d = discretize(const_spec(1.0), {{-0.5, 0.5}}, {{-0.5, 0.5}}, 1, 0);
    ASSERT_EQ(d.mdp.n_states, 1);
    ASSERT_EQ(d.mdp.n_actions, 1);
    ASSERT_EQ(d.mdp.trans[0].size(), 1u);
    EXPECT_EQ(d.mdp.trans[0][0].first, 0);
    EXPECT_DOUBLE_EQ(d.mdp.trans[0][0].second, 1.0);
    EXPECT_DOUBLE_EQ(d.mdp.reward[0], 1.0);
    EXPECT_EQ(d.clipped_transitions, 0);
}

TEST(Discretize, DeterministicSpecGivesOneHotRows) {
    SsdpSpec spec = random_finite_ssdp(6, 2, 1, 0.95, 31);
    auto d = discretize(spec, {integer_edges(6)}, {integer_edges(2)}, 1, 0);
    for (const auto& row : d.mdp.trans) {
        ASSERT_EQ(row.size(), 1u);
        EXPECT_DOUBLE_EQ(row[0].second, 1.0);
    }
}

TEST(Discretize, ExactFiniteExoProbabilities) {
    // next state = exogenous value, so P rows equal the exo distribution
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.9;
    spec.transition = [](const Vec&, const Vec&, const Vec& w) { return Vec{w[0]}; };
    spec.reward = [](const Vec&, const Vec&, const Vec& w) { return w[0]; };
    spec.exo = ExoProcess::make_iid({{0.0}, {1.0}}, {0.3, 0.7});
    spec.init_support = {{0.0}};
    spec.init_probs = {1.0};
    auto d = discretize(spec, {integer_edges(2)}, {integer_edges(1)}, 1, 0);
    for (int s = 0; s < 2; ++s) {
        const auto& row = d.mdp.trans[d.mdp.idx(s, 0)];
        ASSERT_EQ(row.size(), 2u);
        EXPECT_DOUBLE_EQ(row[0].second, 0.3);
        EXPECT_DOUBLE_EQ(row[1].second, 0.7);
        EXPECT_DOUBLE_EQ(d.mdp.reward[d.mdp.idx(s, 0)], 0.7);
    }
}

TEST(Discretize, ClipsAndCountsOutOfGridTransitions) {
    SsdpSpec spec = const_spec(0.0);
    spec.transition = [](const Vec& s, const Vec&, const Vec&) { return Vec{s[0] + 10.0}; };
    auto d = discretize(spec, {{-0.5, 0.5, 1.5}}, {{-0.5, 0.5}}, 1, 0);
    EXPECT_GT(d.clipped_transitions, 0);
    for (int s = 0; s < d.mdp.n_states; ++s) {
        const auto& row = d.mdp.trans[d.mdp.idx(s, 0)];
        ASSERT_EQ(row.size(), 1u);
        EXPECT_EQ(row[0].first, 1);  // clipped into the top cell
    }
}

TEST(Discretize, SampledExoRowsAreStochastic) {
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = 0.9;
    spec.transition = [](const Vec& s, const Vec& a, const Vec& w) {
        return Vec{clamp(s[0] + a[0] + w[0], -1.0, 1.0)};
    };
    spec.reward = [](const Vec& s, const Vec&, const Vec&) { return -s[0] * s[0]; };
    spec.exo = ExoProcess::make_iid_sampler([](Rng& r) { return Vec{r.normal() * 0.1}; }, 1);
    spec.init_sampler = [](Rng& r) { return Vec{r.uniform(-1.0, 1.0)}; };
    auto d = discretize(spec, {uniform_edges(-1.0, 1.0, 9)}, {uniform_edges(-0.5, 0.5, 3)}, 64, 2024);
    for (int s = 0; s < d.mdp.n_states; ++s) {
        for (int a = 0; a < d.mdp.n_actions; ++a) {
            double sum = 0.0;
            for (auto [sn, p] : d.mdp.trans[d.mdp.idx(s, a)]) sum += p;
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
    double isum = 0.0;
    for (double p : d.mdp.init_dist) isum += p;
    EXPECT_NEAR(isum, 1.0, 1e-12);
    // deterministic in the seed
    auto d2 = discretize(spec, {uniform_edges(-1.0, 1.0, 9)}, {uniform_edges(-0.5, 0.5, 3)}, 64, 2024);
    EXPECT_EQ(d.mdp.reward, d2.mdp.reward);
}

TEST(Discretize, InitSnapping) {
    SsdpSpec spec = const_spec(0.0);
    spec.init_support = {{0.2}, {0.9}};
    spec.init_probs = {0.25, 0.75};
    auto d = discretize(spec, {integer_edges(2)}, {{-0.5, 0.5}}, 1, 0);
    EXPECT_DOUBLE_EQ(d.mdp.init_dist[0], 0.25);
    EXPECT_DOUBLE_EQ(d.mdp.init_dist[1], 0.75);
}

TEST(Discretize, RejectsBadArguments) {
    SsdpSpec spec = const_spec(0.0);
    EXPECT_THROW(discretize(spec, {}, {{-0.5, 0.5}}, 1, 0), contract_violation);
    EXPECT_THROW(discretize(spec, {{-0.5, 0.5}}, {}, 1, 0), contract_violation);
    SsdpSpec cont = const_spec(0.0);
    cont.exo = ExoProcess::make_iid_sampler([](Rng& r) { return Vec{r.normal()}; }, 1);
    EXPECT_THROW(discretize(cont, {{-0.5, 0.5}}, {{-0.5, 0.5}}, 0, 0), contract_violation);
}
