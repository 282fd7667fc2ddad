#pragma once

// Seeded generators for finite test models: random tabular MDPs, random
// policies, and random finite SSDPs (integer-coded states/actions, finite
// iid exogenous support). The SSDPs discretize exactly on integer grids, so
// DP on the discretization is DP on the process itself.

#include <cmath>
#include <vector>

#include "voisim/discretize.hpp"
#include "voisim/ssdp.hpp"
#include "voisim/tabular.hpp"

namespace voisim {

inline TabularMdp random_tabular_mdp(int n_states, int n_actions, double gamma, uint64_t seed,
                                     int branch = 3) {
    require(n_states >= 1 && n_actions >= 1, "random_tabular_mdp: empty model");
    require(branch >= 1, "random_tabular_mdp: branch must be >= 1");
    Rng rng(seed);
    TabularMdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = gamma;
    m.trans.assign(static_cast<size_t>(n_states) * n_actions, {});
    m.reward.assign(static_cast<size_t>(n_states) * n_actions, 0.0);
    const int b = std::min(branch, n_states);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            std::vector<int> succ;
            while (static_cast<int>(succ.size()) < b) {
                int cand = static_cast<int>(rng.randint(n_states));
                if (std::find(succ.begin(), succ.end(), cand) == succ.end()) succ.push_back(cand);
            }
            Vec p(b);
            double tot = 0.0;
            for (int j = 0; j < b; ++j) tot += (p[j] = -std::log(1.0 - rng.uniform()));
            auto& row = m.trans[m.idx(s, a)];
            for (int j = 0; j < b; ++j) row.emplace_back(succ[j], p[j] / tot);
            m.reward[m.idx(s, a)] = rng.uniform(-1.0, 1.0);
        }
    }
    m.init_dist.assign(n_states, 0.0);
    double tot = 0.0;
    for (int s = 0; s < n_states; ++s) tot += (m.init_dist[s] = -std::log(1.0 - rng.uniform()));
    for (double& p : m.init_dist) p /= tot;
    m.validate();
    return m;
}

inline PolicyTable random_policy(const TabularMdp& mdp, uint64_t seed) {
    Rng rng(seed);
    PolicyTable pi(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) pi[s] = static_cast<int>(rng.randint(mdp.n_actions));
    return pi;
}

inline StochasticPolicy random_stochastic_policy(const TabularMdp& mdp, uint64_t seed) {
    Rng rng(seed);
    StochasticPolicy pi(mdp.n_states, Vec(mdp.n_actions, 0.0));
    for (int s = 0; s < mdp.n_states; ++s) {
        double tot = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) tot += (pi[s][a] = -std::log(1.0 - rng.uniform()));
        for (int a = 0; a < mdp.n_actions; ++a) pi[s][a] /= tot;
    }
    return pi;
}

// Edges that put each integer 0..n-1 at the center of its own cell.
inline Vec integer_edges(int n) { return uniform_edges(-0.5, n - 0.5, n); }

// Finite SSDP with deterministic next-state table s' = T[s][a][w] and finite
// iid exogenous support, so the exogenous draw genuinely moves the dynamics.
inline SsdpSpec random_finite_ssdp(int n_s, int n_a, int n_w, double gamma, uint64_t seed) {
    require(n_s >= 1 && n_a >= 1 && n_w >= 1, "random_finite_ssdp: empty model");
    Rng rng(seed);
    auto table = std::make_shared<std::vector<int>>(static_cast<size_t>(n_s) * n_a * n_w);
    auto rtab = std::make_shared<Vec>(static_cast<size_t>(n_s) * n_a * n_w);
    for (size_t i = 0; i < table->size(); ++i) {
        (*table)[i] = static_cast<int>(rng.randint(n_s));
        (*rtab)[i] = rng.uniform(-1.0, 1.0);
    }
    auto at = [n_a, n_w](int s, int a, int w) {
        return (static_cast<size_t>(s) * n_a + a) * n_w + w;
    };
    auto decode = [](double x, int n, const char* what) {
        int v = static_cast<int>(std::llround(x));
        require(std::abs(x - v) < 1e-9 && v >= 0 && v < n, what);
        return v;
    };

    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = gamma;
    spec.action_lo = {0.0};
    spec.action_hi = {static_cast<double>(n_a - 1)};
    spec.transition = [table, at, decode, n_s, n_a, n_w](const Vec& s, const Vec& a, const Vec& w) {
        int si = decode(s[0], n_s, "random_finite_ssdp: non-integer state");
        int ai = decode(a[0], n_a, "random_finite_ssdp: non-integer action");
        int wi = decode(w[0], n_w, "random_finite_ssdp: non-integer exogenous value");
        return Vec{static_cast<double>((*table)[at(si, ai, wi)])};
    };
    spec.reward = [rtab, at, decode, n_s, n_a, n_w](const Vec& s, const Vec& a, const Vec& w) {
        int si = decode(s[0], n_s, "random_finite_ssdp: non-integer state");
        int ai = decode(a[0], n_a, "random_finite_ssdp: non-integer action");
        int wi = decode(w[0], n_w, "random_finite_ssdp: non-integer exogenous value");
        return (*rtab)[at(si, ai, wi)];
    };

    std::vector<Vec> outcomes(n_w);
    Vec probs(n_w);
    double tot = 0.0;
    for (int j = 0; j < n_w; ++j) {
        outcomes[j] = {static_cast<double>(j)};
        tot += (probs[j] = -std::log(1.0 - rng.uniform()));
    }
    for (double& p : probs) p /= tot;
    spec.exo = ExoProcess::make_iid(outcomes, probs);

    spec.init_support.clear();
    spec.init_probs.assign(n_s, 0.0);
    tot = 0.0;
    for (int s = 0; s < n_s; ++s) {
        spec.init_support.push_back({static_cast<double>(s)});
        tot += (spec.init_probs[s] = -std::log(1.0 - rng.uniform()));
    }
    for (double& p : spec.init_probs) p /= tot;
    spec.validate();
    return spec;
}

}  // namespace voisim
