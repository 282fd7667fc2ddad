#pragma once

// Exact tabular oracle: enumerated MDPs with sparse transition rows, value
// iteration, exact policy evaluation, Q/advantage tables, policy performance
// and the occupancy-weighted performance-difference identity.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "voisim/common.hpp"
#include "voisim/csv.hpp"
#include "voisim/linalg.hpp"

namespace voisim {

// Deterministic policy: action index per state.
using PolicyTable = std::vector<int>;
// Stochastic policy: distribution over actions per state.
using StochasticPolicy = std::vector<Vec>;

struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.9;
    // trans[s*n_actions + a] lists (next_state, probability); rows sum to 1.
    std::vector<std::vector<std::pair<int, double>>> trans;
    // Expected immediate reward per (s, a).
    Vec reward;
    Vec init_dist;

    size_t idx(int s, int a) const { return static_cast<size_t>(s) * n_actions + a; }

    void validate() const {
        require(n_states >= 1 && n_actions >= 1, "TabularMdp: empty state or action set");
        require(gamma >= 0.0 && gamma <= 1.0, "TabularMdp: gamma outside [0,1]");
        require(trans.size() == static_cast<size_t>(n_states) * n_actions,
                "TabularMdp: transition row count mismatch");
        require(reward.size() == trans.size(), "TabularMdp: reward size mismatch");
        require(init_dist.size() == static_cast<size_t>(n_states), "TabularMdp: init_dist size mismatch");
        for (int s = 0; s < n_states; ++s) {
            for (int a = 0; a < n_actions; ++a) {
                double sum = 0.0;
                for (auto [sn, p] : trans[idx(s, a)]) {
                    require(sn >= 0 && sn < n_states, "TabularMdp: next state out of range");
                    require(p >= 0.0, "TabularMdp: negative transition probability");
                    sum += p;
                }
                require(std::fabs(sum - 1.0) <= 1e-12, "TabularMdp: transition row does not sum to 1");
            }
        }
        double isum = 0.0;
        for (double p : init_dist) {
            require(p >= 0.0, "TabularMdp: negative init probability");
            isum += p;
        }
        require(std::fabs(isum - 1.0) <= 1e-12, "TabularMdp: init_dist does not sum to 1");
    }
};

struct ValueIterationResult {
    Vec v;
    PolicyTable policy;
    int sweeps = 0;
    double residual = 0.0;
};

// Optimal values and greedy policy; ties broken by lowest action index so the
// argmax is deterministic. Stops at sup-norm Bellman residual <= tol.
inline ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-12,
                                            int max_sweeps = 1000000) {
    mdp.validate();
    require(tol > 0.0, "value_iteration: tol must be positive");
    require(mdp.gamma < 1.0, "value_iteration: gamma must be < 1 for unbounded horizon");
    ValueIterationResult out;
    out.v.assign(mdp.n_states, 0.0);
    out.policy.assign(mdp.n_states, 0);
    Vec next(mdp.n_states, 0.0);
    for (out.sweeps = 1; out.sweeps <= max_sweeps; ++out.sweeps) {
        double res = 0.0;
        for (int s = 0; s < mdp.n_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int best_a = 0;
            for (int a = 0; a < mdp.n_actions; ++a) {
                double q = mdp.reward[mdp.idx(s, a)];
                for (auto [sn, p] : mdp.trans[mdp.idx(s, a)]) q += mdp.gamma * p * out.v[sn];
                if (q > best) {
                    best = q;
                    best_a = a;
                }
            }
            next[s] = best;
            out.policy[s] = best_a;
            res = std::max(res, std::fabs(next[s] - out.v[s]));
        }
        out.v.swap(next);
        out.residual = res;
        if (res <= tol) break;
    }
    return out;
}

inline StochasticPolicy to_stochastic(const TabularMdp& mdp, const PolicyTable& pi) {
    require(pi.size() == static_cast<size_t>(mdp.n_states), "policy size mismatch");
    StochasticPolicy out(mdp.n_states, Vec(mdp.n_actions, 0.0));
    for (int s = 0; s < mdp.n_states; ++s) {
        require(pi[s] >= 0 && pi[s] < mdp.n_actions, "policy action out of range");
        out[s][pi[s]] = 1.0;
    }
    return out;
}

namespace detail {

inline void check_policy(const TabularMdp& mdp, const StochasticPolicy& pi) {
    require(pi.size() == static_cast<size_t>(mdp.n_states), "policy size mismatch");
    for (const auto& row : pi) {
        require(row.size() == static_cast<size_t>(mdp.n_actions), "policy row size mismatch");
        double s = 0.0;
        for (double p : row) {
            require(p >= 0.0, "policy has negative probability");
            s += p;
        }
        require(std::fabs(s - 1.0) <= 1e-9, "policy row does not sum to 1");
    }
}

// Dense P_pi (row i = distribution of next state under pi from state i) and
// r_pi (expected one-step reward under pi).
inline void policy_chain(const TabularMdp& mdp, const StochasticPolicy& pi, Mat& p_pi, Vec& r_pi) {
    const int n = mdp.n_states;
    p_pi = Mat(n, n, 0.0);
    r_pi.assign(n, 0.0);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            double w = pi[s][a];
            if (w == 0.0) continue;
            r_pi[s] += w * mdp.reward[mdp.idx(s, a)];
            for (auto [sn, p] : mdp.trans[mdp.idx(s, a)]) p_pi(s, sn) += w * p;
        }
    }
}

}  // namespace detail

// Exact v_pi. Dense linear solve (I - gamma P_pi) v = r_pi below
// `dense_limit` states; iterative fixed-point refinement above.
inline Vec policy_evaluation(const TabularMdp& mdp, const StochasticPolicy& pi,
                             double tol = 1e-13, int dense_limit = 5000) {
    mdp.validate();
    detail::check_policy(mdp, pi);
    require(mdp.gamma < 1.0, "policy_evaluation: gamma must be < 1");
    const int n = mdp.n_states;
    Mat p_pi;
    Vec r_pi;
    detail::policy_chain(mdp, pi, p_pi, r_pi);
    if (n <= dense_limit) {
        Mat A(n, n, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) A(i, j) = (i == j ? 1.0 : 0.0) - mdp.gamma * p_pi(i, j);
        }
        return solve_dense(std::move(A), r_pi);
    }
    Vec v(n, 0.0), next(n, 0.0);
    for (int it = 0; it < 10000000; ++it) {
        double res = 0.0;
        for (int i = 0; i < n; ++i) {
            double x = r_pi[i];
            for (int j = 0; j < n; ++j) x += mdp.gamma * p_pi(i, j) * v[j];
            next[i] = x;
            res = std::max(res, std::fabs(next[i] - v[i]));
        }
        v.swap(next);
        if (res <= tol) break;
    }
    return v;
}

inline Vec policy_evaluation(const TabularMdp& mdp, const PolicyTable& pi, double tol = 1e-13) {
    return policy_evaluation(mdp, to_stochastic(mdp, pi), tol);
}

// Q(s,a) = R[s,a] + gamma * sum_s' P[s,a,s'] V(s').
inline Mat q_from_v(const TabularMdp& mdp, const Vec& v) {
    require(v.size() == static_cast<size_t>(mdp.n_states), "q_from_v: value table size mismatch");
    Mat q(mdp.n_states, mdp.n_actions, 0.0);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            double x = mdp.reward[mdp.idx(s, a)];
            for (auto [sn, p] : mdp.trans[mdp.idx(s, a)]) x += mdp.gamma * p * v[sn];
            q(s, a) = x;
        }
    }
    return q;
}

// A(s,a) = Q(s,a) - V(s).
inline Mat advantage_table(const Mat& q, const Vec& v) {
    require(q.rows == v.size(), "advantage_table: size mismatch");
    Mat a(q.rows, q.cols, 0.0);
    for (size_t s = 0; s < q.rows; ++s)
        for (size_t i = 0; i < q.cols; ++i) a(s, i) = q(s, i) - v[s];
    return a;
}

// Advantage of policy pi: A_pi = Q_pi - V_pi via exact policy evaluation.
inline Mat advantage_of_policy(const TabularMdp& mdp, const PolicyTable& pi) {
    Vec v = policy_evaluation(mdp, pi);
    return advantage_table(q_from_v(mdp, v), v);
}

// J_pi = sum_s init_dist(s) v_pi(s).
inline double exact_performance(const TabularMdp& mdp, const StochasticPolicy& pi) {
    Vec v = policy_evaluation(mdp, pi);
    double j = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) j += mdp.init_dist[s] * v[s];
    return j;
}

inline double exact_performance(const TabularMdp& mdp, const PolicyTable& pi) {
    return exact_performance(mdp, to_stochastic(mdp, pi));
}

// Unnormalized discounted occupancy d = (I - gamma P_pi^T)^{-1} init_dist,
// i.e. d(s) = sum_k gamma^k Pr(S_k = s | pi, init).
inline Vec occupancy(const TabularMdp& mdp, const StochasticPolicy& pi) {
    mdp.validate();
    detail::check_policy(mdp, pi);
    require(mdp.gamma < 1.0, "occupancy: gamma must be < 1");
    const int n = mdp.n_states;
    Mat p_pi;
    Vec r_pi;
    detail::policy_chain(mdp, pi, p_pi, r_pi);
    Mat A(n, n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = (i == j ? 1.0 : 0.0) - mdp.gamma * p_pi(j, i);
    return solve_dense(std::move(A), mdp.init_dist);
}

struct PerformanceDifference {
    double j_inf = 0.0;
    double j_sup = 0.0;
    double j_diff = 0.0;           // J_inf - J_sup
    double occ_weighted_adv = 0.0; // sum_s d_inf(s) sum_a pi_inf(a|s) A_sup(s,a)
};

// Performance-difference identity: J_inf - J_sup equals the discounted
// occupancy (of pi_inf) weighted advantage of pi_sup at pi_inf's actions.
// Both sides are computed exactly and must agree to solver precision.
inline PerformanceDifference performance_difference(const TabularMdp& mdp,
                                                    const StochasticPolicy& pi_inf,
                                                    const StochasticPolicy& pi_sup) {
    require(mdp.gamma < 1.0, "performance_difference: gamma must be < 1");
    PerformanceDifference out;
    Vec v_inf = policy_evaluation(mdp, pi_inf);
    Vec v_sup = policy_evaluation(mdp, pi_sup);
    for (int s = 0; s < mdp.n_states; ++s) {
        out.j_inf += mdp.init_dist[s] * v_inf[s];
        out.j_sup += mdp.init_dist[s] * v_sup[s];
    }
    out.j_diff = out.j_inf - out.j_sup;
    Mat a_sup = advantage_table(q_from_v(mdp, v_sup), v_sup);
    Vec d = occupancy(mdp, pi_inf);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            if (pi_inf[s][a] != 0.0) out.occ_weighted_adv += d[s] * pi_inf[s][a] * a_sup(s, a);
        }
    }
    return out;
}

inline PerformanceDifference performance_difference(const TabularMdp& mdp, const PolicyTable& pi_inf,
                                                    const PolicyTable& pi_sup) {
    return performance_difference(mdp, to_stochastic(mdp, pi_inf), to_stochastic(mdp, pi_sup));
}

// ---------------------------------------------------------------------------
// Textual import/export: CSV blocks for P (sparse triplets), R and init_dist,
// meant for cross-implementation diffing. Round-trips doubles exactly.

inline void export_tabular_mdp(const TabularMdp& mdp, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "export_tabular_mdp: cannot open " + path);
    out << "# tabular-mdp v1\n";
    out << "# meta: n_states,n_actions,gamma\n";
    out << mdp.n_states << ',' << mdp.n_actions << ',' << format_double(mdp.gamma) << '\n';
    out << "# P: s,a,s_next,prob\n";
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (auto [sn, p] : mdp.trans[mdp.idx(s, a)])
                out << s << ',' << a << ',' << sn << ',' << format_double(p) << '\n';
    out << "# R: s,a,r\n";
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            out << s << ',' << a << ',' << format_double(mdp.reward[mdp.idx(s, a)]) << '\n';
    out << "# init: s,p\n";
    for (int s = 0; s < mdp.n_states; ++s) out << s << ',' << format_double(mdp.init_dist[s]) << '\n';
}

inline TabularMdp import_tabular_mdp(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "import_tabular_mdp: cannot open " + path);
    TabularMdp mdp;
    std::string line;
    enum class Section { none, meta, p, r, init } sec = Section::none;
    bool have_meta = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.find("meta:") != std::string::npos) sec = Section::meta;
            else if (line.find("P:") != std::string::npos) sec = Section::p;
            else if (line.find("R:") != std::string::npos) sec = Section::r;
            else if (line.find("init:") != std::string::npos) sec = Section::init;
            continue;
        }
        auto cells = split_csv_line(line);
        switch (sec) {
            case Section::meta: {
                require(cells.size() == 3, "import_tabular_mdp: malformed meta row");
                mdp.n_states = static_cast<int>(parse_double(cells[0], "meta"));
                mdp.n_actions = static_cast<int>(parse_double(cells[1], "meta"));
                mdp.gamma = parse_double(cells[2], "meta");
                mdp.trans.assign(static_cast<size_t>(mdp.n_states) * mdp.n_actions, {});
                mdp.reward.assign(mdp.trans.size(), 0.0);
                mdp.init_dist.assign(mdp.n_states, 0.0);
                have_meta = true;
                break;
            }
            case Section::p: {
                require(have_meta && cells.size() == 4, "import_tabular_mdp: malformed P row");
                int s = static_cast<int>(parse_double(cells[0], "P"));
                int a = static_cast<int>(parse_double(cells[1], "P"));
                int sn = static_cast<int>(parse_double(cells[2], "P"));
                mdp.trans[mdp.idx(s, a)].emplace_back(sn, parse_double(cells[3], "P"));
                break;
            }
            case Section::r: {
                require(have_meta && cells.size() == 3, "import_tabular_mdp: malformed R row");
                int s = static_cast<int>(parse_double(cells[0], "R"));
                int a = static_cast<int>(parse_double(cells[1], "R"));
                mdp.reward[mdp.idx(s, a)] = parse_double(cells[2], "R");
                break;
            }
            case Section::init: {
                require(have_meta && cells.size() == 2, "import_tabular_mdp: malformed init row");
                int s = static_cast<int>(parse_double(cells[0], "init"));
                mdp.init_dist[s] = parse_double(cells[1], "init");
                break;
            }
            case Section::none:
                throw contract_violation("import_tabular_mdp: data before any section header");
        }
    }
    require(have_meta, "import_tabular_mdp: missing meta section");
    mdp.validate();
    return mdp;
}

}  // namespace voisim
