#pragma once

// Reducibility check: is the decision process Markov in the observed state?
// Two layers:
//   1. structural: the exogenous process is iid and enters only through
//      f^S/r arguments, which is exactly the syntactic reduction condition.
//      When it holds the verdict is affirmative regardless of sampling noise.
//   2. empirical: chi-square homogeneity of the cell-level transition law
//      across previous-state buckets. Rejection (p < 0.01) flags hidden
//      history dependence; acceptance is only evidence, not proof.

#include <map>
#include <vector>

#include "voisim/discretize.hpp"
#include "voisim/ssdp.hpp"
#include "voisim/stats.hpp"

namespace voisim {

struct MarkovReport {
    bool structural_iid = false;   // syntactic condition holds
    bool is_markov = false;        // final verdict
    double chi2_stat = 0.0;
    double p_value = 1.0;
    long dof = 0;
    long n_transitions = 0;        // transitions entering the empirical test
    long n_groups = 0;             // (cell, action) groups tested
    std::string note;
};

namespace detail {

// Chi-square homogeneity of rows (history buckets) x cols (next cells) with
// additive smoothing; sparse groups are skipped to keep the asymptotics sane.
struct Chi2Accum {
    double stat = 0.0;
    long dof = 0;
    long used = 0;

    void add_table(const std::map<int, std::map<int, long>>& table, double alpha) {
        std::map<int, long> col_tot;
        std::map<int, long> row_tot;
        long total = 0;
        for (const auto& [h, row] : table) {
            for (const auto& [c, n] : row) {
                col_tot[c] += n;
                row_tot[h] += n;
                total += n;
            }
        }
        if (row_tot.size() < 2 || col_tot.size() < 2 || total < 25) return;
        const double rows = static_cast<double>(row_tot.size());
        const double cols = static_cast<double>(col_tot.size());
        const double smoothed_total = total + alpha * rows * cols;
        for (const auto& [h, rn] : row_tot) {
            for (const auto& [c, cn] : col_tot) {
                double obs = alpha;
                auto itr = table.find(h);
                if (itr != table.end()) {
                    auto itc = itr->second.find(c);
                    if (itc != itr->second.end()) obs += static_cast<double>(itc->second);
                }
                double expected = (rn + alpha * cols) * (cn + alpha * rows) / smoothed_total;
                stat += (obs - expected) * (obs - expected) / expected;
            }
        }
        dof += static_cast<long>((rows - 1) * (cols - 1));
        ++used;
    }
};

}  // namespace detail

inline MarkovReport check_markov(const SsdpSpec& spec, const std::vector<Vec>& state_edges,
                                 const std::vector<Vec>& action_edges, long n_samples,
                                 uint64_t seed) {
    spec.validate();
    require(n_samples >= 10000, "check_markov: n_samples must be at least 10000");
    require(!state_edges.empty() && !action_edges.empty(),
            "check_markov: non-enumerable spec without grids is unsupported");

    MarkovReport rep;
    rep.structural_iid = (spec.exo.kind == ExoProcess::Kind::iid);

    MultiGrid sgrid;
    sgrid.axes = state_edges;
    sgrid.validate();
    require(state_edges.size() == static_cast<size_t>(spec.state_dim),
            "check_markov: state grid dimension mismatch");
    MultiGrid agrid;
    agrid.axes = action_edges;
    agrid.validate();
    require(action_edges.size() == static_cast<size_t>(spec.action_dim),
            "check_markov: action grid dimension mismatch");
    std::vector<Vec> actions;
    for (long i = 0; i < agrid.n_cells(); ++i) actions.push_back(agrid.point_of(i));

    // key: (state cell, action index) -> history bucket -> next cell -> count.
    // The exogenous draw is recoverable from consecutive states alone in the
    // processes this targets, so bucketing by the previous cell suffices.
    std::map<std::pair<long, long>, std::map<int, std::map<int, long>>> counts;

    Rng rng(derive_seed(seed, 21));
    const int ep_len = spec.horizon > 0 ? spec.horizon : 64;
    long collected = 0;
    while (collected < n_samples) {
        auto stream = spec.exo.make_stream();
        Vec s = spec.sample_init(rng);
        int prev_cell = -1;
        for (int k = 0; k < ep_len && collected < n_samples; ++k) {
            long ai = rng.randint(static_cast<int>(actions.size()));
            const Vec& a = actions[ai];
            stream->observe_action(a);
            Vec w = stream->next(rng);
            StepResult st = step(spec, s, a, w);
            int cell = static_cast<int>(sgrid.index_of(s));
            int cell_next = static_cast<int>(sgrid.index_of(st.s_next));
            if (prev_cell >= 0) {
                counts[{cell, ai}][prev_cell][cell_next] += 1;
                ++collected;
            }
            prev_cell = cell;
            s = st.s_next;
        }
    }

    detail::Chi2Accum acc;
    for (const auto& [key, table] : counts) acc.add_table(table, 0.5);
    rep.chi2_stat = acc.stat;
    rep.dof = acc.dof;
    rep.n_transitions = collected;
    rep.n_groups = acc.used;
    rep.p_value = chi2_sf(acc.stat, acc.dof);

    if (rep.structural_iid) {
        rep.is_markov = true;
        rep.note = "exogenous process is iid; reduction condition holds structurally";
    } else {
        rep.is_markov = rep.p_value >= 0.01;
        rep.note = rep.is_markov
                       ? "no history dependence detected at the 0.01 level (evidence, not proof)"
                       : "transition law varies with the previous state cell; not Markov in S";
    }
    return rep;
}

}  // namespace voisim
