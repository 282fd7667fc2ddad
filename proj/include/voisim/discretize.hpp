#pragma once

// Grid discretization of enumerable SSDPs into TabularMdp oracles. Cells are
// defined by per-dimension bin edges; transitions snap f^S outputs to the
// nearest cell by containment (outside points clip to boundary cells and are
// counted). Nearest-neighbor snapping keeps P sparse; it is a bias source
// for coarse grids and is intended for oracle construction, not accuracy.

#include <algorithm>
#include <map>
#include <vector>

#include "voisim/ssdp.hpp"
#include "voisim/tabular.hpp"

namespace voisim {

inline Vec uniform_edges(double lo, double hi, int n_cells) {
    require(n_cells >= 1 && hi > lo, "uniform_edges: invalid range");
    Vec e(n_cells + 1);
    for (int i = 0; i <= n_cells; ++i) e[i] = lo + (hi - lo) * i / n_cells;
    return e;
}

// Product grid over per-dimension edges; cell value = midpoint.
struct MultiGrid {
    std::vector<Vec> axes;  // each: strictly increasing edges, >= 2 entries

    void validate() const {
        require(!axes.empty(), "MultiGrid: no axes");
        for (const auto& e : axes) {
            require(e.size() >= 2, "MultiGrid: axis needs at least 2 edges");
            for (size_t i = 1; i < e.size(); ++i)
                require(e[i] > e[i - 1], "MultiGrid: edges must be strictly increasing");
        }
    }

    int cells_on_axis(size_t d) const { return static_cast<int>(axes[d].size()) - 1; }

    long n_cells() const {
        long n = 1;
        for (size_t d = 0; d < axes.size(); ++d) n *= cells_on_axis(d);
        return n;
    }

    // Containing cell on one axis; clips outside points to the boundary cell.
    int axis_cell(size_t d, double x, bool* clipped = nullptr) const {
        const Vec& e = axes[d];
        if (x < e.front()) {
            if (clipped) *clipped = true;
            return 0;
        }
        if (x >= e.back()) {
            if (x > e.back() && clipped) *clipped = true;
            return static_cast<int>(e.size()) - 2;
        }
        auto it = std::upper_bound(e.begin(), e.end(), x);
        return static_cast<int>(it - e.begin()) - 1;
    }

    long index_of(const Vec& x, bool* clipped = nullptr) const {
        require(x.size() == axes.size(), "MultiGrid: point dimension mismatch");
        long idx = 0;
        for (size_t d = 0; d < axes.size(); ++d) idx = idx * cells_on_axis(d) + axis_cell(d, x[d], clipped);
        return idx;
    }

    Vec point_of(long idx) const {
        Vec x(axes.size(), 0.0);
        for (size_t d = axes.size(); d-- > 0;) {
            int n = cells_on_axis(d);
            int c = static_cast<int>(idx % n);
            idx /= n;
            x[d] = 0.5 * (axes[d][c] + axes[d][c + 1]);
        }
        return x;
    }
};

struct DiscretizeResult {
    TabularMdp mdp;
    MultiGrid state_grid;
    std::vector<Vec> action_values;  // cell centers of the action grid
    long clipped_transitions = 0;    // f^S outputs or init samples outside the grid
};

namespace detail {

// Exogenous sample set used for every (s, a) row: exact support when the
// process is finite iid; otherwise a common seeded sample (for driven/trace
// kinds this is the process's empirical marginal along one realization).
inline void exo_sample_set(const SsdpSpec& spec, int exo_samples, uint64_t seed,
                           std::vector<Vec>& ws, Vec& ps) {
    if (spec.exo.finite_support()) {
        ws = spec.exo.outcomes;
        ps = spec.exo.probs;
        return;
    }
    require(exo_samples >= 1, "discretize: exo_samples must be >= 1");
    Rng rng(derive_seed(seed, 11));
    auto stream = spec.exo.make_stream();
    ws.clear();
    for (int i = 0; i < exo_samples; ++i) ws.push_back(stream->next(rng));
    ps.assign(ws.size(), 1.0 / static_cast<double>(ws.size()));
}

}  // namespace detail

inline DiscretizeResult discretize(const SsdpSpec& spec, const std::vector<Vec>& state_edges,
                                   const std::vector<Vec>& action_edges, int exo_samples,
                                   uint64_t seed) {
    spec.validate();
    require(state_edges.size() == static_cast<size_t>(spec.state_dim),
            "discretize: need one edge vector per state dimension");
    require(action_edges.size() == static_cast<size_t>(spec.action_dim),
            "discretize: need one edge vector per action dimension");

    DiscretizeResult out;
    out.state_grid.axes = state_edges;
    out.state_grid.validate();

    MultiGrid action_grid;
    action_grid.axes = action_edges;
    action_grid.validate();
    for (long i = 0; i < action_grid.n_cells(); ++i) out.action_values.push_back(action_grid.point_of(i));

    std::vector<Vec> ws;
    Vec ps;
    detail::exo_sample_set(spec, exo_samples, seed, ws, ps);

    const long ns = out.state_grid.n_cells();
    const long na = static_cast<long>(out.action_values.size());
    TabularMdp& mdp = out.mdp;
    mdp.n_states = static_cast<int>(ns);
    mdp.n_actions = static_cast<int>(na);
    mdp.gamma = spec.gamma;
    mdp.trans.assign(static_cast<size_t>(ns) * na, {});
    mdp.reward.assign(static_cast<size_t>(ns) * na, 0.0);
    mdp.init_dist.assign(ns, 0.0);

    for (long s = 0; s < ns; ++s) {
        Vec sv = out.state_grid.point_of(s);
        for (long a = 0; a < na; ++a) {
            const Vec& av = out.action_values[a];
            std::map<int, double> row;
            double r = 0.0;
            for (size_t j = 0; j < ws.size(); ++j) {
                Vec sn = spec.transition(sv, av, ws[j]);
                require(sn.size() == static_cast<size_t>(spec.state_dim),
                        "discretize: transition output dimension mismatch");
                bool clip = false;
                long cell = out.state_grid.index_of(sn, &clip);
                if (clip) ++out.clipped_transitions;
                row[static_cast<int>(cell)] += ps[j];
                r += ps[j] * spec.reward(sv, av, ws[j]);
            }
            auto& t = mdp.trans[mdp.idx(static_cast<int>(s), static_cast<int>(a))];
            for (auto [sn, p] : row) t.emplace_back(sn, p);
            mdp.reward[mdp.idx(static_cast<int>(s), static_cast<int>(a))] = r;
        }
    }

    if (spec.finite_init()) {
        for (size_t i = 0; i < spec.init_support.size(); ++i) {
            bool clip = false;
            long cell = out.state_grid.index_of(spec.init_support[i], &clip);
            if (clip) ++out.clipped_transitions;
            mdp.init_dist[cell] += spec.init_probs[i];
        }
    } else {
        const int n_init = 10000;
        Rng rng(derive_seed(seed, 12));
        for (int i = 0; i < n_init; ++i) {
            bool clip = false;
            long cell = out.state_grid.index_of(spec.sample_init(rng), &clip);
            if (clip) ++out.clipped_transitions;
            mdp.init_dist[cell] += 1.0 / n_init;
        }
    }
    // guard against accumulated rounding in probability sums
    for (long s = 0; s < ns; ++s) {
        for (long a = 0; a < na; ++a) {
            auto& t = mdp.trans[mdp.idx(static_cast<int>(s), static_cast<int>(a))];
            double sum = 0.0;
            for (auto& [sn, p] : t) sum += p;
            for (auto& [sn, p] : t) p /= sum;
        }
    }
    double isum = 0.0;
    for (double p : mdp.init_dist) isum += p;
    for (double& p : mdp.init_dist) p /= isum;
    mdp.validate();
    return out;
}

}  // namespace voisim
