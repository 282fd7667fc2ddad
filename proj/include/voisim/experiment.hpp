#pragma once

// Experiment runner: scenario presets, configuration and seeding, and result
// emission for plotting. A run is fully determined by (config, seed): every
// random draw derives from the config seed, episodes are computed into
// preassigned slots regardless of worker count, and the effective config is
// written next to the outputs so any artifact can be reproduced.
//
// Scenarios:
//  - platoon_voi:        informed vs uninformed platoon control on a
//                        discretized vehicle instance; per-step IVoMI along a
//                        stop-and-go trace and an EVoMI estimate with CI.
//  - platoon_comm:       VoI-gated vs always-transmit CAM policies on the
//                        coupled control + radio simulation.
//  - tabular_properties: invariant suites on seeded random tabular models
//                        (augmentation dominance, VoI identity,
//                        non-positivity against an optimal reference).
//  - custom:             config/artifact plumbing only; emits headers and the
//                        effective config for external post-processing.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "voisim/augment.hpp"
#include "voisim/comm.hpp"
#include "voisim/csv.hpp"
#include "voisim/discretize.hpp"
#include "voisim/env.hpp"
#include "voisim/random_models.hpp"
#include "voisim/ssdp.hpp"
#include "voisim/stats.hpp"
#include "voisim/tabular.hpp"
#include "voisim/vehicle.hpp"
#include "voisim/voi.hpp"

namespace voisim {

enum class Scenario { platoon_voi, platoon_comm, tabular_properties, custom };

inline const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::platoon_voi: return "platoon_voi";
        case Scenario::platoon_comm: return "platoon_comm";
        case Scenario::tabular_properties: return "tabular_properties";
        case Scenario::custom: return "custom";
    }
    return "?";
}

inline Scenario scenario_from_name(const std::string& name) {
    for (Scenario s : {Scenario::platoon_voi, Scenario::platoon_comm, Scenario::tabular_properties,
                       Scenario::custom}) {
        if (name == scenario_name(s)) return s;
    }
    throw contract_violation("unknown scenario '" + name +
                             "' (valid: platoon_voi, platoon_comm, tabular_properties, custom)");
}

struct ExperimentConfig {
    Scenario scenario = Scenario::tabular_properties;
    long long seed = 0;
    int episodes = 20;
    std::map<std::string, std::string> overrides;
    std::string out_dir = "out";

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["scenario"] = scenario_name(scenario);
        j["seed"] = seed;
        j["episodes"] = episodes;
        j["out_dir"] = out_dir;
        j["overrides"] = nlohmann::json::object();
        for (const auto& [k, v] : overrides) j["overrides"][k] = v;
        return j;
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        require(j.is_object(), "ExperimentConfig: top level must be an object");
        ExperimentConfig cfg;
        for (const auto& [key, value] : j.items()) {
            if (key == "scenario") {
                require(value.is_string(), "ExperimentConfig: scenario must be a string");
                cfg.scenario = scenario_from_name(value.get<std::string>());
            } else if (key == "seed") {
                require(value.is_number_integer(), "ExperimentConfig: seed must be an integer");
                cfg.seed = value.get<long long>();
            } else if (key == "episodes") {
                require(value.is_number_integer(), "ExperimentConfig: episodes must be an integer");
                cfg.episodes = value.get<int>();
            } else if (key == "out_dir") {
                require(value.is_string(), "ExperimentConfig: out_dir must be a string");
                cfg.out_dir = value.get<std::string>();
            } else if (key == "overrides") {
                require(value.is_object(), "ExperimentConfig: overrides must be an object");
                for (const auto& [ok, ov] : value.items()) {
                    if (ov.is_string()) {
                        cfg.overrides[ok] = ov.get<std::string>();
                    } else if (ov.is_number()) {
                        cfg.overrides[ok] = ov.dump();
                    } else {
                        throw contract_violation("ExperimentConfig: override '" + ok +
                                                 "' must be a string or number");
                    }
                }
            } else {
                throw contract_violation("ExperimentConfig: unknown field '" + key + "'");
            }
        }
        return cfg;
    }

    static ExperimentConfig load_file(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), "ExperimentConfig: cannot open " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw contract_violation("ExperimentConfig: " + path + " is not valid JSON: " + e.what());
        }
        return from_json(j);
    }
};

// --- override plumbing ------------------------------------------------------

namespace detail {

inline double parse_override_number(const std::string& key, const std::string& text) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    require(pos == text.size() && !text.empty(), "override '" + key + "': '" + text + "' is not a number");
    return v;
}

inline double override_num(const std::map<std::string, std::string>& ov, const std::string& key,
                           double fallback) {
    auto it = ov.find(key);
    return it == ov.end() ? fallback : parse_override_number(key, it->second);
}

inline int override_int(const std::map<std::string, std::string>& ov, const std::string& key, int fallback) {
    double v = override_num(ov, key, static_cast<double>(fallback));
    int i = static_cast<int>(std::llround(v));
    require(std::fabs(v - i) <= 1e-9, "override '" + key + "': expected an integer");
    return i;
}

inline std::vector<std::string> known_override_keys(Scenario s) {
    switch (s) {
        case Scenario::platoon_voi:
            return {"voi.acc_mag", "voi.p_move",  "voi.cells_e_p", "voi.cells_e_v", "voi.cells_acc",
                    "voi.n_actions", "voi.gamma", "voi.horizon",   "voi.n_steps",   "voi.mc_episodes",
                    "voi.T"};
        case Scenario::platoon_comm:
            return {"comm.dt",     "comm.t_slots", "comm.gamma_cm", "comm.kappa1", "comm.kappa2",
                    "comm.gate",   "comm.n_steps", "comm.xi_scale", "vehicle.T"};
        case Scenario::tabular_properties:
            return {"tabular.n_instances", "tabular.max_states", "tabular.max_actions", "tabular.max_exo",
                    "tabular.gamma"};
        case Scenario::custom:
            return {};  // custom keys are user-defined and passed through
    }
    return {};
}

}  // namespace detail

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> violations;

    void flag(const std::string& what) {
        ok = false;
        violations.push_back(what);
    }
};

// --- scenario setups ---------------------------------------------------------

// Discretized platoon instance with an informed (exogenous-in-state) and an
// uninformed solution. The predecessor acceleration is a three-point iid
// process {-acc_mag, 0, +acc_mag}; the control interval is stretched so one
// acceleration draw moves the velocity error by more than a grid cell,
// keeping the information materially useful after discretization.
struct PlatoonVoiSetup {
    double acc_mag = 1.5;
    double p_move = 0.25;  // probability of each nonzero support point
    int cells_e_p = 7;
    int cells_e_v = 9;
    int cells_acc = 5;
    int n_actions = 7;
    double e_p_span = 3.0;  // grid half-width (m)
    double e_v_span = 2.0;  // grid half-width (m/s)
    double gamma = 0.95;
    int horizon = 120;      // evaluation episode length
    int n_steps = 400;      // stop-and-go trace length
    int mc_episodes = 200;  // paired episodes for the EVoMI estimate
    double T = 0.3;         // control interval (s)

    void validate() const {
        require(acc_mag > 0.0, "PlatoonVoiSetup: acc_mag must be positive");
        require(p_move > 0.0 && 2.0 * p_move < 1.0, "PlatoonVoiSetup: p_move outside (0, 0.5)");
        require(cells_e_p >= 2 && cells_e_v >= 2 && cells_acc >= 2, "PlatoonVoiSetup: need >= 2 cells per axis");
        require(n_actions >= 2, "PlatoonVoiSetup: need >= 2 actions");
        require(e_p_span > 0.0 && e_v_span > 0.0, "PlatoonVoiSetup: spans must be positive");
        require(gamma > 0.0 && gamma < 1.0, "PlatoonVoiSetup: gamma outside (0,1)");
        require(horizon >= 2 && n_steps >= 2 && mc_episodes >= 2, "PlatoonVoiSetup: lengths must be >= 2");
        require(T > 0.0, "PlatoonVoiSetup: T must be positive");
    }
};

struct PlatoonVoiInstance {
    SsdpSpec base;          // continuous instance, iid three-point exo
    AugmentedSpec aug;      // state carries the current acceleration draw
    DiscretizeResult dorig; // uninformed tabular model
    DiscretizeResult daug;  // informed tabular model, cell index = cell * 3 + w
    ValueIterationResult vi_orig, vi_aug;
    Mat adv_aug;            // optimal advantage table of the informed model
    Vec support;            // {-acc_mag, 0, +acc_mag}
    VehicleParams params;
    long n_cells = 0;

    long cell_of(const VehicleState& x, bool* clipped = nullptr) const {
        return dorig.state_grid.index_of({x.e_p, x.e_v, x.acc}, clipped);
    }
    int snap_w(double acc) const {
        double half = 0.5 * support.back();
        return acc < -half ? 0 : (acc > half ? 2 : 1);
    }
    long aug_index(long cell, int w_idx) const { return cell * 3 + w_idx; }
    double action_value(int a) const { return dorig.action_values[a][0]; }
};

inline PlatoonVoiInstance build_platoon_voi_instance(const PlatoonVoiSetup& setup, uint64_t seed) {
    setup.validate();
    PlatoonVoiInstance inst;
    inst.params.T = setup.T;
    inst.params.validate();
    inst.support = {-setup.acc_mag, 0.0, setup.acc_mag};

    ExoProcess acc = ExoProcess::make_iid({{-setup.acc_mag}, {0.0}, {setup.acc_mag}},
                                          {setup.p_move, 1.0 - 2.0 * setup.p_move, setup.p_move});
    VehicleSsdpConfig vcfg;
    vcfg.params = inst.params;
    vcfg.gamma = setup.gamma;
    vcfg.horizon = setup.horizon;
    inst.base = vehicle_ssdp(vcfg, std::move(acc));
    inst.aug = augment_with_exogenous(inst.base);

    const double m = setup.acc_mag;
    std::vector<Vec> state_edges{
        uniform_edges(-setup.e_p_span, setup.e_p_span, setup.cells_e_p),
        uniform_edges(-setup.e_v_span, setup.e_v_span, setup.cells_e_v),
        uniform_edges(-inst.params.acc_max, inst.params.acc_max, setup.cells_acc)};
    std::vector<Vec> action_edges{uniform_edges(-inst.params.u_max, inst.params.u_max, setup.n_actions)};
    // one cell per support point, so conditioning on the draw is exact
    std::vector<Vec> aug_edges = state_edges;
    aug_edges.push_back(uniform_edges(-1.5 * m, 1.5 * m, 3));

    inst.dorig = discretize(inst.base, state_edges, action_edges, 0, derive_seed(seed, 0));
    inst.daug = discretize(inst.aug.spec, aug_edges, action_edges, 0, derive_seed(seed, 1));
    inst.n_cells = inst.dorig.state_grid.n_cells();
    inst.vi_orig = value_iteration(inst.dorig.mdp);
    inst.vi_aug = value_iteration(inst.daug.mdp);
    inst.adv_aug = advantage_table(q_from_v(inst.daug.mdp, inst.vi_aug.v), inst.vi_aug.v);
    return inst;
}

// Uninformed policy lifted onto the informed state space: the action ignores
// the acceleration component.
inline PolicyTable lift_uninformed(const PlatoonVoiInstance& inst) {
    PolicyTable lifted(inst.daug.mdp.n_states, 0);
    for (long c = 0; c < inst.n_cells; ++c)
        for (int w = 0; w < 3; ++w) lifted[inst.aug_index(c, w)] = inst.vi_orig.policy[c];
    return lifted;
}

struct PlatoonVoiResult {
    // per-step series along the stop-and-go trace
    Vec acc_pred;                       // snapped to the model support
    Vec e_p_inf, e_v_inf, acc_inf;      // uninformed follower
    Vec e_p_sup, e_v_sup, acc_sup;      // informed follower
    Vec u_inf, u_sup;
    Vec ivomi;                          // advantage of the uninformed action
    // aggregates
    double ivomi_zero_mean_abs = 0.0;
    double ivomi_active_mean_abs = 0.0;
    double zero_fraction = 0.0;
    VoiRecord evomi;        // paired Monte-Carlo estimate with CI
    double evomi_exact = 0.0;
    long n_cells = 0;
    long n_aug_states = 0;
};

// Simulates both followers along a snapped stop-and-go trace, reads the
// instantaneous VoI of the uninformed action from the informed advantage
// table, and estimates the expected VoI by paired rollouts on the informed
// tabular model.
inline PlatoonVoiResult run_platoon_voi(const PlatoonVoiSetup& setup, uint64_t seed) {
    PlatoonVoiInstance inst = build_platoon_voi_instance(setup, derive_seed(seed, 0));

    StopAndGoConfig sg;
    sg.n_steps = setup.n_steps;
    sg.T = setup.T;
    sg.accel_mag = setup.acc_mag;
    sg.brake_mag = setup.acc_mag;
    PredecessorTrajectory trace = synth_stop_and_go(sg, derive_seed(seed, 1));
    // snap each phase onto the model support so table lookups are exact
    for (double& a : trace.acc) a = inst.support[inst.snap_w(a)];

    PlatoonVoiResult res;
    res.n_cells = inst.n_cells;
    res.n_aug_states = inst.daug.mdp.n_states;

    VehicleState x_inf, x_sup;
    Vec abs_zero, abs_active;
    for (int k = 0; k < setup.n_steps; ++k) {
        const double w_true = trace.acc[k];
        const int w_idx = inst.snap_w(w_true);

        long c_inf = inst.cell_of(x_inf);
        int a_inf = inst.vi_orig.policy[c_inf];
        double u_inf = inst.action_value(a_inf);

        long c_sup = inst.cell_of(x_sup);
        int a_sup = inst.vi_aug.policy[inst.aug_index(c_sup, w_idx)];
        double u_sup = inst.action_value(a_sup);

        res.acc_pred.push_back(w_true);
        res.e_p_inf.push_back(x_inf.e_p);
        res.e_v_inf.push_back(x_inf.e_v);
        res.acc_inf.push_back(x_inf.acc);
        res.e_p_sup.push_back(x_sup.e_p);
        res.e_v_sup.push_back(x_sup.e_v);
        res.acc_sup.push_back(x_sup.acc);
        res.u_inf.push_back(u_inf);
        res.u_sup.push_back(u_sup);

        double iv = inst.adv_aug(static_cast<size_t>(inst.aug_index(c_inf, w_idx)), a_inf);
        res.ivomi.push_back(iv);
        (w_true == 0.0 ? abs_zero : abs_active).push_back(std::fabs(iv));

        x_inf = dynamics_step(x_inf, u_inf, w_true, inst.params);
        x_sup = dynamics_step(x_sup, u_sup, w_true, inst.params);
    }
    res.zero_fraction = static_cast<double>(abs_zero.size()) / setup.n_steps;
    res.ivomi_zero_mean_abs = abs_zero.empty() ? 0.0 : mean_of(abs_zero);
    res.ivomi_active_mean_abs = abs_active.empty() ? 0.0 : mean_of(abs_active);

    PolicyTable lifted = lift_uninformed(inst);
    res.evomi_exact = exact_performance(inst.daug.mdp, lifted) -
                      exact_performance(inst.daug.mdp, inst.vi_aug.policy);

    SsdpSpec informed = mdp_as_ssdp(inst.daug.mdp, setup.horizon);
    PolicyPair pair;
    pair.pi_inf = policy_fn_from_table(lifted);
    pair.pi_sup = policy_fn_from_table(inst.vi_aug.policy);
    res.evomi = evoi_montecarlo(informed, pair, setup.mc_episodes, derive_seed(seed, 2), VoiKind::evomi);
    return res;
}

// VoI-gated vs always-transmit CAM policies on the coupled simulation.
struct PlatoonCommSetup {
    CommRunConfig run;
    StopAndGoConfig sg;
    double gate = 1e-3;

    PlatoonCommSetup() {
        sg.n_steps = 400;
        sg.T = run.vehicle.T;
    }

    void validate() const {
        run.validate();
        require(gate >= 0.0, "PlatoonCommSetup: negative gate");
        require(std::fabs(sg.T - run.vehicle.T) <= 1e-12,
                "PlatoonCommSetup: trace step must equal the control interval");
    }
};

struct PlatoonCommEpisode {
    double tp_gated = 0.0, tp_always = 0.0;  // discounted V2I throughput
    double xi_gated = 0.0, xi_always = 0.0;  // discounted information-value sums
    double j_gated = 0.0, j_always = 0.0;
    double rms_gated = 0.0, rms_always = 0.0;
    double zero_fraction = 0.0;
    double max_decomp_rel_err = 0.0;  // slot-sum vs interval-reward agreement
    int suppressed = 0;               // intervals where only the gated policy stayed silent
};

namespace detail {

inline double decomposition_error(const CommRunLog& log, const CommConfig& cfg) {
    double worst = 0.0;
    for (size_t k = 0; k < log.when_reward.size(); ++k) {
        double slot_sum = 0.0, g = 1.0;
        for (int t = 0; t < cfg.t_slots; ++t) {
            slot_sum += g * log.slots[k * cfg.t_slots + t].r_how;
            g *= cfg.gamma_cm;
        }
        double scale = std::max(1.0, std::fabs(log.when_reward[k]));
        worst = std::max(worst, std::fabs(slot_sum - log.when_reward[k]) / scale);
    }
    return worst;
}

}  // namespace detail

// One paired episode: both policies see the same trace, channel, and fading.
inline PlatoonCommEpisode run_platoon_comm_episode(const PlatoonCommSetup& setup, uint64_t seed) {
    setup.validate();
    StopAndGoConfig sg = setup.sg;
    PredecessorTrajectory trace = synth_stop_and_go(sg, derive_seed(seed, 0));
    uint64_t run_seed = derive_seed(seed, 1);
    CommRunLog gated = run_comm_episode(policy_voi_gated(setup.gate), trace, setup.run, run_seed);
    CommRunLog always = run_comm_episode(policy_always_transmit(), trace, setup.run, run_seed);

    PlatoonCommEpisode ep;
    ep.tp_gated = discounted_v2i_throughput(gated, setup.run.comm);
    ep.tp_always = discounted_v2i_throughput(always, setup.run.comm);
    ep.xi_gated = discounted_xi_sum(gated, setup.run.comm);
    ep.xi_always = discounted_xi_sum(always, setup.run.comm);
    ep.j_gated = objective_jcm(gated, setup.run.comm);
    ep.j_always = objective_jcm(always, setup.run.comm);
    ep.rms_gated = rms_of(gated.e_p);
    ep.rms_always = rms_of(always.e_p);
    int zero = 0;
    for (double a : trace.acc)
        if (a == 0.0) ++zero;
    ep.zero_fraction = static_cast<double>(zero) / trace.acc.size();
    for (size_t k = 0; k < gated.phi.size(); ++k)
        if (gated.phi[k] == 0 && always.phi[k] == 1) ++ep.suppressed;
    ep.max_decomp_rel_err = std::max(detail::decomposition_error(gated, setup.run.comm),
                                     detail::decomposition_error(always, setup.run.comm));
    return ep;
}

// --- worker pool -------------------------------------------------------------

inline int max_workers() {
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (const char* env = std::getenv("VOISIM_MAX_WORKERS")) {
        int cap = static_cast<int>(detail::parse_override_number("VOISIM_MAX_WORKERS", env));
        require(cap >= 1, "VOISIM_MAX_WORKERS must be >= 1");
        workers = std::min(workers, cap);
    }
    return workers;
}

// Runs fn(0..n-1); each item writes only its own result slot, so the output
// is identical for any worker count.
template <typename Fn>
inline void parallel_for(int n, Fn fn) {
    int workers = std::min(max_workers(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct PlatoonCommResult {
    std::vector<PlatoonCommEpisode> episodes;
    double mean_tp_gated = 0.0, mean_tp_always = 0.0;
    double mean_zero_fraction = 0.0;
    double max_rms_rel_diff = 0.0;
    double max_decomp_rel_err = 0.0;
    bool throughput_ok = false;   // gated mean >= always mean
    bool strict_applicable = false;
    bool strict_ok = false;       // strictly greater where zero-acc >= 20%
    bool rms_ok = false;          // per-episode RMS difference <= 5%
};

inline PlatoonCommResult run_platoon_comm(const PlatoonCommSetup& setup, int n_episodes, uint64_t seed) {
    setup.validate();
    require(n_episodes >= 1, "run_platoon_comm: n_episodes must be >= 1");
    PlatoonCommResult res;
    res.episodes.resize(n_episodes);
    parallel_for(n_episodes, [&](int e) {
        res.episodes[e] = run_platoon_comm_episode(setup, derive_seed(seed, static_cast<uint64_t>(e)));
    });
    double tp_g = 0.0, tp_a = 0.0, zf = 0.0;
    for (const auto& ep : res.episodes) {
        tp_g += ep.tp_gated;
        tp_a += ep.tp_always;
        zf += ep.zero_fraction;
        double base = std::max(ep.rms_always, 1e-9);
        res.max_rms_rel_diff = std::max(res.max_rms_rel_diff, std::fabs(ep.rms_gated - ep.rms_always) / base);
        res.max_decomp_rel_err = std::max(res.max_decomp_rel_err, ep.max_decomp_rel_err);
    }
    res.mean_tp_gated = tp_g / n_episodes;
    res.mean_tp_always = tp_a / n_episodes;
    res.mean_zero_fraction = zf / n_episodes;
    res.throughput_ok = res.mean_tp_gated >= res.mean_tp_always;
    res.strict_applicable = res.mean_zero_fraction >= 0.2;
    res.strict_ok = !res.strict_applicable || res.mean_tp_gated > res.mean_tp_always;
    res.rms_ok = res.max_rms_rel_diff <= 0.05;
    return res;
}

// Invariant suites on seeded random tabular models.
struct TabularSetup {
    int n_instances = 100;
    int max_states = 50;
    int max_actions = 4;
    int max_exo = 4;
    double gamma = 0.9;

    void validate() const {
        require(n_instances >= 1, "TabularSetup: n_instances must be >= 1");
        require(max_states >= 2 && max_actions >= 2 && max_exo >= 2, "TabularSetup: need at least 2 of each");
        require(gamma > 0.0 && gamma < 1.0, "TabularSetup: gamma outside (0,1)");
    }
};

struct SuiteCase {
    std::string suite;
    int instance = 0;
    double value = 0.0;      // margin or residual
    double threshold = 0.0;
    bool pass = false;
};

struct TabularPropertiesResult {
    std::vector<SuiteCase> cases;
    std::vector<VoiRecord> records;
    double min_augment_margin = 0.0;
    double max_identity_residual = 0.0;
    double max_nonpositivity_excess = 0.0;
    bool augment_pass = true;
    bool identity_pass = true;
    bool nonpositivity_pass = true;
    bool pass = true;
};

// Augmentation dominance on one random finite model: the optimal value of
// the exogenous-in-state augmentation is at least the original optimum.
inline double augment_dominance_margin(int n_s, int n_a, int n_w, double gamma, uint64_t seed) {
    SsdpSpec spec = random_finite_ssdp(n_s, n_a, n_w, gamma, seed);
    std::vector<Vec> s_edges{uniform_edges(-0.5, n_s - 0.5, n_s)};
    std::vector<Vec> a_edges{uniform_edges(-0.5, n_a - 0.5, n_a)};
    DiscretizeResult orig = discretize(spec, s_edges, a_edges, 0, derive_seed(seed, 1));

    AugmentedSpec aug = augment_with_exogenous(spec);
    std::vector<Vec> aug_edges = s_edges;
    aug_edges.push_back(uniform_edges(-0.5, n_w - 0.5, n_w));
    DiscretizeResult daug = discretize(aug.spec, aug_edges, a_edges, 0, derive_seed(seed, 2));

    double j_orig = 0.0, j_aug = 0.0;
    ValueIterationResult vo = value_iteration(orig.mdp);
    ValueIterationResult va = value_iteration(daug.mdp);
    for (int s = 0; s < orig.mdp.n_states; ++s) j_orig += orig.mdp.init_dist[s] * vo.v[s];
    for (int s = 0; s < daug.mdp.n_states; ++s) j_aug += daug.mdp.init_dist[s] * va.v[s];
    return j_aug - j_orig;
}

inline TabularPropertiesResult run_tabular_properties(const TabularSetup& setup, uint64_t seed) {
    setup.validate();
    TabularPropertiesResult res;
    res.cases.resize(static_cast<size_t>(setup.n_instances) * 3);
    res.records.resize(setup.n_instances);
    std::vector<double> margins(setup.n_instances), residuals(setup.n_instances), excesses(setup.n_instances);

    parallel_for(setup.n_instances, [&](int i) {
        uint64_t s = derive_seed(seed, static_cast<uint64_t>(i));
        Rng rng(derive_seed(s, 0));
        int n_s = 2 + static_cast<int>(rng.randint(static_cast<uint64_t>(setup.max_states - 1)));
        int n_a = 2 + static_cast<int>(rng.randint(static_cast<uint64_t>(setup.max_actions - 1)));
        int n_w = 2 + static_cast<int>(rng.randint(static_cast<uint64_t>(setup.max_exo - 1)));

        margins[i] = augment_dominance_margin(n_s, n_a, n_w, setup.gamma, derive_seed(s, 1));

        TabularMdp mdp = random_tabular_mdp(n_s, n_a, setup.gamma, derive_seed(s, 2));
        ValueIterationResult vi = value_iteration(mdp);
        StochasticPolicy pi_inf = random_stochastic_policy(mdp, derive_seed(s, 3));
        VoiIdentityReport rep = voi_identity_check(mdp, pi_inf, to_stochastic(mdp, vi.policy));
        residuals[i] = rep.abs_diff;

        // against an optimal reference every advantage is non-positive and so
        // is the expected VoI of any policy
        Mat adv = advantage_table(q_from_v(mdp, vi.v), vi.v);
        double excess = rep.evoi;  // must be <= 0
        for (int st = 0; st < mdp.n_states; ++st)
            for (int a = 0; a < mdp.n_actions; ++a) excess = std::max(excess, adv(st, a));
        excesses[i] = excess;

        VoiRecord rec;
        rec.kind = VoiKind::evomi;
        rec.method = VoiMethod::exact_dp;
        rec.value = rep.evoi;
        rec.k = i;
        res.records[i] = rec;
    });

    res.min_augment_margin = margins[0];
    res.max_identity_residual = 0.0;
    res.max_nonpositivity_excess = excesses[0];
    for (int i = 0; i < setup.n_instances; ++i) {
        res.min_augment_margin = std::min(res.min_augment_margin, margins[i]);
        res.max_identity_residual = std::max(res.max_identity_residual, residuals[i]);
        res.max_nonpositivity_excess = std::max(res.max_nonpositivity_excess, excesses[i]);
        res.cases[static_cast<size_t>(i) * 3 + 0] =
            {"augmentation_dominance", i, margins[i], -1e-10, margins[i] >= -1e-10};
        res.cases[static_cast<size_t>(i) * 3 + 1] =
            {"voi_identity", i, residuals[i], 1e-8, residuals[i] <= 1e-8};
        res.cases[static_cast<size_t>(i) * 3 + 2] =
            {"nonpositivity", i, excesses[i], 1e-10, excesses[i] <= 1e-10};
    }
    for (const auto& c : res.cases) {
        if (c.suite == "augmentation_dominance" && !c.pass) res.augment_pass = false;
        if (c.suite == "voi_identity" && !c.pass) res.identity_pass = false;
        if (c.suite == "nonpositivity" && !c.pass) res.nonpositivity_pass = false;
    }
    res.pass = res.augment_pass && res.identity_pass && res.nonpositivity_pass;
    return res;
}

// --- plot data ----------------------------------------------------------------

// Tidy series rows: one row per step per series, consumable by any plotting
// tool. An empty row set still writes the header.
struct PlotRow {
    int k = 0;
    std::string series;
    std::string policy;
    double value = 0.0;
};

inline void write_plotdata_csv(const std::vector<PlotRow>& rows, const std::string& path) {
    CsvWriter w(path);
    w.header({"k", "series", "policy", "value"});
    for (const PlotRow& r : rows)
        w.raw_row({std::to_string(r.k), r.series, r.policy, format_double(r.value)});
}

// Per-step tracking traces of both followers alongside the predecessor
// acceleration and the instantaneous VoI of the uninformed action.
inline std::vector<PlotRow> plotdata_traces(const PlatoonVoiResult& res) {
    std::vector<PlotRow> rows;
    const int n = static_cast<int>(res.acc_pred.size());
    rows.reserve(static_cast<size_t>(n) * 8);
    for (int k = 0; k < n; ++k) {
        rows.push_back({k, "acc_pred", "shared", res.acc_pred[k]});
        rows.push_back({k, "e_p", "informed", res.e_p_sup[k]});
        rows.push_back({k, "e_v", "informed", res.e_v_sup[k]});
        rows.push_back({k, "acc_follower", "informed", res.acc_sup[k]});
        rows.push_back({k, "e_p", "uninformed", res.e_p_inf[k]});
        rows.push_back({k, "e_v", "uninformed", res.e_v_inf[k]});
        rows.push_back({k, "acc_follower", "uninformed", res.acc_inf[k]});
        rows.push_back({k, "ivoi", "uninformed", res.ivomi[k]});
    }
    return rows;
}

// Per-interval throughput of both transmit policies plus the realized
// information value, from one representative paired episode.
inline std::vector<PlotRow> plotdata_throughput(const CommRunLog& gated, const CommRunLog& always) {
    std::vector<PlotRow> rows;
    require(gated.phi.size() == always.phi.size(), "plotdata_throughput: episode length mismatch");
    const int n = static_cast<int>(gated.phi.size());
    Vec tp_g(n, 0.0), tp_a(n, 0.0);
    for (const CommSlotRow& r : gated.slots) tp_g[r.k] += r.rate_v2i;
    for (const CommSlotRow& r : always.slots) tp_a[r.k] += r.rate_v2i;
    for (int k = 0; k < n; ++k) {
        rows.push_back({k, "throughput", "gated", tp_g[k]});
        rows.push_back({k, "throughput", "always", tp_a[k]});
        rows.push_back({k, "ivoi", "gated", gated.xi_vals[k]});
        rows.push_back({k, "ivoi", "always", always.xi_vals[k]});
    }
    return rows;
}

// --- config validation and the runner ------------------------------------------

inline ValidationReport validate_experiment(const ExperimentConfig& cfg) {
    ValidationReport rep;
    if (cfg.seed < 0) rep.flag("seed: must be >= 0");
    if (cfg.episodes < 1) rep.flag("episodes: must be >= 1");
    if (cfg.out_dir.empty()) rep.flag("out_dir: must not be empty");

    if (cfg.scenario != Scenario::custom) {
        auto known = detail::known_override_keys(cfg.scenario);
        for (const auto& [key, value] : cfg.overrides) {
            if (std::find(known.begin(), known.end(), key) == known.end()) {
                rep.flag("override '" + key + "': unknown key for scenario " +
                         scenario_name(cfg.scenario));
                continue;
            }
            try {
                detail::parse_override_number(key, value);
            } catch (const contract_violation& e) {
                rep.flag(e.what());
            }
        }
    }
    if (!rep.ok) return rep;

    try {
        const auto& ov = cfg.overrides;
        switch (cfg.scenario) {
            case Scenario::platoon_voi: {
                PlatoonVoiSetup s;
                s.acc_mag = detail::override_num(ov, "voi.acc_mag", s.acc_mag);
                s.p_move = detail::override_num(ov, "voi.p_move", s.p_move);
                s.cells_e_p = detail::override_int(ov, "voi.cells_e_p", s.cells_e_p);
                s.cells_e_v = detail::override_int(ov, "voi.cells_e_v", s.cells_e_v);
                s.cells_acc = detail::override_int(ov, "voi.cells_acc", s.cells_acc);
                s.n_actions = detail::override_int(ov, "voi.n_actions", s.n_actions);
                s.gamma = detail::override_num(ov, "voi.gamma", s.gamma);
                s.horizon = detail::override_int(ov, "voi.horizon", s.horizon);
                s.n_steps = detail::override_int(ov, "voi.n_steps", s.n_steps);
                s.mc_episodes = detail::override_int(ov, "voi.mc_episodes", s.mc_episodes);
                s.T = detail::override_num(ov, "voi.T", s.T);
                s.validate();
                VehicleParams p;
                p.T = s.T;
                p.validate();
                break;
            }
            case Scenario::platoon_comm: {
                PlatoonCommSetup s;
                s.run.comm.dt = detail::override_num(ov, "comm.dt", s.run.comm.dt);
                s.run.comm.t_slots = detail::override_int(ov, "comm.t_slots", s.run.comm.t_slots);
                s.run.comm.gamma_cm = detail::override_num(ov, "comm.gamma_cm", s.run.comm.gamma_cm);
                s.run.comm.kappa1 = detail::override_num(ov, "comm.kappa1", s.run.comm.kappa1);
                s.run.comm.kappa2 = detail::override_num(ov, "comm.kappa2", s.run.comm.kappa2);
                s.gate = detail::override_num(ov, "comm.gate", s.gate);
                s.sg.n_steps = detail::override_int(ov, "comm.n_steps", s.sg.n_steps);
                s.run.vehicle.T = detail::override_num(ov, "vehicle.T", s.run.vehicle.T);
                s.sg.T = s.run.vehicle.T;
                double iv = s.run.comm.dt * s.run.comm.t_slots;
                if (std::fabs(iv - s.run.vehicle.T) > 1e-12) {
                    rep.flag("comm.dt * comm.t_slots = " + format_double(iv) +
                             " must equal vehicle.T = " + format_double(s.run.vehicle.T));
                    return rep;
                }
                s.validate();
                break;
            }
            case Scenario::tabular_properties: {
                TabularSetup s;
                s.n_instances = detail::override_int(ov, "tabular.n_instances", s.n_instances);
                s.max_states = detail::override_int(ov, "tabular.max_states", s.max_states);
                s.max_actions = detail::override_int(ov, "tabular.max_actions", s.max_actions);
                s.max_exo = detail::override_int(ov, "tabular.max_exo", s.max_exo);
                s.gamma = detail::override_num(ov, "tabular.gamma", s.gamma);
                s.validate();
                break;
            }
            case Scenario::custom:
                break;
        }
    } catch (const contract_violation& e) {
        rep.flag(e.what());
    }
    return rep;
}

namespace detail {

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "run: cannot write " + path);
    out << j.dump(2) << "\n";
    require(out.good(), "run: failed writing " + path);
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline int run_tabular_scenario(const ExperimentConfig& cfg) {
    TabularSetup s;
    const auto& ov = cfg.overrides;
    s.n_instances = override_int(ov, "tabular.n_instances", s.n_instances);
    s.max_states = override_int(ov, "tabular.max_states", s.max_states);
    s.max_actions = override_int(ov, "tabular.max_actions", s.max_actions);
    s.max_exo = override_int(ov, "tabular.max_exo", s.max_exo);
    s.gamma = override_num(ov, "tabular.gamma", s.gamma);

    TabularPropertiesResult res = run_tabular_properties(s, static_cast<uint64_t>(cfg.seed));

    CsvWriter log(join_path(cfg.out_dir, "episode_log.csv"));
    log.header({"suite", "instance", "value", "threshold", "pass"});
    for (const SuiteCase& c : res.cases)
        log.raw_row({c.suite, std::to_string(c.instance), format_double(c.value),
                     format_double(c.threshold), c.pass ? "1" : "0"});
    export_voi_csv(res.records, join_path(cfg.out_dir, "voi_records.csv"));

    nlohmann::json j;
    j["scenario"] = scenario_name(cfg.scenario);
    j["n_instances"] = s.n_instances;
    j["suites"]["augmentation_dominance"] = {{"pass", res.augment_pass},
                                             {"min_margin", res.min_augment_margin}};
    j["suites"]["voi_identity"] = {{"pass", res.identity_pass},
                                   {"max_residual", res.max_identity_residual}};
    j["suites"]["nonpositivity"] = {{"pass", res.nonpositivity_pass},
                                    {"max_excess", res.max_nonpositivity_excess}};
    j["pass"] = res.pass;
    write_json_file(j, join_path(cfg.out_dir, "summary.json"));
    return res.pass ? 0 : 2;
}

inline int run_platoon_voi_scenario(const ExperimentConfig& cfg) {
    PlatoonVoiSetup s;
    const auto& ov = cfg.overrides;
    s.acc_mag = override_num(ov, "voi.acc_mag", s.acc_mag);
    s.p_move = override_num(ov, "voi.p_move", s.p_move);
    s.cells_e_p = override_int(ov, "voi.cells_e_p", s.cells_e_p);
    s.cells_e_v = override_int(ov, "voi.cells_e_v", s.cells_e_v);
    s.cells_acc = override_int(ov, "voi.cells_acc", s.cells_acc);
    s.n_actions = override_int(ov, "voi.n_actions", s.n_actions);
    s.gamma = override_num(ov, "voi.gamma", s.gamma);
    s.horizon = override_int(ov, "voi.horizon", s.horizon);
    s.n_steps = override_int(ov, "voi.n_steps", s.n_steps);
    s.mc_episodes = override_int(ov, "voi.mc_episodes", s.mc_episodes);
    s.T = override_num(ov, "voi.T", s.T);

    PlatoonVoiResult res = run_platoon_voi(s, static_cast<uint64_t>(cfg.seed));

    CsvWriter log(join_path(cfg.out_dir, "episode_log.csv"));
    log.header({"k", "acc_pred", "e_p_informed", "e_v_informed", "acc_informed", "u_informed",
                "e_p_uninformed", "e_v_uninformed", "acc_uninformed", "u_uninformed", "ivoi"});
    for (size_t k = 0; k < res.acc_pred.size(); ++k) {
        log.row({static_cast<double>(k), res.acc_pred[k], res.e_p_sup[k], res.e_v_sup[k], res.acc_sup[k],
                 res.u_sup[k], res.e_p_inf[k], res.e_v_inf[k], res.acc_inf[k], res.u_inf[k],
                 res.ivomi[k]});
    }

    std::vector<VoiRecord> recs;
    recs.push_back(res.evomi);
    for (size_t k = 0; k < res.ivomi.size(); ++k) {
        VoiRecord r;
        r.kind = VoiKind::ivomi;
        r.method = VoiMethod::exact_dp;
        r.value = res.ivomi[k];
        r.k = static_cast<int>(k);
        r.state = {res.e_p_inf[k], res.e_v_inf[k], res.acc_inf[k]};
        r.action = {res.u_inf[k]};
        recs.push_back(std::move(r));
    }
    export_voi_csv(recs, join_path(cfg.out_dir, "voi_records.csv"));
    write_plotdata_csv(plotdata_traces(res), join_path(cfg.out_dir, "plot_traces.csv"));

    nlohmann::json j;
    j["scenario"] = scenario_name(cfg.scenario);
    j["n_steps"] = s.n_steps;
    j["n_cells"] = res.n_cells;
    j["n_informed_states"] = res.n_aug_states;
    j["evomi"] = {{"value", res.evomi.value}, {"ci_lo", res.evomi.ci_lo}, {"ci_hi", res.evomi.ci_hi}};
    j["evomi_exact"] = res.evomi_exact;
    j["ivomi_zero_mean_abs"] = res.ivomi_zero_mean_abs;
    j["ivomi_active_mean_abs"] = res.ivomi_active_mean_abs;
    j["ivomi_zero_to_active_ratio"] =
        res.ivomi_active_mean_abs > 0.0 ? res.ivomi_zero_mean_abs / res.ivomi_active_mean_abs : 0.0;
    j["zero_fraction"] = res.zero_fraction;
    write_json_file(j, join_path(cfg.out_dir, "summary.json"));
    return 0;
}

inline int run_platoon_comm_scenario(const ExperimentConfig& cfg) {
    PlatoonCommSetup s;
    const auto& ov = cfg.overrides;
    s.run.comm.dt = override_num(ov, "comm.dt", s.run.comm.dt);
    s.run.comm.t_slots = override_int(ov, "comm.t_slots", s.run.comm.t_slots);
    s.run.comm.gamma_cm = override_num(ov, "comm.gamma_cm", s.run.comm.gamma_cm);
    s.run.comm.kappa1 = override_num(ov, "comm.kappa1", s.run.comm.kappa1);
    s.run.comm.kappa2 = override_num(ov, "comm.kappa2", s.run.comm.kappa2);
    s.gate = override_num(ov, "comm.gate", s.gate);
    s.sg.n_steps = override_int(ov, "comm.n_steps", s.sg.n_steps);
    s.run.vehicle.T = override_num(ov, "vehicle.T", s.run.vehicle.T);
    s.sg.T = s.run.vehicle.T;
    s.run.xi = voi_penalty_undelivered(override_num(ov, "comm.xi_scale", 1.0));

    PlatoonCommResult res = run_platoon_comm(s, cfg.episodes, static_cast<uint64_t>(cfg.seed));

    CsvWriter log(join_path(cfg.out_dir, "episode_log.csv"));
    log.header({"episode", "tp_gated", "tp_always", "xi_gated", "xi_always", "j_gated", "j_always",
                "rms_e_p_gated", "rms_e_p_always", "zero_fraction", "suppressed", "max_decomp_rel_err"});
    for (size_t e = 0; e < res.episodes.size(); ++e) {
        const PlatoonCommEpisode& ep = res.episodes[e];
        log.row({static_cast<double>(e), ep.tp_gated, ep.tp_always, ep.xi_gated, ep.xi_always, ep.j_gated,
                 ep.j_always, ep.rms_gated, ep.rms_always, ep.zero_fraction,
                 static_cast<double>(ep.suppressed), ep.max_decomp_rel_err});
    }

    // net objective value of gating the marginal information, one paired
    // sample per episode
    std::vector<VoiRecord> recs;
    for (size_t e = 0; e < res.episodes.size(); ++e) {
        VoiRecord r;
        r.kind = VoiKind::evomi;
        r.method = VoiMethod::monte_carlo;
        r.value = res.episodes[e].j_gated - res.episodes[e].j_always;
        r.k = static_cast<int>(e);
        recs.push_back(std::move(r));
    }
    export_voi_csv(recs, join_path(cfg.out_dir, "voi_records.csv"));

    // representative paired episode for the per-interval comparison
    {
        PredecessorTrajectory trace = synth_stop_and_go(s.sg, derive_seed(cfg.seed, 0));
        uint64_t run_seed = derive_seed(derive_seed(cfg.seed, 0), 1);
        CommRunLog gated = run_comm_episode(policy_voi_gated(s.gate), trace, s.run, run_seed);
        CommRunLog always = run_comm_episode(policy_always_transmit(), trace, s.run, run_seed);
        write_plotdata_csv(plotdata_throughput(gated, always),
                           join_path(cfg.out_dir, "plot_throughput.csv"));
        export_comm_log_csv(gated, join_path(cfg.out_dir, "comm_log_gated.csv"));
        export_comm_log_csv(always, join_path(cfg.out_dir, "comm_log_always.csv"));
    }

    nlohmann::json j;
    j["scenario"] = scenario_name(cfg.scenario);
    j["episodes"] = cfg.episodes;
    j["mean_tp_gated"] = res.mean_tp_gated;
    j["mean_tp_always"] = res.mean_tp_always;
    j["mean_zero_fraction"] = res.mean_zero_fraction;
    j["max_rms_rel_diff"] = res.max_rms_rel_diff;
    j["max_decomp_rel_err"] = res.max_decomp_rel_err;
    j["throughput_ok"] = res.throughput_ok;
    j["strict_applicable"] = res.strict_applicable;
    j["strict_ok"] = res.strict_ok;
    j["rms_ok"] = res.rms_ok;
    write_json_file(j, join_path(cfg.out_dir, "summary.json"));
    return 0;
}

inline int run_custom_scenario(const ExperimentConfig& cfg) {
    CsvWriter log(join_path(cfg.out_dir, "episode_log.csv"));
    log.header({"k", "value"});
    export_voi_csv({}, join_path(cfg.out_dir, "voi_records.csv"));
    nlohmann::json j;
    j["scenario"] = scenario_name(cfg.scenario);
    j["note"] = "custom scenario runs no preset simulation; overrides are recorded verbatim";
    write_json_file(j, join_path(cfg.out_dir, "summary.json"));
    return 0;
}

}  // namespace detail

// Runs the configured scenario. Returns 0 on success and 2 when an invariant
// suite fails; configuration errors throw with a named violation.
inline int run_experiment(const ExperimentConfig& cfg) {
    ValidationReport rep = validate_experiment(cfg);
    if (!rep.ok) {
        std::string msg = "invalid experiment config:";
        for (const auto& v : rep.violations) msg += "\n  - " + v;
        throw contract_violation(msg);
    }
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    require(!ec && std::filesystem::is_directory(cfg.out_dir), "run: cannot create out_dir " + cfg.out_dir);
    detail::write_json_file(cfg.to_json(), detail::join_path(cfg.out_dir, "effective_config.json"));

    switch (cfg.scenario) {
        case Scenario::platoon_voi: return detail::run_platoon_voi_scenario(cfg);
        case Scenario::platoon_comm: return detail::run_platoon_comm_scenario(cfg);
        case Scenario::tabular_properties: return detail::run_tabular_scenario(cfg);
        case Scenario::custom: return detail::run_custom_scenario(cfg);
    }
    throw contract_violation("run: unhandled scenario");
}

}  // namespace voisim
