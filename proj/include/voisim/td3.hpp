#pragma once

// Deterministic actor-critic training in the twin-critic, delayed-policy,
// smoothed-target style, plus the critic refit and supervised estimators the
// value-of-information methods build on. Single-threaded and reproducible:
// every random draw comes from substreams of one training seed.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "voisim/env.hpp"
#include "voisim/mlp.hpp"
#include "voisim/replay.hpp"
#include "voisim/ssdp.hpp"
#include "voisim/stats.hpp"

namespace voisim {

struct TrainConfig {
    int total_steps = 20000;
    int start_steps = 1000;  // uniform exploration before the actor takes over
    int batch_size = 256;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    double target_rate = 0.005;     // soft-update coefficient
    int policy_delay = 2;           // critic updates per actor/target update
    double expl_noise = 0.1;        // exploration noise std, in half-range units
    double smoothing_noise = 0.2;   // target-policy smoothing std, half-range units
    double smoothing_clip = 0.5;    // clip for the smoothing noise, half-range units
    std::vector<int> hidden{64, 64};
    int replay_capacity = 100000;
    int episode_len = 0;            // 0 = env default episode boundary only
    std::string log_path;           // optional training-log CSV
};

struct ActorCritic {
    Mlp actor;  // raw head; act() applies tanh scaling into the action box
    Mlp critic_q1, critic_q2;
    Mlp value_head;
    Mlp target_actor, target_q1, target_q2;
    Vec action_lo, action_hi;
    TrainConfig config;

    Vec act(const Vec& obs) const {
        Vec raw = mlp_forward(actor, obs);
        Vec a(raw.size());
        for (size_t i = 0; i < raw.size(); ++i)
            a[i] = action_lo[i] + 0.5 * (std::tanh(raw[i]) + 1.0) * (action_hi[i] - action_lo[i]);
        return a;
    }

    double q_value(const Mlp& critic, const Vec& obs, const Vec& a) const {
        return mlp_forward(critic, concat(obs, a))[0];
    }

    double q_min(const Vec& obs, const Vec& a) const {
        return std::min(q_value(critic_q1, obs, a), q_value(critic_q2, obs, a));
    }

    double v_value(const Vec& obs) const { return mlp_forward(value_head, obs)[0]; }
};

struct EpisodeStat {
    int episode = 0;
    double ret = 0.0;
    double critic_loss = 0.0;  // mean over updates during the episode
};

struct Td3Result {
    ActorCritic ac;
    std::vector<EpisodeStat> log;
};

inline void write_training_log(const std::vector<EpisodeStat>& log, const std::string& path) {
    CsvWriter w(path);
    w.header({"episode", "return", "critic_loss"});
    for (const auto& e : log) w.row({static_cast<double>(e.episode), e.ret, e.critic_loss});
}

namespace detail {

inline std::vector<int> layer_plan(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

inline void soft_update(Mlp& target, const Mlp& main, double rate) {
    for (size_t l = 0; l < main.n_layers(); ++l) {
        for (size_t i = 0; i < main.w[l].a.size(); ++i)
            target.w[l].a[i] += rate * (main.w[l].a[i] - target.w[l].a[i]);
        for (size_t i = 0; i < main.b[l].size(); ++i)
            target.b[l][i] += rate * (main.b[l][i] - target.b[l][i]);
    }
}

inline void check_trainable(double q, long step) {
    if (!std::isfinite(q) || std::fabs(q) > 1e6)
        throw contract_violation("td3 divergence at step " + std::to_string(step) +
                                 ": critic value " + std::to_string(q));
}

}  // namespace detail

inline Td3Result train_td3(Env& env, const TrainConfig& cfg, uint64_t seed) {
    require(cfg.total_steps >= 1 && cfg.batch_size >= 1, "train_td3: bad config");
    require(cfg.policy_delay >= 1 && cfg.replay_capacity >= cfg.batch_size, "train_td3: bad config");
    const int od = env.obs_dim();
    const int ad = env.action_dim();
    const Vec lo = env.action_lo();
    const Vec hi = env.action_hi();
    require(!lo.empty() && lo.size() == hi.size(), "train_td3: bounded action space required");
    const double gamma = env.gamma();

    Td3Result out;
    ActorCritic& ac = out.ac;
    ac.config = cfg;
    ac.action_lo = lo;
    ac.action_hi = hi;
    ac.actor = make_mlp(detail::layer_plan(od, cfg.hidden, ad), Act::tanh_act, derive_seed(seed, 0));
    ac.critic_q1 = make_mlp(detail::layer_plan(od + ad, cfg.hidden, 1), Act::tanh_act, derive_seed(seed, 1));
    ac.critic_q2 = make_mlp(detail::layer_plan(od + ad, cfg.hidden, 1), Act::tanh_act, derive_seed(seed, 2));
    ac.value_head = make_mlp(detail::layer_plan(od, cfg.hidden, 1), Act::tanh_act, derive_seed(seed, 3));
    ac.target_actor = ac.actor;
    ac.target_q1 = ac.critic_q1;
    ac.target_q2 = ac.critic_q2;

    Adam opt_actor(ac.actor, cfg.actor_lr);
    Adam opt_q1(ac.critic_q1, cfg.critic_lr);
    Adam opt_q2(ac.critic_q2, cfg.critic_lr);
    Adam opt_v(ac.value_head, cfg.critic_lr);

    ReplayBuffer replay(static_cast<size_t>(cfg.replay_capacity));
    Rng expl_rng(derive_seed(seed, 10));
    Rng batch_rng(derive_seed(seed, 11));
    Rng smooth_rng(derive_seed(seed, 12));

    Vec half_range(lo.size());
    for (size_t i = 0; i < lo.size(); ++i) half_range[i] = 0.5 * (hi[i] - lo[i]);

    MlpCache c_actor, c_q1, c_q2, c_t, c_v;
    MlpGrads g_q1, g_q2, g_actor, g_v, g_probe;
    g_q1.init_like(ac.critic_q1);
    g_q2.init_like(ac.critic_q2);
    g_actor.init_like(ac.actor);
    g_v.init_like(ac.value_head);
    g_probe.init_like(ac.critic_q1);  // input-gradient probe for the actor update

    int episode = 0;
    Vec obs = env.reset(derive_seed(seed, 1000));
    double ep_ret = 0.0;
    double ep_loss_sum = 0.0;
    long ep_loss_n = 0;
    int ep_steps = 0;

    for (long t = 0; t < cfg.total_steps; ++t) {
        Vec a(ad);
        if (t < cfg.start_steps) {
            for (int i = 0; i < ad; ++i) a[i] = expl_rng.uniform(lo[i], hi[i]);
        } else {
            a = ac.act(obs);
            for (int i = 0; i < ad; ++i)
                a[i] = clamp(a[i] + expl_rng.normal() * cfg.expl_noise * half_range[i], lo[i], hi[i]);
        }
        EnvStep st = env.step(a);
        bool done = st.done || (cfg.episode_len > 0 && ep_steps + 1 >= cfg.episode_len);
        replay.add({obs, a, st.reward, st.obs, done});
        ep_ret += st.reward;
        ++ep_steps;
        obs = std::move(st.obs);
        if (done) {
            out.log.push_back({episode, ep_ret, ep_loss_n ? ep_loss_sum / ep_loss_n : 0.0});
            ++episode;
            obs = env.reset(derive_seed(seed, 1000 + static_cast<uint64_t>(episode)));
            ep_ret = 0.0;
            ep_steps = 0;
            ep_loss_sum = 0.0;
            ep_loss_n = 0;
        }

        if (t < cfg.start_steps || replay.size() < static_cast<size_t>(cfg.batch_size)) continue;

        // critic update
        auto idx = replay.sample_indices(batch_rng, static_cast<size_t>(cfg.batch_size));
        g_q1.zero();
        g_q2.zero();
        double loss = 0.0;
        const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
        for (size_t bi : idx) {
            const Transition& tr = replay[bi];
            double y = tr.r;
            if (!tr.done) {
                const Vec& raw = mlp_forward_cached(ac.target_actor, tr.s_next, c_t);
                Vec an(ad);
                for (int i = 0; i < ad; ++i) {
                    double noise = clamp(smooth_rng.normal() * cfg.smoothing_noise,
                                         -cfg.smoothing_clip, cfg.smoothing_clip) * half_range[i];
                    double scaled = lo[i] + 0.5 * (std::tanh(raw[i]) + 1.0) * (hi[i] - lo[i]);
                    an[i] = clamp(scaled + noise, lo[i], hi[i]);
                }
                Vec xin = concat(tr.s_next, an);
                double q1t = mlp_forward_cached(ac.target_q1, xin, c_t)[0];
                double q2t = mlp_forward_cached(ac.target_q2, xin, c_t)[0];
                y += gamma * std::min(q1t, q2t);
            }
            detail::check_trainable(y, t);
            Vec xin = concat(tr.s, tr.a);
            double q1 = mlp_forward_cached(ac.critic_q1, xin, c_q1)[0];
            mlp_backward_cached(ac.critic_q1, c_q1, {2.0 * (q1 - y) * inv_b}, g_q1);
            double q2 = mlp_forward_cached(ac.critic_q2, xin, c_q2)[0];
            mlp_backward_cached(ac.critic_q2, c_q2, {2.0 * (q2 - y) * inv_b}, g_q2);
            detail::check_trainable(q1, t);
            detail::check_trainable(q2, t);
            loss += 0.5 * ((q1 - y) * (q1 - y) + (q2 - y) * (q2 - y)) * inv_b;
        }
        opt_q1.step(ac.critic_q1, g_q1);
        opt_q2.step(ac.critic_q2, g_q2);
        ep_loss_sum += loss;
        ++ep_loss_n;

        if (t % cfg.policy_delay == 0) {
            // actor ascent on q1(s, act(s)), and value head toward min-twin Q
            g_actor.zero();
            g_v.zero();
            for (size_t bi : idx) {
                const Transition& tr = replay[bi];
                const Vec& raw = mlp_forward_cached(ac.actor, tr.s, c_actor);
                Vec a_clean(ad);
                Vec dsig(ad);
                for (int i = 0; i < ad; ++i) {
                    double th = std::tanh(raw[i]);
                    a_clean[i] = lo[i] + 0.5 * (th + 1.0) * (hi[i] - lo[i]);
                    dsig[i] = 0.5 * (1.0 - th * th) * (hi[i] - lo[i]);
                }
                Vec xin = concat(tr.s, a_clean);
                double q1 = mlp_forward_cached(ac.critic_q1, xin, c_q1)[0];
                // only the input gradient is read off the probe (grads.x is
                // overwritten per call, parameter slots are ignored)
                mlp_backward_cached(ac.critic_q1, c_q1, {1.0}, g_probe);
                Vec up(ad);
                for (int i = 0; i < ad; ++i) up[i] = g_probe.x[od + i] * dsig[i] * inv_b;
                mlp_backward_cached(ac.actor, c_actor, up, g_actor);

                double q2 = mlp_forward_cached(ac.critic_q2, xin, c_q2)[0];
                double v = mlp_forward_cached(ac.value_head, tr.s, c_v)[0];
                mlp_backward_cached(ac.value_head, c_v, {2.0 * (v - std::min(q1, q2)) * inv_b}, g_v);
            }
            opt_actor.step(ac.actor, g_actor, -1.0);  // ascent
            opt_v.step(ac.value_head, g_v);
            detail::soft_update(ac.target_actor, ac.actor, cfg.target_rate);
            detail::soft_update(ac.target_q1, ac.critic_q1, cfg.target_rate);
            detail::soft_update(ac.target_q2, ac.critic_q2, cfg.target_rate);
        }
    }
    if (ep_steps > 0) out.log.push_back({episode, ep_ret, ep_loss_n ? ep_loss_sum / ep_loss_n : 0.0});
    if (!cfg.log_path.empty()) write_training_log(out.log, cfg.log_path);
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo critic refit: relabel (state-from-sup-rollout, inferior action)
// pairs with rollout returns that follow the superior policy afterwards, and
// fit the twin critics to those returns.

struct FinetuneConfig {
    int n_mc = 8;        // rollouts averaged per start pair
    int horizon = 0;     // 0 = derive from gamma (tail weight < 1e-8) or spec horizon
    int epochs = 100;
    int batch_size = 64;
    double lr = 3e-4;
};

struct FinetuneResult {
    ActorCritic ac;
    double mean_abs_dq = 0.0;  // mean |Q_after - Q_before| on the dataset
    double mean_mc_se = 0.0;   // mean standard error of the MC labels
    size_t n_pairs = 0;
};

namespace detail {

inline int effective_horizon(const SsdpSpec& spec) {
    if (spec.horizon > 0) return spec.horizon;
    require(spec.gamma < 1.0, "effective_horizon: unbounded spec needs gamma < 1");
    int h = static_cast<int>(std::ceil(std::log(1e-8) / std::log(spec.gamma)));
    return std::min(std::max(h, 1), 10000);
}

// Discounted return of `policy` starting from the forced first step
// (s0, a0): R_1 + gamma R_2 + ...
inline double forced_start_return(const SsdpSpec& spec, const Vec& s0, const Vec& a0,
                                  const PolicyFn& policy, int horizon, uint64_t seed) {
    Rng exo_rng(derive_seed(seed, 1));
    auto stream = spec.exo.make_stream();
    Vec s = s0;
    double g = 0.0, w = 1.0;
    for (int k = 0; k < horizon; ++k) {
        Vec a = k == 0 ? a0 : policy(s);
        stream->observe_action(a);
        Vec wk = stream->next(exo_rng);
        StepResult sr = step(spec, s, a, wk);
        g += w * sr.reward;
        w *= spec.gamma;
        s = std::move(sr.s_next);
    }
    return g;
}

}  // namespace detail

inline FinetuneResult finetune_q_montecarlo(const ActorCritic& ac_in, const SsdpSpec& spec,
                                            const PolicyFn& pi_inf, int n_rollouts, uint64_t seed,
                                            const FinetuneConfig& cfg = {}) {
    require(n_rollouts >= 1, "finetune_q_montecarlo: n_rollouts must be >= 1");
    require(cfg.n_mc >= 2, "finetune_q_montecarlo: need >= 2 rollouts per pair for an SE");
    spec.validate();
    FinetuneResult out;
    out.ac = ac_in;
    const int horizon = cfg.horizon > 0 ? cfg.horizon : detail::effective_horizon(spec);
    PolicyFn pi_sup = [&ac = out.ac](const Vec& s) { return ac.act(s); };

    // visit distribution: states along superior-policy rollouts
    std::vector<Vec> pool;
    Rng pool_rng(derive_seed(seed, 20));
    int traj_i = 0;
    while (static_cast<int>(pool.size()) < n_rollouts * 4) {
        Trajectory tr = rollout(spec, pi_sup, std::min(horizon, 64), derive_seed(seed, 30 + traj_i++));
        for (const auto& rec : tr.steps) pool.push_back(rec.s);
    }

    std::vector<Vec> xs;
    Vec ys;
    Vec ses;
    for (int i = 0; i < n_rollouts; ++i) {
        const Vec& s0 = pool[pool_rng.randint(pool.size())];
        Vec a0 = pi_inf(s0);
        if (!spec.action_lo.empty())
            for (size_t d = 0; d < a0.size(); ++d) a0[d] = clamp(a0[d], spec.action_lo[d], spec.action_hi[d]);
        Vec returns(cfg.n_mc);
        for (int m = 0; m < cfg.n_mc; ++m)
            returns[m] = detail::forced_start_return(spec, s0, a0, pi_sup, horizon,
                                                     derive_seed(seed, 100000 + i * 1000 + m));
        MeanCi ci = mean_ci(returns);
        xs.push_back(concat(s0, a0));
        ys.push_back(ci.mean);
        ses.push_back(ci.se);
    }
    out.n_pairs = xs.size();
    out.mean_mc_se = mean_of(ses);

    Vec q_before(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) q_before[i] = mlp_forward(out.ac.critic_q1, xs[i])[0];

    Adam opt1(out.ac.critic_q1, cfg.lr);
    Adam opt2(out.ac.critic_q2, cfg.lr);
    Rng shuffle_rng(derive_seed(seed, 21));
    MlpCache cache;
    MlpGrads g1, g2;
    g1.init_like(out.ac.critic_q1);
    g2.init_like(out.ac.critic_q2);
    std::vector<size_t> order(xs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.randint(i)]);
        for (size_t ofs = 0; ofs < order.size(); ofs += cfg.batch_size) {
            size_t lim = std::min(order.size(), ofs + cfg.batch_size);
            const double inv_b = 1.0 / static_cast<double>(lim - ofs);
            g1.zero();
            g2.zero();
            for (size_t j = ofs; j < lim; ++j) {
                const Vec& x = xs[order[j]];
                double y = ys[order[j]];
                double q1 = mlp_forward_cached(out.ac.critic_q1, x, cache)[0];
                mlp_backward_cached(out.ac.critic_q1, cache, {2.0 * (q1 - y) * inv_b}, g1);
                double q2 = mlp_forward_cached(out.ac.critic_q2, x, cache)[0];
                mlp_backward_cached(out.ac.critic_q2, cache, {2.0 * (q2 - y) * inv_b}, g2);
            }
            opt1.step(out.ac.critic_q1, g1);
            opt2.step(out.ac.critic_q2, g2);
        }
    }

    double dq = 0.0;
    for (size_t i = 0; i < xs.size(); ++i)
        dq += std::fabs(mlp_forward(out.ac.critic_q1, xs[i])[0] - q_before[i]);
    out.mean_abs_dq = dq / static_cast<double>(xs.size());
    return out;
}

// ---------------------------------------------------------------------------
// Supervised advantage regressor on (state, action, target) triples.

struct AdvantageSample {
    Vec s;
    Vec a;
    double target = 0.0;
};

struct FitConfig {
    int epochs = 200;
    int batch_size = 64;
    double lr = 1e-3;
    std::vector<int> hidden{64, 64};
};

struct FitResult {
    Mlp net;  // input (s, a), scalar output
    double mse = 0.0;
};

inline FitResult fit_advantage_estimator(const std::vector<AdvantageSample>& data,
                                         const FitConfig& cfg, uint64_t seed) {
    require(!data.empty(), "fit_advantage_estimator: empty dataset");
    const int in_dim = static_cast<int>(data[0].s.size() + data[0].a.size());
    FitResult out;
    out.net = make_mlp(detail::layer_plan(in_dim, cfg.hidden, 1), Act::tanh_act, derive_seed(seed, 0));
    Adam opt(out.net, cfg.lr);
    Rng shuffle_rng(derive_seed(seed, 1));
    MlpCache cache;
    MlpGrads g;
    g.init_like(out.net);

    std::vector<Vec> xs;
    xs.reserve(data.size());
    for (const auto& d : data) xs.push_back(concat(d.s, d.a));

    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.randint(i)]);
        for (size_t ofs = 0; ofs < order.size(); ofs += cfg.batch_size) {
            size_t lim = std::min(order.size(), ofs + cfg.batch_size);
            const double inv_b = 1.0 / static_cast<double>(lim - ofs);
            g.zero();
            for (size_t j = ofs; j < lim; ++j) {
                double y = data[order[j]].target;
                double p = mlp_forward_cached(out.net, xs[order[j]], cache)[0];
                mlp_backward_cached(out.net, cache, {2.0 * (p - y) * inv_b}, g);
            }
            opt.step(out.net, g);
        }
    }
    double mse = 0.0;
    for (size_t i = 0; i < data.size(); ++i) {
        double e = mlp_forward(out.net, xs[i])[0] - data[i].target;
        mse += e * e;
    }
    out.mse = mse / static_cast<double>(data.size());
    return out;
}

// TD error delta = r + gamma V(s') - V(s); bootstrap dropped on terminal
// transitions.
inline double td_error(const Mlp& value_head, const Vec& s, double r, const Vec& s_next,
                       double gamma, bool done = false) {
    double v = mlp_forward(value_head, s)[0];
    double vn = done ? 0.0 : mlp_forward(value_head, s_next)[0];
    return r + gamma * vn - v;
}

// ---------------------------------------------------------------------------
// Checkpointing: one file holding every network plus the action box.

inline void save_actor_critic(const ActorCritic& ac, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "save_actor_critic: cannot open " + path);
    out << "# actor-critic v1\n";
    out << "action_lo:";
    for (size_t i = 0; i < ac.action_lo.size(); ++i) out << (i ? ',' : ' ') << format_double(ac.action_lo[i]);
    out << "\naction_hi:";
    for (size_t i = 0; i < ac.action_hi.size(); ++i) out << (i ? ',' : ' ') << format_double(ac.action_hi[i]);
    out << '\n';
    mlp_save_stream(ac.actor, out, "actor");
    mlp_save_stream(ac.critic_q1, out, "critic_q1");
    mlp_save_stream(ac.critic_q2, out, "critic_q2");
    mlp_save_stream(ac.value_head, out, "value_head");
    mlp_save_stream(ac.target_actor, out, "target_actor");
    mlp_save_stream(ac.target_q1, out, "target_q1");
    mlp_save_stream(ac.target_q2, out, "target_q2");
}

inline ActorCritic load_actor_critic(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_actor_critic: cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line.rfind("# actor-critic v1", 0) == 0,
            "load_actor_critic: missing version header");
    ActorCritic ac;
    require(static_cast<bool>(std::getline(in, line)), "load_actor_critic: missing action_lo");
    ac.action_lo = detail::parse_number_list(line, "action_lo");
    require(static_cast<bool>(std::getline(in, line)), "load_actor_critic: missing action_hi");
    ac.action_hi = detail::parse_number_list(line, "action_hi");
    ac.actor = mlp_load_stream(in);
    ac.critic_q1 = mlp_load_stream(in);
    ac.critic_q2 = mlp_load_stream(in);
    ac.value_head = mlp_load_stream(in);
    ac.target_actor = mlp_load_stream(in);
    ac.target_q1 = mlp_load_stream(in);
    ac.target_q2 = mlp_load_stream(in);
    return ac;
}

}  // namespace voisim
