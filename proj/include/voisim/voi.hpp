#pragma once

// Value-of-information metrics. The utility-based family compares acting
// with an inferior observation channel against acting with the full one:
//
//  - expected VoI:      Xi = J_inf - J_sup, the performance gap between the
//                       two policies (<= 0 when pi_sup is optimal);
//  - instantaneous VoI: xi = A_sup(s, a_inf), the advantage of the inferior
//                       action under the reference policy's critic.
//
// "Missing" vs "imperfect" tags in VoiKind record which degradation the
// inferior channel applies; the math is identical. The information-theoretic
// variant scores an information stream by how much it sharpens next-state
// and reward prediction: the KL divergence between the augmented-state
// transition model and the product of the plain-state marginal with the
// stream's own transition, plus the matching reward-model divergence.
//
// Estimators, in increasing order of model access:
//  - ivoi_fit_montecarlo: paired forced-start rollouts label the advantage,
//    then a network regresses the labels (works from a simulator alone);
//  - ivoi_from_critic:    Q(s, a_inf) - Q(s, pi_sup(s)) from trained or
//    exact critics;
//  - ivoi_td_errors:      one-step TD residuals against a value function,
//    unbiased for the advantage once exogenous draws are averaged out.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "voisim/common.hpp"
#include "voisim/csv.hpp"
#include "voisim/discretize.hpp"
#include "voisim/ssdp.hpp"
#include "voisim/stats.hpp"
#include "voisim/tabular.hpp"
#include "voisim/td3.hpp"

namespace voisim {

enum class VoiKind { evomi, evoii, ivomi, ivoii, itvoi };
enum class VoiMethod { exact_dp, monte_carlo, rollout_fit, critic, td, kl };

inline const char* voi_kind_name(VoiKind k) {
    switch (k) {
        case VoiKind::evomi: return "EVoMI";
        case VoiKind::evoii: return "EVoII";
        case VoiKind::ivomi: return "IVoMI";
        case VoiKind::ivoii: return "IVoII";
        case VoiKind::itvoi: return "ITVoI";
    }
    return "?";
}

inline const char* voi_method_name(VoiMethod m) {
    switch (m) {
        case VoiMethod::exact_dp: return "exact_dp";
        case VoiMethod::monte_carlo: return "monte_carlo";
        case VoiMethod::rollout_fit: return "rollout_fit";
        case VoiMethod::critic: return "critic";
        case VoiMethod::td: return "td";
        case VoiMethod::kl: return "kl";
    }
    return "?";
}

struct VoiRecord {
    VoiKind kind = VoiKind::evomi;
    double value = 0.0;
    bool has_ci = false;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    VoiMethod method = VoiMethod::monte_carlo;
    int k = -1;  // step index; -1 for aggregates
    Vec state;   // context snapshot, may be empty
    Vec action;
};

// CSV layout: kind, value, ci_lo, ci_hi, method, k, s0.., a0.. with state
// and action columns sized to the widest record; absent entries are nan.
inline void export_voi_csv(const std::vector<VoiRecord>& recs, const std::string& path) {
    size_t sd = 0, ad = 0;
    for (const auto& r : recs) {
        sd = std::max(sd, r.state.size());
        ad = std::max(ad, r.action.size());
    }
    CsvWriter w(path);
    std::vector<std::string> cols{"kind", "value", "ci_lo", "ci_hi", "method", "k"};
    for (size_t i = 0; i < sd; ++i) cols.push_back("s" + std::to_string(i));
    for (size_t i = 0; i < ad; ++i) cols.push_back("a" + std::to_string(i));
    w.header(cols);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : recs) {
        std::vector<std::string> cells{voi_kind_name(r.kind), format_double(r.value),
                                       format_double(r.has_ci ? r.ci_lo : r.value),
                                       format_double(r.has_ci ? r.ci_hi : r.value),
                                       voi_method_name(r.method), std::to_string(r.k)};
        for (size_t i = 0; i < sd; ++i) cells.push_back(format_double(i < r.state.size() ? r.state[i] : nan));
        for (size_t i = 0; i < ad; ++i) cells.push_back(format_double(i < r.action.size() ? r.action[i] : nan));
        w.raw_row(cells);
    }
}

// The two policies being compared. Both consume the full state; pi_inf is
// expected to degrade its view internally (mask a slot, use a stale
// snapshot, ...). q_sup/v_sup expose the reference policy's critic when one
// exists. inf_in_place_of_sup records the fallback where no reference
// policy is available and pi_inf plays both roles.
struct PolicyPair {
    PolicyFn pi_inf;
    PolicyFn pi_sup;
    std::function<double(const Vec& s, const Vec& a)> q_sup;
    std::function<double(const Vec& s)> v_sup;
    bool inf_in_place_of_sup = false;
};

// Expected VoI from known performances.
inline double evoi(double j_inf, double j_sup) { return j_inf - j_sup; }

// Expected VoI by paired rollouts: each episode index reuses one seed for
// both policies, so initial states and exogenous draws are shared and the
// return difference has far lower variance than independent runs (and is
// exactly zero when the policies coincide).
inline VoiRecord evoi_montecarlo(const SsdpSpec& spec, const PolicyPair& pair, int n_episodes, uint64_t seed,
                                 VoiKind kind = VoiKind::evomi) {
    require(n_episodes >= 2, "evoi_montecarlo: need at least 2 episodes");
    require(static_cast<bool>(pair.pi_inf) && static_cast<bool>(pair.pi_sup),
            "evoi_montecarlo: both policies must be set");
    const int horizon = detail::effective_horizon(spec);
    Vec diffs(n_episodes);
    for (int i = 0; i < n_episodes; ++i) {
        uint64_t es = derive_seed(seed, static_cast<uint64_t>(i));
        double g_inf = discounted_return(rollout(spec, pair.pi_inf, horizon, es));
        double g_sup = discounted_return(rollout(spec, pair.pi_sup, horizon, es));
        diffs[i] = g_inf - g_sup;
    }
    MeanCi ci = mean_ci(diffs);
    VoiRecord rec;
    rec.kind = kind;
    rec.value = ci.mean;
    rec.has_ci = true;
    rec.ci_lo = ci.ci_lo;
    rec.ci_hi = ci.ci_hi;
    rec.method = VoiMethod::monte_carlo;
    return rec;
}

// Instantaneous VoI: the advantage, under the reference policy's critic, of
// the action the inferior channel picks. s_sup is the full state; s_inf is
// what pi_inf gets to see (defaults to the full state for policies that
// degrade internally).
inline double ivoi(const PolicyPair& pair, const Vec& s_sup, const Vec& s_inf) {
    require(static_cast<bool>(pair.pi_inf), "ivoi: pi_inf must be set");
    require(static_cast<bool>(pair.q_sup),
            "ivoi: no critic for the reference policy; supply q_sup (exact table or trained twin critics via "
            "ivoi_from_critic) or fit one with ivoi_fit_montecarlo");
    Vec a_inf = pair.pi_inf(s_inf);
    double q = pair.q_sup(s_sup, a_inf);
    if (pair.v_sup) return q - pair.v_sup(s_sup);
    require(static_cast<bool>(pair.pi_sup), "ivoi: need v_sup or pi_sup to anchor the advantage");
    return q - pair.q_sup(s_sup, pair.pi_sup(s_sup));
}

inline double ivoi(const PolicyPair& pair, const Vec& s_sup) { return ivoi(pair, s_sup, s_sup); }

struct IvoiFitConfig {
    double mix_prob = 0.5;  // chance per step of acting with pi_inf while collecting states
    int horizon = 0;        // label rollout length; 0 = spec horizon (or the gamma cutoff)
    FitConfig fit;
    bool fit_estimator = true;
};

struct IvoiFitResult {
    std::vector<AdvantageSample> data;  // (state, inferior action, advantage label)
    Vec label_se;                       // per-state Monte-Carlo SE, aligned with data
    FitResult fit;                      // regressed estimator (when requested)
    double mean_label_se = 0.0;         // average of label_se
};

// Monte-Carlo advantage labels plus a regressed estimator. States come from
// episodes driven by a mixed policy (pi_inf with probability mix_prob, else
// pi_sup). Each recorded state gets paired forced-start returns: one rollout
// starting with the inferior action, one with the reference action, both
// continuing under pi_sup with the same seed, so their difference is a
// common-random-numbers advantage sample.
inline IvoiFitResult ivoi_fit_montecarlo(const SsdpSpec& spec, const PolicyPair& pair, int rollout_set_size,
                                         int rollouts_per_state, uint64_t seed, IvoiFitConfig cfg = {}) {
    spec.validate();
    require(rollout_set_size >= 1, "ivoi_fit_montecarlo: rollout_set_size must be >= 1");
    require(rollouts_per_state >= 1, "ivoi_fit_montecarlo: rollouts_per_state must be >= 1");
    require(cfg.mix_prob >= 0.0 && cfg.mix_prob <= 1.0, "ivoi_fit_montecarlo: mix_prob outside [0,1]");
    require(static_cast<bool>(pair.pi_inf) && static_cast<bool>(pair.pi_sup),
            "ivoi_fit_montecarlo: both policies must be set");
    const int horizon = cfg.horizon > 0 ? cfg.horizon : detail::effective_horizon(spec);

    Rng mix_rng(derive_seed(seed, 0));
    std::vector<Vec> states;
    states.reserve(rollout_set_size);
    PolicyFn mixed = [&](const Vec& s) -> Vec {
        return mix_rng.uniform() < cfg.mix_prob ? pair.pi_inf(s) : pair.pi_sup(s);
    };
    for (uint64_t e = 0; static_cast<int>(states.size()) < rollout_set_size; ++e) {
        Trajectory traj = rollout(spec, mixed, horizon, derive_seed(seed, 1000 + e));
        for (const auto& rec : traj.steps) {
            states.push_back(rec.s);
            if (static_cast<int>(states.size()) >= rollout_set_size) break;
        }
    }

    IvoiFitResult out;
    out.data.reserve(states.size());
    out.label_se.reserve(states.size());
    for (size_t i = 0; i < states.size(); ++i) {
        Vec a_inf = pair.pi_inf(states[i]);
        Vec a_sup = pair.pi_sup(states[i]);
        Vec labels(rollouts_per_state);
        for (int m = 0; m < rollouts_per_state; ++m) {
            uint64_t rs = derive_seed(seed, 100000 + i * static_cast<uint64_t>(rollouts_per_state) + m);
            double g_inf = detail::forced_start_return(spec, states[i], a_inf, pair.pi_sup, horizon, rs);
            double g_sup = detail::forced_start_return(spec, states[i], a_sup, pair.pi_sup, horizon, rs);
            labels[m] = g_inf - g_sup;
        }
        out.data.push_back({states[i], a_inf, mean_of(labels)});
        out.label_se.push_back(stderr_of(labels));
    }
    out.mean_label_se = mean_of(out.label_se);
    if (cfg.fit_estimator) out.fit = fit_advantage_estimator(out.data, cfg.fit, derive_seed(seed, 7));
    return out;
}

using IvoiFn = std::function<double(const Vec& s, const Vec& a)>;

// Critic-difference estimator: xi(s, a) = Q(s, a) - Q(s, pi_sup(s)). Exact
// zero when a is the reference action, since the two Q calls coincide.
inline IvoiFn ivoi_from_critic(const PolicyPair& pair) {
    require(static_cast<bool>(pair.q_sup),
            "ivoi_from_critic: q_sup missing; without a critic use ivoi_td_errors on a value function");
    if (pair.v_sup) {
        auto q = pair.q_sup;
        auto v = pair.v_sup;
        return [q, v](const Vec& s, const Vec& a) { return q(s, a) - v(s); };
    }
    require(static_cast<bool>(pair.pi_sup),
            "ivoi_from_critic: need pi_sup (deterministic) or v_sup; for stochastic references use "
            "ivoi_td_errors");
    auto q = pair.q_sup;
    auto pi = pair.pi_sup;
    return [q, pi](const Vec& s, const Vec& a) { return q(s, a) - q(s, pi(s)); };
}

// Same, from trained twin critics: uses the min of the pair at both points.
inline IvoiFn ivoi_from_critic(const ActorCritic& ac_in) {
    auto ac = std::make_shared<ActorCritic>(ac_in);
    return [ac](const Vec& s, const Vec& a) { return ac->q_min(s, a) - ac->q_min(s, ac->act(s)); };
}

// One-step TD residuals delta_k = r + gamma (1 - done) v(s') - v(s); each is
// an unbiased advantage sample once the exogenous draw is averaged out.
inline Vec ivoi_td_errors(const std::function<double(const Vec&)>& v, const std::vector<Transition>& steps,
                          double gamma) {
    require(static_cast<bool>(v), "ivoi_td_errors: value function must be set");
    require(gamma >= 0.0 && gamma <= 1.0, "ivoi_td_errors: gamma outside [0,1]");
    Vec out(steps.size());
    for (size_t i = 0; i < steps.size(); ++i) {
        const Transition& t = steps[i];
        out[i] = t.r + (t.done ? 0.0 : gamma * v(t.s_next)) - v(t.s);
    }
    return out;
}

inline Vec ivoi_td_errors(const std::function<double(const Vec&)>& v, const Trajectory& traj) {
    std::vector<Transition> steps;
    steps.reserve(traj.steps.size());
    for (const auto& rec : traj.steps) steps.push_back({rec.s, rec.a, rec.r, rec.s_next, false});
    return ivoi_td_errors(v, steps, traj.gamma);
}

// Exact exogenous average of the TD residual at (s, a); needs a finite exo
// support. With the exact value function of pi_sup this equals the advantage
// A_sup(s, a) identically.
inline double ivoi_td_exo_averaged(const SsdpSpec& spec, const std::function<double(const Vec&)>& v,
                                   const Vec& s, const Vec& a) {
    require(spec.exo.finite_support(), "ivoi_td_exo_averaged: exogenous support must be finite");
    double acc = 0.0;
    for (size_t j = 0; j < spec.exo.outcomes.size(); ++j) {
        StepResult sr = step(spec, s, a, spec.exo.outcomes[j]);
        acc += spec.exo.probs[j] * (sr.reward + spec.gamma * v(sr.s_next));
    }
    return acc - v(s);
}

// Enumerated joint model of one decision step carrying an information
// stream: base state s, information i, action a. trans rows are
// categoricals over the joint next outcome (s', i'); r_prob rows are
// categoricals over r_support; weight is the sampling distribution over
// (s, i, a) the divergences are averaged under.
struct JointModel {
    int n_states = 0;
    int n_info = 0;
    int n_actions = 0;
    std::vector<double> trans;   // (s,i,a) x (s',i'), row-major
    Vec r_support;               // enumerated reward outcomes
    std::vector<double> r_prob;  // (s,i,a) x r_support
    std::vector<double> weight;  // p(s,i,a)

    size_t n_ctx() const {
        return static_cast<size_t>(n_states) * n_info * n_actions;
    }
    size_t ctx(int s, int i, int a) const {
        return (static_cast<size_t>(s) * n_info + i) * n_actions + a;
    }
    size_t joint(int sn, int in) const { return static_cast<size_t>(sn) * n_info + in; }

    double t(int s, int i, int a, int sn, int in) const {
        return trans[ctx(s, i, a) * (static_cast<size_t>(n_states) * n_info) + joint(sn, in)];
    }
    double& t(int s, int i, int a, int sn, int in) {
        return trans[ctx(s, i, a) * (static_cast<size_t>(n_states) * n_info) + joint(sn, in)];
    }
    double rp(int s, int i, int a, int r) const {
        return r_prob[ctx(s, i, a) * r_support.size() + r];
    }
    double& rp(int s, int i, int a, int r) {
        return r_prob[ctx(s, i, a) * r_support.size() + r];
    }
    double& w(int s, int i, int a) { return weight[ctx(s, i, a)]; }

    static JointModel zeros(int n_s, int n_i, int n_a, Vec rewards) {
        require(n_s >= 1 && n_i >= 1 && n_a >= 1, "JointModel: empty spaces");
        require(!rewards.empty(), "JointModel: empty reward support");
        JointModel m;
        m.n_states = n_s;
        m.n_info = n_i;
        m.n_actions = n_a;
        m.r_support = std::move(rewards);
        m.trans.assign(m.n_ctx() * static_cast<size_t>(n_s) * n_i, 0.0);
        m.r_prob.assign(m.n_ctx() * m.r_support.size(), 0.0);
        m.weight.assign(m.n_ctx(), 0.0);
        return m;
    }

    void validate() const {
        require(n_states >= 1 && n_info >= 1 && n_actions >= 1, "JointModel: empty spaces");
        const size_t nj = static_cast<size_t>(n_states) * n_info;
        require(trans.size() == n_ctx() * nj, "JointModel: trans size mismatch");
        require(r_prob.size() == n_ctx() * r_support.size(), "JointModel: r_prob size mismatch");
        require(weight.size() == n_ctx(), "JointModel: weight size mismatch");
        double wsum = 0.0;
        for (size_t c = 0; c < n_ctx(); ++c) {
            require(weight[c] >= 0.0, "JointModel: negative weight");
            wsum += weight[c];
            double ts = 0.0, rs = 0.0;
            for (size_t j = 0; j < nj; ++j) {
                require(trans[c * nj + j] >= 0.0, "JointModel: negative transition probability");
                ts += trans[c * nj + j];
            }
            for (size_t j = 0; j < r_support.size(); ++j) {
                require(r_prob[c * r_support.size() + j] >= 0.0, "JointModel: negative reward probability");
                rs += r_prob[c * r_support.size() + j];
            }
            if (weight[c] > 0.0) {
                require(std::fabs(ts - 1.0) <= 1e-9, "JointModel: transition row does not sum to 1");
                require(std::fabs(rs - 1.0) <= 1e-9, "JointModel: reward row does not sum to 1");
            }
        }
        require(std::fabs(wsum - 1.0) <= 1e-9, "JointModel: weights do not sum to 1");
    }
};

struct KlResult {
    double value = 0.0;
    bool infinite = false;
    std::string note;
};

// KL(p || q) over categoricals. Mass in p where q has none is a genuine
// divergence of +infinity and is reported with the offending index;
// laplace_eps > 0 smooths both distributions instead, the standard remedy
// for supports estimated from finite data.
inline KlResult kl_categorical(const Vec& p, const Vec& q, double laplace_eps = 0.0) {
    require(p.size() == q.size() && !p.empty(), "kl_categorical: size mismatch");
    require(laplace_eps >= 0.0, "kl_categorical: laplace_eps must be >= 0");
    KlResult out;
    const double n = static_cast<double>(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
        double pi = laplace_eps > 0.0 ? (p[i] + laplace_eps) / (1.0 + laplace_eps * n) : p[i];
        double qi = laplace_eps > 0.0 ? (q[i] + laplace_eps) / (1.0 + laplace_eps * n) : q[i];
        if (pi == 0.0) continue;
        if (qi <= 0.0) {
            out.infinite = true;
            out.value = std::numeric_limits<double>::infinity();
            out.note = "kl_categorical: p has mass at index " + std::to_string(i) + " where q is zero";
            return out;
        }
        out.value += pi * std::log(pi / qi);
    }
    return out;
}

struct ItvoiResult {
    double total = 0.0;
    double kl_transition = 0.0;
    double kl_reward = 0.0;
    bool infinite = false;
    std::string note;
};

// Information-theoretic VoI of the stream i:
//
//   KL( p(s',i'|s,i,a) || p(s'|s,a) p(i'|s,i,a) ) + KL( p(r|s,i,a) || p(r|s,a) )
//
// averaged under the weighting. The first factor of the product marginal
// drops i by averaging over the weighting's p(i|s,a); the second is the
// stream's own transition. A support mismatch (numerator mass where the
// product has none) is reported as +infinity with a diagnostic;
// laplace_eps > 0 smooths every conditional instead, for models estimated
// from data.
inline ItvoiResult itvoi(const JointModel& m, double laplace_eps = 0.0) {
    m.validate();
    require(laplace_eps >= 0.0, "itvoi: laplace_eps must be >= 0");
    ItvoiResult out;
    const size_t nj = static_cast<size_t>(m.n_states) * m.n_info;
    const size_t nr = m.r_support.size();
    auto smooth = [laplace_eps](double p, size_t n) {
        return laplace_eps > 0.0 ? (p + laplace_eps) / (1.0 + laplace_eps * static_cast<double>(n)) : p;
    };
    for (int s = 0; s < m.n_states; ++s) {
        for (int a = 0; a < m.n_actions; ++a) {
            double wsa = 0.0;
            for (int i = 0; i < m.n_info; ++i) wsa += m.weight[m.ctx(s, i, a)];
            if (wsa <= 0.0) continue;
            // p(s'|s,a) and p(r|s,a): information marginalized under the weighting
            Vec p_sn(m.n_states, 0.0), p_r(nr, 0.0);
            for (int i = 0; i < m.n_info; ++i) {
                double pi = m.weight[m.ctx(s, i, a)] / wsa;
                if (pi == 0.0) continue;
                for (int sn = 0; sn < m.n_states; ++sn)
                    for (int in = 0; in < m.n_info; ++in) p_sn[sn] += pi * m.t(s, i, a, sn, in);
                for (size_t r = 0; r < nr; ++r) p_r[r] += pi * m.rp(s, i, a, static_cast<int>(r));
            }
            for (int i = 0; i < m.n_info; ++i) {
                const double w = m.weight[m.ctx(s, i, a)];
                if (w == 0.0) continue;
                // p(i'|s,i,a): the stream's own transition
                Vec p_in(m.n_info, 0.0);
                for (int in = 0; in < m.n_info; ++in)
                    for (int sn = 0; sn < m.n_states; ++sn) p_in[in] += m.t(s, i, a, sn, in);
                for (int sn = 0; sn < m.n_states; ++sn) {
                    for (int in = 0; in < m.n_info; ++in) {
                        double num = smooth(m.t(s, i, a, sn, in), nj);
                        if (num == 0.0) continue;
                        double den = smooth(p_sn[sn], static_cast<size_t>(m.n_states)) *
                                     smooth(p_in[in], static_cast<size_t>(m.n_info));
                        if (den <= 0.0) {
                            out.infinite = true;
                            out.note = "itvoi: transition mass at s=" + std::to_string(s) +
                                       ",i=" + std::to_string(i) + ",a=" + std::to_string(a) +
                                       ",s'=" + std::to_string(sn) + ",i'=" + std::to_string(in) +
                                       " outside the product support";
                            out.kl_transition = std::numeric_limits<double>::infinity();
                        } else if (!out.infinite) {
                            out.kl_transition += w * num * std::log(num / den);
                        }
                    }
                }
                for (size_t r = 0; r < nr; ++r) {
                    double num = smooth(m.rp(s, i, a, static_cast<int>(r)), nr);
                    if (num == 0.0) continue;
                    double den = smooth(p_r[r], nr);
                    if (den <= 0.0) {
                        out.infinite = true;
                        out.note = "itvoi: reward mass at s=" + std::to_string(s) + ",i=" + std::to_string(i) +
                                   ",a=" + std::to_string(a) + ",r=" + format_double(m.r_support[r]) +
                                   " outside the marginal support";
                        out.kl_reward = std::numeric_limits<double>::infinity();
                    } else if (!std::isinf(out.kl_reward)) {
                        out.kl_reward += w * num * std::log(num / den);
                    }
                }
            }
        }
    }
    out.total = out.kl_transition + out.kl_reward;
    return out;
}

// H(x | ctx) from joint weights w(ctx, x), row-major, not necessarily
// normalized. Plug-in estimate when the weights are counts.
inline double conditional_entropy(const std::vector<double>& w, int n_ctx, int n_x) {
    require(n_ctx >= 1 && n_x >= 1, "conditional_entropy: empty table");
    require(w.size() == static_cast<size_t>(n_ctx) * n_x, "conditional_entropy: size mismatch");
    double total = 0.0;
    for (double v : w) {
        require(v >= 0.0, "conditional_entropy: negative weight");
        total += v;
    }
    require(total > 0.0, "conditional_entropy: all-zero table");
    double h = 0.0;
    for (int c = 0; c < n_ctx; ++c) {
        double row = 0.0;
        for (int x = 0; x < n_x; ++x) row += w[static_cast<size_t>(c) * n_x + x];
        if (row == 0.0) continue;
        for (int x = 0; x < n_x; ++x) {
            double p = w[static_cast<size_t>(c) * n_x + x];
            if (p > 0.0) h += (p / total) * std::log(row / p);
        }
    }
    return h;
}

struct InfoEntropyConfig {
    MultiGrid state_grid;
    MultiGrid action_grid;
    MultiGrid w_grid;
    int n_episodes = 100;
    int horizon = 0;  // 0 = spec horizon (or the gamma cutoff)
};

// Information-theoretic VoI of the exogenous stream in a one-step-reward
// process whose transition is deterministic given (s, a, w), as in the
// vehicle-following task: the divergence collapses to the conditional
// entropy H(w | s, a), estimated here by binning rollouts of the supplied
// policy. Constant streams and streams that are deterministic functions of
// (s, a) give exactly zero.
inline VoiRecord itvoi_exo_entropy(const SsdpSpec& spec, const PolicyFn& policy, const InfoEntropyConfig& cfg,
                                   uint64_t seed) {
    spec.validate();
    cfg.state_grid.validate();
    cfg.action_grid.validate();
    cfg.w_grid.validate();
    require(cfg.n_episodes >= 1, "itvoi_exo_entropy: n_episodes must be >= 1");
    require(static_cast<int>(cfg.state_grid.axes.size()) == spec.state_dim,
            "itvoi_exo_entropy: state grid dimension mismatch");
    require(static_cast<int>(cfg.action_grid.axes.size()) == spec.action_dim,
            "itvoi_exo_entropy: action grid dimension mismatch");
    require(static_cast<int>(cfg.w_grid.axes.size()) == spec.exo.w_dim,
            "itvoi_exo_entropy: exo grid dimension mismatch");
    const int horizon = cfg.horizon > 0 ? cfg.horizon : detail::effective_horizon(spec);
    const int n_ctx = cfg.state_grid.n_cells() * cfg.action_grid.n_cells();
    const int n_x = cfg.w_grid.n_cells();
    std::vector<double> counts(static_cast<size_t>(n_ctx) * n_x, 0.0);
    long n = 0;
    for (int e = 0; e < cfg.n_episodes; ++e) {
        Trajectory traj = rollout(spec, policy, horizon, derive_seed(seed, static_cast<uint64_t>(e)));
        for (const auto& rec : traj.steps) {
            bool clip = false;
            int cs = cfg.state_grid.index_of(rec.s, &clip);
            int ca = cfg.action_grid.index_of(rec.a, &clip);
            int cw = cfg.w_grid.index_of(rec.w, &clip);
            counts[static_cast<size_t>(cs * cfg.action_grid.n_cells() + ca) * n_x + cw] += 1.0;
            ++n;
        }
    }
    VoiRecord rec;
    rec.kind = VoiKind::itvoi;
    rec.value = conditional_entropy(counts, n_ctx, n_x);
    rec.method = VoiMethod::kl;
    rec.k = static_cast<int>(n);
    return rec;
}

struct VoiIdentityReport {
    double evoi = 0.0;             // J_inf - J_sup
    double cumulative_ivoi = 0.0;  // discounted advantage accumulated along pi_inf
    double abs_diff = 0.0;
    double diff_se = 0.0;  // 0 on the exact path
    bool pass = false;
    std::string path;  // "exact" or "monte_carlo"
};

// The performance gap between the two policies equals the discounted,
// occupancy-weighted instantaneous VoI of the inferior actions. Exact path:
// both sides from the tabular oracle, agreement required to tol.
inline VoiIdentityReport voi_identity_check(const TabularMdp& mdp, const StochasticPolicy& pi_inf,
                                            const StochasticPolicy& pi_sup, double tol = 1e-8) {
    PerformanceDifference pd = performance_difference(mdp, pi_inf, pi_sup);
    VoiIdentityReport out;
    out.evoi = pd.j_diff;
    out.cumulative_ivoi = pd.occ_weighted_adv;
    out.abs_diff = std::fabs(pd.j_diff - pd.occ_weighted_adv);
    out.pass = out.abs_diff <= tol;
    out.path = "exact";
    return out;
}

inline VoiIdentityReport voi_identity_check(const TabularMdp& mdp, const PolicyTable& pi_inf,
                                            const PolicyTable& pi_sup, double tol = 1e-8) {
    return voi_identity_check(mdp, to_stochastic(mdp, pi_inf), to_stochastic(mdp, pi_sup), tol);
}

// Monte-Carlo path: per paired episode, the return gap minus the discounted
// advantage sum along the inferior trajectory must be zero in expectation;
// pass requires the mean residual within 2 SE (plus an fp cushion).
inline VoiIdentityReport voi_identity_check_mc(const SsdpSpec& spec, const PolicyPair& pair,
                                               const IvoiFn& advantage, int n_episodes, uint64_t seed) {
    require(n_episodes >= 2, "voi_identity_check_mc: need at least 2 episodes");
    require(static_cast<bool>(advantage), "voi_identity_check_mc: advantage function must be set");
    const int horizon = detail::effective_horizon(spec);
    Vec gaps(n_episodes), sums(n_episodes), resid(n_episodes);
    for (int i = 0; i < n_episodes; ++i) {
        uint64_t es = derive_seed(seed, static_cast<uint64_t>(i));
        Trajectory t_inf = rollout(spec, pair.pi_inf, horizon, es);
        Trajectory t_sup = rollout(spec, pair.pi_sup, horizon, es);
        gaps[i] = discounted_return(t_inf) - discounted_return(t_sup);
        double acc = 0.0, g = 1.0;
        for (const auto& rec : t_inf.steps) {
            acc += g * advantage(rec.s, rec.a);
            g *= spec.gamma;
        }
        sums[i] = acc;
        resid[i] = gaps[i] - sums[i];
    }
    VoiIdentityReport out;
    out.evoi = mean_of(gaps);
    out.cumulative_ivoi = mean_of(sums);
    out.abs_diff = std::fabs(mean_of(resid));
    out.diff_se = stderr_of(resid);
    out.pass = out.abs_diff <= 2.0 * out.diff_se + 1e-12;
    out.path = "monte_carlo";
    return out;
}

}  // namespace voisim
