#pragma once

// Sequential stochastic decision processes: the tuple {S, A, W, f^S, r, f^W,
// gamma} with an explicit exogenous-information process W_k that is not
// available before the decision a_k is made. Episode rollout draws W_k after
// observing S_k and choosing a_k, then applies S_{k+1} = f^S(S_k, a_k, W_k)
// and R_{k+1} = r(S_k, a_k, W_k).

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "voisim/common.hpp"
#include "voisim/csv.hpp"

namespace voisim {

class ExoStream;

// The exogenous-information process W_k = f^W(W_tilde_k).
//
//  - iid:    W_k drawn independently of all past (S, a, W); this is exactly
//            the condition under which the SSDP reduces to an MDP.
//  - driven: W_tilde_k = (W_{k-1}, theta_{k-1}) and W_k = f_w(W_{k-1},
//            theta_{k-1}); theta is supplied by a parameter source process.
//            The first emission is W_0 = f_w(w_prev0, theta0).
//  - trace:  a recorded sequence, replayed in order.
//
// A custom stream factory overrides all of the above; it exists for
// closed-loop processes (e.g. communication-induced observation delays)
// whose evolution depends on past actions.
struct ExoProcess {
    enum class Kind { iid, driven, trace };

    Kind kind = Kind::iid;
    int w_dim = 1;

    // iid: either a finite support (enumerable, exact discretization) or a
    // sampler for continuous distributions.
    std::vector<Vec> outcomes;
    Vec probs;
    std::function<Vec(Rng&)> sampler;

    // driven
    std::function<Vec(const Vec& w_prev, const Vec& theta)> f_w;
    std::shared_ptr<ExoProcess> theta_source;
    Vec w_prev0;
    Vec theta0;

    // trace
    std::vector<Vec> trace_data;
    bool trace_wrap = false;

    // closed-loop override (see ExoStream::observe_action)
    std::function<std::unique_ptr<ExoStream>()> custom_stream;

    bool finite_support() const { return kind == Kind::iid && !outcomes.empty(); }

    static ExoProcess make_iid(std::vector<Vec> outs, Vec ps) {
        ExoProcess e;
        e.kind = Kind::iid;
        require(!outs.empty() && outs.size() == ps.size(), "ExoProcess: outcomes/probs mismatch");
        e.w_dim = static_cast<int>(outs[0].size());
        double sum = 0.0;
        for (double p : ps) {
            require(p >= 0.0, "ExoProcess: negative probability");
            sum += p;
        }
        require(std::fabs(sum - 1.0) <= 1e-12, "ExoProcess: probs must sum to 1");
        e.outcomes = std::move(outs);
        e.probs = std::move(ps);
        return e;
    }

    static ExoProcess make_iid_sampler(std::function<Vec(Rng&)> f, int dim) {
        ExoProcess e;
        e.kind = Kind::iid;
        e.sampler = std::move(f);
        e.w_dim = dim;
        return e;
    }

    static ExoProcess make_driven(std::function<Vec(const Vec&, const Vec&)> f,
                                  std::shared_ptr<ExoProcess> theta, Vec w_prev0, Vec theta0) {
        ExoProcess e;
        e.kind = Kind::driven;
        e.f_w = std::move(f);
        e.theta_source = std::move(theta);
        e.w_dim = static_cast<int>(w_prev0.size());
        e.w_prev0 = std::move(w_prev0);
        e.theta0 = std::move(theta0);
        require(e.theta_source != nullptr, "ExoProcess: driven process needs a theta source");
        return e;
    }

    static ExoProcess make_trace(std::vector<Vec> data, bool wrap = false) {
        ExoProcess e;
        e.kind = Kind::trace;
        require(!data.empty(), "ExoProcess: empty trace");
        e.w_dim = static_cast<int>(data[0].size());
        e.trace_data = std::move(data);
        e.trace_wrap = wrap;
        return e;
    }

    std::unique_ptr<ExoStream> make_stream() const;
};

// Stateful view of an ExoProcess during one rollout. next() emits W_k for
// k = 0, 1, ...; observe_action() feeds the just-taken action back to
// closed-loop processes (no-op for open-loop kinds).
class ExoStream {
  public:
    virtual ~ExoStream() = default;
    virtual Vec next(Rng& rng) = 0;
    virtual void observe_action(const Vec& /*a*/) {}
};

namespace detail {

class IidStream final : public ExoStream {
  public:
    explicit IidStream(const ExoProcess& p) : p_(p) {}
    Vec next(Rng& rng) override {
        if (!p_.outcomes.empty()) return p_.outcomes[rng.categorical(p_.probs)];
        require(static_cast<bool>(p_.sampler), "ExoProcess: iid process has no support or sampler");
        Vec w = p_.sampler(rng);
        require(static_cast<int>(w.size()) == p_.w_dim, "ExoProcess: sampler dimension mismatch");
        return w;
    }

  private:
    const ExoProcess& p_;
};

class DrivenStream final : public ExoStream {
  public:
    explicit DrivenStream(const ExoProcess& p)
        : p_(p), theta_stream_(p.theta_source->make_stream()), w_prev_(p.w_prev0), theta_prev_(p.theta0) {}
    Vec next(Rng& rng) override {
        Vec w = p_.f_w(w_prev_, theta_prev_);
        require(static_cast<int>(w.size()) == p_.w_dim, "ExoProcess: f_w dimension mismatch");
        w_prev_ = w;
        theta_prev_ = theta_stream_->next(rng);
        return w;
    }

  private:
    const ExoProcess& p_;
    std::unique_ptr<ExoStream> theta_stream_;
    Vec w_prev_;
    Vec theta_prev_;
};

class TraceStream final : public ExoStream {
  public:
    explicit TraceStream(const ExoProcess& p) : p_(p) {}
    Vec next(Rng&) override {
        if (pos_ >= p_.trace_data.size()) {
            require(p_.trace_wrap, "ExoProcess: trace exhausted (enable wrap or shorten horizon)");
            pos_ = 0;
        }
        return p_.trace_data[pos_++];
    }

  private:
    const ExoProcess& p_;
    size_t pos_ = 0;
};

}  // namespace detail

inline std::unique_ptr<ExoStream> ExoProcess::make_stream() const {
    if (custom_stream) return custom_stream();
    switch (kind) {
        case Kind::iid: return std::make_unique<detail::IidStream>(*this);
        case Kind::driven: return std::make_unique<detail::DrivenStream>(*this);
        case Kind::trace: return std::make_unique<detail::TraceStream>(*this);
    }
    throw contract_violation("ExoProcess: unknown kind");
}

// An SSDP. transition and reward must be pure functions of their arguments.
struct SsdpSpec {
    int state_dim = 0;
    int action_dim = 0;
    std::function<Vec(const Vec& s, const Vec& a, const Vec& w)> transition;
    std::function<double(const Vec& s, const Vec& a, const Vec& w)> reward;
    ExoProcess exo;
    double gamma = 0.9;
    int horizon = 0;  // 0 = unbounded (requires gamma < 1)

    // Action box; empty = unbounded. Policy outputs are clamped into the box.
    Vec action_lo;
    Vec action_hi;

    // Initial-state distribution: finite support (exact) or sampler.
    std::vector<Vec> init_support;
    Vec init_probs;
    std::function<Vec(Rng&)> init_sampler;

    void validate() const {
        require(state_dim >= 1 && action_dim >= 1, "SsdpSpec: state_dim/action_dim must be >= 1");
        require(gamma >= 0.0 && gamma <= 1.0, "SsdpSpec: gamma outside [0,1]");
        require(horizon >= 0, "SsdpSpec: horizon must be >= 0");
        require(horizon > 0 || gamma < 1.0, "SsdpSpec: unbounded horizon requires gamma < 1");
        require(static_cast<bool>(transition) && static_cast<bool>(reward),
                "SsdpSpec: transition and reward must be set");
        if (!action_lo.empty()) {
            require(action_lo.size() == static_cast<size_t>(action_dim) && action_hi.size() == action_lo.size(),
                    "SsdpSpec: action bounds dimension mismatch");
        }
    }

    Vec sample_init(Rng& rng) const {
        if (!init_support.empty()) return init_support[rng.categorical(init_probs)];
        require(static_cast<bool>(init_sampler), "SsdpSpec: no initial-state distribution");
        return init_sampler(rng);
    }

    bool finite_init() const { return !init_support.empty(); }
};

struct StepResult {
    Vec s_next;
    double reward = 0.0;
    bool action_clamped = false;
};

// One SSDP transition: (f^S(s,a,w), r(s,a,w)). Out-of-box actions are
// clamped, with a flag, before evaluating the maps.
inline StepResult step(const SsdpSpec& spec, const Vec& s, const Vec& a, const Vec& w) {
    require(s.size() == static_cast<size_t>(spec.state_dim), "step: state dimension mismatch");
    require(a.size() == static_cast<size_t>(spec.action_dim), "step: action dimension mismatch");
    require(w.size() == static_cast<size_t>(spec.exo.w_dim), "step: exo dimension mismatch");
    StepResult out;
    Vec ac = a;
    if (!spec.action_lo.empty()) {
        for (size_t i = 0; i < ac.size(); ++i) {
            double c = clamp(ac[i], spec.action_lo[i], spec.action_hi[i]);
            if (c != ac[i]) {
                ac[i] = c;
                out.action_clamped = true;
            }
        }
    }
    out.s_next = spec.transition(s, ac, w);
    require(out.s_next.size() == static_cast<size_t>(spec.state_dim), "step: transition output dimension mismatch");
    out.reward = spec.reward(s, ac, w);
    return out;
}

struct TransitionRecord {
    Vec s;
    Vec a;
    Vec w;
    double r = 0.0;
    Vec s_next;
    bool action_clamped = false;
};

struct Trajectory {
    std::vector<TransitionRecord> steps;
    uint64_t seed = 0;
    double gamma = 1.0;
};

using PolicyFn = std::function<Vec(const Vec& s)>;

// Simulates `horizon` transitions from a sampled initial state. Substreams
// keep the exo sequence independent of initial-state sampling, so paired
// rollouts with a common seed see identical exogenous draws.
inline Trajectory rollout(const SsdpSpec& spec, const PolicyFn& policy, const ExoProcess& exo_source,
                          int horizon, uint64_t seed) {
    spec.validate();
    require(horizon >= 1, "rollout: horizon must be >= 1");
    Trajectory traj;
    traj.seed = seed;
    traj.gamma = spec.gamma;
    Rng init_rng(derive_seed(seed, 0));
    Rng exo_rng(derive_seed(seed, 1));
    auto stream = exo_source.make_stream();
    Vec s = spec.sample_init(init_rng);
    traj.steps.reserve(horizon);
    for (int k = 0; k < horizon; ++k) {
        Vec a = policy(s);
        require(a.size() == static_cast<size_t>(spec.action_dim), "rollout: policy output dimension mismatch");
        stream->observe_action(a);
        Vec w = stream->next(exo_rng);
        StepResult sr = step(spec, s, a, w);
        TransitionRecord rec;
        rec.s = std::move(s);
        rec.a = std::move(a);
        if (!spec.action_lo.empty())
            for (size_t i = 0; i < rec.a.size(); ++i)
                rec.a[i] = clamp(rec.a[i], spec.action_lo[i], spec.action_hi[i]);
        rec.w = std::move(w);
        rec.r = sr.reward;
        rec.s_next = sr.s_next;
        rec.action_clamped = sr.action_clamped;
        traj.steps.push_back(std::move(rec));
        s = std::move(sr.s_next);
    }
    return traj;
}

inline Trajectory rollout(const SsdpSpec& spec, const PolicyFn& policy, int horizon, uint64_t seed) {
    return rollout(spec, policy, spec.exo, horizon, seed);
}

// Sum_l gamma^l R_{l+1}.
inline double discounted_return(const Trajectory& traj, double gamma) {
    require(gamma >= 0.0 && gamma <= 1.0, "discounted_return: gamma outside [0,1]");
    double g = 0.0;
    double w = 1.0;
    for (const auto& rec : traj.steps) {
        g += w * rec.r;
        w *= gamma;
    }
    return g;
}

inline double discounted_return(const Trajectory& traj) { return discounted_return(traj, traj.gamma); }

// CSV export: step, s[0..], a[0..], w[0..], r.
inline void export_trajectory_csv(const Trajectory& traj, const std::string& path) {
    CsvWriter w(path);
    std::vector<std::string> cols{"step"};
    if (!traj.steps.empty()) {
        const auto& first = traj.steps.front();
        for (size_t i = 0; i < first.s.size(); ++i) cols.push_back("s" + std::to_string(i));
        for (size_t i = 0; i < first.a.size(); ++i) cols.push_back("a" + std::to_string(i));
        for (size_t i = 0; i < first.w.size(); ++i) cols.push_back("w" + std::to_string(i));
    }
    cols.push_back("r");
    w.header(cols);
    for (size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& rec = traj.steps[k];
        Vec row;
        row.reserve(2 + rec.s.size() + rec.a.size() + rec.w.size());
        row.push_back(static_cast<double>(k));
        row.insert(row.end(), rec.s.begin(), rec.s.end());
        row.insert(row.end(), rec.a.begin(), rec.a.end());
        row.insert(row.end(), rec.w.begin(), rec.w.end());
        row.push_back(rec.r);
        w.row(row);
    }
}

}  // namespace voisim
