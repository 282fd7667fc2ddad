#pragma once

// State augmentations that turn an SSDP into an MDP candidate:
//
//  - with_exogenous:  state (S_k, W_k); next state (f^S(S,a,W), W_{k+1}).
//  - with_predictor:  state (S_k, W_tilde_k) for driven processes, where
//                     W_tilde_k = (W_{k-1}, theta_{k-1}) and the reward is
//                     r(S, a, f^W(W_tilde)).
//  - random_delay:    state (S_{k-tau}, W_{k-tau}, last tau_max actions,
//                     tau_k); the agent acts on stale information while the
//                     true process advances underneath.
//
// Each result is itself a rollout-able SsdpSpec plus layout metadata.

#include <cmath>
#include <memory>

#include "voisim/ssdp.hpp"

namespace voisim {

struct AugmentedSpec {
    enum class Kind { with_exogenous, with_predictor, random_delay };

    SsdpSpec spec;
    Kind kind = Kind::with_exogenous;
    int base_state_dim = 0;
    int base_w_dim = 0;
    int theta_dim = 0;  // predictor kind only
    int tau_max = 0;    // random_delay kind only

    Vec base_state(const Vec& s) const {
        return Vec(s.begin(), s.begin() + base_state_dim);
    }
    // with_exogenous: W_k; with_predictor: W_tilde_k; random_delay: W_{k-tau}.
    Vec exo_part(const Vec& s) const {
        int len = spec.state_dim - base_state_dim;
        if (kind == Kind::random_delay) len = base_w_dim;
        return Vec(s.begin() + base_state_dim, s.begin() + base_state_dim + len);
    }
    // random_delay only: actions a_{k-tau_max}..a_{k-1}, oldest first.
    Vec action_history(const Vec& s) const {
        require(kind == Kind::random_delay, "action_history: not a random-delay spec");
        size_t off = static_cast<size_t>(base_state_dim) + base_w_dim;
        return Vec(s.begin() + off, s.end() - 1);
    }
    double tau(const Vec& s) const {
        require(kind == Kind::random_delay, "tau: not a random-delay spec");
        return s.back();
    }
};

// Def.-2-style augmentation: include the current exogenous information in the
// state. For iid processes the result is an MDP (the new exogenous
// information is W_{k+1} itself, drawn independently); for driven processes
// the new exogenous information is the parameter stream theta.
inline AugmentedSpec augment_with_exogenous(const SsdpSpec& base_in) {
    base_in.validate();
    auto base = std::make_shared<SsdpSpec>(base_in);
    const int sd = base->state_dim;
    const int wd = base->exo.w_dim;

    AugmentedSpec out;
    out.kind = AugmentedSpec::Kind::with_exogenous;
    out.base_state_dim = sd;
    out.base_w_dim = wd;

    SsdpSpec& aug = out.spec;
    aug.state_dim = sd + wd;
    aug.action_dim = base->action_dim;
    aug.gamma = base->gamma;
    aug.horizon = base->horizon;
    aug.action_lo = base->action_lo;
    aug.action_hi = base->action_hi;

    auto split = [sd](const Vec& st) {
        return std::pair<Vec, Vec>(Vec(st.begin(), st.begin() + sd), Vec(st.begin() + sd, st.end()));
    };
    aug.reward = [base, split](const Vec& st, const Vec& a, const Vec&) {
        auto [s, w] = split(st);
        return base->reward(s, a, w);
    };

    switch (base->exo.kind) {
        case ExoProcess::Kind::iid: {
            aug.exo = base->exo;
            aug.transition = [base, split](const Vec& st, const Vec& a, const Vec& w_next) {
                auto [s, w] = split(st);
                return concat(base->transition(s, a, w), w_next);
            };
            // S~_0 = (S_0, W_0), W_0 drawn from the iid process.
            if (base->finite_init() && base->exo.finite_support()) {
                for (size_t i = 0; i < base->init_support.size(); ++i)
                    for (size_t j = 0; j < base->exo.outcomes.size(); ++j) {
                        aug.init_support.push_back(concat(base->init_support[i], base->exo.outcomes[j]));
                        aug.init_probs.push_back(base->init_probs[i] * base->exo.probs[j]);
                    }
            } else {
                aug.init_sampler = [base](Rng& rng) {
                    Vec s = base->sample_init(rng);
                    auto stream = base->exo.make_stream();
                    return concat(s, stream->next(rng));
                };
            }
            break;
        }
        case ExoProcess::Kind::driven: {
            // New exogenous information is theta; W evolves inside the state.
            aug.exo = *base->exo.theta_source;
            auto f_w = base->exo.f_w;
            aug.transition = [base, split, f_w](const Vec& st, const Vec& a, const Vec& theta) {
                auto [s, w] = split(st);
                return concat(base->transition(s, a, w), f_w(w, theta));
            };
            Vec w0 = f_w(base->exo.w_prev0, base->exo.theta0);
            if (base->finite_init()) {
                for (size_t i = 0; i < base->init_support.size(); ++i) {
                    aug.init_support.push_back(concat(base->init_support[i], w0));
                    aug.init_probs.push_back(base->init_probs[i]);
                }
            } else {
                aug.init_sampler = [base, w0](Rng& rng) { return concat(base->sample_init(rng), w0); };
            }
            break;
        }
        case ExoProcess::Kind::trace: {
            require(base->exo.trace_data.size() >= 2 || base->exo.trace_wrap,
                    "augment_with_exogenous: trace too short to shift");
            std::vector<Vec> shifted(base->exo.trace_data.begin() + 1, base->exo.trace_data.end());
            if (base->exo.trace_wrap) shifted.push_back(base->exo.trace_data.front());
            aug.exo = ExoProcess::make_trace(std::move(shifted), base->exo.trace_wrap);
            aug.transition = [base, split](const Vec& st, const Vec& a, const Vec& w_next) {
                auto [s, w] = split(st);
                return concat(base->transition(s, a, w), w_next);
            };
            Vec w0 = base->exo.trace_data.front();
            if (base->finite_init()) {
                for (size_t i = 0; i < base->init_support.size(); ++i) {
                    aug.init_support.push_back(concat(base->init_support[i], w0));
                    aug.init_probs.push_back(base->init_probs[i]);
                }
            } else {
                aug.init_sampler = [base, w0](Rng& rng) { return concat(base->sample_init(rng), w0); };
            }
            break;
        }
    }
    return out;
}

// Def.-3-style augmentation for driven processes: carry the predictor state
// W_tilde_k = (W_{k-1}, theta_{k-1}) instead of W_k, and compute the reward
// through f^W. predictor_dim must equal w_dim + theta_dim; 0 requests the
// identity transform.
inline AugmentedSpec augment_with_predictor(const SsdpSpec& base_in, int predictor_dim) {
    base_in.validate();
    if (predictor_dim == 0) {
        AugmentedSpec out;
        out.spec = base_in;
        out.kind = AugmentedSpec::Kind::with_predictor;
        out.base_state_dim = base_in.state_dim;
        out.base_w_dim = base_in.exo.w_dim;
        return out;
    }
    require(base_in.exo.kind == ExoProcess::Kind::driven,
            "augment_with_predictor: unsupported augmentation — exo process has no predictor "
            "(kind must be driven)");
    auto base = std::make_shared<SsdpSpec>(base_in);
    const int sd = base->state_dim;
    const int wd = base->exo.w_dim;
    const int td = static_cast<int>(base->exo.theta0.size());
    require(predictor_dim == wd + td, "augment_with_predictor: predictor_dim must equal w_dim + theta_dim");

    AugmentedSpec out;
    out.kind = AugmentedSpec::Kind::with_predictor;
    out.base_state_dim = sd;
    out.base_w_dim = wd;
    out.theta_dim = td;

    SsdpSpec& aug = out.spec;
    aug.state_dim = sd + wd + td;
    aug.action_dim = base->action_dim;
    aug.gamma = base->gamma;
    aug.horizon = base->horizon;
    aug.action_lo = base->action_lo;
    aug.action_hi = base->action_hi;
    aug.exo = *base->exo.theta_source;

    auto f_w = base->exo.f_w;
    auto split = [sd, wd](const Vec& st) {
        Vec s(st.begin(), st.begin() + sd);
        Vec w_prev(st.begin() + sd, st.begin() + sd + wd);
        Vec theta_prev(st.begin() + sd + wd, st.end());
        return std::tuple<Vec, Vec, Vec>(std::move(s), std::move(w_prev), std::move(theta_prev));
    };
    aug.transition = [base, split, f_w](const Vec& st, const Vec& a, const Vec& theta_new) {
        auto [s, w_prev, theta_prev] = split(st);
        Vec w = f_w(w_prev, theta_prev);
        return concat(concat(base->transition(s, a, w), w), theta_new);
    };
    aug.reward = [base, split, f_w](const Vec& st, const Vec& a, const Vec&) {
        auto [s, w_prev, theta_prev] = split(st);
        return base->reward(s, a, f_w(w_prev, theta_prev));
    };
    Vec tail = concat(base->exo.w_prev0, base->exo.theta0);
    if (base->finite_init()) {
        for (size_t i = 0; i < base->init_support.size(); ++i) {
            aug.init_support.push_back(concat(base->init_support[i], tail));
            aug.init_probs.push_back(base->init_probs[i]);
        }
    } else {
        aug.init_sampler = [base, tail](Rng& rng) { return concat(base->sample_init(rng), tail); };
    }
    return out;
}

namespace detail {

// Exogenous stream of the random-delay spec. Emits, per step k:
//   [tau_{k+1}, n_fwd, n_roll, W_{j}..W_{j+tau_max}]   (j = k - tau_k; j=0 at k=0)
// where n_fwd = steps the stale snapshot advances this transition and
// n_roll = steps needed to reconstruct the true S_k from the snapshot.
// The underlying true-process exogenous draws W_0, W_1, ... are generated
// here and buffered; the delay sequence comes from a separate process and
// must satisfy 1 <= tau <= tau_max and tau_{k+1} <= tau_k + 1 (information
// cannot age by more than one interval per interval).
class DelayExoStream final : public ExoStream {
  public:
    DelayExoStream(const ExoProcess& base_exo, const ExoProcess& delay, int tau_max, int w_dim)
        : base_stream_(base_exo.make_stream()),
          delay_stream_(delay.make_stream()),
          tau_max_(tau_max),
          w_dim_(w_dim) {}

    void observe_action(const Vec& a) override { delay_stream_->observe_action(a); }

    Vec next(Rng& rng) override {
        Vec demit = delay_stream_->next(rng);
        require(demit.size() == 1, "random_delay: delay process must emit scalars");
        double draw = demit[0];
        long tau_drawn = std::lround(draw);
        require(std::fabs(draw - static_cast<double>(tau_drawn)) <= 1e-9,
                "random_delay: delay process emitted a non-integer");
        require(tau_drawn >= 1 && tau_drawn <= tau_max_,
                "random_delay: emitted delay outside [1, tau_max]");
        long j_new = std::max<long>(0, k_ + 1 - tau_drawn);
        require(j_new >= j_old_, "random_delay: delay grew by more than one interval");
        long n_fwd = j_new - j_old_;
        long n_roll = k_ - j_old_;
        ensure_w(static_cast<size_t>(j_old_ + tau_max_), rng);
        Vec out;
        out.reserve(3 + static_cast<size_t>(tau_max_ + 1) * w_dim_);
        out.push_back(static_cast<double>(k_ + 1 - j_new));  // stored tau_{k+1}
        out.push_back(static_cast<double>(n_fwd));
        out.push_back(static_cast<double>(n_roll));
        for (long j = j_old_; j <= j_old_ + tau_max_; ++j) {
            const Vec& w = w_buf_[static_cast<size_t>(j)];
            out.insert(out.end(), w.begin(), w.end());
        }
        j_old_ = j_new;
        ++k_;
        return out;
    }

  private:
    void ensure_w(size_t upto, Rng& rng) {
        while (w_buf_.size() <= upto) w_buf_.push_back(base_stream_->next(rng));
    }

    std::unique_ptr<ExoStream> base_stream_;
    std::unique_ptr<ExoStream> delay_stream_;
    int tau_max_;
    int w_dim_;
    long k_ = 0;
    long j_old_ = 0;
    std::vector<Vec> w_buf_;
};

}  // namespace detail

// Def.-4-style random-delay augmentation. State layout:
//   [S_{k-tau} (state_dim), W_{k-tau} (w_dim), a_{k-tau_max}..a_{k-1}
//    (tau_max * action_dim, oldest first, zero-initialized), tau_k].
// At episode start the snapshot is the fresh initial state, the W slot is
// zero-filled, the action history is zero and tau_0 = 1. The reward equals
// the base SSDP's true reward r(S_k, a_k, W_k), reconstructed internally
// from the snapshot, the action history and the buffered exogenous draws.
inline AugmentedSpec augment_random_delay(const SsdpSpec& base_in, int tau_max,
                                          const ExoProcess& delay_process) {
    base_in.validate();
    require(tau_max >= 1, "augment_random_delay: tau_max must be >= 1");
    auto base = std::make_shared<SsdpSpec>(base_in);
    auto delay = std::make_shared<ExoProcess>(delay_process);
    const int sd = base->state_dim;
    const int wd = base->exo.w_dim;
    const int ad = base->action_dim;

    AugmentedSpec out;
    out.kind = AugmentedSpec::Kind::random_delay;
    out.base_state_dim = sd;
    out.base_w_dim = wd;
    out.tau_max = tau_max;

    SsdpSpec& aug = out.spec;
    aug.state_dim = sd + wd + tau_max * ad + 1;
    aug.action_dim = ad;
    aug.gamma = base->gamma;
    aug.horizon = base->horizon;
    aug.action_lo = base->action_lo;
    aug.action_hi = base->action_hi;

    aug.exo.kind = ExoProcess::Kind::driven;  // informational; stream is custom
    aug.exo.w_dim = 3 + (tau_max + 1) * wd;
    ExoProcess base_exo = base->exo;
    ExoProcess delay_exo = *delay;
    int cap_w_dim = wd;
    aug.exo.custom_stream = [base_exo, delay_exo, tau_max, cap_w_dim]() {
        return std::unique_ptr<ExoStream>(
            new detail::DelayExoStream(base_exo, delay_exo, tau_max, cap_w_dim));
    };

    struct Parsed {
        Vec s_snap, w_snap;
        const double* hist;  // tau_max * ad doubles
        double tau;
    };
    auto parse_state = [sd, wd, tau_max, ad](const Vec& st) {
        Parsed p;
        p.s_snap = Vec(st.begin(), st.begin() + sd);
        p.w_snap = Vec(st.begin() + sd, st.begin() + sd + wd);
        p.hist = st.data() + sd + wd;
        p.tau = st.back();
        return p;
    };
    auto hist_action = [ad](const double* hist, long pos) {
        return Vec(hist + pos * ad, hist + (pos + 1) * ad);
    };
    auto block_w = [wd](const Vec& w, long i) {
        size_t off = 3 + static_cast<size_t>(i) * wd;
        return Vec(w.begin() + off, w.begin() + off + wd);
    };

    aug.transition = [base, parse_state, hist_action, block_w, sd, wd, tau_max, ad](
                         const Vec& st, const Vec& a, const Vec& wt) {
        Parsed p = parse_state(st);
        long n_fwd = std::lround(wt[1]);
        long n_roll = std::lround(wt[2]);
        Vec s = p.s_snap;
        for (long i = 0; i < n_fwd; ++i) {
            long pos = tau_max - n_roll + i;
            s = base->transition(s, hist_action(p.hist, pos), block_w(wt, i));
        }
        Vec out_state;
        out_state.reserve(st.size());
        out_state.insert(out_state.end(), s.begin(), s.end());
        Vec w_new = block_w(wt, n_fwd);
        out_state.insert(out_state.end(), w_new.begin(), w_new.end());
        // shift action history and append the current action
        out_state.insert(out_state.end(), p.hist + ad, p.hist + tau_max * ad);
        out_state.insert(out_state.end(), a.begin(), a.end());
        out_state.push_back(wt[0]);  // tau_{k+1}
        return out_state;
    };
    aug.reward = [base, parse_state, hist_action, block_w, tau_max](const Vec& st, const Vec& a,
                                                                    const Vec& wt) {
        Parsed p = parse_state(st);
        long n_roll = std::lround(wt[2]);
        Vec s = p.s_snap;
        for (long i = 0; i < n_roll; ++i) {
            long pos = tau_max - n_roll + i;
            s = base->transition(s, hist_action(p.hist, pos), block_w(wt, i));
        }
        return base->reward(s, a, block_w(wt, n_roll));
    };

    Vec tail(static_cast<size_t>(wd) + tau_max * ad, 0.0);
    tail.push_back(1.0);  // tau_0
    if (base->finite_init()) {
        for (size_t i = 0; i < base->init_support.size(); ++i) {
            aug.init_support.push_back(concat(base->init_support[i], tail));
            aug.init_probs.push_back(base->init_probs[i]);
        }
    } else {
        aug.init_sampler = [base, tail](Rng& rng) { return concat(base->sample_init(rng), tail); };
    }
    return out;
}

}  // namespace voisim
