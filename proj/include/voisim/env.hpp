#pragma once

// Episodic environment interface for the training loop, plus adapters for
// SSDP specs (with an observation model) and tabular MDPs (one-hot states,
// rounded scalar actions).

#include <cmath>
#include <memory>
#include <tuple>

#include "voisim/ssdp.hpp"
#include "voisim/tabular.hpp"

namespace voisim {

struct EnvStep {
    Vec obs;
    double reward = 0.0;
    bool done = false;
};

class Env {
  public:
    virtual ~Env() = default;
    virtual int obs_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual Vec action_lo() const = 0;
    virtual Vec action_hi() const = 0;
    virtual double gamma() const = 0;
    virtual Vec reset(uint64_t seed) = 0;
    virtual EnvStep step(const Vec& a) = 0;
};

using ObsFn = std::function<Vec(const Vec& state)>;

// SSDP spec as an episodic env. `obs_fn` maps the latent state to the agent
// observation (identity by default); episodes run for `episode_len` steps
// (the spec horizon when it has one).
class SsdpEnv final : public Env {
  public:
    SsdpEnv(SsdpSpec spec, int episode_len = 0, ObsFn obs_fn = nullptr, int obs_dim = -1)
        : spec_(std::move(spec)),
          episode_len_(episode_len > 0 ? episode_len : spec_.horizon),
          obs_fn_(std::move(obs_fn)),
          obs_dim_(obs_dim) {
        spec_.validate();
        require(episode_len_ > 0, "SsdpEnv: episode length required (spec horizon is unbounded)");
        require(!spec_.action_lo.empty(), "SsdpEnv: bounded action box required");
        if (obs_dim_ < 0) obs_dim_ = obs_fn_ ? -1 : spec_.state_dim;
        require(obs_dim_ > 0, "SsdpEnv: obs_dim required with a custom observation model");
    }

    int obs_dim() const override { return obs_dim_; }
    int action_dim() const override { return spec_.action_dim; }
    Vec action_lo() const override { return spec_.action_lo; }
    Vec action_hi() const override { return spec_.action_hi; }
    double gamma() const override { return spec_.gamma; }

    Vec reset(uint64_t seed) override {
        Rng init_rng(derive_seed(seed, 0));
        exo_rng_ = Rng(derive_seed(seed, 1));
        stream_ = spec_.exo.make_stream();
        state_ = spec_.sample_init(init_rng);
        k_ = 0;
        return observe(state_);
    }

    EnvStep step(const Vec& a) override {
        require(stream_ != nullptr, "SsdpEnv: step before reset");
        stream_->observe_action(a);
        Vec w = stream_->next(exo_rng_);
        StepResult sr = ::voisim::step(spec_, state_, a, w);
        state_ = sr.s_next;
        ++k_;
        return {observe(state_), sr.reward, k_ >= episode_len_};
    }

    const Vec& state() const { return state_; }
    const SsdpSpec& spec() const { return spec_; }

  private:
    Vec observe(const Vec& s) const { return obs_fn_ ? obs_fn_(s) : s; }

    SsdpSpec spec_;
    int episode_len_;
    ObsFn obs_fn_;
    int obs_dim_;
    std::unique_ptr<ExoStream> stream_;
    Rng exo_rng_{0};
    Vec state_;
    int k_ = 0;
};

// Tabular MDP as a continuous-control env: one-hot observation, one scalar
// action. A fractional action mixes the two neighboring indices (Bernoulli
// on the fraction), which keeps Q linear along the action axis; greedy
// policy extraction rounds deterministically via decode_action.
class TabularEnv final : public Env {
  public:
    TabularEnv(TabularMdp mdp, int episode_len) : mdp_(std::move(mdp)), episode_len_(episode_len) {
        mdp_.validate();
        require(episode_len_ >= 1, "TabularEnv: episode length must be >= 1");
    }

    int obs_dim() const override { return mdp_.n_states; }
    int action_dim() const override { return 1; }
    Vec action_lo() const override { return {0.0}; }
    Vec action_hi() const override { return {static_cast<double>(mdp_.n_actions - 1)}; }
    double gamma() const override { return mdp_.gamma; }

    Vec reset(uint64_t seed) override {
        rng_ = Rng(derive_seed(seed, 2));
        state_ = static_cast<int>(rng_.categorical(mdp_.init_dist));
        k_ = 0;
        return one_hot(state_);
    }

    EnvStep step(const Vec& a) override {
        int ai = mix_action(a);
        const int prev = state_;
        const auto& row = mdp_.trans[mdp_.idx(prev, ai)];
        Vec probs;
        probs.reserve(row.size());
        for (auto& [sn, p] : row) probs.push_back(p);
        state_ = row[rng_.categorical(probs)].first;
        double r = mdp_.reward[mdp_.idx(prev, ai)];
        ++k_;
        return {one_hot(state_), r, k_ >= episode_len_};
    }

    int decode_action(const Vec& a) const {
        require(a.size() == 1, "TabularEnv: scalar action expected");
        int ai = static_cast<int>(std::llround(a[0]));
        return std::min(std::max(ai, 0), mdp_.n_actions - 1);
    }

    int mix_action(const Vec& a) {
        require(a.size() == 1, "TabularEnv: scalar action expected");
        double x = clamp(a[0], 0.0, static_cast<double>(mdp_.n_actions - 1));
        int lo = static_cast<int>(std::floor(x));
        double frac = x - lo;
        if (frac > 0.0 && rng_.uniform() < frac) return std::min(lo + 1, mdp_.n_actions - 1);
        return lo;
    }

    Vec one_hot(int s) const {
        Vec o(mdp_.n_states, 0.0);
        o[s] = 1.0;
        return o;
    }

    const TabularMdp& mdp() const { return mdp_; }

  private:
    TabularMdp mdp_;
    int episode_len_;
    Rng rng_{0};
    int state_ = 0;
    int k_ = 0;
};

// A tabular MDP as a decision process with integer-coded scalar states and
// actions. The exogenous draw is the uniform variate that picks the next
// state through the transition row's inverse CDF, so rollouts with a shared
// seed reuse identical randomness across policies.
inline SsdpSpec mdp_as_ssdp(const TabularMdp& mdp, int horizon = 0) {
    mdp.validate();
    require(mdp.gamma < 1.0 || horizon > 0, "mdp_as_ssdp: unbounded horizon requires gamma < 1");
    auto pm = std::make_shared<TabularMdp>(mdp);
    SsdpSpec spec;
    spec.state_dim = 1;
    spec.action_dim = 1;
    spec.gamma = mdp.gamma;
    spec.horizon = horizon;
    spec.action_lo = {0.0};
    spec.action_hi = {static_cast<double>(mdp.n_actions - 1)};
    spec.exo = ExoProcess::make_iid_sampler([](Rng& rng) -> Vec { return {rng.uniform()}; }, 1);
    auto decode = [pm](const Vec& s, const Vec& a) {
        int si = static_cast<int>(std::llround(s[0]));
        int ai = static_cast<int>(std::llround(a[0]));
        require(si >= 0 && si < pm->n_states, "mdp_as_ssdp: state out of range");
        require(ai >= 0 && ai < pm->n_actions, "mdp_as_ssdp: action out of range");
        return std::pair<int, int>{si, ai};
    };
    spec.transition = [pm, decode](const Vec& s, const Vec& a, const Vec& w) -> Vec {
        auto [si, ai] = decode(s, a);
        const auto& row = pm->trans[pm->idx(si, ai)];
        double acc = 0.0;
        for (auto [sn, p] : row) {
            acc += p;
            if (w[0] < acc) return {static_cast<double>(sn)};
        }
        return {static_cast<double>(row.back().first)};
    };
    spec.reward = [pm, decode](const Vec& s, const Vec& a, const Vec&) -> double {
        auto [si, ai] = decode(s, a);
        return pm->reward[pm->idx(si, ai)];
    };
    spec.init_support.reserve(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) spec.init_support.push_back({static_cast<double>(s)});
    spec.init_probs = mdp.init_dist;
    spec.validate();
    return spec;
}

// Integer-coded policy over mdp_as_ssdp states.
inline PolicyFn policy_fn_from_table(const PolicyTable& pi) {
    return [pi](const Vec& s) -> Vec {
        int si = static_cast<int>(std::llround(s[0]));
        require(si >= 0 && si < static_cast<int>(pi.size()), "policy_fn_from_table: state out of range");
        return {static_cast<double>(pi[si])};
    };
}

}  // namespace voisim
