#pragma once

// Sidelink communication layer for the platooning tasks: channel gains with
// large/small-scale decomposition, SINR and rate computation for V2I uplinks
// shared with V2V message traffic, the per-interval CAM queue and observation
// delay processes, and the two communication decision problems expressed as
// SSDPs (transmit-or-not per control interval; sub-channel/power per
// communication slot). A coupled runner simulates the control loop and the
// radio layer together so transmit policies can be compared on both
// throughput and tracking error.
//
// Conventions for the single-link desk scale (one V2I link, one V2V link):
// gain vectors are ordered [V2I direct, V2V direct, V2V->BS interference,
// BS-side->V2V interference]; the transmit-or-not state appends the
// predecessor's current input after the gains.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "voisim/common.hpp"
#include "voisim/csv.hpp"
#include "voisim/linalg.hpp"
#include "voisim/ssdp.hpp"
#include "voisim/stats.hpp"
#include "voisim/vehicle.hpp"

namespace voisim {

inline double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

struct CommConfig {
    int n_v2i = 1;  // V2I links; link m owns sub-channel m
    int n_v2v = 1;  // V2V links reusing the V2I sub-channels
    double bandwidth_hz = 180e3;
    double cam_bits = 3200.0;
    double noise_w = dbm_to_watt(-114.0);
    Vec p_v2i_w{dbm_to_watt(23.0)};  // per V2I link, constant
    double p_v2v_max_w = dbm_to_watt(0.0);
    int t_slots = 10;  // communication intervals per control interval
    double dt = 0.01;  // communication interval duration (s)
    double kappa1 = 1.0;
    double kappa2 = 1.0;
    double gamma_cm = 1.0;  // at 1 the slot-decomposition identity is exact
    // channel model
    double pl_exp_direct = 2.0;
    double pl_exp_interference = 3.0;
    double shadowing_std_db = 3.0;
    bool rayleigh = true;  // unit-mean exponential power fading per slot

    double control_interval() const { return dt * t_slots; }

    void validate() const {
        require(n_v2i >= 1 && n_v2v >= 1, "CommConfig: need at least one link of each kind");
        require(t_slots >= 1, "CommConfig: t_slots must be >= 1");
        require(dt > 0.0, "CommConfig: dt must be positive");
        require(bandwidth_hz > 0.0 && cam_bits > 0.0, "CommConfig: bandwidth and CAM size must be positive");
        require(noise_w > 0.0, "CommConfig: noise power must be positive");
        require(p_v2i_w.size() == static_cast<size_t>(n_v2i), "CommConfig: one V2I power per link");
        for (double p : p_v2i_w) require(p > 0.0, "CommConfig: V2I power must be positive");
        require(p_v2v_max_w >= 0.0, "CommConfig: negative V2V power cap");
        require(gamma_cm >= 0.0 && gamma_cm <= 1.0, "CommConfig: gamma_cm outside [0,1]");
        require(shadowing_std_db >= 0.0, "CommConfig: negative shadowing std");
    }
};

// Static per-episode distances (meters). V2I transmitters are vehicles, so
// the BS-side interference path runs vehicle-to-vehicle.
struct LinkGeometry {
    Vec d_v2i;     // M: V2I transmitter -> BS
    Vec d_v2v;     // L: predecessor -> follower
    Vec d_v2v_bs;  // L: predecessor -> BS (interference into the uplink)
    Mat d_bs_v2v;  // L x M: V2I transmitter m -> follower of link l
    Mat d_cross;   // L x L: predecessor j -> follower of link l; diagonal unused

    void validate(const CommConfig& cfg) const {
        require(d_v2i.size() == static_cast<size_t>(cfg.n_v2i), "LinkGeometry: d_v2i size mismatch");
        require(d_v2v.size() == static_cast<size_t>(cfg.n_v2v), "LinkGeometry: d_v2v size mismatch");
        require(d_v2v_bs.size() == static_cast<size_t>(cfg.n_v2v), "LinkGeometry: d_v2v_bs size mismatch");
        require(d_bs_v2v.rows == static_cast<size_t>(cfg.n_v2v) && d_bs_v2v.cols == static_cast<size_t>(cfg.n_v2i),
                "LinkGeometry: d_bs_v2v shape mismatch");
        require(d_cross.rows == static_cast<size_t>(cfg.n_v2v) && d_cross.cols == static_cast<size_t>(cfg.n_v2v),
                "LinkGeometry: d_cross shape mismatch");
        auto pos = [](double d) { require(d > 0.0, "LinkGeometry: distances must be positive"); };
        for (double d : d_v2i) pos(d);
        for (double d : d_v2v) pos(d);
        for (double d : d_v2v_bs) pos(d);
        for (double d : d_bs_v2v.a) pos(d);
        for (double d : d_cross.a) pos(d);
    }

    // Desk-scale single-link layout: BS ~120 m from the uplink vehicle, a
    // 25 m platoon gap, interferers in between.
    static LinkGeometry platoon_default() {
        LinkGeometry g;
        g.d_v2i = {120.0};
        g.d_v2v = {25.0};
        g.d_v2v_bs = {110.0};
        g.d_bs_v2v = Mat(1, 1, 60.0);
        g.d_cross = Mat(1, 1, 1.0);
        return g;
    }
};

// Gains decompose as alpha (path loss + shadowing, fixed per sample) times h
// (power fading, redrawn per communication interval). Paths that do not
// depend on the sub-channel replicate alpha across columns.
struct ChannelState {
    int n_v2i = 0;
    int n_v2v = 0;
    Vec a_v2i, h_v2i;        // per m
    Mat a_v2v, h_v2v;        // l x m
    Mat a_v2v_bs, h_v2v_bs;  // l x m
    Mat a_bs_v2v, h_bs_v2v;  // l x m
    Vec a_cross, h_cross;    // (j, l, m) row-major

    size_t cross_idx(int j, int l, int m) const {
        return (static_cast<size_t>(j) * n_v2v + l) * n_v2i + m;
    }
    double g_v2i(int m) const { return a_v2i[m] * h_v2i[m]; }
    double g_v2v(int l, int m) const { return a_v2v(l, m) * h_v2v(l, m); }
    double g_v2v_bs(int l, int m) const { return a_v2v_bs(l, m) * h_v2v_bs(l, m); }
    double g_bs_v2v(int l, int m) const { return a_bs_v2v(l, m) * h_bs_v2v(l, m); }
    double g_cross(int j, int l, int m) const { return a_cross[cross_idx(j, l, m)] * h_cross[cross_idx(j, l, m)]; }
};

inline void redraw_small_scale(ChannelState& cs, const CommConfig& cfg, Rng& rng) {
    auto draw = [&]() { return cfg.rayleigh ? rng.exponential(1.0) : 1.0; };
    for (double& h : cs.h_v2i) h = draw();
    for (double& h : cs.h_v2v.a) h = draw();
    for (double& h : cs.h_v2v_bs.a) h = draw();
    for (double& h : cs.h_bs_v2v.a) h = draw();
    for (double& h : cs.h_cross) h = draw();
}

inline ChannelState sample_channel(const LinkGeometry& geom, const CommConfig& cfg, uint64_t seed) {
    cfg.validate();
    geom.validate(cfg);
    Rng rng(seed);
    auto alpha = [&](double d, double exp_n) {
        return std::pow(d, -exp_n) * std::pow(10.0, rng.normal(0.0, cfg.shadowing_std_db) / 10.0);
    };
    ChannelState cs;
    cs.n_v2i = cfg.n_v2i;
    cs.n_v2v = cfg.n_v2v;
    cs.a_v2i.resize(cfg.n_v2i);
    for (int m = 0; m < cfg.n_v2i; ++m) cs.a_v2i[m] = alpha(geom.d_v2i[m], cfg.pl_exp_direct);
    cs.a_v2v = Mat(cfg.n_v2v, cfg.n_v2i);
    cs.a_v2v_bs = Mat(cfg.n_v2v, cfg.n_v2i);
    cs.a_bs_v2v = Mat(cfg.n_v2v, cfg.n_v2i);
    for (int l = 0; l < cfg.n_v2v; ++l) {
        // one shadowing draw per physical path, replicated over sub-channels
        double av = alpha(geom.d_v2v[l], cfg.pl_exp_direct);
        double ab = alpha(geom.d_v2v_bs[l], cfg.pl_exp_interference);
        for (int m = 0; m < cfg.n_v2i; ++m) {
            cs.a_v2v(l, m) = av;
            cs.a_v2v_bs(l, m) = ab;
            cs.a_bs_v2v(l, m) = alpha(geom.d_bs_v2v(l, m), cfg.pl_exp_interference);
        }
    }
    cs.a_cross.assign(static_cast<size_t>(cfg.n_v2v) * cfg.n_v2v * cfg.n_v2i, 0.0);
    for (int j = 0; j < cfg.n_v2v; ++j) {
        for (int l = 0; l < cfg.n_v2v; ++l) {
            if (j == l) {
                for (int m = 0; m < cfg.n_v2i; ++m) cs.a_cross[cs.cross_idx(j, l, m)] = 1.0;
                continue;
            }
            double ac = alpha(geom.d_cross(j, l), cfg.pl_exp_interference);
            for (int m = 0; m < cfg.n_v2i; ++m) cs.a_cross[cs.cross_idx(j, l, m)] = ac;
        }
    }
    cs.h_v2i.assign(cfg.n_v2i, 1.0);
    cs.h_v2v = Mat(cfg.n_v2v, cfg.n_v2i, 1.0);
    cs.h_v2v_bs = Mat(cfg.n_v2v, cfg.n_v2i, 1.0);
    cs.h_bs_v2v = Mat(cfg.n_v2v, cfg.n_v2i, 1.0);
    cs.h_cross.assign(cs.a_cross.size(), 1.0);
    redraw_small_scale(cs, cfg, rng);
    return cs;
}

// One slot's radio decision: sub-channel occupancy and transmit power.
struct CommAction {
    Mat theta;  // L x M, binary; each link occupies at most one sub-channel
    Mat p_v2v;  // L x M, watts

    void validate(const CommConfig& cfg) const {
        require(theta.rows == static_cast<size_t>(cfg.n_v2v) && theta.cols == static_cast<size_t>(cfg.n_v2i),
                "CommAction: theta shape mismatch");
        require(p_v2v.rows == theta.rows && p_v2v.cols == theta.cols, "CommAction: power shape mismatch");
        for (size_t l = 0; l < theta.rows; ++l) {
            double row = 0.0;
            for (size_t m = 0; m < theta.cols; ++m) {
                require(theta(l, m) == 0.0 || theta(l, m) == 1.0, "CommAction: theta must be binary");
                row += theta(l, m);
                require(p_v2v(l, m) >= 0.0 && p_v2v(l, m) <= cfg.p_v2v_max_w,
                        "CommAction: power outside [0, p_v2v_max_w]");
            }
            require(row <= 1.0, "CommAction: link on more than one sub-channel");
        }
    }

    static CommAction single_channel_max(const CommConfig& cfg) {
        CommAction a;
        a.theta = Mat(cfg.n_v2v, cfg.n_v2i);
        a.p_v2v = Mat(cfg.n_v2v, cfg.n_v2i);
        for (int l = 0; l < cfg.n_v2v; ++l) {
            a.theta(l, 0) = 1.0;
            a.p_v2v(l, 0) = cfg.p_v2v_max_w;
        }
        return a;
    }
};

// Uplink SINR of V2I link m: interference from every V2V transmitter active
// (phi) and assigned (theta) on sub-channel m.
inline double sinr_v2i(const ChannelState& cs, const CommAction& act, const std::vector<int>& phi,
                       const CommConfig& cfg, int m) {
    require(phi.size() == static_cast<size_t>(cfg.n_v2v), "sinr_v2i: one phi per V2V link");
    double interference = 0.0;
    for (int l = 0; l < cfg.n_v2v; ++l)
        interference += phi[l] * act.theta(l, m) * act.p_v2v(l, m) * cs.g_v2v_bs(l, m);
    return cfg.p_v2i_w[m] * cs.g_v2i(m) / (cfg.noise_w + interference);
}

// V2V SINR of link l on sub-channel m. Interference: the V2I transmitter on
// m plus other V2V links sharing m, each gated by its own transmit indicator
// (the per-transmitter gating is what the interference physically depends
// on). Only meaningful when link l is assigned to m; callers gate on theta.
inline double sinr_v2v(const ChannelState& cs, const CommAction& act, const std::vector<int>& phi,
                       const CommConfig& cfg, int l, int m) {
    require(phi.size() == static_cast<size_t>(cfg.n_v2v), "sinr_v2v: one phi per V2V link");
    double interference = cfg.p_v2i_w[m] * cs.g_bs_v2v(l, m);
    for (int j = 0; j < cfg.n_v2v; ++j) {
        if (j == l) continue;
        interference += phi[j] * act.theta(j, m) * act.p_v2v(j, m) * cs.g_cross(j, l, m);
    }
    return act.p_v2v(l, m) * cs.g_v2v(l, m) / (cfg.noise_w + interference);
}

struct RateSet {
    Vec v2i;  // bit/s per V2I link
    Vec v2v;  // bit/s per V2V link, summed over assigned sub-channels
    Vec cam;  // CAM/s per V2V link
};

inline RateSet rates(const ChannelState& cs, const CommAction& act, const std::vector<int>& phi,
                     const CommConfig& cfg) {
    RateSet r;
    r.v2i.resize(cfg.n_v2i);
    for (int m = 0; m < cfg.n_v2i; ++m)
        r.v2i[m] = cfg.bandwidth_hz * std::log2(1.0 + sinr_v2i(cs, act, phi, cfg, m));
    r.v2v.assign(cfg.n_v2v, 0.0);
    r.cam.assign(cfg.n_v2v, 0.0);
    for (int l = 0; l < cfg.n_v2v; ++l) {
        for (int m = 0; m < cfg.n_v2i; ++m) {
            if (act.theta(l, m) == 0.0) continue;
            r.v2v[l] += cfg.bandwidth_hz * std::log2(1.0 + sinr_v2v(cs, act, phi, cfg, l, m));
        }
        r.cam[l] = r.v2v[l] / cfg.cam_bits;
    }
    return r;
}

// Fractional CAM backlog of one link plus the bookkeeping the delay process
// needs: the interval's transmit indicator and the receiver-side delay.
struct CamQueue {
    double q = 0.0;  // CAMs in the buffer, in [0, 1]
    int phi = 0;     // transmit indicator of the current control interval
    int tau = 1;     // observation delay in control intervals
};

// Queue recursion over slot boundaries: index 0 loads the new CAM (or
// nothing), indices 1..t_slots apply the previous slot's service. cam_rate
// is the CAM/s rate during slot t-1.
inline CamQueue queue_step(const CamQueue& cq, double cam_rate, const CommConfig& cfg, int t, int phi_next) {
    require(t >= 0 && t <= cfg.t_slots, "queue_step: slot index out of range");
    require(cam_rate >= 0.0, "queue_step: negative service rate");
    CamQueue out = cq;
    if (t == 0) {
        require(phi_next == 0 || phi_next == 1, "queue_step: phi must be binary");
        out.q = phi_next;
        out.phi = phi_next;
    } else {
        out.q = std::max(0.0, cq.q - cam_rate * cfg.dt);
    }
    return out;
}

// Delay update at the end of a control interval. Reset requires an actual
// delivery: an empty queue with phi = 0 means nothing was sent, so the
// receiver's newest CAM ages by one interval.
inline int delay_step(const CamQueue& cq_end) {
    return (cq_end.phi == 1 && cq_end.q == 0.0) ? 1 : cq_end.tau + 1;
}

// Reward of the transmit-or-not decision for one control interval: the
// discounted slot sum of V2I throughput plus the (weighted) VoI of what the
// follower will have at the next interval.
inline double comm_reward_when(const std::vector<Vec>& v2i_rates, double ivoi_next, const CommConfig& cfg) {
    require(v2i_rates.size() == static_cast<size_t>(cfg.t_slots), "comm_reward_when: one rate vector per slot");
    double sum = 0.0, g = 1.0;
    for (const Vec& slot : v2i_rates) {
        require(slot.size() == static_cast<size_t>(cfg.n_v2i), "comm_reward_when: rate vector size mismatch");
        double c = 0.0;
        for (double r : slot) c += r;
        sum += g * c;
        g *= cfg.gamma_cm;
    }
    return cfg.kappa1 * sum + cfg.kappa2 * ivoi_next;
}

// Per-slot reward of the scheduling decision: throughput every slot, the VoI
// term only on the interval's last slot.
inline double comm_reward_how(const Vec& v2i_rates, int t, double ivoi_next, const CommConfig& cfg) {
    require(t >= 0 && t < cfg.t_slots, "comm_reward_how: slot index out of range");
    require(v2i_rates.size() == static_cast<size_t>(cfg.n_v2i), "comm_reward_how: rate vector size mismatch");
    double c = 0.0;
    for (double r : v2i_rates) c += r;
    double reward = cfg.kappa1 * c;
    if (t == cfg.t_slots - 1) reward += cfg.kappa2 * ivoi_next;
    return reward;
}

// VoI of the information the follower ends the interval with: delivered
// means the fresh predecessor input arrived in time.
using CommVoiFn = std::function<double(bool delivered, double u_pred)>;

// Default evaluator: a delivered CAM loses nothing; an undelivered one costs
// proportionally to the magnitude of the input the follower is missing, so
// zero-input messages are worthless by construction.
inline CommVoiFn voi_penalty_undelivered(double scale = 1.0) {
    require(scale >= 0.0, "voi_penalty_undelivered: negative scale");
    return [scale](bool delivered, double u_pred) { return delivered ? 0.0 : -scale * std::fabs(u_pred); };
}

enum class CommSsdpKind { when_to_transmit, how_to_transmit };

struct CommSsdpConfig {
    CommConfig comm;
    LinkGeometry geometry = LinkGeometry::platoon_default();
    int n_intervals = 500;      // control intervals per episode
    int tau_max = 3;            // input history length in the scheduling state
    uint64_t channel_seed = 0;  // large-scale draw, fixed per built spec
};

namespace detail {

// Single-link slot rates from a packed gain vector [v2i, v2v, v2v_bs,
// bs_v2v]; v2v_on gates the V2V transmitter (both its interference into the
// uplink and its own service).
inline void single_link_slot(const Vec& gains, bool v2v_on, const CommAction& act, const CommConfig& cfg,
                             double* c_v2i, double* cam_rate) {
    ChannelState cs;
    cs.n_v2i = 1;
    cs.n_v2v = 1;
    cs.a_v2i = {gains[0]};
    cs.a_v2v = Mat(1, 1, gains[1]);
    cs.a_v2v_bs = Mat(1, 1, gains[2]);
    cs.a_bs_v2v = Mat(1, 1, gains[3]);
    cs.a_cross.assign(1, 1.0);
    cs.h_v2i = {1.0};
    cs.h_v2v = Mat(1, 1, 1.0);
    cs.h_v2v_bs = Mat(1, 1, 1.0);
    cs.h_bs_v2v = Mat(1, 1, 1.0);
    cs.h_cross.assign(1, 1.0);
    std::vector<int> phi{v2v_on ? 1 : 0};
    RateSet r = rates(cs, act, phi, cfg);
    *c_v2i = r.v2i[0];
    *cam_rate = v2v_on ? r.cam[0] : 0.0;
}

// Exogenous stream for the transmit-or-not process: per control interval,
// the next predecessor input followed by fading draws for the next
// interval's first slot and this interval's remaining slots.
class WhenExoStream : public ExoStream {
  public:
    WhenExoStream(std::unique_ptr<ExoStream> u, int t_slots, bool rayleigh)
        : u_(std::move(u)), t_slots_(t_slots), rayleigh_(rayleigh) {}
    Vec next(Rng& rng) override {
        Vec w(1 + 4 * static_cast<size_t>(t_slots_));
        w[0] = u_->next(rng)[0];
        for (size_t i = 1; i < w.size(); ++i) w[i] = rayleigh_ ? rng.exponential(1.0) : 1.0;
        return w;
    }

  private:
    std::unique_ptr<ExoStream> u_;
    int t_slots_;
    bool rayleigh_;
};

// Per-slot stream for the scheduling process: fading for the next slot plus
// the next predecessor input, emitted only on interval boundaries.
class HowExoStream : public ExoStream {
  public:
    HowExoStream(std::unique_ptr<ExoStream> u, int t_slots, bool rayleigh)
        : u_(std::move(u)), t_slots_(t_slots), rayleigh_(rayleigh) {}
    Vec next(Rng& rng) override {
        Vec w(5, 0.0);
        for (int i = 0; i < 4; ++i) w[i] = rayleigh_ ? rng.exponential(1.0) : 1.0;
        if (slot_ % t_slots_ == t_slots_ - 1) w[4] = u_->next(rng)[0];
        ++slot_;
        return w;
    }

  private:
    std::unique_ptr<ExoStream> u_;
    int t_slots_;
    bool rayleigh_;
    int slot_ = 0;
};

}  // namespace detail

// Builds the communication decision process. u_source emits the predecessor
// input sequence u_1, u_2, ... (scalar); u0 seeds the initial state. The
// VoI evaluator scores each interval's outcome and is mandatory: without it
// the reward is undefined.
//
// transmit-or-not: one step per control interval, state [gains(k,0), u_k],
// action phi in {0,1}. scheduling: one step per communication interval,
// state [gains(k,t), q, u_{k-tau_max+1..k} oldest first, t], action
// [theta, power]; the transmit indicator is pinned to 1 (the scheduling
// problem assumes the message was committed).
inline SsdpSpec build_comm_ssdp(CommSsdpKind kind, const ExoProcess& u_source, double u0, const CommVoiFn& xi,
                                const CommSsdpConfig& cfg) {
    cfg.comm.validate();
    cfg.geometry.validate(cfg.comm);
    require(static_cast<bool>(xi), "build_comm_ssdp: VoI evaluator must be set");
    require(cfg.comm.n_v2i == 1 && cfg.comm.n_v2v == 1, "build_comm_ssdp: single-link desk scale only");
    require(u_source.w_dim == 1, "build_comm_ssdp: u_source must be scalar");
    require(cfg.n_intervals >= 1, "build_comm_ssdp: n_intervals must be >= 1");

    ChannelState base = sample_channel(cfg.geometry, cfg.comm, cfg.channel_seed);
    const Vec alphas{base.a_v2i[0], base.a_v2v(0, 0), base.a_v2v_bs(0, 0), base.a_bs_v2v(0, 0)};
    const CommConfig comm = cfg.comm;
    const CommAction act = CommAction::single_channel_max(comm);
    const int T = comm.t_slots;
    auto u_src = std::make_shared<ExoProcess>(u_source);

    SsdpSpec spec;
    spec.gamma = comm.gamma_cm;

    if (kind == CommSsdpKind::when_to_transmit) {
        spec.state_dim = 5;
        spec.action_dim = 1;
        spec.action_lo = {0.0};
        spec.action_hi = {1.0};
        spec.horizon = cfg.n_intervals;
        spec.exo.w_dim = 1 + 4 * T;
        spec.exo.custom_stream = [u_src, T, rayleigh = comm.rayleigh]() -> std::unique_ptr<ExoStream> {
            return std::make_unique<detail::WhenExoStream>(u_src->make_stream(), T, rayleigh);
        };
        spec.init_sampler = [alphas, u0, rayleigh = comm.rayleigh](Rng& rng) -> Vec {
            Vec s(5);
            for (int i = 0; i < 4; ++i) s[i] = alphas[i] * (rayleigh ? rng.exponential(1.0) : 1.0);
            s[4] = u0;
            return s;
        };
        // w layout: [u', h(k+1,0) x4, h(k,1..T-1) x4 each]
        spec.transition = [alphas](const Vec&, const Vec&, const Vec& w) -> Vec {
            Vec s(5);
            for (int i = 0; i < 4; ++i) s[i] = alphas[i] * w[1 + i];
            s[4] = w[0];
            return s;
        };
        spec.reward = [alphas, act, comm, xi, T](const Vec& s, const Vec& a, const Vec& w) -> double {
            int phi = a[0] >= 0.5 ? 1 : 0;
            CamQueue cq = queue_step(CamQueue{}, 0.0, comm, 0, phi);
            std::vector<Vec> v2i_slots(T);
            Vec gains(4);
            for (int t = 0; t < T; ++t) {
                for (int i = 0; i < 4; ++i) gains[i] = t == 0 ? s[i] : alphas[i] * w[5 + 4 * (t - 1) + i];
                bool tx = phi == 1 && cq.q > 0.0;
                double c_v2i = 0.0, cam_rate = 0.0;
                detail::single_link_slot(gains, tx, act, comm, &c_v2i, &cam_rate);
                v2i_slots[t] = {c_v2i};
                cq = queue_step(cq, cam_rate, comm, t + 1, 0);
            }
            bool delivered = phi == 1 && cq.q == 0.0;
            return comm_reward_when(v2i_slots, xi(delivered, s[4]), comm);
        };
        spec.validate();
        return spec;
    }

    require(cfg.tau_max >= 1, "build_comm_ssdp: tau_max must be >= 1");
    const int tau_max = cfg.tau_max;
    spec.state_dim = 4 + 1 + tau_max + 1;
    spec.action_dim = 2;
    spec.action_lo = {0.0, 0.0};
    spec.action_hi = {1.0, comm.p_v2v_max_w};
    spec.horizon = cfg.n_intervals * T;
    spec.exo.w_dim = 5;
    spec.exo.custom_stream = [u_src, T, rayleigh = comm.rayleigh]() -> std::unique_ptr<ExoStream> {
        return std::make_unique<detail::HowExoStream>(u_src->make_stream(), T, rayleigh);
    };
    spec.init_sampler = [alphas, u0, tau_max, rayleigh = comm.rayleigh](Rng& rng) -> Vec {
        Vec s(4 + 1 + tau_max + 1, 0.0);
        for (int i = 0; i < 4; ++i) s[i] = alphas[i] * (rayleigh ? rng.exponential(1.0) : 1.0);
        s[4] = 1.0;  // the committed CAM is in the buffer
        s[4 + tau_max] = u0;
        return s;
    };
    // shared inner step: service the queue at slot t with the state's gains
    auto service = [act, comm](const Vec& s, const Vec& a) -> double {
        bool on = a[0] >= 0.5 && s[4] > 0.0;
        CommAction slot_act = act;
        slot_act.p_v2v(0, 0) = clamp(a[1], 0.0, comm.p_v2v_max_w);
        double c_v2i = 0.0, cam_rate = 0.0;
        detail::single_link_slot(Vec(s.begin(), s.begin() + 4), on, slot_act, comm, &c_v2i, &cam_rate);
        return std::max(0.0, s[4] - cam_rate * comm.dt);
    };
    spec.transition = [alphas, tau_max, T, service](const Vec& s, const Vec& a, const Vec& w) -> Vec {
        int t = static_cast<int>(std::llround(s.back()));
        Vec next(s.size());
        for (int i = 0; i < 4; ++i) next[i] = alphas[i] * w[i];
        double q_end = service(s, a);
        if (t < T - 1) {
            next[4] = q_end;
            for (int i = 0; i < tau_max; ++i) next[5 + i] = s[5 + i];
            next.back() = t + 1;
        } else {
            next[4] = 1.0;  // next interval's CAM, transmit indicator pinned to 1
            for (int i = 0; i < tau_max - 1; ++i) next[5 + i] = s[6 + i];
            next[4 + tau_max] = w[4];
            next.back() = 0.0;
        }
        return next;
    };
    spec.reward = [act, comm, xi, tau_max, T, service](const Vec& s, const Vec& a, const Vec&) -> double {
        int t = static_cast<int>(std::llround(s.back()));
        bool on = a[0] >= 0.5 && s[4] > 0.0;
        CommAction slot_act = act;
        slot_act.p_v2v(0, 0) = clamp(a[1], 0.0, comm.p_v2v_max_w);
        double c_v2i = 0.0, cam_rate = 0.0;
        detail::single_link_slot(Vec(s.begin(), s.begin() + 4), on, slot_act, comm, &c_v2i, &cam_rate);
        double ivoi_next = 0.0;
        if (t == T - 1) ivoi_next = xi(service(s, a) == 0.0, s[4 + tau_max]);
        return comm_reward_how({c_v2i}, t, ivoi_next, comm);
    };
    spec.validate();
    return spec;
}

// Transmit-or-not policies over the when-state (predecessor input last).
inline PolicyFn policy_always_transmit() {
    return [](const Vec&) -> Vec { return {1.0}; };
}

inline PolicyFn policy_never_transmit() {
    return [](const Vec&) -> Vec { return {0.0}; };
}

// Suppresses the CAM when the predecessor input magnitude is at or below the
// gate: such messages carry (nearly) nothing the receiver cannot assume.
inline PolicyFn policy_voi_gated(double gate = 1e-3) {
    require(gate >= 0.0, "policy_voi_gated: negative gate");
    return [gate](const Vec& s) -> Vec { return {std::fabs(s.back()) > gate ? 1.0 : 0.0}; };
}

// Coupled control + radio simulation of one episode.
struct CommRunConfig {
    CommConfig comm;
    LinkGeometry geometry = LinkGeometry::platoon_default();
    VehicleParams vehicle;
    CommVoiFn xi = voi_penalty_undelivered();
    // follower control: feedback on the tracking errors plus feedforward of
    // the observed predecessor input
    double k_p = 0.8;
    double k_v = 1.5;
    double k_ff = 1.0;

    void validate() const {
        comm.validate();
        geometry.validate(comm);
        vehicle.validate();
        require(std::fabs(vehicle.T - comm.control_interval()) <= 1e-12,
                "CommRunConfig: dt * t_slots must equal the control interval");
        require(static_cast<bool>(xi), "CommRunConfig: VoI evaluator must be set");
    }
};

struct CommSlotRow {
    int k = 0;
    int t = 0;
    double sinr_v2i = 0.0;
    double sinr_v2v = 0.0;
    double rate_v2i = 0.0;
    double rate_v2v = 0.0;
    double cam_rate = 0.0;
    double q = 0.0;  // after this slot's service
    int phi = 0;
    int tau = 0;
    double r_how = 0.0;
};

struct CommRunLog {
    std::vector<CommSlotRow> slots;
    // per control interval
    std::vector<int> phi, tau, delivered;
    Vec xi_vals, when_reward;
    Vec u_pred, acc_obs;
    Vec e_p, e_v, acc, u_ctrl;  // follower trajectory
    double gamma_cm = 1.0;
    int t_slots = 1;
};

// Discounted V2I throughput: sum over intervals and slots with gamma_cm on
// both indices, matching the reward's slot weighting.
inline double discounted_v2i_throughput(const CommRunLog& log, const CommConfig& cfg) {
    double sum = 0.0;
    for (const CommSlotRow& row : log.slots)
        sum += std::pow(cfg.gamma_cm, row.k) * std::pow(cfg.gamma_cm, row.t) * row.rate_v2i;
    return sum;
}

inline double discounted_xi_sum(const CommRunLog& log, const CommConfig& cfg) {
    double sum = 0.0;
    for (size_t k = 0; k < log.xi_vals.size(); ++k) sum += std::pow(cfg.gamma_cm, k) * log.xi_vals[k];
    return sum;
}

// Communication objective from a run log: weighted discounted throughput
// plus the weighted information value. By the performance-difference
// identity the discounted per-interval VoI sum estimates the expected VoI,
// so the log-based value matches the explicit-EVoI form in expectation.
inline double objective_jcm(const CommRunLog& log, const CommConfig& cfg) {
    return cfg.kappa1 * discounted_v2i_throughput(log, cfg) + cfg.kappa2 * discounted_xi_sum(log, cfg);
}

inline double objective_jcm(const CommRunLog& log, const CommConfig& cfg, double evoi_total) {
    return cfg.kappa1 * discounted_v2i_throughput(log, cfg) + cfg.kappa2 * evoi_total;
}

inline double rms_of(const Vec& xs) {
    require(!xs.empty(), "rms_of: empty series");
    double s = 0.0;
    for (double x : xs) s += x * x;
    return std::sqrt(s / static_cast<double>(xs.size()));
}

// Runs the platoon for the length of the predecessor trace: each control
// interval the policy sees [gains(k,0), u_pred] and picks phi, the radio
// layer serves the queue over t_slots fading draws, and the follower applies
// feedback control with the delivered (or dummy-zero) predecessor input.
// All randomness is consumed on a fixed schedule, so runs with the same seed
// and different policies are exactly paired.
inline CommRunLog run_comm_episode(const PolicyFn& policy, const PredecessorTrajectory& pred,
                                   const CommRunConfig& rc, uint64_t seed) {
    rc.validate();
    pred.validate();
    require(static_cast<bool>(policy), "run_comm_episode: policy must be set");
    const CommConfig& comm = rc.comm;
    const int T = comm.t_slots;
    const int n_k = static_cast<int>(pred.acc.size());

    ChannelState cs = sample_channel(rc.geometry, comm, derive_seed(seed, 0));
    Rng fade_rng(derive_seed(seed, 1));
    const CommAction act = CommAction::single_channel_max(comm);

    CommRunLog log;
    log.gamma_cm = comm.gamma_cm;
    log.t_slots = T;
    log.slots.reserve(static_cast<size_t>(n_k) * T);

    VehicleState x;  // zero initial errors: differences come from the trace
    CamQueue cq;
    bool prev_delivered = false;
    double prev_u_pred = 0.0;

    for (int k = 0; k < n_k; ++k) {
        const double u_pred = pred.acc[k];
        // dummy-bit receiver semantics: a missing CAM reads as zero input
        const double obs = prev_delivered ? prev_u_pred : 0.0;
        double u = rc.k_p * x.e_p + rc.k_v * x.e_v + rc.k_ff * obs;
        u = clamp(u, -rc.vehicle.u_max, rc.vehicle.u_max);
        log.e_p.push_back(x.e_p);
        log.e_v.push_back(x.e_v);
        log.acc.push_back(x.acc);
        log.u_ctrl.push_back(u);
        log.acc_obs.push_back(obs);
        x = dynamics_step(x, u, u_pred, rc.vehicle);

        redraw_small_scale(cs, comm, fade_rng);
        Vec when_state{cs.g_v2i(0), cs.g_v2v(0, 0), cs.g_v2v_bs(0, 0), cs.g_bs_v2v(0, 0), u_pred};
        Vec a = policy(when_state);
        require(!a.empty(), "run_comm_episode: policy output empty");
        const int phi = a[0] >= 0.5 ? 1 : 0;
        cq = queue_step(cq, 0.0, comm, 0, phi);

        std::vector<Vec> v2i_slots(T);
        const size_t first_row = log.slots.size();
        for (int t = 0; t < T; ++t) {
            if (t > 0) redraw_small_scale(cs, comm, fade_rng);
            const bool tx = phi == 1 && cq.q > 0.0;
            std::vector<int> phi_vec{tx ? 1 : 0};
            CommSlotRow row;
            row.k = k;
            row.t = t;
            row.phi = phi;
            row.tau = cq.tau;
            row.sinr_v2i = sinr_v2i(cs, act, phi_vec, comm, 0);
            row.sinr_v2v = sinr_v2v(cs, act, phi_vec, comm, 0, 0);
            RateSet r = rates(cs, act, phi_vec, comm);
            row.rate_v2i = r.v2i[0];
            row.rate_v2v = r.v2v[0];
            row.cam_rate = tx ? r.cam[0] : 0.0;
            cq = queue_step(cq, row.cam_rate, comm, t + 1, 0);
            row.q = cq.q;
            v2i_slots[t] = {row.rate_v2i};
            log.slots.push_back(row);
        }
        const bool delivered = phi == 1 && cq.q == 0.0;
        const double xi_k = rc.xi(delivered, u_pred);
        for (int t = 0; t < T; ++t)
            log.slots[first_row + t].r_how = comm_reward_how(v2i_slots[t], t, xi_k, comm);
        log.phi.push_back(phi);
        log.tau.push_back(cq.tau);
        log.delivered.push_back(delivered ? 1 : 0);
        log.xi_vals.push_back(xi_k);
        log.when_reward.push_back(comm_reward_when(v2i_slots, xi_k, comm));
        log.u_pred.push_back(u_pred);
        cq.tau = delay_step(cq);
        prev_delivered = delivered;
        prev_u_pred = u_pred;
    }
    return log;
}

inline void export_comm_log_csv(const CommRunLog& log, const std::string& path) {
    CsvWriter w(path);
    w.header({"k", "t", "sinr_v2i", "sinr_v2v", "rate_v2i", "rate_v2v", "cam_rate", "q", "phi", "tau",
              "r_how", "xi", "r_when"});
    for (const CommSlotRow& row : log.slots) {
        w.row({static_cast<double>(row.k), static_cast<double>(row.t), row.sinr_v2i, row.sinr_v2v,
               row.rate_v2i, row.rate_v2v, row.cam_rate, row.q, static_cast<double>(row.phi),
               static_cast<double>(row.tau), row.r_how, log.xi_vals[row.k], log.when_reward[row.k]});
    }
}

inline void write_comm_summary_json(const CommRunLog& log, const CommConfig& cfg, const std::string& path) {
    nlohmann::json j;
    j["intervals"] = log.phi.size();
    j["throughput_term"] = cfg.kappa1 * discounted_v2i_throughput(log, cfg);
    j["voi_term"] = cfg.kappa2 * discounted_xi_sum(log, cfg);
    j["j_cm"] = objective_jcm(log, cfg);
    int delivered = 0;
    for (int d : log.delivered) delivered += d;
    j["delivered_fraction"] = log.delivered.empty() ? 0.0 : static_cast<double>(delivered) / log.delivered.size();
    double tau_sum = 0.0;
    for (int t : log.tau) tau_sum += t;
    j["mean_tau"] = log.tau.empty() ? 0.0 : tau_sum / log.tau.size();
    j["rms_e_p"] = rms_of(log.e_p);
    j["rms_e_v"] = rms_of(log.e_v);
    std::ofstream out(path);
    require(out.good(), "write_comm_summary_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

// Paired evaluation of candidate transmit policies on a common trace:
// every candidate sees the same episode seeds, so ranking differences come
// from the decisions alone. Returns scores sorted best first.
struct CommDecision {
    std::string name;
    PolicyFn policy;
};

struct DecisionScore {
    std::string name;
    double j_cm = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

inline std::vector<DecisionScore> static_decision_eval(const std::vector<CommDecision>& candidates,
                                                       const PredecessorTrajectory& pred,
                                                       const CommRunConfig& rc, int n_episodes,
                                                       uint64_t seed) {
    require(!candidates.empty(), "static_decision_eval: no candidates");
    require(n_episodes >= 1, "static_decision_eval: n_episodes must be >= 1");
    std::vector<DecisionScore> out;
    for (const CommDecision& cand : candidates) {
        require(static_cast<bool>(cand.policy), "static_decision_eval: candidate policy must be set");
        Vec scores(n_episodes);
        for (int e = 0; e < n_episodes; ++e) {
            CommRunLog log = run_comm_episode(cand.policy, pred, rc, derive_seed(seed, static_cast<uint64_t>(e)));
            scores[e] = objective_jcm(log, rc.comm);
        }
        DecisionScore ds;
        ds.name = cand.name;
        if (n_episodes >= 2) {
            MeanCi ci = mean_ci(scores);
            ds.j_cm = ci.mean;
            ds.ci_lo = ci.ci_lo;
            ds.ci_hi = ci.ci_hi;
        } else {
            ds.j_cm = scores[0];
            ds.ci_lo = ds.ci_hi = scores[0];
        }
        out.push_back(std::move(ds));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const DecisionScore& a, const DecisionScore& b) { return a.j_cm > b.j_cm; });
    return out;
}

}  // namespace voisim
