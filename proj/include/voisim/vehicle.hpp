#pragma once

// Longitudinal vehicle-following control. A follower tracks its predecessor
// under a constant time-headway policy; the state is (e_p, e_v, acc), the
// control input is the commanded acceleration u, and the exogenous
// information is the predecessor's acceleration. Forward-Euler discretized:
//
//   x' = A x + B u + C acc_pred
//   A = [[1, T, -h*T], [0, 1, -T], [0, 0, 1 - T/rho]],  B = [0, 0, T/rho],
//   C = [0, T, 0]
//
// The predecessor's own driveline recurrence as printed in the source
// material omits T ((1 - 1/rho) acc + (1/rho) u), which is inconsistent with
// the follower's (1 - T/rho) entry; the forward-Euler-consistent form
// (1 - T/rho) acc + (T/rho) u is used here.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "voisim/augment.hpp"
#include "voisim/common.hpp"
#include "voisim/csv.hpp"
#include "voisim/ssdp.hpp"

namespace voisim {

struct VehicleParams {
    double rho = 0.5;     // driveline time constant (s)
    double h = 1.0;       // desired time gap (s)
    double sigma = 2.0;   // standstill distance (m)
    double L_pred = 5.0;  // predecessor length (m)
    double T = 0.1;       // control interval (s)
    double u_max = 3.0;   // |u| bound (m/s^2)
    double acc_max = 3.0;  // |acc| bound (m/s^2)

    void validate() const {
        require(rho > 0.0 && T > 0.0, "VehicleParams: rho and T must be positive");
        // 1 - T/rho must stay in (0,1), otherwise the Euler step is unstable
        require(T < rho, "VehicleParams: need T < rho");
        require(h >= 0.0 && sigma >= 0.0 && L_pred >= 0.0, "VehicleParams: negative geometry");
        require(u_max > 0.0 && acc_max > 0.0, "VehicleParams: control bounds must be positive");
    }
};

struct VehicleState {
    double e_p = 0.0;  // position error (m)
    double e_v = 0.0;  // velocity error (m/s)
    double acc = 0.0;  // follower acceleration (m/s^2)
};

struct RewardWeights {
    double a = 1.0;  // weight of the velocity-error term
    double b = 1.0;  // weight of the control-effort term
    double c = 1.0;  // weight of the jerk term
    double e_p_max_hat = 15.0;  // nominal maximum position error (m)
    double e_v_max_hat = 10.0;  // nominal maximum velocity error (m/s)
    double huber_delta = 0.0;   // > 0 squares each normalized term below it

    void validate() const {
        require(a > 0.0 && b > 0.0 && c > 0.0, "RewardWeights: weights must be positive");
        require(e_p_max_hat > 0.0 && e_v_max_hat > 0.0, "RewardWeights: nominal maxima must be positive");
        require(huber_delta >= 0.0, "RewardWeights: huber_delta must be >= 0");
    }
};

// x' = A x + B u + C acc_pred; the follower acceleration is clamped to
// +-acc_max after the update (clipped reports whether that fired).
inline VehicleState dynamics_step(const VehicleState& x, double u, double acc_pred, const VehicleParams& p,
                                  bool* clipped = nullptr) {
    VehicleState n;
    n.e_p = x.e_p + p.T * x.e_v - p.h * p.T * x.acc;
    n.e_v = x.e_v + p.T * (acc_pred - x.acc);
    n.acc = (1.0 - p.T / p.rho) * x.acc + (p.T / p.rho) * u;
    if (clipped) *clipped = false;
    if (n.acc > p.acc_max || n.acc < -p.acc_max) {
        n.acc = clamp(n.acc, -p.acc_max, p.acc_max);
        if (clipped) *clipped = true;
    }
    return n;
}

// Predecessor driveline recurrence (see header note on the missing T).
inline double predecessor_acc_step(double acc_prev, double u_prev, const VehicleParams& p_pred) {
    return (1.0 - p_pred.T / p_pred.rho) * acc_prev + (p_pred.T / p_pred.rho) * u_prev;
}

inline double desired_headway(double v, const VehicleParams& p) { return p.sigma + p.h * v; }

// Bumper-to-bumper gap from absolute positions.
inline double headway_from_positions(double p_pred, double p, double L_pred) { return p_pred - p - L_pred; }

// (e_p, e_v) = (d - d_sigma, v_pred - v).
inline std::pair<double, double> control_errors(double d, double d_sigma, double v_pred, double v) {
    return {d - d_sigma, v_pred - v};
}

namespace detail {

// Optional Huber shaping of one normalized magnitude term: terms below the
// threshold are squared, large ones stay linear.
inline double shape_term(double t, double huber_delta) {
    return (huber_delta > 0.0 && t < huber_delta) ? t * t : t;
}

}  // namespace detail

// Negative weighted sum of normalized magnitudes: position error, velocity
// error, control effort, and jerk j = (u - acc)/rho normalized by the
// largest jerk a bounded acceleration allows over one interval, 2*acc_max/T.
inline double vehicle_reward(const VehicleState& x, double u, const VehicleParams& p, const RewardWeights& w) {
    const double j = (u - x.acc) / p.rho;
    const double j_max = 2.0 * p.acc_max / p.T;
    double sum = detail::shape_term(std::fabs(x.e_p / w.e_p_max_hat), w.huber_delta);
    sum += w.a * detail::shape_term(std::fabs(x.e_v / w.e_v_max_hat), w.huber_delta);
    sum += w.b * detail::shape_term(std::fabs(u / p.u_max), w.huber_delta);
    sum += w.c * detail::shape_term(std::fabs(j / j_max), w.huber_delta);
    return -sum;
}

// What the controller gets to see of the (S, W) augmented state.
//
//  - full:          the augmented state itself.
//  - missing_dummy: the shared slot (by default the trailing entry, i.e. the
//                   predecessor acceleration) replaced by dummy_value.
//  - last_received: stale snapshot of age tau plus the last tau_max actions
//                   and tau itself, matching the random-delay state layout.
struct ObservationModel {
    enum class Kind { full, missing_dummy, last_received };

    Kind kind = Kind::full;
    double dummy_value = 0.0;
    int slot = -1;  // missing_dummy target; -1 = last entry
    int tau_max = 0;

    static ObservationModel full() { return {}; }
    static ObservationModel missing_dummy(double value, int slot = -1) {
        ObservationModel m;
        m.kind = Kind::missing_dummy;
        m.dummy_value = value;
        m.slot = slot;
        return m;
    }
    static ObservationModel last_received(int tau_max) {
        require(tau_max >= 1, "ObservationModel: last_received needs tau_max >= 1");
        ObservationModel m;
        m.kind = Kind::last_received;
        m.tau_max = tau_max;
        return m;
    }
};

// Rolling record the last_received model replays from: states[j] and
// actions[j] are the augmented state seen and the scalar action taken at
// step j < k; true_state passed to observe() is the state at the current
// step k. tau is the age of the newest delivered snapshot.
struct ObserveHistory {
    std::vector<Vec> states;
    std::vector<double> actions;
    int tau = 0;
};

inline Vec observe(const Vec& true_state, const ObservationModel& m, const ObserveHistory& hist = {}) {
    switch (m.kind) {
        case ObservationModel::Kind::full: return true_state;
        case ObservationModel::Kind::missing_dummy: {
            require(!true_state.empty(), "observe: empty state");
            Vec obs = true_state;
            size_t idx = m.slot < 0 ? obs.size() - 1 : static_cast<size_t>(m.slot);
            require(idx < obs.size(), "observe: dummy slot out of range");
            obs[idx] = m.dummy_value;
            return obs;
        }
        case ObservationModel::Kind::last_received: break;
    }
    require(hist.tau >= 0 && hist.tau <= m.tau_max, "observe: snapshot age exceeds tau_max");
    const size_t k = hist.states.size();
    require(static_cast<size_t>(hist.tau) <= k, "observe: snapshot age exceeds recorded history");
    require(hist.actions.size() == k, "observe: state/action history length mismatch");
    Vec obs = hist.tau == 0 ? true_state : hist.states[k - static_cast<size_t>(hist.tau)];
    for (int i = m.tau_max; i >= 1; --i)
        obs.push_back(i <= static_cast<int>(k) ? hist.actions[k - static_cast<size_t>(i)] : 0.0);
    obs.push_back(static_cast<double>(hist.tau));
    return obs;
}

// Predecessor motion at a fixed control interval. acc[k] acts over step k;
// vel[k] is the velocity entering step k (vel and acc have equal length).
struct PredecessorTrajectory {
    std::vector<double> acc;
    std::vector<double> vel;
    double T = 0.1;
    std::string source = "synthetic";
    int clip_count = 0;

    void validate() const {
        require(!acc.empty(), "PredecessorTrajectory: empty");
        require(vel.size() == acc.size(), "PredecessorTrajectory: acc/vel length mismatch");
        require(T > 0.0, "PredecessorTrajectory: T must be positive");
        for (size_t i = 0; i < acc.size(); ++i)
            require(std::isfinite(acc[i]) && std::isfinite(vel[i]), "PredecessorTrajectory: non-finite sample");
    }
};

struct StopAndGoConfig {
    int n_steps = 500;
    double T = 0.1;
    double accel_mag = 1.5;  // accelerate-phase magnitude upper bound (m/s^2)
    double brake_mag = 1.5;  // brake-phase magnitude upper bound (m/s^2)
    int dwell_lo = 10;       // phase length bounds (steps)
    int dwell_hi = 50;
    double v0 = 0.0;
};

// Piecewise-constant phases cycling accelerate / cruise / brake / cruise,
// with per-phase magnitude and dwell drawn from the config ranges. Braking
// is cut short at standstill so the reconstructed velocity never goes
// negative.
inline PredecessorTrajectory synth_stop_and_go(const StopAndGoConfig& cfg, uint64_t seed) {
    require(cfg.n_steps >= 1, "synth_stop_and_go: n_steps must be >= 1");
    require(cfg.T > 0.0, "synth_stop_and_go: T must be positive");
    require(cfg.accel_mag >= 0.0 && cfg.brake_mag >= 0.0, "synth_stop_and_go: negative magnitude");
    require(cfg.dwell_lo >= 1 && cfg.dwell_hi >= cfg.dwell_lo, "synth_stop_and_go: bad dwell range");
    require(cfg.v0 >= 0.0, "synth_stop_and_go: negative initial velocity");
    Rng rng(seed);
    PredecessorTrajectory out;
    out.T = cfg.T;
    out.acc.reserve(cfg.n_steps);
    out.vel.reserve(cfg.n_steps);
    double v = cfg.v0;
    int phase = 0;  // 0 accel, 1 cruise, 2 brake, 3 cruise
    while (static_cast<int>(out.acc.size()) < cfg.n_steps) {
        int dwell = cfg.dwell_lo + static_cast<int>(rng.randint(static_cast<uint64_t>(cfg.dwell_hi - cfg.dwell_lo + 1)));
        double mag = 0.0;
        if (phase == 0) mag = rng.uniform(0.5 * cfg.accel_mag, cfg.accel_mag);
        if (phase == 2) mag = -rng.uniform(0.5 * cfg.brake_mag, cfg.brake_mag);
        for (int i = 0; i < dwell && static_cast<int>(out.acc.size()) < cfg.n_steps; ++i) {
            double a = mag;
            if (v + cfg.T * a < 0.0) a = -v / cfg.T;  // stop exactly at standstill
            out.vel.push_back(v);
            out.acc.push_back(a);
            v += cfg.T * a;
        }
        phase = (phase + 1) % 4;
    }
    out.validate();
    return out;
}

struct TrajectoryColumns {
    std::string time = "time_s";
    std::string velocity = "velocity_mps";
};

// Reads a recorded (time, velocity) series, resamples it onto a uniform
// target_T grid by linear interpolation, and differentiates to accelerations
// clipped to +-acc_max (clip_count reports how many samples hit the bound).
inline PredecessorTrajectory load_trajectory(const std::string& path, const TrajectoryColumns& cols,
                                             double target_T, double acc_max = 3.0) {
    require(target_T > 0.0, "load_trajectory: target_T must be positive");
    require(acc_max > 0.0, "load_trajectory: acc_max must be positive");
    CsvTable t = read_csv(path);
    const int ct = t.column(cols.time);
    const int cv = t.column(cols.velocity);
    require(ct >= 0, "load_trajectory: missing column " + cols.time);
    require(cv >= 0, "load_trajectory: missing column " + cols.velocity);
    require(t.rows.size() >= 2, "load_trajectory: need at least two samples");
    std::vector<double> ts, vs;
    ts.reserve(t.rows.size());
    vs.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        ts.push_back(parse_double(row[ct], "load_trajectory time"));
        vs.push_back(parse_double(row[cv], "load_trajectory velocity"));
        require(std::isfinite(ts.back()) && std::isfinite(vs.back()), "load_trajectory: non-finite sample");
        if (ts.size() >= 2) require(ts[ts.size() - 2] < ts.back(), "load_trajectory: time column not increasing");
    }
    const double span = ts.back() - ts.front();
    const int n = static_cast<int>(std::floor(span / target_T + 1e-9)) + 1;
    require(n >= 2, "load_trajectory: span shorter than target_T");
    std::vector<double> v(n);
    size_t seg = 0;
    for (int j = 0; j < n; ++j) {
        double tj = ts.front() + j * target_T;
        if (tj > ts.back()) tj = ts.back();  // guard fp overshoot at the endpoint
        while (seg + 2 < ts.size() && ts[seg + 1] < tj) ++seg;
        const double frac = (tj - ts[seg]) / (ts[seg + 1] - ts[seg]);
        v[j] = vs[seg] + frac * (vs[seg + 1] - vs[seg]);
    }
    PredecessorTrajectory out;
    out.T = target_T;
    out.source = path;
    out.acc.resize(n - 1);
    out.vel.assign(v.begin(), v.end() - 1);
    for (int j = 0; j + 1 < n; ++j) {
        double a = (v[j + 1] - v[j]) / target_T;
        double c = clamp(a, -acc_max, acc_max);
        if (c != a) ++out.clip_count;
        out.acc[j] = c;
    }
    out.validate();
    return out;
}

// Exogenous processes for the predecessor acceleration.

// Replays a recorded trajectory's accelerations in order.
inline ExoProcess exo_from_trajectory(const PredecessorTrajectory& traj, bool wrap = false) {
    traj.validate();
    std::vector<Vec> data;
    data.reserve(traj.acc.size());
    for (double a : traj.acc) data.push_back({a});
    return ExoProcess::make_trace(std::move(data), wrap);
}

// The predecessor's acceleration as a driven recurrence: acc' follows the
// driveline dynamics from its own control input stream u_pred.
inline ExoProcess predecessor_exo(const VehicleParams& p_pred, ExoProcess u_pred_source, double acc0 = 0.0,
                                  double u0 = 0.0) {
    p_pred.validate();
    require(u_pred_source.w_dim == 1, "predecessor_exo: control stream must be scalar");
    const double keep = 1.0 - p_pred.T / p_pred.rho;
    const double gain = p_pred.T / p_pred.rho;
    return ExoProcess::make_driven(
        [keep, gain](const Vec& w_prev, const Vec& theta) -> Vec { return {keep * w_prev[0] + gain * theta[0]}; },
        std::make_shared<ExoProcess>(std::move(u_pred_source)), {acc0}, {u0});
}

struct VehicleSsdpConfig {
    VehicleParams params;
    RewardWeights weights;
    double gamma = 0.95;
    int horizon = 500;        // fixed episode length, no early termination
    double init_e_p = 2.0;    // e_p0 ~ U[-init_e_p, init_e_p]
    double init_e_v = 1.0;    // e_v0 ~ U[-init_e_v, init_e_v]; acc0 = 0
};

// The vehicle-following decision process: state (e_p, e_v, acc), scalar
// control in [-u_max, u_max], predecessor acceleration as the exogenous
// process. The reward does not read the exogenous draw, so optimal behavior
// is unchanged by conditioning on it when the process is iid.
inline SsdpSpec vehicle_ssdp(const VehicleSsdpConfig& cfg, ExoProcess acc_pred) {
    cfg.params.validate();
    cfg.weights.validate();
    require(acc_pred.w_dim == 1, "vehicle_ssdp: predecessor acceleration must be scalar");
    require(cfg.init_e_p >= 0.0 && cfg.init_e_v >= 0.0, "vehicle_ssdp: negative init ranges");
    SsdpSpec spec;
    spec.state_dim = 3;
    spec.action_dim = 1;
    spec.gamma = cfg.gamma;
    spec.horizon = cfg.horizon;
    spec.action_lo = {-cfg.params.u_max};
    spec.action_hi = {cfg.params.u_max};
    const VehicleParams p = cfg.params;
    const RewardWeights w = cfg.weights;
    spec.transition = [p](const Vec& s, const Vec& a, const Vec& wv) -> Vec {
        VehicleState x{s[0], s[1], s[2]};
        VehicleState n = dynamics_step(x, a[0], wv[0], p);
        return {n.e_p, n.e_v, n.acc};
    };
    spec.reward = [p, w](const Vec& s, const Vec& a, const Vec&) -> double {
        return vehicle_reward(VehicleState{s[0], s[1], s[2]}, a[0], p, w);
    };
    spec.exo = std::move(acc_pred);
    const double ep = cfg.init_e_p, ev = cfg.init_e_v;
    spec.init_sampler = [ep, ev](Rng& rng) -> Vec {
        return {rng.uniform(-ep, ep), rng.uniform(-ev, ev), 0.0};
    };
    spec.validate();
    return spec;
}

// Variant whose state carries the predecessor acceleration explicitly:
// (e_p, e_v, acc, acc_pred).
inline AugmentedSpec vehicle_ssdp_with_pred(const VehicleSsdpConfig& cfg, ExoProcess acc_pred) {
    return augment_with_exogenous(vehicle_ssdp(cfg, std::move(acc_pred)));
}

// Episode log for a rollout of vehicle_ssdp: k, e_p, e_v, acc, u, acc_pred, r.
inline void export_vehicle_episode_csv(const Trajectory& traj, const std::string& path) {
    require(!traj.steps.empty(), "export_vehicle_episode_csv: empty trajectory");
    require(traj.steps[0].s.size() == 3 && traj.steps[0].a.size() == 1 && traj.steps[0].w.size() == 1,
            "export_vehicle_episode_csv: not a vehicle trajectory");
    CsvWriter out(path);
    out.header({"k", "e_p", "e_v", "acc", "u", "acc_pred", "r"});
    for (size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& rec = traj.steps[k];
        out.row({static_cast<double>(k), rec.s[0], rec.s[1], rec.s[2], rec.a[0], rec.w[0], rec.r});
    }
}

}  // namespace voisim
