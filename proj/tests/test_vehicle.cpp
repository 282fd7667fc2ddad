#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "voisim/vehicle.hpp"

using namespace voisim;

namespace {

VehicleParams default_params() { return VehicleParams{}; }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

double cell(const CsvTable& t, size_t r, int c) { return parse_double(t.rows[r][c], "test cell"); }

}  // namespace

TEST(DynamicsStep, MatrixEvaluationExamples) {
    VehicleParams p = default_params();
    VehicleState z = dynamics_step({0, 0, 0}, 0.0, 0.0, p);
    EXPECT_EQ(z.e_p, 0.0);
    EXPECT_EQ(z.e_v, 0.0);
    EXPECT_EQ(z.acc, 0.0);

    VehicleState a = dynamics_step({0, 0, 0}, 1.0, 0.0, p);
    EXPECT_NEAR(a.e_p, 0.0, 1e-15);
    EXPECT_NEAR(a.e_v, 0.0, 1e-15);
    EXPECT_NEAR(a.acc, 0.2, 1e-15);

    VehicleState b = dynamics_step({1.0, 0.5, 0.2}, 0.0, 0.3, p);
    EXPECT_NEAR(b.e_p, 1.03, 1e-12);
    EXPECT_NEAR(b.e_v, 0.51, 1e-12);
    EXPECT_NEAR(b.acc, 0.16, 1e-12);
}

TEST(DynamicsStep, LinearityOnDyadicInputs) {
    // dyadic params and states make every product exact, so superposition
    // holds to the last bit
    VehicleParams p = default_params();
    p.T = 0.25;
    p.rho = 0.5;
    VehicleState x1{1.0, 0.5, 0.25}, x2{-0.5, 0.25, 0.5};
    double u1 = 0.5, u2 = -0.25, w1 = 0.25, w2 = 0.5;
    VehicleState s12 = dynamics_step({x1.e_p + x2.e_p, x1.e_v + x2.e_v, x1.acc + x2.acc}, u1 + u2, w1 + w2, p);
    VehicleState s1 = dynamics_step(x1, u1, w1, p);
    VehicleState s2 = dynamics_step(x2, u2, w2, p);
    VehicleState s0 = dynamics_step({0, 0, 0}, 0.0, 0.0, p);
    EXPECT_DOUBLE_EQ(s12.e_p, s1.e_p + s2.e_p - s0.e_p);
    EXPECT_DOUBLE_EQ(s12.e_v, s1.e_v + s2.e_v - s0.e_v);
    EXPECT_DOUBLE_EQ(s12.acc, s1.acc + s2.acc - s0.acc);
}

TEST(DynamicsStep, FreeDecayMatchesClosedForm) {
    VehicleParams p = default_params();
    const double r = 1.0 - p.T / p.rho;
    const double acc0 = 2.5;
    VehicleState x{0.7, -0.3, acc0};
    for (int n = 1; n <= 100; ++n) {
        x = dynamics_step(x, 0.0, 0.0, p);
        EXPECT_NEAR(x.acc, acc0 * std::pow(r, n), 1e-12) << "step " << n;
    }
}

TEST(DynamicsStep, ClampsAccelerationAndFlags) {
    VehicleParams p = default_params();
    p.u_max = 30.0;  // let the command exceed what acc_max admits
    bool clipped = false;
    VehicleState x = dynamics_step({0, 0, 0}, 30.0, 0.0, p, &clipped);
    EXPECT_TRUE(clipped);
    EXPECT_DOUBLE_EQ(x.acc, 3.0);
    VehicleState y = dynamics_step({0, 0, 0}, 1.0, 0.0, p, &clipped);
    EXPECT_FALSE(clipped);
    EXPECT_NEAR(y.acc, 0.2, 1e-15);
}

TEST(VehicleParams, RejectsUnstableInterval) {
    VehicleParams p = default_params();
    p.T = 0.5;
    p.rho = 0.5;
    EXPECT_THROW(p.validate(), contract_violation);
    p.T = 0.1;
    EXPECT_NO_THROW(p.validate());
}

TEST(PredecessorAccStep, HandValues) {
    VehicleParams p = default_params();  // T/rho = 0.2
    EXPECT_EQ(predecessor_acc_step(0.0, 0.0, p), 0.0);
    EXPECT_NEAR(predecessor_acc_step(0.2, 1.0, p), 0.36, 1e-12);
    // fixed point: u tracking acc keeps acc unchanged
    EXPECT_NEAR(predecessor_acc_step(0.5, 0.5, p), 0.5, 1e-15);
}

TEST(Headway, DesiredAndErrors) {
    VehicleParams p = default_params();  // sigma=2, h=1
    EXPECT_DOUBLE_EQ(desired_headway(10.0, p), 12.0);
    EXPECT_DOUBLE_EQ(desired_headway(0.0, p), 2.0);
    VehicleParams p0 = p;
    p0.h = 0.0;
    EXPECT_DOUBLE_EQ(desired_headway(99.0, p0), 2.0);

    auto [e_p, e_v] = control_errors(6.0, 12.0, 10.0, 8.0);
    EXPECT_DOUBLE_EQ(e_p, -6.0);
    EXPECT_DOUBLE_EQ(e_v, 2.0);
    auto [z_p, z_v] = control_errors(12.0, 12.0, 8.0, 8.0);
    EXPECT_DOUBLE_EQ(z_p, 0.0);
    EXPECT_DOUBLE_EQ(z_v, 0.0);

    EXPECT_DOUBLE_EQ(headway_from_positions(20.0, 10.0, 4.0), 6.0);
}

TEST(VehicleReward, HandValuesAndSign) {
    VehicleParams p = default_params();
    RewardWeights w;
    EXPECT_DOUBLE_EQ(vehicle_reward({0, 0, 0}, 0.0, p, w), 0.0);
    // |1.5/15| + |1/10| with zero control and zero jerk
    EXPECT_DOUBLE_EQ(vehicle_reward({1.5, 1.0, 0.0}, 0.0, p, w), -0.2);

    // never positive, and zero only when every term vanishes
    Rng rng(77);
    for (int i = 0; i < 1000; ++i) {
        VehicleState x{rng.uniform(-20, 20), rng.uniform(-12, 12), rng.uniform(-3, 3)};
        EXPECT_LE(vehicle_reward(x, rng.uniform(-3, 3), p, w), 0.0);
    }
    EXPECT_LT(vehicle_reward({0, 0, 0}, 0.5, p, w), 0.0);       // control effort alone
    EXPECT_LT(vehicle_reward({0, 0, 0.5}, 0.5, p, w), 0.0);     // zero jerk, nonzero effort
    EXPECT_LT(vehicle_reward({0, 0, 0.5}, 0.0, p, w), 0.0);     // jerk alone
}

TEST(VehicleReward, HuberShapingSquaresSmallTerms) {
    VehicleParams p = default_params();
    RewardWeights w;
    w.huber_delta = 0.5;
    // both normalized terms are 0.1 < delta, so they square to 0.01
    EXPECT_NEAR(vehicle_reward({1.5, 1.0, 0.0}, 0.0, p, w), -0.02, 1e-15);
    // a term at 1.0 >= delta stays linear
    EXPECT_NEAR(vehicle_reward({15.0, 1.0, 0.0}, 0.0, p, w), -1.01, 1e-15);
    RewardWeights bad;
    bad.huber_delta = -1.0;
    EXPECT_THROW(bad.validate(), contract_violation);
}

TEST(Observe, FullAndMissingDummy) {
    Vec s{1.0, 2.0, 3.0, 0.36};
    EXPECT_EQ(observe(s, ObservationModel::full()), s);

    Vec masked = observe(s, ObservationModel::missing_dummy(0.0));
    EXPECT_EQ(masked, (Vec{1.0, 2.0, 3.0, 0.0}));
    // only the designated slot differs
    for (size_t i = 0; i + 1 < s.size(); ++i) EXPECT_EQ(masked[i], s[i]);

    Vec slot1 = observe(s, ObservationModel::missing_dummy(-7.0, 1));
    EXPECT_EQ(slot1, (Vec{1.0, -7.0, 3.0, 0.36}));
    EXPECT_THROW(observe(s, ObservationModel::missing_dummy(0.0, 9)), contract_violation);
}

TEST(Observe, LastReceivedReplaysRecordedSequence) {
    ObserveHistory hist;
    hist.states = {{10.0, 0.1}, {11.0, 0.2}, {12.0, 0.3}};  // steps 0..2
    hist.actions = {0.5, 0.6, 0.7};
    Vec now{13.0, 0.4};  // step 3
    ObservationModel m = ObservationModel::last_received(2);

    hist.tau = 2;  // snapshot from two intervals ago
    EXPECT_EQ(observe(now, m, hist), (Vec{11.0, 0.2, 0.6, 0.7, 2.0}));
    hist.tau = 0;
    EXPECT_EQ(observe(now, m, hist), (Vec{13.0, 0.4, 0.6, 0.7, 0.0}));
    hist.tau = 3;
    EXPECT_THROW(observe(now, m, hist), contract_violation);

    // short history zero-pads the action slots, oldest first
    ObserveHistory young;
    young.states = {{1.0}};
    young.actions = {0.9};
    young.tau = 1;
    EXPECT_EQ(observe({2.0}, ObservationModel::last_received(3), young), (Vec{1.0, 0.0, 0.0, 0.9, 1.0}));

    EXPECT_THROW(ObservationModel::last_received(0), contract_violation);
}

TEST(SynthStopAndGo, ZeroMagnitudeGivesZeroTrace) {
    StopAndGoConfig cfg;
    cfg.n_steps = 100;
    cfg.accel_mag = 0.0;
    cfg.brake_mag = 0.0;
    PredecessorTrajectory t = synth_stop_and_go(cfg, 5);
    ASSERT_EQ(t.acc.size(), 100u);
    for (double a : t.acc) EXPECT_EQ(a, 0.0);
}

TEST(SynthStopAndGo, VelocityStaysNonNegativeAndDeterministic) {
    StopAndGoConfig cfg;
    cfg.n_steps = 500;
    cfg.accel_mag = 1.5;
    cfg.brake_mag = 2.5;  // brakes harder than it accelerates, forcing standstill cuts
    cfg.dwell_lo = 5;
    cfg.dwell_hi = 20;
    PredecessorTrajectory t = synth_stop_and_go(cfg, 42);
    ASSERT_EQ(t.acc.size(), 500u);
    double v = cfg.v0;
    bool braked = false;
    for (size_t k = 0; k < t.acc.size(); ++k) {
        EXPECT_DOUBLE_EQ(t.vel[k], v);
        if (t.acc[k] < 0.0) braked = true;
        v += cfg.T * t.acc[k];
        EXPECT_GE(v, -1e-12);
    }
    EXPECT_TRUE(braked);

    PredecessorTrajectory t2 = synth_stop_and_go(cfg, 42);
    EXPECT_EQ(t2.acc, t.acc);
    PredecessorTrajectory t3 = synth_stop_and_go(cfg, 43);
    EXPECT_NE(t3.acc, t.acc);
}

TEST(LoadTrajectory, ConstantVelocityGivesZeroAcceleration) {
    const std::string path = "traj_const.csv";
    write_file(path, "time_s,velocity_mps\n0,5\n0.25,5\n0.5,5\n0.75,5\n");
    PredecessorTrajectory t = load_trajectory(path, {}, 0.1);
    std::remove(path.c_str());
    ASSERT_EQ(t.acc.size(), 7u);  // span 0.75 resampled at 0.1 -> 8 grid points
    for (double a : t.acc) EXPECT_NEAR(a, 0.0, 1e-12);
    for (double v : t.vel) EXPECT_NEAR(v, 5.0, 1e-12);
    EXPECT_EQ(t.clip_count, 0);
    EXPECT_EQ(t.source, path);
}

TEST(LoadTrajectory, ClipsSteepAccelerationWithCount) {
    const std::string path = "traj_steep.csv";
    write_file(path, "time_s,velocity_mps\n0,0\n0.1,1\n");
    PredecessorTrajectory t = load_trajectory(path, {}, 0.1, 3.0);
    std::remove(path.c_str());
    // v jumps 0 -> 1 over one 0.1 s interval: raw acc 10, clipped to 3
    ASSERT_EQ(t.acc.size(), 1u);
    EXPECT_DOUBLE_EQ(t.acc[0], 3.0);
    EXPECT_EQ(t.clip_count, 1);
}

TEST(LoadTrajectory, ResamplesIrregularTimesLinearly) {
    const std::string path = "traj_irr.csv";
    // v(t) = 2t sampled irregularly; linear interpolation must recover slope 2
    write_file(path, "time_s,velocity_mps\n0,0\n0.13,0.26\n0.4,0.8\n1.0,2.0\n");
    PredecessorTrajectory t = load_trajectory(path, {}, 0.1);
    std::remove(path.c_str());
    ASSERT_EQ(t.acc.size(), 10u);
    for (double a : t.acc) EXPECT_NEAR(a, 2.0, 1e-9);
}

TEST(LoadTrajectory, CustomColumnNames) {
    const std::string path = "traj_cols.csv";
    write_file(path, "t,v,extra\n0,1,9\n0.2,1.4,9\n");
    TrajectoryColumns cols;
    cols.time = "t";
    cols.velocity = "v";
    PredecessorTrajectory t = load_trajectory(path, cols, 0.1);
    std::remove(path.c_str());
    ASSERT_EQ(t.acc.size(), 2u);
    EXPECT_NEAR(t.acc[0], 2.0, 1e-9);
}

TEST(LoadTrajectory, RejectsBadInput) {
    const std::string path = "traj_bad.csv";
    write_file(path, "time_s,velocity_mps\n");
    EXPECT_THROW(load_trajectory(path, {}, 0.1), contract_violation);  // no samples
    write_file(path, "time_s,velocity_mps\n0,1\n");
    EXPECT_THROW(load_trajectory(path, {}, 0.1), contract_violation);  // single sample
    write_file(path, "time_s,velocity_mps\n0,1\n0.5,2\n0.3,3\n");
    EXPECT_THROW(load_trajectory(path, {}, 0.1), contract_violation);  // non-monotone time
    write_file(path, "clock,velocity_mps\n0,1\n1,2\n");
    EXPECT_THROW(load_trajectory(path, {}, 0.1), contract_violation);  // missing column
    write_file(path, "time_s,velocity_mps\n0,1\n0.04,2\n");
    EXPECT_THROW(load_trajectory(path, {}, 0.1), contract_violation);  // span < target_T
    std::remove(path.c_str());
}

TEST(PredecessorExo, DrivenRecurrenceFromControlStream) {
    VehicleParams p = default_params();
    ExoProcess u_const = ExoProcess::make_iid({{1.0}}, {1.0});
    ExoProcess exo = predecessor_exo(p, u_const, 0.0, 0.0);
    Rng rng(1);
    auto stream = exo.make_stream();
    EXPECT_NEAR(stream->next(rng)[0], 0.0, 1e-15);   // f(acc0, u0)
    EXPECT_NEAR(stream->next(rng)[0], 0.2, 1e-12);   // 0.8*0 + 0.2*1
    EXPECT_NEAR(stream->next(rng)[0], 0.36, 1e-12);  // 0.8*0.2 + 0.2*1
}

TEST(ExoFromTrajectory, ReplaysAccelerations) {
    PredecessorTrajectory traj;
    traj.acc = {0.1, -0.2, 0.3};
    traj.vel = {0.0, 0.01, -0.01};
    ExoProcess exo = exo_from_trajectory(traj);
    Rng rng(1);
    auto stream = exo.make_stream();
    EXPECT_EQ(stream->next(rng)[0], 0.1);
    EXPECT_EQ(stream->next(rng)[0], -0.2);
    EXPECT_EQ(stream->next(rng)[0], 0.3);
    EXPECT_THROW(stream->next(rng), contract_violation);  // exhausted, wrap off
}

TEST(VehicleSsdp, ZeroPolicyZeroExoStaysAtOrigin) {
    VehicleSsdpConfig cfg;
    cfg.init_e_p = 0.0;
    cfg.init_e_v = 0.0;
    cfg.horizon = 20;
    SsdpSpec spec = vehicle_ssdp(cfg, ExoProcess::make_iid({{0.0}}, {1.0}));
    EXPECT_EQ(spec.state_dim, 3);
    EXPECT_EQ(spec.action_dim, 1);
    EXPECT_EQ(spec.action_lo, (Vec{-3.0}));
    EXPECT_EQ(spec.action_hi, (Vec{3.0}));
    Trajectory traj = rollout(spec, [](const Vec&) -> Vec { return {0.0}; }, 20, 7);
    for (const auto& rec : traj.steps) {
        EXPECT_EQ(rec.s, (Vec{0.0, 0.0, 0.0}));
        EXPECT_EQ(rec.r, 0.0);
    }
}

TEST(VehicleSsdp, InitialStateRangesAndRewardIgnoresExo) {
    VehicleSsdpConfig cfg;
    SsdpSpec spec = vehicle_ssdp(cfg, ExoProcess::make_iid({{0.0}}, {1.0}));
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        Vec s = spec.sample_init(rng);
        EXPECT_LE(std::fabs(s[0]), 2.0);
        EXPECT_LE(std::fabs(s[1]), 1.0);
        EXPECT_EQ(s[2], 0.0);
    }
    Vec s{0.4, -0.2, 0.1}, a{0.5};
    EXPECT_EQ(spec.reward(s, a, {0.7}), spec.reward(s, a, {0.0}));
}

TEST(VehicleSsdp, AugmentedVariantCarriesPredecessorAcc) {
    VehicleSsdpConfig cfg;
    cfg.horizon = 10;
    AugmentedSpec aug = vehicle_ssdp_with_pred(cfg, ExoProcess::make_iid({{0.5}, {-0.5}}, {0.5, 0.5}));
    EXPECT_EQ(aug.spec.state_dim, 4);
    Trajectory traj = rollout(aug.spec, [](const Vec&) -> Vec { return {0.0}; }, 10, 11);
    for (const auto& rec : traj.steps) {
        Vec w = aug.exo_part(rec.s);
        ASSERT_EQ(w.size(), 1u);
        EXPECT_TRUE(w[0] == 0.5 || w[0] == -0.5);
        // follower acceleration integrates the embedded exo draw, never the dummy
        EXPECT_EQ(aug.base_state(rec.s).size(), 3u);
    }
}

TEST(VehicleSsdp, StabilizingFeedbackShrinksErrors) {
    VehicleSsdpConfig cfg;
    cfg.horizon = 400;
    cfg.init_e_p = 0.0;  // deterministic start via fixed support below
    cfg.init_e_v = 0.0;
    SsdpSpec spec = vehicle_ssdp(cfg, ExoProcess::make_iid({{0.0}}, {1.0}));
    spec.init_sampler = {};
    spec.init_support = {{2.0, 1.0, 0.0}};
    spec.init_probs = {1.0};
    PolicyFn pd = [](const Vec& s) -> Vec { return {1.0 * s[0] + 2.0 * s[1]}; };
    Trajectory traj = rollout(spec, pd, 400, 1);
    const Vec& last = traj.steps.back().s_next;
    EXPECT_LT(std::fabs(last[0]), 0.02);
    EXPECT_LT(std::fabs(last[1]), 0.02);
}

TEST(VehicleSsdp, EpisodeLogRoundTrip) {
    VehicleSsdpConfig cfg;
    cfg.horizon = 5;
    SsdpSpec spec = vehicle_ssdp(cfg, ExoProcess::make_iid({{0.25}}, {1.0}));
    Trajectory traj = rollout(spec, [](const Vec& s) -> Vec { return {0.3 * s[0]}; }, 5, 9);
    const std::string path = "vehicle_episode.csv";
    export_vehicle_episode_csv(traj, path);
    CsvTable t = read_csv(path);
    std::remove(path.c_str());
    EXPECT_EQ(t.header, (std::vector<std::string>{"k", "e_p", "e_v", "acc", "u", "acc_pred", "r"}));
    ASSERT_EQ(t.rows.size(), 5u);
    for (size_t k = 0; k < 5; ++k) {
        EXPECT_EQ(cell(t, k, 0), static_cast<double>(k));
        EXPECT_EQ(cell(t, k, 1), traj.steps[k].s[0]);
        EXPECT_EQ(cell(t, k, 4), traj.steps[k].a[0]);
        EXPECT_EQ(cell(t, k, 5), 0.25);
        EXPECT_EQ(cell(t, k, 6), traj.steps[k].r);
    }
}
