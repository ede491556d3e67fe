#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stvsa/dataset.hpp"
#include "stvsa/matrix.hpp"
#include "stvsa/sfcm.hpp"

namespace stvsa::sim {

/// One fault case: loading, motor penetration, where along the feeding
/// corridor the short circuit sits (0 = source end), and how long it lasts.
struct ScenarioConfig {
    double load_level = 1.0;      // multiplies load power and motor torque
    double motor_ratio = 0.8;     // motor share of bus load, rest is static
    double fault_location = 0.5;  // fraction along the corridor reactance
    double clearing_time = 0.05;  // seconds of fault-on operation
    std::uint64_t jitter_seed = 0;
};

/// Induction-motor pseudo-bus: slip is the only state; the bus voltage comes
/// from the algebraic divider source -> corridor -> bus line -> load, where
/// the load is the slip-dependent motor impedance in parallel with a
/// constant-impedance static part.
struct MotorBus {
    double line_reactance = 0.13;
    double motor_share = 0.8;  // motor_share + zip_share == 1
    double zip_share = 0.2;
    double stator_resistance = 0.02;
    double stator_reactance = 0.15;
    double rotor_resistance = 0.04;
    double rotor_reactance = 0.20;
    double inertia = 0.55;      // H, seconds; > 0
    double mech_torque = 0.73;  // constant load torque in motor base
};

struct SimulatorParams {
    std::size_t buses = 10;
    double source_emf = 1.07;
    double source_reactance = 0.035;   // stiff section before the corridor
    double corridor_reactance = 0.15;  // faulted section feeding all buses
    double fault_resistance = 0.015;
    double timestep = 1e-3;  // seconds; must be <= 1 ms
    double horizon = 10.0;   // post-clearing window used for labeling
};

struct SimResult {
    bool failed = false;
    std::string fail_reason;
    /// Post-clearing bus voltage magnitudes, one row per 10 ms, one column
    /// per bus; the input to the engineering label rules.
    Matrix voltage_10ms;
    /// First 0.1 s post-clearing at full resolution, one row per timestep,
    /// columns [U_1..U_L, P_1..P_L, Q_1..Q_L]; the feature source.
    Matrix window_1ms;
    std::vector<double> equilibrium_voltage;  // pre-fault |V| per bus
};

/// Default parameter bank with per-bus jitter drawn from the scenario seed.
std::vector<MotorBus> make_bus_bank(const ScenarioConfig& cfg,
                                    const SimulatorParams& params);

/// Pre-fault equilibrium, fault-on sag, post-fault recovery or collapse with
/// explicit Euler slip integration. Deterministic. Scenarios without a
/// pre-fault operating point or with non-finite voltages come back failed.
SimResult simulate_scenario(const ScenarioConfig& cfg,
                            const std::vector<MotorBus>& bank,
                            const SimulatorParams& params);

/// Min-max bounds per channel type, fit on the training split only.
struct ChannelNorm {
    double u_min = 0.0, u_max = 1.0;
    double p_min = 0.0, p_max = 1.0;
    double q_min = 0.0, q_max = 1.0;
};

/// Channel of a flattened feature index under the [U|P|Q] per-timestep
/// layout: 0 = voltage, 1 = active power, 2 = reactive power.
std::size_t channel_of(std::size_t feature_index, std::size_t buses);

ChannelNorm fit_channel_norm(const Matrix& raw, const std::vector<bool>& in_train,
                             std::size_t buses);
std::vector<double> apply_channel_norm(const ChannelNorm& n,
                                       std::span<const double> raw,
                                       std::size_t buses);

struct DatagenConfig {
    std::vector<double> load_levels = {0.8, 1.0, 1.2};
    std::vector<double> motor_ratios = {0.7, 0.8, 0.9};
    std::vector<double> fault_locations = {0.0, 0.25, 0.5, 0.75};
    std::vector<double> clearing_times = {0.05, 0.1};
    std::size_t target_count = 720;  // >= 100
    double otw = 0.05;               // observation window, seconds
    std::optional<double> imbalance_ratio;  // majority per minority sample
    double test_fraction = 0.2;      // stratified 4:1 split
    std::uint64_t seed = 0;
    sfcm::LabelRules rules;          // thresholds for the seed labels
    SimulatorParams sim;
};

struct BuildResult {
    data::Dataset dataset;  // normalized features, split assigned
    Matrix raw_features;    // pre-normalization twin, aligned with samples
    std::vector<Matrix> trajectories;  // 10 s voltage store per sample
    ChannelNorm norm;
    std::size_t failed_scenarios = 0;
    double unstable_fraction = 0.0;
    double unlabeled_fraction = 0.0;
    std::vector<std::string> log;
};

/// Runs the scenario grid with repeated jitter draws until target_count
/// samples exist, applies the engineering label rules to the 10 s voltage
/// store, optionally thins the minority class to the requested imbalance,
/// splits stratified by label, then min-max normalizes per channel with
/// bounds fit on the training split.
BuildResult build_dataset(const DatagenConfig& cfg);

/// Subsamples the unstable class until stable:unstable reaches the ratio
/// within one sample, per split when splits are assigned. Labeled rows only;
/// the stable side is never touched.
data::Dataset enforce_ratio(const data::Dataset& d, double majority_per_minority,
                            std::uint64_t seed);

/// Additive white Gaussian noise per channel type at the requested SNR;
/// the input dataset is left untouched.
data::Dataset inject_noise(const data::Dataset& d, double snr_db,
                           std::size_t buses, std::uint64_t seed);

}  // namespace stvsa::sim
