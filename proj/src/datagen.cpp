#include "stvsa/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "stvsa/errors.hpp"
#include "stvsa/sfcm.hpp"

namespace stvsa::sim {

namespace {

using cplx = std::complex<double>;

constexpr double k_ref_slip = 0.025;   // torque and admittance normalization
constexpr double k_static_pf = 0.95;   // power factor of the static load part
constexpr double k_slip_floor = 1e-4;
constexpr double k_slip_cap = 1.0;     // blocked rotor

double torque_raw(const MotorBus& b, double x_total, double v, double s) {
    double r = b.rotor_resistance / s;
    double rs = b.stator_resistance + r;
    return v * v * r / (rs * rs + x_total * x_total);
}

// Per-bus quantities that do not change during a run.
struct BusDerived {
    double x_total = 0.0;   // stator plus rotor leakage reactance
    double t_base = 0.0;    // torque at nominal voltage and reference slip
    double y_scale = 0.0;   // motor admittance magnitude scale
    cplx y_static;          // constant-impedance static load admittance
    double s_peak = 0.0;    // slip of maximum steady-state torque
};

BusDerived derive(const MotorBus& b, double load_level) {
    BusDerived d;
    d.x_total = b.stator_reactance + b.rotor_reactance;
    d.t_base = torque_raw(b, d.x_total, 1.0, k_ref_slip);
    double zm_ref = std::hypot(b.stator_resistance + b.rotor_resistance / k_ref_slip,
                               d.x_total);
    d.y_scale = b.motor_share * load_level * zm_ref;
    double sin_phi = std::sqrt(1.0 - k_static_pf * k_static_pf);
    d.y_static = b.zip_share * load_level * cplx(k_static_pf, -sin_phi);
    d.s_peak = b.rotor_resistance / std::hypot(b.stator_resistance, d.x_total);
    return d;
}

double torque_pu(const MotorBus& b, const BusDerived& d, double v, double s) {
    return torque_raw(b, d.x_total, v, s) / d.t_base;
}

cplx load_admittance(const MotorBus& b, const BusDerived& d, double s) {
    cplx zm(b.stator_resistance + b.rotor_resistance / s, d.x_total);
    return d.y_scale / zm + d.y_static;
}

void validate(const ScenarioConfig& cfg, const std::vector<MotorBus>& bank,
              const SimulatorParams& p) {
    if (p.buses == 0) throw ConfigError("simulator needs at least one bus");
    if (!(p.timestep > 0.0) || p.timestep > 1e-3 + 1e-15)
        throw ConfigError("integration timestep must be positive and at most 1 ms");
    if (!(p.horizon >= 1.0)) throw ConfigError("horizon must be at least 1 s");
    if (!(p.source_emf > 0.0) || !(p.source_reactance > 0.0) ||
        !(p.corridor_reactance > 0.0) || !(p.fault_resistance > 0.0))
        throw ConfigError("source, corridor, and fault parameters must be positive");
    if (!(cfg.load_level > 0.0) || !std::isfinite(cfg.load_level))
        throw ConfigError("load level must be positive");
    if (!(cfg.motor_ratio > 0.0) || !(cfg.motor_ratio < 1.0))
        throw ConfigError("motor ratio must lie strictly between 0 and 1");
    if (!(cfg.fault_location >= 0.0) || !(cfg.fault_location < 1.0))
        throw ConfigError("fault location must lie in [0, 1)");
    if (!(cfg.clearing_time >= 0.0) || !std::isfinite(cfg.clearing_time) ||
        cfg.clearing_time > 60.0)
        throw ConfigError("clearing time must be finite, non-negative, below 60 s");
    if (bank.size() != p.buses)
        throw ConfigError("bank size does not match the configured bus count");
    for (const auto& b : bank) {
        if (std::abs(b.motor_share + b.zip_share - 1.0) > 1e-9)
            throw ConfigError("motor and static shares must sum to one");
        if (!(b.motor_share > 0.0) || !(b.motor_share < 1.0))
            throw ConfigError("motor share must lie strictly between 0 and 1");
        if (!(b.line_reactance > 0.0))
            throw ConfigError("line reactance must be positive");
        if (b.stator_resistance < 0.0 || !(b.rotor_resistance > 0.0) ||
            b.stator_reactance < 0.0 || b.rotor_reactance < 0.0 ||
            !(b.stator_reactance + b.rotor_reactance > 0.0))
            throw ConfigError("motor impedance parameters out of range");
        if (!(b.inertia > 0.0)) throw ConfigError("inertia must be positive");
        if (!(b.mech_torque > 0.0)) throw ConfigError("mechanical torque must be positive");
    }
}

struct Network {
    const ScenarioConfig* cfg;
    const std::vector<MotorBus>* bank;
    const SimulatorParams* p;
    const std::vector<BusDerived>* derived;

    // Bus voltages for the present slips; the corridor node aggregates the
    // per-bus branches at 1/L weight so the total load is one system unit.
    void solve(const std::vector<double>& slips, bool faulted,
               std::vector<cplx>& y_out, std::vector<cplx>& v_out) const {
        std::size_t n = bank->size();
        cplx y_c(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& b = (*bank)[i];
            y_out[i] = load_admittance(b, (*derived)[i], slips[i]);
            cplx z_branch = cplx(0.0, b.line_reactance) + 1.0 / y_out[i];
            y_c += 1.0 / z_branch;
        }
        y_c /= static_cast<double>(n);

        cplx v_th;
        cplx z_ser;
        if (faulted) {
            double x_up = p->source_reactance +
                          cfg->fault_location * p->corridor_reactance;
            cplx up(p->fault_resistance, x_up);
            v_th = p->source_emf * p->fault_resistance / up;
            z_ser = cplx(0.0, x_up) * p->fault_resistance / up +
                    cplx(0.0, (1.0 - cfg->fault_location) * p->corridor_reactance);
        } else {
            v_th = p->source_emf;
            z_ser = cplx(0.0, p->source_reactance + p->corridor_reactance);
        }
        cplx v_c = v_th / (1.0 + z_ser * y_c);
        for (std::size_t i = 0; i < n; ++i)
            v_out[i] = v_c / (1.0 + cplx(0.0, (*bank)[i].line_reactance) * y_out[i]);
    }
};

// Smallest slip whose steady-state torque meets the load torque at the given
// voltage; empty when the capability curve never reaches it.
std::optional<double> balance_slip(const MotorBus& b, const BusDerived& d,
                                   double v) {
    if (torque_pu(b, d, v, d.s_peak) < b.mech_torque) return std::nullopt;
    double lo = 1e-6, hi = d.s_peak;
    for (int it = 0; it < 90; ++it) {
        double mid = 0.5 * (lo + hi);
        if (torque_pu(b, d, v, mid) < b.mech_torque)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::vector<MotorBus> make_bus_bank(const ScenarioConfig& cfg,
                                    const SimulatorParams& params) {
    std::mt19937_64 rng(cfg.jitter_seed);
    auto draw = [&rng](double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(rng);
    };
    std::vector<MotorBus> bank(params.buses);
    for (auto& b : bank) {
        b.line_reactance = 0.13 * draw(0.85, 1.15);
        double share = std::clamp(cfg.motor_ratio + draw(-0.02, 0.02), 0.05, 0.95);
        b.motor_share = share;
        b.zip_share = 1.0 - share;
        b.stator_resistance = 0.02 * draw(0.9, 1.1);
        b.stator_reactance = 0.15 * draw(0.9, 1.1);
        b.rotor_resistance = 0.04 * draw(0.9, 1.1);
        b.rotor_reactance = 0.20 * draw(0.9, 1.1);
        b.inertia = 0.55 * draw(0.8, 1.2);
        b.mech_torque = 0.73 * cfg.load_level * draw(0.95, 1.05);
    }
    return bank;
}

SimResult simulate_scenario(const ScenarioConfig& cfg,
                            const std::vector<MotorBus>& bank,
                            const SimulatorParams& params) {
    validate(cfg, bank, params);
    std::size_t n = bank.size();
    std::vector<BusDerived> derived(n);
    for (std::size_t i = 0; i < n; ++i) derived[i] = derive(bank[i], cfg.load_level);

    Network net{&cfg, &bank, &params, &derived};
    std::vector<cplx> y(n), v(n);
    SimResult out;

    // Pre-fault operating point: alternate the algebraic solve with per-bus
    // torque balance until the slips settle.
    std::vector<double> slips(n, 0.03), next(n);
    bool settled = false;
    for (int it = 0; it < 600 && !settled; ++it) {
        net.solve(slips, false, y, v);
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto s = balance_slip(bank[i], derived[i], std::abs(v[i]));
            if (!s) {
                out.failed = true;
                out.fail_reason = "no pre-fault operating point: load torque "
                                  "exceeds the motor capability curve";
                return out;
            }
            delta = std::max(delta, std::abs(*s - slips[i]));
            next[i] = 0.5 * (slips[i] + *s);
        }
        slips = next;
        settled = delta < 1e-13;
    }
    net.solve(slips, false, y, v);
    for (std::size_t i = 0; i < n; ++i) {
        double u = std::abs(v[i]);
        double residual = torque_pu(bank[i], derived[i], u, slips[i]) -
                          bank[i].mech_torque;
        if (!settled || std::abs(residual) > 1e-8) {
            out.failed = true;
            out.fail_reason = "pre-fault equilibrium did not converge";
            return out;
        }
        if (u < 0.7 || u > 1.2) {
            out.failed = true;
            out.fail_reason = "pre-fault voltage out of the operating band";
            return out;
        }
        out.equilibrium_voltage.push_back(u);
    }

    double dt = params.timestep;
    auto n_fault = static_cast<std::size_t>(std::llround(cfg.clearing_time / dt));
    auto n_post = static_cast<std::size_t>(std::llround(params.horizon / dt));
    auto stride = static_cast<std::size_t>(std::llround(0.01 / dt));
    std::size_t store_rows = n_post / stride;
    std::size_t window_rows = std::min<std::size_t>(
        static_cast<std::size_t>(std::llround(0.1 / dt)), n_post);
    out.voltage_10ms = Matrix(store_rows, n);
    out.window_1ms = Matrix(window_rows, 3 * n);

    for (std::size_t step = 0; step < n_fault + n_post; ++step) {
        bool faulted = step < n_fault;
        net.solve(slips, faulted, y, v);
        for (std::size_t i = 0; i < n; ++i) {
            double u = std::abs(v[i]);
            if (!std::isfinite(u)) {
                out.failed = true;
                out.fail_reason = "non-finite bus voltage at t = " +
                                  std::to_string(static_cast<double>(step) * dt);
                return out;
            }
            if (!faulted) {
                std::size_t w = step - n_fault;
                if (w % stride == 0 && w / stride < store_rows)
                    out.voltage_10ms.at(w / stride, i) = u;
                if (w < window_rows) {
                    cplx s_drawn = u * u * std::conj(y[i]);
                    out.window_1ms.at(w, i) = u;
                    out.window_1ms.at(w, n + i) = s_drawn.real();
                    out.window_1ms.at(w, 2 * n + i) = s_drawn.imag();
                }
            }
            double accel = (bank[i].mech_torque -
                            torque_pu(bank[i], derived[i], u, slips[i])) /
                           (2.0 * bank[i].inertia);
            slips[i] = std::clamp(slips[i] + dt * accel, k_slip_floor, k_slip_cap);
            if (std::abs(slips[i]) > 1.5) {
                out.failed = true;
                out.fail_reason = "slip integration diverged";
                return out;
            }
        }
    }
    return out;
}

std::size_t channel_of(std::size_t feature_index, std::size_t buses) {
    return (feature_index % (3 * buses)) / buses;
}

ChannelNorm fit_channel_norm(const Matrix& raw, const std::vector<bool>& in_train,
                             std::size_t buses) {
    if (raw.rows != in_train.size())
        throw ShapeError("training mask size does not match the feature rows");
    if (buses == 0 || raw.cols % (3 * buses) != 0)
        throw ShapeError("feature width is not a whole number of bus channels");
    double lo[3] = {1e300, 1e300, 1e300};
    double hi[3] = {-1e300, -1e300, -1e300};
    std::size_t used = 0;
    for (std::size_t i = 0; i < raw.rows; ++i) {
        if (!in_train[i]) continue;
        ++used;
        for (std::size_t k = 0; k < raw.cols; ++k) {
            auto c = channel_of(k, buses);
            lo[c] = std::min(lo[c], raw.at(i, k));
            hi[c] = std::max(hi[c], raw.at(i, k));
        }
    }
    if (used == 0) throw ConfigError("cannot fit normalization without training rows");
    ChannelNorm n;
    n.u_min = lo[0]; n.u_max = hi[0];
    n.p_min = lo[1]; n.p_max = hi[1];
    n.q_min = lo[2]; n.q_max = hi[2];
    return n;
}

std::vector<double> apply_channel_norm(const ChannelNorm& n,
                                       std::span<const double> raw,
                                       std::size_t buses) {
    if (buses == 0 || raw.size() % (3 * buses) != 0)
        throw ShapeError("feature width is not a whole number of bus channels");
    const double lo[3] = {n.u_min, n.p_min, n.q_min};
    const double hi[3] = {n.u_max, n.p_max, n.q_max};
    std::vector<double> out(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        auto c = channel_of(k, buses);
        double span = hi[c] - lo[c];
        double x = span > 0.0 ? (raw[k] - lo[c]) / span : 0.0;
        out[k] = std::clamp(x, 0.0, 1.0);
    }
    return out;
}

namespace {

std::string provenance_tag(const ScenarioConfig& c, std::uint64_t draw) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "l%g_m%g_f%g_ct%g_j%llu", c.load_level,
                  c.motor_ratio, c.fault_location, c.clearing_time,
                  static_cast<unsigned long long>(draw));
    return buf;
}

}  // namespace

BuildResult build_dataset(const DatagenConfig& cfg) {
    if (cfg.target_count < 100)
        throw ConfigError("dataset target must be at least 100 samples");
    if (cfg.load_levels.empty() || cfg.motor_ratios.empty() ||
        cfg.fault_locations.empty() || cfg.clearing_times.empty())
        throw ConfigError("every scenario grid axis needs at least one value");
    if (!(cfg.test_fraction > 0.0) || !(cfg.test_fraction < 1.0))
        throw ConfigError("test fraction must lie strictly between 0 and 1");
    if (cfg.imbalance_ratio && !(*cfg.imbalance_ratio > 0.0))
        throw ConfigError("imbalance ratio must be positive");
    if (!(cfg.rules.unstable_ceiling > 0.0) ||
        !(cfg.rules.stable_floor > cfg.rules.unstable_ceiling))
        throw ConfigError("label thresholds need 0 < ceiling < floor");
    auto d_steps = static_cast<std::size_t>(
        std::llround(cfg.otw / cfg.sim.timestep));
    auto window_capacity = static_cast<std::size_t>(
        std::llround(0.1 / cfg.sim.timestep));
    if (!(cfg.otw > 0.0) || d_steps < 1 || d_steps > window_capacity)
        throw ConfigError("observation window must cover 1..100 ms of samples");

    std::vector<ScenarioConfig> combos;
    for (double ll : cfg.load_levels)
        for (double mr : cfg.motor_ratios)
            for (double fl : cfg.fault_locations)
                for (double ct : cfg.clearing_times) {
                    ScenarioConfig c;
                    c.load_level = ll;
                    c.motor_ratio = mr;
                    c.fault_location = fl;
                    c.clearing_time = ct;
                    combos.push_back(c);
                }

    BuildResult out;
    std::size_t L = cfg.sim.buses;
    std::size_t dim = 3 * L * d_steps;
    out.raw_features = Matrix(0, dim);
    std::vector<double> raw_rows;
    std::vector<int> labels;
    std::vector<std::int64_t> scenario_ids;
    std::vector<std::string> provenances;

    std::size_t draws = (cfg.target_count + combos.size() - 1) / combos.size();
    std::size_t max_draws = draws + 8;  // headroom when scenarios fail
    for (std::uint64_t j = 0; j < max_draws && labels.size() < cfg.target_count;
         ++j) {
        for (std::size_t c = 0;
             c < combos.size() && labels.size() < cfg.target_count; ++c) {
            auto sid = static_cast<std::int64_t>(j * combos.size() + c);
            ScenarioConfig sc = combos[c];
            sc.jitter_seed = cfg.seed ^
                             (0x9e3779b97f4a7c15ULL *
                              static_cast<std::uint64_t>(sid + 1));
            auto res = simulate_scenario(sc, make_bus_bank(sc, cfg.sim), cfg.sim);
            if (res.failed) {
                ++out.failed_scenarios;
                out.log.push_back("excluded scenario " + std::to_string(sid) +
                                  " (" + provenance_tag(sc, j) + "): " +
                                  res.fail_reason);
                continue;
            }
            labels.push_back(
                static_cast<int>(sfcm::rule_label(res.voltage_10ms, cfg.rules)));
            scenario_ids.push_back(sid);
            provenances.push_back(provenance_tag(sc, j));
            for (std::size_t t = 0; t < d_steps; ++t)
                for (std::size_t k = 0; k < 3 * L; ++k)
                    raw_rows.push_back(res.window_1ms.at(t, k));
            out.trajectories.push_back(std::move(res.voltage_10ms));
        }
    }
    if (labels.size() < cfg.target_count)
        throw ConfigError("too many failed scenarios to reach the requested "
                          "dataset size");

    std::size_t count = labels.size();
    std::vector<std::size_t> keep(count);
    std::iota(keep.begin(), keep.end(), 0);

    // Optional minority thinning on the rule labels before the split.
    if (cfg.imbalance_ratio) {
        std::vector<std::size_t> stable_idx, unstable_idx;
        for (std::size_t i = 0; i < count; ++i) {
            if (labels[i] == data::label_stable) stable_idx.push_back(i);
            if (labels[i] == data::label_unstable) unstable_idx.push_back(i);
        }
        auto* minority = &unstable_idx;
        auto* majority = &stable_idx;
        if (minority->size() > majority->size()) std::swap(minority, majority);
        auto target = static_cast<std::size_t>(std::max<long long>(
            0, std::llround(static_cast<double>(majority->size()) /
                            *cfg.imbalance_ratio)));
        if (minority->size() > target) {
            std::mt19937_64 rng(cfg.seed ^ 0x51f15efab4c89ULL);
            std::shuffle(minority->begin(), minority->end(), rng);
            std::vector<bool> drop(count, false);
            for (std::size_t i = target; i < minority->size(); ++i)
                drop[(*minority)[i]] = true;
            std::vector<std::size_t> kept;
            for (std::size_t i : keep)
                if (!drop[i]) kept.push_back(i);
            keep = std::move(kept);
        }
    }

    // Stratified split: within each label stratum a seeded shuffle sends
    // round(test_fraction * n) rows to the test side.
    std::map<int, std::vector<std::size_t>> strata;
    for (std::size_t pos = 0; pos < keep.size(); ++pos)
        strata[labels[keep[pos]]].push_back(pos);
    std::vector<bool> is_test(keep.size(), false);
    std::mt19937_64 split_rng(cfg.seed ^ 0x9277c1a5be3fULL);
    for (auto& [label, members] : strata) {
        std::shuffle(members.begin(), members.end(), split_rng);
        auto n_test = static_cast<std::size_t>(std::llround(
            cfg.test_fraction * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < n_test; ++i) is_test[members[i]] = true;
    }

    out.raw_features = Matrix(keep.size(), dim);
    std::vector<bool> in_train(keep.size());
    for (std::size_t pos = 0; pos < keep.size(); ++pos) {
        in_train[pos] = !is_test[pos];
        for (std::size_t k = 0; k < dim; ++k)
            out.raw_features.at(pos, k) = raw_rows[keep[pos] * dim + k];
    }
    out.norm = fit_channel_norm(out.raw_features, in_train, L);

    out.dataset.feature_dim = dim;
    std::vector<Matrix> kept_traj;
    for (std::size_t pos = 0; pos < keep.size(); ++pos) {
        std::size_t i = keep[pos];
        data::Sample s;
        s.id = static_cast<std::int64_t>(pos);
        s.scenario_id = scenario_ids[i];
        s.split = is_test[pos] ? "test" : "train";
        s.label = labels[i];
        s.provenance = provenances[i];
        s.synthetic = false;
        s.features = apply_channel_norm(
            out.norm, std::span<const double>(out.raw_features.row(pos)), L);
        out.dataset.samples.push_back(std::move(s));
        kept_traj.push_back(std::move(out.trajectories[i]));
    }
    out.trajectories = std::move(kept_traj);

    double total = static_cast<double>(out.dataset.samples.size());
    out.unstable_fraction =
        static_cast<double>(data::count_label(out.dataset, data::label_unstable)) /
        total;
    out.unlabeled_fraction =
        static_cast<double>(data::count_label(out.dataset, data::label_unlabeled)) /
        total;
    if (out.unstable_fraction < 0.01 || out.unstable_fraction > 0.5)
        out.log.push_back("warning: unstable fraction " +
                          std::to_string(out.unstable_fraction) +
                          " is outside the expected imbalanced regime");
    return out;
}

data::Dataset enforce_ratio(const data::Dataset& d, double majority_per_minority,
                            std::uint64_t seed) {
    if (!(majority_per_minority > 0.0) || !std::isfinite(majority_per_minority))
        throw ConfigError("imbalance ratio must be positive and finite");
    std::map<std::string, std::pair<std::vector<std::size_t>,
                                    std::vector<std::size_t>>> by_split;
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        if (d.samples[i].label == data::label_stable)
            by_split[d.samples[i].split].first.push_back(i);
        else if (d.samples[i].label == data::label_unstable)
            by_split[d.samples[i].split].second.push_back(i);
    }
    std::vector<bool> drop(d.samples.size(), false);
    std::mt19937_64 rng(seed);
    for (auto& [split, classes] : by_split) {
        // The ratio is stable per unstable: only the unstable side is ever
        // subsampled, even when a labeling pass left it the larger class.
        auto& stable = classes.first;
        auto& unstable = classes.second;
        if (stable.empty() || unstable.empty()) continue;
        auto target = static_cast<std::size_t>(std::max<long long>(
            0, std::llround(static_cast<double>(stable.size()) /
                            majority_per_minority)));
        if (unstable.size() <= target) continue;
        std::shuffle(unstable.begin(), unstable.end(), rng);
        for (std::size_t i = target; i < unstable.size(); ++i)
            drop[unstable[i]] = true;
    }
    data::Dataset out;
    out.feature_dim = d.feature_dim;
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        if (!drop[i]) out.samples.push_back(d.samples[i]);
    return out;
}

data::Dataset inject_noise(const data::Dataset& d, double snr_db,
                           std::size_t buses, std::uint64_t seed) {
    if (!std::isfinite(snr_db)) throw ConfigError("SNR must be finite");
    if (buses == 0 || d.feature_dim % (3 * buses) != 0)
        throw ShapeError("feature width is not a whole number of bus channels");
    data::Dataset out = d;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    double ratio = std::pow(10.0, snr_db / 10.0);
    std::size_t per_channel = d.feature_dim / 3;
    for (auto& s : out.samples) {
        double power[3] = {0.0, 0.0, 0.0};
        for (std::size_t k = 0; k < s.features.size(); ++k)
            power[channel_of(k, buses)] += s.features[k] * s.features[k];
        double sigma[3];
        for (int c = 0; c < 3; ++c)
            sigma[c] = std::sqrt(power[c] /
                                 static_cast<double>(per_channel) / ratio);
        for (std::size_t k = 0; k < s.features.size(); ++k)
            s.features[k] += sigma[channel_of(k, buses)] * unit(rng);
    }
    return out;
}

}  // namespace stvsa::sim
