#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "strataflow/errors.hpp"
#include "strataflow/fields.hpp"
#include "strataflow/kernels.hpp"
#include "strataflow/point_cloud.hpp"

namespace strataflow {

/// Finite switching sequence: leg j integrates sign_j * field_{index_j} for
/// duration_j.
struct Schedule {
    struct Leg {
        int field_index = 0; // 0-based into the field tuple
        int sign = 1;        // +1 or -1
        double duration = 0.0;
    };

    std::vector<Leg> legs;

    void validate(std::size_t field_count) const {
        for (const auto& leg : legs) {
            if (leg.field_index < 0 || leg.field_index >= static_cast<int>(field_count))
                throw ConfigError("schedule leg names field " + std::to_string(leg.field_index) +
                                  " outside the tuple");
            if (leg.sign != 1 && leg.sign != -1)
                throw ConfigError("schedule leg sign must be +1 or -1");
            if (!(leg.duration >= 0.0) || !std::isfinite(leg.duration))
                throw ConfigError("schedule leg duration must be finite and nonnegative");
        }
    }

    double total_duration() const {
        double t = 0.0;
        for (const auto& leg : legs) t += leg.duration;
        return t;
    }
};

struct Trajectory {
    std::vector<std::pair<double, PointCloud>> samples; // nondecreasing times, first at t=0

    const PointCloud& final_cloud() const { return samples.back().second; }
    double final_time() const { return samples.back().first; }
};

struct FlowOptions {
    double step = 1e-3;
    double norm_bound = 1e6;   // blow-up guard on |q|
    long max_steps = 10000000; // per leg
    int sample_every = 0;      // 0: leg endpoints only
};

namespace detail {

/// One RK4 step of sign * field, in place. Stage buffers are caller-owned so
/// tight loops do not allocate.
struct Rk4Workspace {
    PointCloud stage;
    Eigen::VectorXd k1, k2, k3, k4;

    explicit Rk4Workspace(const PointCloud& q0) : stage(q0) {
        const long m = q0.data.size();
        k1.resize(m);
        k2.resize(m);
        k3.resize(m);
        k4.resize(m);
    }
};

inline void rk4_step(const Field& field, double sign, double h, PointCloud& q, Rk4Workspace& ws) {
    ws.k1 = sign * field.eval(q);
    ws.stage.data = q.data + (0.5 * h) * ws.k1;
    ws.k2 = sign * field.eval(ws.stage);
    ws.stage.data = q.data + (0.5 * h) * ws.k2;
    ws.k3 = sign * field.eval(ws.stage);
    ws.stage.data = q.data + h * ws.k3;
    ws.k4 = sign * field.eval(ws.stage);
    q.data += (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
}

inline void check_guard(const PointCloud& q, double t, const FlowOptions& opts) {
    if (!q.data.allFinite())
        throw DivergenceError("trajectory became non-finite at t = " + std::to_string(t), t);
    if (q.data.norm() > opts.norm_bound)
        throw DivergenceError("trajectory norm exceeded " + std::to_string(opts.norm_bound) +
                                  " at t = " + std::to_string(t),
                              t);
}

} // namespace detail

/// Classical fixed-step RK4 over [0, duration], the last step shortened to
/// land exactly on the requested duration.
inline PointCloud integrate(const Field& field, const PointCloud& q0, double duration,
                            const FlowOptions& opts = {}, int sign = 1,
                            Trajectory* record = nullptr, double t_offset = 0.0) {
    if (!(duration >= 0.0) || !std::isfinite(duration))
        throw ConfigError("integration duration must be finite and nonnegative");
    if (!(opts.step > 0.0)) throw ConfigError("integration step must be positive");

    PointCloud q = q0;
    detail::Rk4Workspace ws(q0);
    const long steps = static_cast<long>(std::ceil(duration / opts.step - 1e-12));
    if (steps > opts.max_steps)
        throw ConfigError("leg would need " + std::to_string(steps) +
                          " steps, above the per-leg limit");
    double t = 0.0;
    for (long s = 0; s < steps; ++s) {
        const double h = (s + 1 == steps) ? duration - t : opts.step;
        detail::rk4_step(field, static_cast<double>(sign), h, q, ws);
        t = (s + 1 == steps) ? duration : t + opts.step;
        detail::check_guard(q, t_offset + t, opts);
        if (record && opts.sample_every > 0 && (s + 1) % opts.sample_every == 0 && s + 1 != steps)
            record->samples.emplace_back(t_offset + t, q);
    }
    return q;
}

inline PointCloud integrate(const Field& field, const PointCloud& q0, double duration,
                            double step) {
    FlowOptions opts;
    opts.step = step;
    return integrate(field, q0, duration, opts);
}

/// Apply the legs left to right, recording the cloud at t = 0 and at every
/// leg boundary (plus interior samples when sample_every > 0).
inline Trajectory run_schedule(const std::vector<Field>& fields, const Schedule& schedule,
                               const PointCloud& q0, const FlowOptions& opts = {}) {
    schedule.validate(fields.size());
    Trajectory traj;
    traj.samples.emplace_back(0.0, q0);
    PointCloud q = q0;
    double t = 0.0;
    for (const auto& leg : schedule.legs) {
        q = integrate(fields[leg.field_index], q, leg.duration, opts, leg.sign, &traj, t);
        t += leg.duration;
        traj.samples.emplace_back(t, q);
    }
    return traj;
}

/// The discrete skip-connection recursion x_i <- x_i + dt f(x_i, mu),
/// coincidence-safe via the kernel lift.
inline PointCloud discrete_layers(const Kernel& kernel, const PointCloud& q0, double dt,
                                  int steps, const FlowOptions& opts = {}) {
    if (steps < 0) throw ConfigError("layer count must be nonnegative");
    PointCloud q = q0;
    for (int s = 0; s < steps; ++s) {
        q.data += dt * lift(kernel, q);
        detail::check_guard(q, dt * (s + 1), opts);
    }
    return q;
}

/// One shared schedule driving N independent clouds; they never interact.
/// Per-cloud failures are re-thrown with the cloud index attached.
inline std::vector<Trajectory> ensemble_run(const std::vector<Field>& fields,
                                            const Schedule& schedule,
                                            const std::vector<PointCloud>& clouds,
                                            const FlowOptions& opts = {}) {
    if (clouds.empty()) throw ConfigError("ensemble needs at least one cloud");
    const int d = clouds.front().d;
    for (const auto& q : clouds)
        if (q.d != d) throw ConfigError("ensemble clouds must share the ambient dimension");
    std::vector<Trajectory> out;
    out.reserve(clouds.size());
    for (std::size_t h = 0; h < clouds.size(); ++h) {
        try {
            out.push_back(run_schedule(fields, schedule, clouds[h], opts));
        } catch (const DivergenceError& e) {
            throw DivergenceError("cloud " + std::to_string(h) + ": " + e.what(), e.time());
        }
    }
    return out;
}

} // namespace strataflow
