#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <future>
#include <string>
#include <utility>
#include <vector>

#include "strataflow/errors.hpp"
#include "strataflow/fields.hpp"
#include "strataflow/flow.hpp"
#include "strataflow/group_action.hpp"
#include "strataflow/nelder_mead.hpp"
#include "strataflow/point_cloud.hpp"
#include "strataflow/rng.hpp"

namespace strataflow {

struct SteeringOptions {
    int min_legs = 2;
    int max_legs = 8;        // outer loop m = min_legs, min_legs+2, ... <= max_legs
    int restarts = 8;        // seeded multi-starts per leg count
    long budget = 20000;     // total objective evaluations
    double step = 1e-3;      // integration step
    double t_max = 10.0;     // durations clamped to [0, t_max]
    double tolerance = 1e-6; // converged when the objective falls below this
    double stratum_tol = 0.0;
    std::uint64_t seed = 0;
    int threads = 1;
    int sign_search_rounds = 1; // sweeps of discrete sign flips per restart
};

/// Steer each initial cloud to the orbit of its target with one shared
/// switching schedule. A single pair is ordinary steering; several pairs
/// form an ensemble problem.
struct SteeringProblem {
    std::vector<Field> fields;
    std::vector<PointCloud> initials;
    std::vector<PointCloud> targets;
    SteeringOptions options;
    /// When set, the stratum precondition additionally respects the walls
    /// fixed by reflections in this action.
    const FiniteGroupAction* action = nullptr;
};

struct SteeringResult {
    Schedule schedule;
    double achieved_error = 0.0;
    long evaluations = 0;
    bool converged = false;
    std::vector<double> best_trace; // incumbent error after each restart cell
    std::vector<std::string> notes;
};

namespace detail {

struct LegPattern {
    std::vector<int> field_indices;
    std::vector<int> signs;
};

inline Schedule make_schedule(const LegPattern& pattern, const Eigen::VectorXd& durations,
                              double t_max) {
    Schedule s;
    for (int i = 0; i < durations.size(); ++i) {
        const double t = std::clamp(durations[i], 0.0, t_max);
        s.legs.push_back({pattern.field_indices[i], pattern.signs[i], t});
    }
    return s;
}

/// Objective: sum over pairs of orbit distances at final time. Diverging
/// trajectories score a huge penalty instead of aborting the search.
class SteeringObjective {
public:
    SteeringObjective(const SteeringProblem& prob, LegPattern pattern)
        : prob_(&prob), pattern_(std::move(pattern)) {
        flow_.step = prob.options.step;
    }

    double operator()(const Eigen::VectorXd& durations) const {
        const Schedule s = make_schedule(pattern_, durations, prob_->options.t_max);
        return score(s);
    }

    double score(const Schedule& s) const {
        double total = 0.0;
        try {
            for (std::size_t h = 0; h < prob_->initials.size(); ++h) {
                const Trajectory traj = run_schedule(prob_->fields, s, prob_->initials[h], flow_);
                total += orbit_distance(traj.final_cloud(), prob_->targets[h]);
            }
        } catch (const DivergenceError&) {
            return 1e100;
        }
        return total;
    }

    const LegPattern& pattern() const { return pattern_; }

private:
    const SteeringProblem* prob_;
    LegPattern pattern_;
    FlowOptions flow_;
};

struct CellResult {
    Schedule schedule;
    double error = 1e300;
    long evals = 0;
};

/// One multi-start cell: simplex descent over durations followed by greedy
/// sign flips, all within a fixed evaluation budget.
inline CellResult run_cell(const SteeringProblem& prob, int leg_count, int restart,
                           long cell_budget, LegPattern pattern) {
    CellResult cell;
    if (cell_budget < 2) return cell;
    Rng rng(Rng::derive(prob.options.seed, static_cast<std::uint64_t>(leg_count) * 1000003ULL +
                                               static_cast<std::uint64_t>(restart)));
    const int m = static_cast<int>(pattern.field_indices.size());
    Eigen::VectorXd x0(m);
    for (int i = 0; i < m; ++i) x0[i] = rng.uniform(0.05, 1.2);

    long used = 0;
    const int sign_rounds = prob.options.sign_search_rounds;
    const long nm_budget =
        sign_rounds > 0 ? std::max<long>(2, (cell_budget * 3) / 5) : cell_budget;

    SteeringObjective obj(prob, pattern);
    NelderMeadOptions nm;
    nm.max_evals = nm_budget;
    nm.initial_step = 0.35;
    NelderMeadResult res = nelder_mead([&](const Eigen::VectorXd& x) { return obj(x); }, x0, nm);
    used += res.evals;
    cell.schedule = make_schedule(pattern, res.x, prob.options.t_max);
    cell.error = res.f;

    // Discrete local search over leg signs, re-polishing durations after
    // every accepted flip.
    Eigen::VectorXd best_x = res.x;
    for (int round = 0; round < sign_rounds && used < cell_budget; ++round) {
        bool improved = false;
        for (int leg = 0; leg < m && used < cell_budget; ++leg) {
            LegPattern flipped = obj.pattern();
            flipped.signs[leg] = -flipped.signs[leg];
            SteeringObjective flipped_obj(prob, flipped);
            NelderMeadOptions polish;
            polish.max_evals = std::max<long>(2, (cell_budget - used) / (2 * (m - leg)));
            polish.initial_step = 0.15;
            polish.restarts = 1;
            NelderMeadResult pr =
                nelder_mead([&](const Eigen::VectorXd& x) { return flipped_obj(x); }, best_x,
                            polish);
            used += pr.evals;
            if (pr.f < cell.error) {
                cell.error = pr.f;
                cell.schedule = make_schedule(flipped, pr.x, prob.options.t_max);
                best_x = pr.x;
                obj = SteeringObjective(prob, flipped);
                improved = true;
            }
        }
        if (!improved) break;
    }
    cell.evals = used;
    return cell;
}

inline void check_same_stratum(const SteeringProblem& prob) {
    if (prob.initials.size() != prob.targets.size() || prob.initials.empty())
        throw ConfigError("steering needs matching nonempty initial/target lists");
    for (std::size_t h = 0; h < prob.initials.size(); ++h) {
        prob.initials[h].require_same_shape(prob.targets[h]);
        const auto sigma =
            prob.action
                ? same_stratum_for_action(*prob.action, prob.initials[h], prob.targets[h],
                                          prob.options.stratum_tol)
                : same_stratum(prob.initials[h], prob.targets[h], prob.options.stratum_tol);
        if (!sigma)
            throw PreconditionError(
                "pair " + std::to_string(h) +
                ": initial and target are not in the same stratum; equivariant flows preserve "
                "the mass of individual points, so the coincidence pattern (and any reflection "
                "wall) must match");
    }
}

} // namespace detail

/// Search for a schedule steering every initial cloud to its target orbit.
/// Outer loop over leg counts, seeded Nelder-Mead multi-starts over leg
/// durations, greedy sign flips; budget-exhausted searches return their best
/// schedule with converged = false.
inline SteeringResult steer(const SteeringProblem& prob) {
    detail::check_same_stratum(prob);
    if (prob.fields.size() < 2)
        throw PreconditionError("steering needs a tuple of at least two fields");
    const SteeringOptions& o = prob.options;
    if (o.min_legs < 1 || o.max_legs < o.min_legs) throw ConfigError("invalid leg-count range");

    SteeringResult result;
    for (const auto& q : prob.initials) {
        const int dim = q.d * static_cast<int>(stratum_signature(q, 0.0).blocks.size());
        if (dim < 2) {
            result.notes.push_back(
                "stratum of a pair has dimension " + std::to_string(dim) +
                " (< 2): point ordering may obstruct steering on one-dimensional strata");
            break;
        }
    }

    detail::SteeringObjective empty_obj(prob, detail::LegPattern{});
    result.schedule = Schedule{};
    result.achieved_error = empty_obj.score(result.schedule);
    result.evaluations = 1;
    result.best_trace.push_back(result.achieved_error);
    if (result.achieved_error <= o.tolerance) {
        result.converged = true;
        return result;
    }

    std::vector<int> leg_counts;
    for (int m = o.min_legs; m <= o.max_legs; m += 2) leg_counts.push_back(m);
    const long cells = static_cast<long>(leg_counts.size()) * o.restarts;
    const long cell_budget = std::max<long>(2, (o.budget - 1) / std::max<long>(1, cells));

    const int k = static_cast<int>(prob.fields.size());
    for (int m : leg_counts) {
        detail::LegPattern pattern;
        for (int i = 0; i < m; ++i) {
            pattern.field_indices.push_back(i % k);
            pattern.signs.push_back(1);
        }

        std::vector<detail::CellResult> round(o.restarts);
        if (o.threads > 1) {
            std::vector<std::future<detail::CellResult>> futs;
            for (int r = 0; r < o.restarts; ++r)
                futs.push_back(std::async(std::launch::async, detail::run_cell, std::cref(prob), m,
                                          r, cell_budget, pattern));
            for (int r = 0; r < o.restarts; ++r) round[r] = futs[r].get();
        } else {
            for (int r = 0; r < o.restarts; ++r)
                round[r] = detail::run_cell(prob, m, r, cell_budget, pattern);
        }

        // deterministic merge: error first, then restart index
        for (int r = 0; r < o.restarts; ++r) {
            result.evaluations += round[r].evals;
            if (round[r].error < result.achieved_error) {
                result.achieved_error = round[r].error;
                result.schedule = round[r].schedule;
            }
            result.best_trace.push_back(result.achieved_error);
        }
        if (result.achieved_error <= o.tolerance) break;
    }

    // Freeze the reported error to a replay through the public flow path.
    detail::SteeringObjective replay(prob, detail::LegPattern{});
    result.achieved_error = replay.score(result.schedule);
    result.converged = result.achieved_error <= o.tolerance;
    return result;
}

/// Ensemble steering: same search, plus the requirement that the initial
/// clouds (and the target clouds) are pairwise distinct as orbits.
inline SteeringResult ensemble_steer(const SteeringProblem& prob) {
    auto check_distinct = [](const std::vector<PointCloud>& clouds, const std::string& what) {
        for (std::size_t i = 0; i < clouds.size(); ++i)
            for (std::size_t j = i + 1; j < clouds.size(); ++j)
                if (clouds[i].same_shape(clouds[j]) &&
                    orbit_distance(clouds[i], clouds[j]) == 0.0)
                    throw PreconditionError(what + " clouds " + std::to_string(i) + " and " +
                                            std::to_string(j) + " lie on the same orbit");
    };
    check_distinct(prob.initials, "initial");
    check_distinct(prob.targets, "target");
    return steer(prob);
}

/// Polish the durations of an existing schedule (field order and signs kept
/// fixed). Never returns a worse error than the input schedule scores.
inline SteeringResult refine_schedule(const std::vector<Field>& fields, const Schedule& schedule,
                                      const SteeringProblem& prob_template, long budget) {
    SteeringProblem prob = prob_template;
    prob.fields = fields;
    schedule.validate(fields.size());

    detail::LegPattern pattern;
    Eigen::VectorXd x0(static_cast<long>(schedule.legs.size()));
    double longest = 0.0;
    for (std::size_t i = 0; i < schedule.legs.size(); ++i) {
        pattern.field_indices.push_back(schedule.legs[i].field_index);
        pattern.signs.push_back(schedule.legs[i].sign);
        x0[static_cast<long>(i)] = schedule.legs[i].duration;
        longest = std::max(longest, schedule.legs[i].duration);
    }
    prob.options.t_max = std::max(prob.options.t_max, longest);

    detail::SteeringObjective obj(prob, pattern);
    SteeringResult result;
    result.schedule = schedule;
    result.achieved_error = obj.score(schedule);
    result.evaluations = 1;

    if (!schedule.legs.empty() && budget > 1) {
        NelderMeadOptions nm;
        nm.max_evals = budget - 1;
        nm.initial_step = 0.1;
        NelderMeadResult res =
            nelder_mead([&](const Eigen::VectorXd& x) { return obj(x); }, x0, nm);
        result.evaluations += res.evals;
        if (res.f < result.achieved_error) {
            result.schedule = detail::make_schedule(pattern, res.x, prob.options.t_max);
            result.achieved_error = obj.score(result.schedule);
        }
    }
    result.converged = result.achieved_error <= prob.options.tolerance;
    result.best_trace.push_back(result.achieved_error);
    return result;
}

} // namespace strataflow
