#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "strataflow/config.hpp"
#include "strataflow/csv_io.hpp"
#include "strataflow/errors.hpp"
#include "strataflow/fields.hpp"
#include "strataflow/flow.hpp"
#include "strataflow/group_action.hpp"
#include "strataflow/lie.hpp"
#include "strataflow/spin.hpp"
#include "strataflow/steering.hpp"
#include "strataflow/version.hpp"

namespace strataflow {
namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;       // unexpected internal error
inline constexpr int kExitPrecondition = 2;  // bad config or violated precondition
inline constexpr int kExitNotConverged = 3;  // budget exhausted without convergence

namespace detail_cli {

inline void write_report(const ExperimentConfig& cfg, const std::string& rel,
                         const std::string& body, std::uint64_t seed) {
    if (rel.empty()) return;
    const auto path = cfg.resolve(rel);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write report file '" + path.string() + "'");
    Provenance::make(cfg.hash(), seed).write_to(out);
    out << "# command = " << cfg.command << "\n";
    out << cfg.canonical_text() << "\n" << body;
}

inline std::string rank_report(const BracketBasis& basis, const std::string& label) {
    std::ostringstream os;
    os << label << ": target_dim = " << basis.target_dimension << ", rank = " << basis.rank
       << ", generating = " << (basis.generating ? "yes" : "no") << "\n  singular_values =";
    for (double s : basis.singular_values) os << " " << format_double(s);
    os << "\n";
    return os.str();
}

} // namespace detail_cli

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int run_stratum(const ExperimentConfig& cfg, std::ostream& out) {
    const ConfigSection& sec = *cfg.canonical.find_section("stratum");
    const double tol = detail::parse_double(*sec.find("tol"), "for tol");
    std::ostringstream report;

    if (const std::string* cloud_path = sec.find("cloud")) {
        const PointCloud a = read_cloud(cfg.resolve(*cloud_path));
        report << "cloud " << *cloud_path << ": " << stratum_signature(a, tol).to_string()
               << "\n";
        if (const std::string* other = sec.find("cloud_b")) {
            const PointCloud b = read_cloud(cfg.resolve(*other));
            const auto sigma = same_stratum(a, b, tol);
            report << "cloud " << *other << ": " << stratum_signature(b, tol).to_string() << "\n";
            if (sigma) {
                report << "same_stratum = yes, matching permutation =";
                for (int i = 0; i < sigma->size(); ++i) report << " " << (*sigma)(i);
                report << "\n";
            } else {
                report << "same_stratum = no (block-size multisets differ)\n";
            }
        }
    }
    if (const std::string* spec_path = sec.find("spectrum")) {
        const PointCloud ev = read_cloud(cfg.resolve(*spec_path));
        if (ev.d != 1) throw ConfigError("spectrum file must have a single column x0");
        std::vector<double> evals(ev.data.data(), ev.data.data() + ev.data.size());
        const auto sig = spectrum_signature(evals, tol);
        report << "spectrum " << *spec_path << ": ordered multiplicities = (";
        const auto sizes = sig.block_sizes();
        for (std::size_t i = 0; i < sizes.size(); ++i) report << (i ? "," : "") << sizes[i];
        report << ")\n";
    }

    out << report.str();
    detail_cli::write_report(cfg, *sec.find("out_report"), report.str(), 0);
    return kExitOk;
}

inline int run_rank(const ExperimentConfig& cfg, std::ostream& out) {
    const ConfigSection& sec = *cfg.canonical.find_section("rank");
    const std::uint64_t seed = detail::to_u64(*sec.find("seed"), "");
    const long depth = detail::to_long(*sec.find("depth"), "");
    const double h = detail::parse_double(*sec.find("h"), "");
    const double svd_tol = detail::parse_double(*sec.find("svd_tol"), "");

    std::vector<PointCloud> clouds;
    if (const std::string* list = sec.find("clouds")) {
        for (const auto& c : detail::split(*list, ';'))
            clouds.push_back(read_cloud(cfg.resolve(detail::trim(c))));
    } else {
        const long samples = detail::to_long(*sec.find("samples"), "");
        const long n = detail::to_long(*sec.find("n"), "");
        const long d = detail::to_long(*sec.find("d"), "");
        const double scale = detail::parse_double(*sec.find("scale"), "");
        Rng rng(seed);
        for (long s = 0; s < samples; ++s)
            clouds.push_back(random_cloud(static_cast<int>(n), static_cast<int>(d), rng, scale));
    }
    if (clouds.empty()) throw ConfigError("rank sweep has no sample clouds");
    const int n = clouds.front().n;
    const int d = clouds.front().d;

    const auto group = build_group(cfg, n, d);
    const auto fields = build_fields(cfg, n, d, group);

    std::ostringstream report;
    int pass = 0;
    if (*sec.find("mode") == std::string("ensemble")) {
        const BracketBasis basis =
            ensemble_bracket_rank(fields, clouds, static_cast<int>(depth), h, svd_tol);
        report << detail_cli::rank_report(basis, "ensemble(" + std::to_string(clouds.size()) +
                                                     " clouds)");
        pass = basis.generating ? 1 : 0;
        report << "generating_fraction = " << pass << "/1\n";
    } else {
        for (std::size_t s = 0; s < clouds.size(); ++s) {
            const BracketBasis basis =
                bracket_span_rank(fields, clouds[s], static_cast<int>(depth), h, svd_tol);
            report << "sample " << s << " "
                   << stratum_signature(clouds[s], 0.0).to_string() << "\n"
                   << detail_cli::rank_report(basis, "  result");
            pass += basis.generating ? 1 : 0;
        }
        report << "generating_fraction = " << pass << "/" << clouds.size() << "\n";
    }

    out << report.str();
    detail_cli::write_report(cfg, *sec.find("out_report"), report.str(), seed);
    return kExitOk;
}

inline int run_steer(const ExperimentConfig& cfg, std::ostream& out) {
    const ConfigSection& sec = *cfg.canonical.find_section(cfg.command);

    std::vector<PointCloud> initials, targets;
    if (cfg.command == "steer") {
        initials.push_back(read_cloud(cfg.resolve(*sec.find("initial"))));
        targets.push_back(read_cloud(cfg.resolve(*sec.find("target"))));
    } else {
        for (int p = 1;; ++p) {
            const std::string* ini = sec.find("initial_" + std::to_string(p));
            if (!ini) break;
            initials.push_back(read_cloud(cfg.resolve(*ini)));
            targets.push_back(read_cloud(cfg.resolve(*sec.find("target_" + std::to_string(p)))));
        }
    }

    const int n = initials.front().n;
    const int d = initials.front().d;
    const auto group = build_group(cfg, n, d);

    SteeringProblem prob;
    prob.fields = build_fields(cfg, n, d, group);
    prob.initials = initials;
    prob.targets = targets;
    if (group) prob.action = &*group;

    SteeringOptions& o = prob.options;
    o.step = detail::parse_double(*sec.find("step"), "");
    o.t_max = detail::parse_double(*sec.find("t_max"), "");
    o.tolerance = detail::parse_double(*sec.find("tolerance"), "");
    o.stratum_tol = detail::parse_double(*sec.find("stratum_tol"), "");
    o.budget = detail::to_long(*sec.find("budget"), "");
    o.restarts = static_cast<int>(detail::to_long(*sec.find("restarts"), ""));
    o.min_legs = static_cast<int>(detail::to_long(*sec.find("min_legs"), ""));
    o.max_legs = static_cast<int>(detail::to_long(*sec.find("max_legs"), ""));
    o.sign_search_rounds =
        static_cast<int>(detail::to_long(*sec.find("sign_search_rounds"), ""));
    o.seed = detail::to_u64(*sec.find("seed"), "");
    o.threads = static_cast<int>(detail::to_long(*sec.find("threads"), ""));

    std::ostringstream report;
    if (detail::to_bool(*sec.find("check_rank"), "") == true) {
        const BracketBasis basis = bracket_span_rank(
            prob.fields, initials.front(), static_cast<int>(detail::to_long(*sec.find("depth"), "")),
            detail::parse_double(*sec.find("h"), ""), detail::parse_double(*sec.find("svd_tol"), ""));
        report << detail_cli::rank_report(basis, "pre-steer rank at initial cloud");
    }

    const SteeringResult result =
        cfg.command == "steer" ? steer(prob) : ensemble_steer(prob);

    report << "achieved_error = " << format_double(result.achieved_error) << "\n"
           << "evaluations = " << result.evaluations << "\n"
           << "converged = " << (result.converged ? "yes" : "no") << "\n"
           << "legs = " << result.schedule.legs.size() << "\n";
    for (const auto& note : result.notes) report << "note: " << note << "\n";

    const Provenance prov = Provenance::make(cfg.hash(), o.seed);
    const std::string sched_rel = *sec.find("out_schedule");
    if (!sched_rel.empty()) {
        const auto p = cfg.resolve(sched_rel);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        write_schedule(p, result.schedule, prov);
    }
    const std::string traj_rel = *sec.find("out_trajectory");
    if (!traj_rel.empty()) {
        FlowOptions fo;
        fo.step = o.step;
        const auto p = cfg.resolve(traj_rel);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        write_trajectory(p, run_schedule(prob.fields, result.schedule, initials.front(), fo),
                         prov);
    }

    out << report.str();
    detail_cli::write_report(cfg, *sec.find("out_report"), report.str(), o.seed);
    return result.converged ? kExitOk : kExitNotConverged;
}

inline int run_layers(const ExperimentConfig& cfg, std::ostream& out) {
    const ConfigSection& sec = *cfg.canonical.find_section("layers");
    const PointCloud q0 = read_cloud(cfg.resolve(*sec.find("cloud")));
    const Kernel kernel = build_kernel(*cfg.canonical.find_section("field.1"), q0.d);
    const double dt = detail::parse_double(*sec.find("dt"), "");
    const long steps = detail::to_long(*sec.find("steps"), "");
    const std::uint64_t seed = detail::to_u64(*sec.find("seed"), "");

    const PointCloud q = discrete_layers(kernel, q0, dt, static_cast<int>(steps));
    const std::string rel = *sec.find("out_cloud");
    if (!rel.empty()) {
        const auto p = cfg.resolve(rel);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        write_cloud(p, q, Provenance::make(cfg.hash(), seed));
    }
    out << "layers = " << steps << ", dt = " << format_double(dt) << "\n"
        << "final signature: " << stratum_signature(q, 0.0).to_string() << "\n";
    return kExitOk;
}

inline int run_spin(const ExperimentConfig& cfg, std::ostream& out) {
    const ConfigSection& sec = *cfg.canonical.find_section("spin");
    const int n = static_cast<int>(detail::to_long(*sec.find("n"), ""));
    const long max_dim = detail::to_long(*sec.find("max_dim"), "");
    const double tol = detail::parse_double(*sec.find("tol"), "");

    std::vector<spin::ComplexMatrix> gens;
    std::string gens_text = *sec.find("generators");
    for (char& c : gens_text)
        if (c == ',') c = ' ';
    std::istringstream is(gens_text);
    std::string kind;
    std::vector<std::string> kind_names;
    while (is >> kind) {
        gens.push_back(spin::symmetric_hamiltonian(spin::hamiltonian_kind_from_string(kind), n));
        kind_names.push_back(kind);
    }

    const spin::LieClosureReport report =
        spin::lie_closure(gens, static_cast<int>(max_dim), tol);

    std::ostringstream body;
    body << "n = " << n << ", generators =";
    for (const auto& k : kind_names) body << " " << k;
    body << "\nclosure_dimension = " << report.dimension << "\n"
         << "converged = " << (report.converged ? "yes" : "no") << "\n"
         << "commutators_evaluated = " << report.iterations << "\n";

    if (detail::to_bool(*sec.find("sector"), "")) {
        const spin::ComplexMatrix basis = spin::dicke_basis(n);
        std::vector<spin::ComplexMatrix> compressed;
        for (const auto& g : gens) compressed.push_back(spin::sector_compress(g, basis));
        const spin::LieClosureReport sector =
            spin::lie_closure(compressed, static_cast<int>(max_dim), tol);
        body << "sector_dimension = " << sector.dimension << " (bound "
             << (n + 1) * (n + 1) << ")\n";
    }

    const std::string dump_rel = *sec.find("dump_basis");
    if (!dump_rel.empty()) {
        const auto p = cfg.resolve(dump_rel);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream dump(p);
        if (!dump) throw ConfigError("cannot write basis dump '" + p.string() + "'");
        Provenance::make(cfg.hash(), 0).write_to(dump);
        dump << "element,row,col,re,im\n";
        for (std::size_t k = 0; k < report.basis.size(); ++k)
            for (long r = 0; r < report.basis[k].rows(); ++r)
                for (long c = 0; c < report.basis[k].cols(); ++c)
                    dump << k << "," << r << "," << c << ","
                         << format_double(report.basis[k](r, c).real()) << ","
                         << format_double(report.basis[k](r, c).imag()) << "\n";
    }

    out << body.str();
    detail_cli::write_report(cfg, *sec.find("out_report"), body.str(), 0);
    return report.converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline int dispatch_config(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (cfg.command == "stratum") return run_stratum(cfg, out);
        if (cfg.command == "rank") return run_rank(cfg, out);
        if (cfg.command == "steer" || cfg.command == "ensemble") return run_steer(cfg, out);
        if (cfg.command == "layers") return run_layers(cfg, out);
        if (cfg.command == "spin") return run_spin(cfg, out);
        err << "error: unknown command '" << cfg.command << "'\n";
        return kExitPrecondition;
    } catch (const PreconditionError& e) {
        err << "precondition violated: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

int run_demo(const std::filesystem::path& outdir, std::ostream& out, std::ostream& err);

inline int dispatch(const std::string& command, const std::filesystem::path& config_path,
                    std::ostream& out, std::ostream& err) {
    try {
        const ExperimentConfig cfg = parse_config(config_path, command);
        return dispatch_config(cfg, out, err);
    } catch (const PreconditionError& e) {
        err << "precondition violated: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

// ---------------------------------------------------------------------------
// Shipped demos: a reflection wall, spectrum strata, and particle steering.
// The demo command materializes these configs under an output directory and
// runs them end to end with fixed seeds.
// ---------------------------------------------------------------------------

namespace demo {

inline const char* kWallTangencyNote =
    "boundary demo: reflection-averaged fields stay tangent to the wall";

struct DemoFile {
    const char* rel;
    const char* text;
};

inline const std::vector<DemoFile>& files() {
    static const std::vector<DemoFile> fs = {
        {"clouds/side_a.csv", "x0,x1\n0.45,-0.3\n"},
        {"clouds/side_b.csv", "x0,x1\n0.9,0.5\n"},
        {"clouds/side_crossed.csv", "x0,x1\n-0.6,0.5\n"},
        {"clouds/spectrum_a.csv", "x0\n1\n1\n2\n"},
        {"clouds/spectrum_b.csv", "x0\n3\n3\n5\n"},
        {"clouds/particles_a.csv", "x0,x1\n0.2,0.1\n-0.4,0.5\n0.7,-0.3\n"},
        {"clouds/particles_b.csv", "x0,x1\n0.5,0.4\n-0.1,-0.6\n-0.7,0.2\n"},
        {"boundary_steer.cfg",
         "[steer]\n"
         "initial = clouds/side_a.csv\n"
         "target = clouds/side_b.csv\n"
         "seed = 3\n"
         "budget = 4000\n"
         "restarts = 4\n"
         "max_legs = 6\n"
         "step = 5e-3\n"
         "t_max = 4\n"
         "tolerance = 1e-2\n"
         "out_schedule = out/boundary_schedule.txt\n"
         "out_report = out/boundary_report.txt\n"
         "[group]\n"
         "kind = reflection\n"
         "axis = 0\n"
         "[field.1]\n"
         "variant = averaged\n"
         "seed = 21\n"
         "features = 8\n"
         "[field.2]\n"
         "variant = averaged\n"
         "seed = 22\n"
         "features = 8\n"},
        {"boundary_crossing.cfg",
         "[steer]\n"
         "initial = clouds/side_a.csv\n"
         "target = clouds/side_crossed.csv\n"
         "seed = 3\n"
         "budget = 1000\n"
         "out_schedule =\n"
         "out_report =\n"
         "[group]\n"
         "kind = reflection\n"
         "axis = 0\n"
         "[field.1]\n"
         "variant = averaged\n"
         "seed = 21\n"
         "[field.2]\n"
         "variant = averaged\n"
         "seed = 22\n"},
        {"spectrum.cfg",
         "[stratum]\n"
         "spectrum = clouds/spectrum_a.csv\n"
         "tol = 1e-9\n"
         "out_report = out/spectrum_report.txt\n"},
        {"particles_rank.cfg",
         "[rank]\n"
         "samples = 5\n"
         "n = 3\n"
         "d = 2\n"
         "seed = 5\n"
         "depth = 3\n"
         "out_report = out/particles_rank_report.txt\n"
         "[field.1]\n"
         "variant = fourier\n"
         "seed = 11\n"
         "[field.2]\n"
         "variant = fourier\n"
         "seed = 12\n"},
        {"particles_steer.cfg",
         "[steer]\n"
         "initial = clouds/particles_a.csv\n"
         "target = clouds/particles_b.csv\n"
         "seed = 0\n"
         "budget = 6000\n"
         "restarts = 4\n"
         "min_legs = 4\n"
         "max_legs = 8\n"
         "step = 5e-3\n"
         "t_max = 4\n"
         "tolerance = 5e-2\n"
         "out_schedule = out/particles_schedule.txt\n"
         "out_report = out/particles_report.txt\n"
         "out_trajectory = out/particles_trajectory.csv\n"
         "[field.1]\n"
         "variant = fourier\n"
         "seed = 11\n"
         "[field.2]\n"
         "variant = fourier\n"
         "seed = 12\n"},
    };
    return fs;
}

} // namespace demo

/// Write the shipped demo configs/data under `outdir` and run them: wall
/// tangency + same-side steering + expected cross-wall rejection, spectrum
/// multiplicities, and a particle rank sweep + steer. Returns 0 when every
/// step behaves as expected.
inline int run_demo(const std::filesystem::path& outdir, std::ostream& out, std::ostream& err) {
    try {
        std::filesystem::create_directories(outdir / "clouds");
        std::filesystem::create_directories(outdir / "out");
        for (const auto& f : demo::files()) {
            std::ofstream os(outdir / f.rel);
            if (!os) throw ConfigError("cannot write demo file");
            os << f.text;
        }

        bool ok = true;

        // wall tangency: averaged fields have no normal component on the wall
        {
            const auto group = FiniteGroupAction::reflection_group(1, 2, 0);
            double worst = 0.0;
            for (std::uint64_t seed : {21ULL, 22ULL}) {
                const Field f = average_over_group(raw_fourier_field(1, 2, 8, seed), group);
                for (double y : {-0.8, -0.1, 0.4, 1.2}) {
                    PointCloud wall(1, 2);
                    wall.point(0) << 0.0, y;
                    worst = std::max(worst, std::abs(f.eval(wall)[0]));
                }
            }
            out << "[demo] boundary tangency: max |normal component on wall| = "
                << format_double(worst) << "\n";
            ok = ok && worst <= 1e-12;
        }

        struct Step {
            const char* command;
            const char* config;
            int expected;
        };
        const std::vector<Step> steps = {
            {"steer", "boundary_steer.cfg", kExitOk},
            {"steer", "boundary_crossing.cfg", kExitPrecondition},
            {"stratum", "spectrum.cfg", kExitOk},
            {"rank", "particles_rank.cfg", kExitOk},
            {"steer", "particles_steer.cfg", kExitOk},
        };
        for (const auto& step : steps) {
            std::ostringstream sub_out, sub_err;
            const int code = dispatch(step.command, outdir / step.config, sub_out, sub_err);
            out << "[demo] " << step.config << " -> exit " << code
                << (code == step.expected ? " (expected)" : " (UNEXPECTED)") << "\n";
            for (const auto& line : {sub_out.str(), sub_err.str()})
                if (!line.empty()) {
                    std::istringstream ls(line);
                    std::string l;
                    while (std::getline(ls, l)) out << "    " << l << "\n";
                }
            ok = ok && code == step.expected;
        }

        out << (ok ? "[demo] all steps behaved as expected\n"
                   : "[demo] some steps misbehaved\n");
        return ok ? kExitOk : kExitFailure;
    } catch (const Error& e) {
        err << "demo error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace cli
} // namespace strataflow
