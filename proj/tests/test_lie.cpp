#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "strataflow/fields.hpp"
#include "strataflow/lie.hpp"
#include "strataflow/rng.hpp"

using namespace strataflow;
using Catch::Approx;

namespace {

Field scalar_power_field(double exponent) {
    return raw_field([exponent](const PointCloud& q) {
        Eigen::VectorXd v(1);
        v[0] = std::pow(q.point(0)[0], exponent);
        return v;
    });
}

} // namespace

TEST_CASE("jvp is a central difference", "[lie]") {
    SECTION("linear fields differentiate exactly") {
        Eigen::MatrixXd a(2, 2);
        a << 0.3, -1.2, 0.7, 0.1;
        const Field f = linear_field(a);
        const auto q = PointCloud::from_points({{0.4, -0.9}});
        const Eigen::VectorXd v = (Eigen::VectorXd(2) << 1.0, 2.0).finished();
        REQUIRE((jvp(f, q, v, 1e-5) - a * v).norm() <= 1e-9);
    }
    SECTION("constant fields have zero derivative") {
        const Field f = constant_field((Eigen::VectorXd(2) << 3.0, -1.0).finished());
        const auto q = PointCloud::from_points({{0.1, 0.2}});
        REQUIRE(jvp(f, q, (Eigen::VectorXd(2) << 1.0, 1.0).finished(), 1e-5).isZero(1e-12));
    }
    SECTION("x^2 at q=1 gives exactly 2 (third derivative vanishes)") {
        const auto q = PointCloud::from_points({{1.0}});
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
        REQUIRE(jvp(scalar_power_field(2.0), q, one, 1e-5)[0] == Approx(2.0).margin(1e-8));
    }
    SECTION("Richardson: quartic error shrinks ~4x when halving h") {
        // x^3 has truncation error h^2 f''' / 6 = h^2 at q = 1
        const auto q = PointCloud::from_points({{1.0}});
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
        const double e1 = std::abs(jvp(scalar_power_field(3.0), q, one, 1e-3)[0] - 3.0);
        const double e2 = std::abs(jvp(scalar_power_field(3.0), q, one, 5e-4)[0] - 3.0);
        REQUIRE(e1 / e2 == Approx(4.0).epsilon(0.05));
    }
    SECTION("step must be positive") {
        const auto q = PointCloud::from_points({{1.0}});
        REQUIRE_THROWS_AS(jvp(scalar_power_field(2.0), q, Eigen::VectorXd::Ones(1), 0.0),
                          ConfigError);
    }
}

TEST_CASE("lie brackets match the matrix commutator oracle", "[lie]") {
    SECTION("the nilpotent pair from sl(2)") {
        Eigen::MatrixXd a(2, 2), b(2, 2);
        a << 0, 1, 0, 0;
        b << 0, 0, 1, 0;
        const auto q = PointCloud::from_points({{1.0, 1.0}});
        const Eigen::VectorXd expected = (b * a - a * b) * q.data;
        REQUIRE(expected == (Eigen::VectorXd(2) << -1.0, 1.0).finished());
        REQUIRE((lie_bracket(linear_field(a), linear_field(b), q, 1e-5) - expected).norm() <=
                1e-6);
    }
    SECTION("random linear pairs up to d = 4") {
        Rng rng(5);
        for (int trial = 0; trial < 50; ++trial) {
            const int d = 2 + static_cast<int>(rng.below(3));
            Eigen::MatrixXd a(d, d), b(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    a(i, j) = rng.normal();
                    b(i, j) = rng.normal();
                }
            PointCloud q(1, d);
            for (int i = 0; i < d; ++i) q.data[i] = rng.normal();
            const Eigen::VectorXd expected = (b * a - a * b) * q.data;
            REQUIRE((lie_bracket(linear_field(a), linear_field(b), q, 1e-5) - expected).norm() <=
                    1e-6);
        }
    }
    SECTION("self-brackets vanish") {
        const Field f = lifted_field(fourier_kernel(2, 6, 3));
        Rng rng(7);
        const auto q = random_cloud(2, 2, rng);
        REQUIRE(lie_bracket(f, f, q, 1e-5).norm() <= 1e-8);
    }
    SECTION("constant fields commute") {
        const Field f = constant_field((Eigen::VectorXd(2) << 1.0, 0.0).finished());
        const Field g = constant_field((Eigen::VectorXd(2) << 0.0, 1.0).finished());
        const auto q = PointCloud::from_points({{0.3, 0.4}});
        REQUIRE(lie_bracket(f, g, q, 1e-5).isZero(1e-12));
    }
}

TEST_CASE("bracket antisymmetry and Jacobi hold numerically", "[lie]") {
    Rng rng(11);
    const Field x = lifted_field(fourier_kernel(2, 6, 21));
    const Field y = lifted_field(fourier_kernel(2, 6, 22));
    const Field z = lifted_field(fourier_kernel(2, 6, 23));

    SECTION("antisymmetry at h = 1e-5") {
        for (int t = 0; t < 5; ++t) {
            const auto q = random_cloud(2, 2, rng);
            const auto fwd = lie_bracket(x, y, q, 1e-5);
            const auto rev = lie_bracket(y, x, q, 1e-5);
            REQUIRE((fwd + rev).norm() <= 1e-6);
        }
    }
    SECTION("Jacobi identity at h = 1e-4") {
        auto bracket_with = [](const Field& a, const Field& b) {
            return raw_field([a, b](const PointCloud& q) { return lie_bracket(a, b, q, 1e-4); });
        };
        for (int t = 0; t < 3; ++t) {
            const auto q = random_cloud(2, 2, rng);
            const Eigen::VectorXd cyc = lie_bracket(x, bracket_with(y, z), q, 1e-4) +
                                        lie_bracket(y, bracket_with(z, x), q, 1e-4) +
                                        lie_bracket(z, bracket_with(x, y), q, 1e-4);
            REQUIRE(cyc.norm() <= 1e-4);
        }
    }
}

TEST_CASE("ad powers follow the recursion", "[lie]") {
    SECTION("k = 0 returns Y(q)") {
        const Field y = lifted_field(fourier_kernel(2, 6, 31));
        Rng rng(13);
        const auto q = random_cloud(2, 2, rng);
        REQUIRE(ad_power(constant_field(Eigen::VectorXd::Zero(4)), y, q, 0) == y.eval(q));
    }
    SECTION("constant X against linear Y gives A c") {
        Eigen::MatrixXd a(2, 2);
        a << 0.5, -0.2, 0.3, 0.9;
        const Eigen::VectorXd c = (Eigen::VectorXd(2) << 1.0, -2.0).finished();
        const auto q = PointCloud::from_points({{0.2, 0.6}});
        const Eigen::VectorXd got = ad_power(constant_field(c), linear_field(a), q, 1);
        REQUIRE((got - a * c).norm() <= 1e-6);
    }
    SECTION("self-ad is zero for every power") {
        const Field x = lifted_field(fourier_kernel(2, 6, 37));
        Rng rng(17);
        const auto q = random_cloud(2, 2, rng);
        REQUIRE(ad_power(x, x, q, 1).norm() <= 1e-8);
        REQUIRE(ad_power(x, x, q, 2).norm() <= 1e-4);
    }
    SECTION("depth limit is enforced") {
        const Field x = constant_field(Eigen::VectorXd::Zero(2));
        const auto q = PointCloud::from_points({{0.0, 0.0}});
        REQUIRE_THROWS_AS(ad_power(x, x, q, 5), CapabilityError);
    }
}

TEST_CASE("stratum tangents are block-constant bases", "[lie]") {
    SECTION("free clouds get the full space") {
        const auto q = PointCloud::from_points({{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}});
        const auto t = stratum_tangent(q, 0.0);
        REQUIRE(t.dimension == 6);
        REQUIRE((t.basis.transpose() * t.basis).isIdentity(1e-12));
    }
    SECTION("a coincident pair moves jointly") {
        const auto q = PointCloud::from_points({{1.0, 2.0}, {1.0, 2.0}});
        REQUIRE(stratum_tangent(q, 0.0).dimension == 2);
    }
    SECTION("signature [2,1] with d = 2 has dimension 4") {
        const auto q = PointCloud::from_points({{0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}});
        const auto t = stratum_tangent(q, 0.0);
        REQUIRE(t.dimension == 4);
        REQUIRE((t.basis.transpose() * t.basis).isIdentity(1e-12));
    }
}

TEST_CASE("equivariant fields are tangent to strata", "[lie]") {
    Rng rng(19);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        PointCloud q = random_cloud(4, 2, rng);
        q.point(3) = q.point(1);
        const auto t = stratum_tangent(q, 0.0);
        const Field f = lifted_field(fourier_kernel(2, 6, seed));
        const Eigen::VectorXd v = f.eval(q);
        const Eigen::VectorXd orth = v - t.basis * (t.basis.transpose() * v);
        REQUIRE(orth.norm() <= 1e-10);
    }
}

TEST_CASE("bracket span ranks verify generation", "[lie]") {
    SECTION("a single field spans at most one direction") {
        const Field f = lifted_field(fourier_kernel(2, 6, 41));
        Rng rng(23);
        const auto q = random_cloud(2, 2, rng);
        const auto basis = bracket_span_rank({f}, q, 0);
        REQUIRE(basis.rank <= 1);
        REQUIRE(basis.labels == std::vector<std::string>{"X1"});
    }
    SECTION("the sl(2) pair generates the plane at depth 1") {
        Eigen::MatrixXd a(2, 2), b(2, 2);
        a << 0, 1, 0, 0;
        b << 0, 0, 1, 0;
        const auto q = PointCloud::from_points({{1.0, 0.0}});
        const auto basis = bracket_span_rank({linear_field(a), linear_field(b)}, q, 1);
        REQUIRE(basis.target_dimension == 2);
        REQUIRE(basis.rank == 2);
        REQUIRE(basis.generating);
        // the three evaluated words are Aq, Bq and (BA - AB) q
        REQUIRE(basis.vectors.size() == 4); // X1 X2 [X1,X2] [X2,X1]
        REQUIRE((basis.vectors[0] - (Eigen::VectorXd(2) << 0.0, 0.0).finished()).norm() <= 1e-12);
        REQUIRE((basis.vectors[1] - (Eigen::VectorXd(2) << 0.0, 1.0).finished()).norm() <= 1e-12);
        REQUIRE((basis.vectors[2] - (Eigen::VectorXd(2) << -1.0, 0.0).finished()).norm() <= 1e-6);
    }
    SECTION("identical fields never generate") {
        const Field f = lifted_field(fourier_kernel(2, 6, 43));
        Rng rng(29);
        const auto q = random_cloud(2, 2, rng);
        const auto basis = bracket_span_rank({f, f, f}, q, 3);
        REQUIRE(basis.rank <= 1);
        REQUIRE_FALSE(basis.generating);
    }
    SECTION("rank never exceeds the stratum dimension") {
        Rng rng(31);
        PointCloud q = random_cloud(3, 2, rng);
        q.point(2) = q.point(0);
        const std::vector<Field> fields = {lifted_field(fourier_kernel(2, 6, 51)),
                                           lifted_field(fourier_kernel(2, 6, 52))};
        const auto basis = bracket_span_rank(fields, q, 3);
        REQUIRE(basis.target_dimension == 4);
        REQUIRE(basis.rank <= 4);
    }
    SECTION("depth cap is enforced") {
        const Field f = lifted_field(fourier_kernel(2, 6, 53));
        const auto q = PointCloud::from_points({{0.1, 0.2}});
        REQUIRE_THROWS_AS(bracket_span_rank({f, f}, q, 5), CapabilityError);
    }
}

TEST_CASE("averaging and bracketing commute", "[lie]") {
    Rng rng(37);
    const auto s3 = FiniteGroupAction::symmetric_group(3, 2);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Field x = lifted_field(fourier_kernel(2, 6, 100 + seed)); // equivariant
        const Field y = raw_fourier_field(3, 2, 6, 200 + seed);         // raw
        const Field y_eq = average_over_group(y, s3);
        const Field xy_bracket =
            raw_field([x, y](const PointCloud& q) { return lie_bracket(x, y, q, 1e-5); });
        const Field xy_eq = average_over_group(xy_bracket, s3);
        const auto q = random_cloud(3, 2, rng);
        const Eigen::VectorXd lhs = lie_bracket(x, y_eq, q, 1e-5);
        const Eigen::VectorXd rhs = xy_eq.eval(q);
        REQUIRE((lhs - rhs).norm() <= 1e-6);
    }
}

TEST_CASE("ensemble ranks stack per-cloud tangents", "[lie]") {
    Rng rng(41);
    const std::vector<Field> fields = {lifted_field(fourier_kernel(2, 8, 61)),
                                       lifted_field(fourier_kernel(2, 8, 62))};

    SECTION("a single cloud reduces to the plain rank test") {
        const auto q = random_cloud(3, 2, rng);
        const auto single = bracket_span_rank(fields, q, 2);
        const auto ensemble = ensemble_bracket_rank(fields, {q}, 2);
        REQUIRE(single.rank == ensemble.rank);
        REQUIRE(single.target_dimension == ensemble.target_dimension);
    }
    SECTION("constant fields cannot split an ensemble") {
        const std::vector<Field> consts = {
            constant_field((Eigen::VectorXd(2) << 1.0, 0.0).finished()),
            constant_field((Eigen::VectorXd(2) << 0.0, 1.0).finished())};
        const auto a = PointCloud::from_points({{0.0, 0.0}});
        const auto b = PointCloud::from_points({{1.0, 0.0}});
        const auto basis = ensemble_bracket_rank(consts, {a, b}, 3);
        REQUIRE(basis.target_dimension == 4);
        REQUIRE(basis.rank <= 2);
        REQUIRE_FALSE(basis.generating);
    }
    SECTION("coinciding orbits are rejected") {
        const auto a = PointCloud::from_points({{0.0, 0.0}, {1.0, 1.0}});
        const auto b = PointCloud::from_points({{1.0, 1.0}, {0.0, 0.0}});
        REQUIRE_THROWS_AS(ensemble_bracket_rank(fields, {a, b}, 2), PreconditionError);
    }
}

TEST_CASE("random perturbations repair degenerate tuples", "[lie]") {
    Rng rng(43);
    BracketOptions opts;
    opts.depth = 3;

    SECTION("an already-generating tuple is returned unchanged") {
        const std::vector<Field> fields = {lifted_field(fourier_kernel(2, 8, 71)),
                                           lifted_field(fourier_kernel(2, 8, 72))};
        const auto q = random_cloud(3, 2, rng);
        REQUIRE(bracket_span_rank(fields, q, opts).generating);
        const auto report = perturb_until_generating(fields, {q}, 20, 0.1, 0, opts);
        REQUIRE(report.all_generating);
        REQUIRE(report.perturbations == 0);
        REQUIRE((report.fields[0].eval(q) - fields[0].eval(q)).isZero(0.0));
    }
    SECTION("zero budget returns the failure report") {
        const Field f = lifted_field(fourier_kernel(2, 6, 73));
        const auto q = random_cloud(2, 2, rng);
        const auto report = perturb_until_generating({f, f}, {q}, 0, 0.1, 0, opts);
        REQUIRE_FALSE(report.all_generating);
        REQUIRE(report.perturbations == 0);
    }
    SECTION("identical attention kernels become generating after a perturbation") {
        Eigen::MatrixXd qm(2, 2), km(2, 2), vm(2, 2);
        qm << 0.2, 0.1, -0.1, 0.3;
        km << 0.5, -0.2, 0.1, 0.4;
        vm << 0.3, 0.6, -0.2, 0.1;
        const Field f = lifted_field(attention_kernel(2, {{qm, km, vm}}));
        std::vector<PointCloud> samples;
        for (int s = 0; s < 2; ++s) samples.push_back(random_cloud(2, 2, rng));
        const auto report = perturb_until_generating({f, f}, samples, 20, 0.1, 5, opts);
        REQUIRE(report.all_generating);
        REQUIRE(report.perturbations >= 1);
    }
}
