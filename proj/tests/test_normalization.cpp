#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qhr/normalization.hpp"
#include "qhr/rng.hpp"

using namespace qhr;

namespace {
constexpr double kPi = 3.141592653589793;

Eigen::VectorXd vec1(double v) {
    Eigen::VectorXd x(1);
    x[0] = v;
    return x;
}
}  // namespace

TEST_CASE("gradual tanh point values") {
    auto spec = NormalizationSpec::gradual(20.0, kPi / 2);
    CHECK(normalize(spec, vec1(0.0))[0] == 0.0);
    // r * tanh(20/20) = (pi/2) * tanh(1)
    const double expected = (kPi / 2) * std::tanh(1.0);
    CHECK(normalize(spec, vec1(20.0))[0] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(expected == doctest::Approx(1.1963093).epsilon(1e-6));
    // saturation
    CHECK(normalize(spec, vec1(1000.0))[0] == doctest::Approx(kPi / 2).epsilon(1e-9));
    CHECK(normalize(spec, vec1(-1000.0))[0] == doctest::Approx(-kPi / 2).epsilon(1e-9));
}

TEST_CASE("gradual tanh with a=1, r=pi/2 specializes to tanh") {
    auto gradual = NormalizationSpec::gradual(1.0, kPi / 2);
    auto fixed = NormalizationSpec::tanh_fixed();
    for (double x = -10.0; x <= 10.0; x += 0.001) {
        const double a = normalize(gradual, vec1(x))[0];
        const double b = normalize(fixed, vec1(x))[0];
        CHECK(a == b);  // shared code path: equality to the last ulp
    }
}

TEST_CASE("boundedness, oddness, monotonicity") {
    Rng rng(100);
    auto spec = NormalizationSpec::gradual(3.0, 2.5);
    for (int i = 0; i < 2000; ++i) {
        const double x = uniform(rng, -1e6, 1e6);
        const double y = normalize(spec, vec1(x))[0];
        CHECK(std::abs(y) < 2.5);                   // strict
        CHECK(normalize(spec, vec1(-x))[0] == -y);  // odd
    }
    // non-decreasing everywhere; strictly increasing where tanh has not
    // saturated to the last representable value
    double last = normalize(spec, vec1(-100.0))[0];
    for (double x = -99.5; x < 100.0; x += 0.5) {
        const double y = normalize(spec, vec1(x))[0];
        CHECK(y >= last);
        last = y;
    }
    last = normalize(spec, vec1(-30.0))[0];
    for (double x = -29.5; x <= 30.0; x += 0.5) {  // |x/a| <= 10: unsaturated
        const double y = normalize(spec, vec1(x))[0];
        CHECK(y > last);
        last = y;
    }
}

TEST_CASE("derivatives: closed forms and finite differences") {
    auto g20 = NormalizationSpec::gradual(20.0, kPi / 2);
    CHECK(normalize_grad(g20, vec1(0.0))[0] == doctest::Approx(kPi / 40).epsilon(1e-15));
    auto t = NormalizationSpec::tanh_fixed();
    // twenty times steeper at zero than the a=20 variant
    CHECK(normalize_grad(t, vec1(0.0))[0] == doctest::Approx(kPi / 2).epsilon(1e-15));
    CHECK(normalize_grad(t, vec1(0.0))[0] ==
          doctest::Approx(20.0 * normalize_grad(g20, vec1(0.0))[0]).epsilon(1e-12));

    Rng rng(7);
    std::vector<NormalizationSpec> specs = {NormalizationSpec::identity(),
                                            NormalizationSpec::tanh_fixed(),
                                            NormalizationSpec::gradual(20.0, kPi / 2),
                                            NormalizationSpec::gradual(0.5, 4.0)};
    for (const auto& spec : specs) {
        for (int i = 0; i < 250; ++i) {
            const double x = uniform(rng, -8.0, 8.0);
            const double analytic = normalize_grad(spec, vec1(x))[0];
            const double h = 1e-6;
            const double fd =
                (normalize(spec, vec1(x + h))[0] - normalize(spec, vec1(x - h))[0]) / (2 * h);
            CHECK(std::abs(analytic - fd) < 1e-8);
        }
    }
}

TEST_CASE("value crowding at the boundary: gentle gradient spreads outputs") {
    const int n = 100000;
    auto crowded_fraction = [&](double a) {
        Rng local(55);
        auto spec = NormalizationSpec::gradual(a, kPi / 2);
        int crowded = 0;
        for (int i = 0; i < n; ++i) {
            const double x = normal(local, 0.0, 5.0);
            if (std::abs(normalize(spec, vec1(x))[0]) > 0.99 * (kPi / 2)) ++crowded;
        }
        return static_cast<double>(crowded) / n;
    };
    const double frac_a1 = crowded_fraction(1.0);
    const double frac_a20 = crowded_fraction(20.0);
    CHECK(frac_a1 >= 10.0 * frac_a20);
    CHECK(frac_a1 > 0.5);  // the steep map really does pile up at the edges
}

TEST_CASE("r beyond pi re-admits aliased rotation angles") {
    // with r = 8*pi the output range spans many full rotations: values more
    // than pi apart in magnitude appear, so gate periodicity matters again
    auto wide = NormalizationSpec::gradual(20.0, 8 * kPi);
    CHECK(std::abs(normalize(wide, vec1(100.0))[0]) > kPi);
    CHECK(normalize(wide, vec1(1e6))[0] == doctest::Approx(8 * kPi).epsilon(1e-9));
    // while any r <= pi cannot produce aliases
    auto safe = NormalizationSpec::gradual(20.0, kPi);
    CHECK(std::abs(normalize(safe, vec1(1e6))[0]) < kPi);
}

TEST_CASE("layer norm forward and backward") {
    Eigen::VectorXd phi(4);
    phi << 1.0, 2.0, 3.0, 6.0;
    Eigen::VectorXd gamma = Eigen::VectorXd::Ones(4);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(4);
    LayerNormCache cache;
    Eigen::VectorXd out = layer_norm_forward(phi, gamma, beta, &cache);
    CHECK(out.mean() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((out.array().square().mean()) == doctest::Approx(1.0).epsilon(1e-4));  // eps skew

    // affine applied elementwise
    Eigen::VectorXd gamma2(4), beta2(4);
    gamma2 << 2, 2, 2, 2;
    beta2 << 1, 1, 1, 1;
    Eigen::VectorXd out2 = layer_norm_forward(phi, gamma2, beta2);
    for (int i = 0; i < 4; ++i) {
        CHECK(out2[i] == doctest::Approx(2 * out[i] + 1).epsilon(1e-12));
    }

    Eigen::VectorXd one1 = vec1(3.0);
    CHECK_THROWS_AS(layer_norm_forward(one1, vec1(1.0), vec1(0.0)), std::invalid_argument);

    // VJP against finite differences of a scalar probe sum(w . ln(phi))
    Rng rng(3);
    Eigen::VectorXd w(4);
    Eigen::VectorXd gamma3(4), beta3(4);
    for (int i = 0; i < 4; ++i) {
        w[i] = uniform(rng, -1, 1);
        gamma3[i] = uniform(rng, 0.5, 1.5);
        beta3[i] = uniform(rng, -0.5, 0.5);
    }
    LayerNormCache c3;
    layer_norm_forward(phi, gamma3, beta3, &c3);
    Eigen::VectorXd dg = Eigen::VectorXd::Zero(4), db = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd dx = layer_norm_backward(w, c3, gamma3, dg, db);
    Eigen::VectorXd fd = oracle::finite_diff(
        [&](const Eigen::VectorXd& v) { return w.dot(layer_norm_forward(v, gamma3, beta3)); },
        phi, 1e-6);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(dx[i] - fd[i]) < 1e-8);
    Eigen::VectorXd fd_gamma = oracle::finite_diff(
        [&](const Eigen::VectorXd& v) { return w.dot(layer_norm_forward(phi, v, beta3)); },
        gamma3, 1e-6);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(dg[i] - fd_gamma[i]) < 1e-8);
    Eigen::VectorXd fd_beta = oracle::finite_diff(
        [&](const Eigen::VectorXd& v) { return w.dot(layer_norm_forward(phi, gamma3, v)); },
        beta3, 1e-6);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(db[i] - fd_beta[i]) < 1e-8);
}

TEST_CASE("label normalizer") {
    Eigen::VectorXd labels(2);
    labels << 0.0, 2.0;
    LabelNormalizer norm = fit_label_normalizer(labels);
    CHECK(norm.mean == doctest::Approx(1.0));
    CHECK(norm.std == doctest::Approx(1.0));  // population convention
    CHECK(norm.transform(vec1(norm.mean))[0] == 0.0);

    Rng rng(9);
    Eigen::VectorXd big(500);
    for (int i = 0; i < 500; ++i) big[i] = normal(rng, 3.0, 2.0);
    LabelNormalizer fitted = fit_label_normalizer(big);
    Eigen::VectorXd transformed = fitted.transform(big);
    for (int i = 0; i < 500; ++i) {
        CHECK(transformed[i] > -1.0);
        CHECK(transformed[i] < 1.0);
    }

    Eigen::VectorXd constant = Eigen::VectorXd::Constant(5, 1.3);
    CHECK_THROWS_AS(fit_label_normalizer(constant), std::runtime_error);
    CHECK_THROWS_AS(fit_label_normalizer(vec1(1.0)), std::invalid_argument);
}

TEST_CASE("non-finite input is a data error") {
    auto spec = NormalizationSpec::gradual(20.0, kPi / 2);
    Eigen::VectorXd bad(2);
    bad << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(normalize(spec, bad), std::runtime_error);
    bad[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(normalize_grad(spec, bad), std::runtime_error);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(normalize(NormalizationSpec::gradual(-1.0, 1.0), vec1(0.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(normalize(NormalizationSpec::gradual(1.0, 0.0), vec1(0.0)),
                    std::invalid_argument);
    CHECK(norm_kind_from_string("gradual_tanh") == NormKind::GradualTanh);
    CHECK(to_string(NormKind::LayerNorm) == "layernorm");
    CHECK_THROWS_AS(norm_kind_from_string("other"), std::invalid_argument);
}
