#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qhr/metrics.hpp"
#include "qhr/rng.hpp"

using namespace qhr;

namespace {

// O(n^2) pair-counting oracle: wins + half-ties over all pos/neg pairs.
double auc_pairs(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (Eigen::Index j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Eigen::VectorXi ivec(std::initializer_list<int> v) {
    Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (int x : v) out[i++] = x;
    return out;
}

}  // namespace

TEST_CASE("auc basics") {
    CHECK(auc(vec({0.1, 0.2, 0.8, 0.9}), ivec({0, 0, 1, 1})) == doctest::Approx(1.0));
    CHECK(auc(vec({0.5, 0.5, 0.5, 0.5}), ivec({0, 1, 0, 1})) == doctest::Approx(0.5));
    CHECK(auc(vec({0.9, 0.8, 0.7, 0.6}), ivec({1, 0, 1, 0})) == doctest::Approx(0.75));
    CHECK_THROWS_AS(auc(vec({0.1, 0.2}), ivec({1, 1})), std::runtime_error);
    CHECK_THROWS_AS(auc(vec({0.1, 0.2}), ivec({0, 0})), std::runtime_error);
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 30;
        Eigen::VectorXd scores(n);
        Eigen::VectorXi labels(n);
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            scores[i] = normal(rng);
            labels[i] = bounded(rng, 3) == 0 ? 1 : 0;
            pos += labels[i];
        }
        if (pos == 0 || pos == n) continue;
        const double base = auc(scores, labels);
        Eigen::VectorXd expd = scores.array().exp().matrix();
        Eigen::VectorXd affine = (3.0 * scores.array() + 11.0).matrix();
        CHECK(auc(expd, labels) == doctest::Approx(base).epsilon(1e-12));
        CHECK(auc(affine, labels) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("complement symmetry without ties") {
    Rng rng(23);
    const int n = 51;
    Eigen::VectorXd scores(n);
    Eigen::VectorXi labels(n);
    for (int i = 0; i < n; ++i) {
        scores[i] = normal(rng);  // continuous, ties have probability zero
        labels[i] = i % 3 == 0 ? 1 : 0;
    }
    CHECK(auc(-scores, labels) == doctest::Approx(1.0 - auc(scores, labels)).epsilon(1e-12));
}

TEST_CASE("rank formulation matches pair counting up to n = 200") {
    Rng rng(31);
    for (int n : {2, 3, 10, 57, 200}) {
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::VectorXd scores(n);
            Eigen::VectorXi labels(n);
            int pos = 0;
            for (int i = 0; i < n; ++i) {
                // small discrete support forces plenty of ties
                scores[i] = static_cast<double>(bounded(rng, 7)) / 3.0;
                labels[i] = bounded(rng, 2) == 0 ? 1 : 0;
                pos += labels[i];
            }
            if (pos == 0 || pos == n) {
                labels[0] = 1 - labels[0];
            }
            CHECK(auc(scores, labels) ==
                  doctest::Approx(auc_pairs(scores, labels)).epsilon(1e-12));
        }
    }
}

TEST_CASE("response orientation: lower predicted response ranks responders higher") {
    // predictions are normalized log(IC50); responders sit at low values
    Eigen::VectorXd pred = vec({-0.9, -0.5, 0.4, 0.8});
    Eigen::VectorXi responder = ivec({1, 1, 0, 0});
    CHECK(response_auc(pred, responder) == doctest::Approx(1.0));
    CHECK(response_auc(-pred, responder) == doctest::Approx(0.0));
}

TEST_CASE("cross-validation aggregation") {
    EvalRecord a{"d", 0, 0, 0, {0.5, 0.7}, 0.7, 1};
    EvalRecord b{"d", 0, 0, 1, {0.7, 0.5}, 0.7, 0};
    CvAggregate agg = aggregate_cv({a, b});
    CHECK(agg.mean_auc[0] == doctest::Approx(0.6));
    CHECK(agg.mean_auc[1] == doctest::Approx(0.6));
    CHECK(agg.best_epoch == 0);  // first best on ties
    CHECK(agg.runs == 2);

    CvAggregate same = aggregate_cv({a, a, a});
    REQUIRE(same.mean_auc.size() == a.epoch_auc.size());
    for (std::size_t e = 0; e < same.mean_auc.size(); ++e) {
        CHECK(same.mean_auc[e] == doctest::Approx(a.epoch_auc[e]).epsilon(1e-15));
    }

    EvalRecord shorter{"d", 0, 1, 0, {0.6}, 0.6, 0};
    CHECK_THROWS_AS(aggregate_cv({a, shorter}), std::runtime_error);
    CHECK_THROWS_AS(aggregate_cv({}), std::invalid_argument);

    // elementwise mean stays inside [min, max]
    Rng rng(41);
    std::vector<EvalRecord> records;
    for (int r = 0; r < 50; ++r) {
        EvalRecord rec;
        rec.epoch_auc.resize(20);
        for (int e = 0; e < 20; ++e) rec.epoch_auc[static_cast<std::size_t>(e)] = uniform01(rng);
        records.push_back(rec);
    }
    CvAggregate agg50 = aggregate_cv(records);
    for (int e = 0; e < 20; ++e) {
        double lo = 1.0, hi = 0.0;
        for (const auto& rec : records) {
            lo = std::min(lo, rec.epoch_auc[static_cast<std::size_t>(e)]);
            hi = std::max(hi, rec.epoch_auc[static_cast<std::size_t>(e)]);
        }
        CHECK(agg50.mean_auc[static_cast<std::size_t>(e)] >= lo);
        CHECK(agg50.mean_auc[static_cast<std::size_t>(e)] <= hi);
    }
}
