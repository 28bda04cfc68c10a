#include "qhr/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace qhr {

double auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
           const Eigen::Ref<const Eigen::VectorXi>& labels) {
    const Eigen::Index n = scores.size();
    if (labels.size() != n) throw std::invalid_argument("shape error: scores vs labels");
    const Eigen::Index n_pos = (labels.array() != 0).count();
    const Eigen::Index n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::runtime_error("undefined-metric error: single-class labels");
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](int a, int b) { return scores[a] < scores[b]; });

    // Midranks over tie groups, then the rank-sum form of U.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) rank_sum_pos += midrank;
        }
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double response_auc(const Eigen::Ref<const Eigen::VectorXd>& predictions,
                    const Eigen::Ref<const Eigen::VectorXi>& responder) {
    return auc(-predictions, responder);
}

CvAggregate aggregate_cv(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw std::invalid_argument("aggregation error: no records");
    const std::size_t len = records.front().epoch_auc.size();
    CvAggregate agg;
    agg.mean_auc.assign(len, 0.0);
    for (const auto& rec : records) {
        if (rec.epoch_auc.size() != len) {
            throw std::runtime_error("aggregation error: mixed epoch-trace lengths");
        }
        for (std::size_t e = 0; e < len; ++e) agg.mean_auc[e] += rec.epoch_auc[e];
    }
    agg.runs = static_cast<int>(records.size());
    for (auto& v : agg.mean_auc) v /= agg.runs;
    agg.best_epoch = 0;
    for (std::size_t e = 1; e < len; ++e) {
        if (agg.mean_auc[e] > agg.mean_auc[static_cast<std::size_t>(agg.best_epoch)]) {
            agg.best_epoch = static_cast<int>(e);
        }
    }
    agg.best_value = agg.mean_auc[static_cast<std::size_t>(agg.best_epoch)];
    return agg;
}

}  // namespace qhr
