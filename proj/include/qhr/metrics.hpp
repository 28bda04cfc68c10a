#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace qhr {

/// Area under the ROC curve, Mann-Whitney formulation: the probability
/// that a random positive outranks a random negative, ties counted 1/2
/// (midranks). Throws if only one class is present.
double auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
           const Eigen::Ref<const Eigen::VectorXi>& labels);

/// AUC of model predictions against binary responder labels. Responders
/// have low IC50 and the model predicts normalized log(IC50), so the
/// ranking score is the negated prediction with responder as positive.
double response_auc(const Eigen::Ref<const Eigen::VectorXd>& predictions,
                    const Eigen::Ref<const Eigen::VectorXi>& responder);

/// One cross-validation run (a single fold of a single repeat).
struct EvalRecord {
    std::string drug;
    int config_index = 0;
    int repeat = 0;
    int fold = 0;
    std::vector<double> epoch_auc;
    double best_auc = 0.0;
    int best_epoch = -1;  // 0-based
};

struct CvAggregate {
    std::vector<double> mean_auc;  // elementwise over runs
    int best_epoch = -1;           // argmax, first best on ties
    double best_value = 0.0;
    int runs = 0;
};

/// Elementwise mean of per-epoch AUC traces. All traces must share one
/// length; padding shorter traces is not allowed.
CvAggregate aggregate_cv(const std::vector<EvalRecord>& records);

}  // namespace qhr
