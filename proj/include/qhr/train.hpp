#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "qhr/model.hpp"

namespace qhr {

struct TrainConfig {
    int batch_size = 128;
    int epochs = 100;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int early_stop_patience = 3;
    bool early_stopping = true;  // off for the cross-validation protocol
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;

    static AdamState zeros(Eigen::Index n) {
        return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
    }
};

double mse_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                const Eigen::Ref<const Eigen::VectorXd>& target);
Eigen::VectorXd mse_grad(const Eigen::Ref<const Eigen::VectorXd>& pred,
                         const Eigen::Ref<const Eigen::VectorXd>& target);

/// Bias-corrected Adam update, in place.
void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads, const TrainConfig& config);

/// Patience rule: "improved" means strictly greater than the best seen,
/// so ties do not reset the counter. update() returns true when training
/// should stop after the given epoch.
struct EarlyStopper {
    int patience = 3;
    bool enabled = true;

    double best_auc = 0.0;
    int best_epoch = -1;  // 0-based
    int stall = 0;
    bool improved = false;

    bool update(int epoch, double auc) {
        improved = best_epoch < 0 || auc > best_auc;
        if (improved) {
            best_auc = auc;
            best_epoch = epoch;
            stall = 0;
            return false;
        }
        ++stall;
        return enabled && stall >= patience;
    }
};

struct TrainSet {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;  // normalized drug response, in (-1, 1)
};

struct EvalSet {
    Eigen::MatrixXd x;
    Eigen::VectorXi responder;  // binary evaluation labels
};

struct TrainTrace {
    std::vector<double> train_loss;  // per executed epoch
    std::vector<double> val_auc;     // per executed epoch
    int best_epoch = -1;             // 0-based index of the max val AUC (first best)
    double best_auc = 0.0;
    bool early_stopped = false;
    ModelParams best_params;  // snapshot (weights + batch-norm buffers) at best_epoch
};

/// Minibatch training with per-epoch validation AUC. Shuffling is driven
/// by the run seed; the last partial batch is used unless it has a single
/// sample (train-mode batch norm needs two). "Improved" means strictly
/// greater AUC than the best seen; with early stopping on, training stops
/// once the AUC has not improved for `early_stop_patience` consecutive
/// epochs and the best-epoch snapshot is the result.
TrainTrace train(const ModelConfig& model_config, const CircuitPlan& plan,
                 ModelParams params, const TrainSet& train_set, const EvalSet& val_set,
                 const TrainConfig& config);

}  // namespace qhr
