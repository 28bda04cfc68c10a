#include "qhr/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "qhr/metrics.hpp"
#include "qhr/rng.hpp"

namespace qhr {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("configuration error: learning rate must be positive");
    }
    if (batch_size < 2) {
        throw std::invalid_argument("configuration error: batch size must be >= 2");
    }
    if (epochs < 1) throw std::invalid_argument("configuration error: epochs must be >= 1");
    if (early_stop_patience < 1) {
        throw std::invalid_argument("configuration error: patience must be >= 1");
    }
}

double mse_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (pred.size() != target.size() || pred.size() == 0) {
        throw std::invalid_argument("shape error: mse operands");
    }
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Eigen::VectorXd mse_grad(const Eigen::Ref<const Eigen::VectorXd>& pred,
                         const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (pred.size() != target.size() || pred.size() == 0) {
        throw std::invalid_argument("shape error: mse operands");
    }
    return 2.0 * (pred - target) / static_cast<double>(pred.size());
}

void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads, const TrainConfig& config) {
    if (params.size() != grads.size() || state.m.size() != params.size()) {
        throw std::invalid_argument("shape error: adam state vs params vs grads");
    }
    if (!grads.allFinite()) {
        throw std::runtime_error("training aborted: non-finite gradient at step " +
                                 std::to_string(state.t + 1));
    }
    state.t += 1;
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
    state.v = (config.beta2 * state.v.array() +
               (1.0 - config.beta2) * grads.array().square())
                  .matrix();
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    params.array() -= config.learning_rate * (state.m.array() / bc1) /
                      ((state.v.array() / bc2).sqrt() + config.eps);
}

TrainTrace train(const ModelConfig& model_config, const CircuitPlan& plan,
                 ModelParams params, const TrainSet& train_set, const EvalSet& val_set,
                 const TrainConfig& config) {
    config.validate();
    const Eigen::Index n_train = train_set.x.rows();
    if (n_train < 2 || val_set.x.rows() < 1) {
        throw std::invalid_argument("configuration error: empty train or validation split");
    }
    if (train_set.y.size() != n_train || val_set.responder.size() != val_set.x.rows()) {
        throw std::invalid_argument("shape error: features vs labels");
    }

    AdamState adam = AdamState::zeros(params.trainable.size());
    TrainTrace trace;
    EarlyStopper stopper{config.early_stop_patience, config.early_stopping};

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, "epoch", epoch));
        std::vector<int> order = shuffled_indices(static_cast<int>(n_train), rng);

        double sq_err_sum = 0.0;
        Eigen::Index counted = 0;
        for (Eigen::Index start = 0; start < n_train; start += config.batch_size) {
            const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, n_train - start);
            if (size < 2) continue;  // train-mode batch norm cannot take a lone sample
            Eigen::MatrixXd bx(size, train_set.x.cols());
            Eigen::VectorXd by(size);
            for (Eigen::Index i = 0; i < size; ++i) {
                bx.row(i) = train_set.x.row(order[static_cast<std::size_t>(start + i)]);
                by[i] = train_set.y[order[static_cast<std::size_t>(start + i)]];
            }
            ForwardCache cache;
            Eigen::VectorXd pred =
                model_forward(model_config, plan, params, bx, Mode::Train, &cache);
            sq_err_sum += (pred - by).squaredNorm();
            counted += size;
            Eigen::VectorXd grads =
                model_backward(model_config, plan, params, cache, mse_grad(pred, by));
            adam_step(adam, params.trainable, grads, config);
        }
        trace.train_loss.push_back(counted > 0 ? sq_err_sum / static_cast<double>(counted)
                                               : 0.0);

        Eigen::VectorXd val_pred =
            model_forward(model_config, plan, params, val_set.x, Mode::Eval);
        const double epoch_auc = response_auc(val_pred, val_set.responder);
        trace.val_auc.push_back(epoch_auc);

        const bool stop = stopper.update(epoch, epoch_auc);
        if (stopper.improved) {
            trace.best_params = params;  // weights + batch-norm buffers
        }
        if (stop) {
            trace.early_stopped = true;
            break;
        }
    }
    trace.best_auc = stopper.best_auc;
    trace.best_epoch = stopper.best_epoch;
    return trace;
}

}  // namespace qhr
