#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "qhr/circuit.hpp"
#include "qhr/normalization.hpp"

namespace qhr {

/// Three-layer encoder with batch normalization between each linear layer
/// and its SiLU activation. Hidden sizes default to the fixed 512/128;
/// tests shrink them for finite-difference work.
struct EncoderConfig {
    int input_dim = 0;
    int hidden1 = 512;
    int hidden2 = 128;
    int output_dim = 0;  // must equal the circuit's input slot count
};

enum class ModelKind {
    Hybrid,   // encoder -> normalization -> circuit -> head
    Classic,  // encoder -> one extra linear layer, no quantum parts
};

struct ModelConfig {
    ModelKind kind = ModelKind::Hybrid;
    EncoderConfig encoder;
    CircuitConfig circuit;   // sizes the embedding for Classic too
    NormalizationSpec norm;  // ignored by Classic

    void validate() const;
};

/// Offsets of every parameter tensor inside the flat trainable vector and
/// the flat buffer vector (batch-norm running statistics). The ordering is
/// fixed so the optimizer, checkpoints, and finite-difference tests all see
/// the same flattening.
struct ParamLayout {
    int in = 0, h1 = 0, h2 = 0, emb = 0, n1 = 0;

    Eigen::Index w1 = -1, b1 = -1, g1 = -1, be1 = -1;
    Eigen::Index w2 = -1, b2 = -1, g2 = -1, be2 = -1;
    Eigen::Index w3 = -1, b3 = -1;
    Eigen::Index ln_g = -1, ln_b = -1;
    Eigen::Index theta = -1;
    Eigen::Index head_w = -1, head_b = -1;  // Hybrid + MultiMeasure
    Eigen::Index out_w = -1, out_b = -1;    // Classic
    Eigen::Index trainable_size = 0;

    Eigen::Index bn1_mean = 0, bn1_var = 0, bn2_mean = 0, bn2_var = 0;
    Eigen::Index buffer_size = 0;

    explicit ParamLayout(const ModelConfig& config);
    Eigen::Index theta_size() const;
};

/// One flat differentiable parameter record plus the non-trainable
/// batch-norm running statistics. Snapshots copy both so that a restored
/// model evaluates identically.
struct ModelParams {
    Eigen::VectorXd trainable;
    Eigen::VectorXd buffers;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

enum class Mode { Train, Eval };

/// Per-batch intermediates kept for the backward pass.
struct ForwardCache {
    Eigen::MatrixXd x;
    Eigen::MatrixXd xhat1, y1, a1;  // batch-norm 1 + SiLU
    Eigen::MatrixXd xhat2, y2, a2;
    Eigen::VectorXd inv_std1, inv_std2;
    Eigen::MatrixXd phi;        // encoder output, batch x emb
    Eigen::MatrixXd phi_prime;  // normalized angles
    Eigen::MatrixXd expect;     // circuit outputs, batch x n_out
    std::vector<LayerNormCache> ln;
};

Eigen::VectorXd silu(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Encoder alone: Linear -> BatchNorm -> SiLU -> Linear -> BatchNorm ->
/// SiLU -> Linear. Train mode uses batch statistics (batch >= 2) and
/// updates the running ones; Eval mode reads the running statistics.
Eigen::MatrixXd encoder_forward(const ModelConfig& config, ModelParams& params,
                                const Eigen::Ref<const Eigen::MatrixXd>& batch, Mode mode,
                                ForwardCache* cache = nullptr);

/// Full pipeline to one prediction per sample. The plan must come from
/// build_circuit(config.circuit); it is passed in so callers compile once.
Eigen::VectorXd model_forward(const ModelConfig& config, const CircuitPlan& plan,
                              ModelParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& batch, Mode mode,
                              ForwardCache* cache = nullptr);

/// Reverse-mode pass: gradient of a scalar loss with respect to every
/// trainable parameter, chaining through the circuit's parameter-shift
/// Jacobians. d_pred is dLoss/dPrediction per sample.
Eigen::VectorXd model_backward(const ModelConfig& config, const CircuitPlan& plan,
                               const ModelParams& params, const ForwardCache& cache,
                               const Eigen::Ref<const Eigen::VectorXd>& d_pred);

/// Version-tagged JSON checkpoint of config + all parameters. `extra`
/// (may be empty) is merged in verbatim; load returns it untouched.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParams& params, const std::string& extra_json = "");
struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::string extra_json;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace qhr
