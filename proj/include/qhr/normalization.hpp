#pragma once

#include <Eigen/Dense>
#include <string>

namespace qhr {

/// Interface normalizations between the encoder and the circuit.
///   Identity:    phi' = phi
///   LayerNorm:   phi' = gamma * (phi - mean) / sqrt(var + eps) + beta
///   Tanh:        phi' = (pi/2) * tanh(phi)
///   GradualTanh: phi' = r * tanh(phi / a), outputs strictly inside (-r, r)
/// Tanh is GradualTanh with a = 1, r = pi/2 and shares its code path.
enum class NormKind { Identity, LayerNorm, Tanh, GradualTanh };

struct NormalizationSpec {
    NormKind kind = NormKind::GradualTanh;
    double a = 20.0;                   // GradualTanh only
    double r = 1.5707963267948966;     // GradualTanh only, radians

    void validate() const;
    bool is_tanh_family() const {
        return kind == NormKind::Tanh || kind == NormKind::GradualTanh;
    }
    /// Effective (a, r) of the tanh-family map; Tanh fixes (1, pi/2).
    double eff_a() const { return kind == NormKind::Tanh ? 1.0 : a; }
    double eff_r() const { return kind == NormKind::Tanh ? 1.5707963267948966 : r; }

    static NormalizationSpec identity() { return {NormKind::Identity, 0, 0}; }
    static NormalizationSpec layer_norm() { return {NormKind::LayerNorm, 0, 0}; }
    static NormalizationSpec tanh_fixed() { return {NormKind::Tanh, 0, 0}; }
    static NormalizationSpec gradual(double a, double r) {
        return {NormKind::GradualTanh, a, r};
    }
};

NormKind norm_kind_from_string(const std::string& name);
std::string to_string(NormKind kind);

/// r * tanh(x / a), kept strictly inside (-r, r): at saturation the
/// product rounds to exactly +/-r in double precision, which would alias
/// the angles the map exists to separate, so such outputs are pulled in
/// by one ulp.
double bounded_tanh(double x, double a, double r);

/// Elementwise forward map for Identity / Tanh / GradualTanh. LayerNorm,
/// which needs its affine parameters and a feature axis, goes through
/// layer_norm_forward below.
Eigen::VectorXd normalize(const NormalizationSpec& spec,
                          const Eigen::Ref<const Eigen::VectorXd>& phi);

/// Batch (rowwise-sample) version for the elementwise kinds.
Eigen::MatrixXd normalize_batch(const NormalizationSpec& spec,
                                const Eigen::Ref<const Eigen::MatrixXd>& phi);

/// Elementwise derivative of the above (GradualTanh: (r/a) sech^2(phi/a)).
Eigen::VectorXd normalize_grad(const NormalizationSpec& spec,
                               const Eigen::Ref<const Eigen::VectorXd>& phi);

/// Layer normalization over the feature dimension of one sample, with
/// learnable affine (eps = 1e-5).
struct LayerNormCache {
    Eigen::VectorXd x_hat;
    double inv_std = 0.0;
};

Eigen::VectorXd layer_norm_forward(const Eigen::Ref<const Eigen::VectorXd>& phi,
                                   const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                   const Eigen::Ref<const Eigen::VectorXd>& beta,
                                   LayerNormCache* cache = nullptr);

/// VJP of layer_norm_forward. d_gamma / d_beta are accumulated (+=).
Eigen::VectorXd layer_norm_backward(const Eigen::Ref<const Eigen::VectorXd>& d_out,
                                    const LayerNormCache& cache,
                                    const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                    Eigen::Ref<Eigen::VectorXd> d_gamma,
                                    Eigen::Ref<Eigen::VectorXd> d_beta);

/// Label transform: tanh((log_ic50 - mean) / std), fitted on training
/// labels only. Population (divide-by-N) standard deviation.
struct LabelNormalizer {
    double mean = 0.0;
    double std = 1.0;

    Eigen::VectorXd transform(const Eigen::Ref<const Eigen::VectorXd>& log_ic50) const;
};

LabelNormalizer fit_label_normalizer(const Eigen::Ref<const Eigen::VectorXd>& train_log_ic50);

}  // namespace qhr
