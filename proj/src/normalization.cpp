#include "qhr/normalization.hpp"

#include <cmath>
#include <stdexcept>

namespace qhr {

namespace {
constexpr double kLayerNormEps = 1e-5;

void check_finite(const Eigen::Ref<const Eigen::VectorXd>& phi) {
    if (!phi.allFinite()) {
        throw std::runtime_error("data error: non-finite value passed to normalization");
    }
}
}  // namespace

void NormalizationSpec::validate() const {
    if (kind == NormKind::GradualTanh && (!(a > 0.0) || !(r > 0.0))) {
        throw std::invalid_argument("configuration error: gradual tanh needs a > 0 and r > 0");
    }
}

NormKind norm_kind_from_string(const std::string& name) {
    if (name == "identity") return NormKind::Identity;
    if (name == "layernorm") return NormKind::LayerNorm;
    if (name == "tanh") return NormKind::Tanh;
    if (name == "gradual_tanh") return NormKind::GradualTanh;
    throw std::invalid_argument("configuration error: unknown normalization '" + name + "'");
}

double bounded_tanh(double x, double a, double r) {
    double y = r * std::tanh(x / a);
    if (y >= r) {
        y = std::nextafter(r, 0.0);
    } else if (y <= -r) {
        y = std::nextafter(-r, 0.0);
    }
    return y;
}

std::string to_string(NormKind kind) {
    switch (kind) {
        case NormKind::Identity: return "identity";
        case NormKind::LayerNorm: return "layernorm";
        case NormKind::Tanh: return "tanh";
        case NormKind::GradualTanh: return "gradual_tanh";
    }
    return "?";
}

Eigen::VectorXd normalize(const NormalizationSpec& spec,
                          const Eigen::Ref<const Eigen::VectorXd>& phi) {
    spec.validate();
    check_finite(phi);
    switch (spec.kind) {
        case NormKind::Identity:
            return phi;
        case NormKind::Tanh:
        case NormKind::GradualTanh: {
            const double a = spec.eff_a();
            const double r = spec.eff_r();
            return phi.unaryExpr([a, r](double x) { return bounded_tanh(x, a, r); });
        }
        case NormKind::LayerNorm:
            throw std::invalid_argument(
                "layer norm carries affine parameters; use layer_norm_forward");
    }
    throw std::logic_error("unreachable");
}

Eigen::MatrixXd normalize_batch(const NormalizationSpec& spec,
                                const Eigen::Ref<const Eigen::MatrixXd>& phi) {
    spec.validate();
    if (!phi.allFinite()) {
        throw std::runtime_error("data error: non-finite value passed to normalization");
    }
    switch (spec.kind) {
        case NormKind::Identity:
            return phi;
        case NormKind::Tanh:
        case NormKind::GradualTanh: {
            const double a = spec.eff_a();
            const double r = spec.eff_r();
            return phi.unaryExpr([a, r](double x) { return bounded_tanh(x, a, r); });
        }
        case NormKind::LayerNorm:
            throw std::invalid_argument(
                "layer norm carries affine parameters; use layer_norm_forward");
    }
    throw std::logic_error("unreachable");
}

Eigen::VectorXd normalize_grad(const NormalizationSpec& spec,
                               const Eigen::Ref<const Eigen::VectorXd>& phi) {
    spec.validate();
    check_finite(phi);
    switch (spec.kind) {
        case NormKind::Identity:
            return Eigen::VectorXd::Ones(phi.size());
        case NormKind::Tanh:
        case NormKind::GradualTanh: {
            const double a = spec.eff_a();
            const double r = spec.eff_r();
            // d/dphi r tanh(phi/a) = (r/a) sech^2(phi/a) = (r/a)(1 - tanh^2)
            Eigen::ArrayXd t = (phi.array() / a).tanh();
            return ((r / a) * (1.0 - t.square())).matrix();
        }
        case NormKind::LayerNorm:
            throw std::invalid_argument(
                "layer norm needs the full Jacobian-vector product; use layer_norm_backward");
    }
    throw std::logic_error("unreachable");
}

Eigen::VectorXd layer_norm_forward(const Eigen::Ref<const Eigen::VectorXd>& phi,
                                   const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                   const Eigen::Ref<const Eigen::VectorXd>& beta,
                                   LayerNormCache* cache) {
    check_finite(phi);
    if (phi.size() < 2) {
        throw std::invalid_argument("layer norm requires a feature vector of length >= 2");
    }
    const double mean = phi.mean();
    const double var = (phi.array() - mean).square().mean();
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    Eigen::VectorXd x_hat = ((phi.array() - mean) * inv_std).matrix();
    if (cache) {
        cache->x_hat = x_hat;
        cache->inv_std = inv_std;
    }
    return (gamma.array() * x_hat.array() + beta.array()).matrix();
}

Eigen::VectorXd layer_norm_backward(const Eigen::Ref<const Eigen::VectorXd>& d_out,
                                    const LayerNormCache& cache,
                                    const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                    Eigen::Ref<Eigen::VectorXd> d_gamma,
                                    Eigen::Ref<Eigen::VectorXd> d_beta) {
    d_gamma.array() += d_out.array() * cache.x_hat.array();
    d_beta += d_out;
    Eigen::ArrayXd g = d_out.array() * gamma.array();
    const double g_mean = g.mean();
    const double gx_mean = (g * cache.x_hat.array()).mean();
    return ((g - g_mean - cache.x_hat.array() * gx_mean) * cache.inv_std).matrix();
}

LabelNormalizer fit_label_normalizer(const Eigen::Ref<const Eigen::VectorXd>& train_log_ic50) {
    if (train_log_ic50.size() < 2) {
        throw std::invalid_argument("label normalizer needs at least 2 training samples");
    }
    check_finite(train_log_ic50);
    LabelNormalizer norm;
    norm.mean = train_log_ic50.mean();
    norm.std = std::sqrt((train_log_ic50.array() - norm.mean).square().mean());
    if (!(norm.std > 0.0)) {
        throw std::runtime_error("degenerate-data error: constant training labels");
    }
    return norm;
}

Eigen::VectorXd LabelNormalizer::transform(
    const Eigen::Ref<const Eigen::VectorXd>& log_ic50) const {
    return ((log_ic50.array() - mean) / std).tanh().matrix();
}

}  // namespace qhr
