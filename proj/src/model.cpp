#include "qhr/model.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "qhr/rng.hpp"

namespace qhr {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kPi = 3.141592653589793;
}  // namespace

void ModelConfig::validate() const {
    circuit.validate();
    if (encoder.input_dim < 1 || encoder.hidden1 < 1 || encoder.hidden2 < 1) {
        throw std::invalid_argument("configuration error: encoder dimensions must be positive");
    }
    if (encoder.output_dim != circuit.input_count()) {
        throw std::invalid_argument(
            "configuration error: encoder output dim must equal n1*n2 = " +
            std::to_string(circuit.input_count()));
    }
    if (kind == ModelKind::Hybrid) norm.validate();
}

ParamLayout::ParamLayout(const ModelConfig& config) {
    in = config.encoder.input_dim;
    h1 = config.encoder.hidden1;
    h2 = config.encoder.hidden2;
    emb = config.encoder.output_dim;
    n1 = config.circuit.n1;

    Eigen::Index off = 0;
    auto take = [&off](Eigen::Index n) {
        Eigen::Index at = off;
        off += n;
        return at;
    };
    w1 = take(Eigen::Index(h1) * in);
    b1 = take(h1);
    g1 = take(h1);
    be1 = take(h1);
    w2 = take(Eigen::Index(h2) * h1);
    b2 = take(h2);
    g2 = take(h2);
    be2 = take(h2);
    w3 = take(Eigen::Index(emb) * h2);
    b3 = take(emb);
    if (config.kind == ModelKind::Hybrid) {
        if (config.norm.kind == NormKind::LayerNorm) {
            ln_g = take(emb);
            ln_b = take(emb);
        }
        theta = take(Eigen::Index(config.circuit.param_count()));
        if (config.circuit.head == MeasureHead::MultiMeasure) {
            head_w = take(n1);
            head_b = take(1);
        }
    } else {
        out_w = take(emb);
        out_b = take(1);
    }
    trainable_size = off;

    Eigen::Index boff = 0;
    auto btake = [&boff](Eigen::Index n) {
        Eigen::Index at = boff;
        boff += n;
        return at;
    };
    bn1_mean = btake(h1);
    bn1_var = btake(h1);
    bn2_mean = btake(h2);
    bn2_var = btake(h2);
    buffer_size = boff;
}

Eigen::Index ParamLayout::theta_size() const {
    return theta < 0 ? 0 : (head_w >= 0 ? head_w - theta
                                        : trainable_size - theta);
}

namespace {

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CMatMap = Eigen::Map<const Eigen::MatrixXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

// On-demand views into the flat storage (column-major within segments).
struct Access {
    double* p;
    const ParamLayout& L;
    MatMap w1() const { return {p + L.w1, L.h1, L.in}; }
    VecMap b1() const { return {p + L.b1, L.h1}; }
    VecMap g1() const { return {p + L.g1, L.h1}; }
    VecMap be1() const { return {p + L.be1, L.h1}; }
    MatMap w2() const { return {p + L.w2, L.h2, L.h1}; }
    VecMap b2() const { return {p + L.b2, L.h2}; }
    VecMap g2() const { return {p + L.g2, L.h2}; }
    VecMap be2() const { return {p + L.be2, L.h2}; }
    MatMap w3() const { return {p + L.w3, L.emb, L.h2}; }
    VecMap b3() const { return {p + L.b3, L.emb}; }
    VecMap ln_g() const { return {p + L.ln_g, L.emb}; }
    VecMap ln_b() const { return {p + L.ln_b, L.emb}; }
    VecMap theta() const { return {p + L.theta, L.theta_size()}; }
    VecMap head_w() const { return {p + L.head_w, L.n1}; }
    double& head_b() const { return p[L.head_b]; }
    VecMap out_w() const { return {p + L.out_w, L.emb}; }
    double& out_b() const { return p[L.out_b]; }
};

struct ConstAccess {
    const double* p;
    const ParamLayout& L;
    CMatMap w1() const { return {p + L.w1, L.h1, L.in}; }
    CVecMap b1() const { return {p + L.b1, L.h1}; }
    CVecMap g1() const { return {p + L.g1, L.h1}; }
    CVecMap be1() const { return {p + L.be1, L.h1}; }
    CMatMap w2() const { return {p + L.w2, L.h2, L.h1}; }
    CVecMap b2() const { return {p + L.b2, L.h2}; }
    CVecMap g2() const { return {p + L.g2, L.h2}; }
    CVecMap be2() const { return {p + L.be2, L.h2}; }
    CMatMap w3() const { return {p + L.w3, L.emb, L.h2}; }
    CVecMap b3() const { return {p + L.b3, L.emb}; }
    CVecMap ln_g() const { return {p + L.ln_g, L.emb}; }
    CVecMap ln_b() const { return {p + L.ln_b, L.emb}; }
    CVecMap theta() const { return {p + L.theta, L.theta_size()}; }
    CVecMap head_w() const { return {p + L.head_w, L.n1}; }
    double head_b() const { return p[L.head_b]; }
    CVecMap out_w() const { return {p + L.out_w, L.emb}; }
    double out_b() const { return p[L.out_b]; }
};

struct BufAccess {
    double* p;
    const ParamLayout& L;
    VecMap bn1_mean() const { return {p + L.bn1_mean, L.h1}; }
    VecMap bn1_var() const { return {p + L.bn1_var, L.h1}; }
    VecMap bn2_mean() const { return {p + L.bn2_mean, L.h2}; }
    VecMap bn2_var() const { return {p + L.bn2_var, L.h2}; }
};

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x) {
    return 1.0 / (1.0 + (-x).exp());
}

Eigen::MatrixXd silu_matrix(const Eigen::MatrixXd& x) {
    return (x.array() * sigmoid(x.array())).matrix();
}

// Train mode: batch statistics + running-stat update (biased variance for
// normalization, unbiased for the running buffer). Eval: running stats.
Eigen::MatrixXd batch_norm(const Eigen::MatrixXd& z,
                           const Eigen::Ref<const Eigen::VectorXd>& gamma,
                           const Eigen::Ref<const Eigen::VectorXd>& beta,
                           Eigen::Ref<Eigen::VectorXd> run_mean,
                           Eigen::Ref<Eigen::VectorXd> run_var, Mode mode,
                           Eigen::MatrixXd* xhat_out, Eigen::VectorXd* inv_std_out) {
    const Eigen::Index batch = z.rows();
    Eigen::VectorXd mean, var;
    if (mode == Mode::Train) {
        if (batch < 2) {
            throw std::invalid_argument("batch-size error: train mode needs batch >= 2");
        }
        mean = z.colwise().mean();
        var = (z.rowwise() - mean.transpose()).array().square().colwise().mean();
        const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
        run_mean = (1.0 - kBnMomentum) * run_mean + kBnMomentum * mean;
        run_var = (1.0 - kBnMomentum) * run_var + kBnMomentum * (unbias * var);
    } else {
        mean = run_mean;
        var = run_var;
    }
    Eigen::VectorXd inv_std = (var.array() + kBnEps).rsqrt().matrix();
    Eigen::MatrixXd xhat =
        (z.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
    if (xhat_out) *xhat_out = xhat;
    if (inv_std_out) *inv_std_out = inv_std;
    return ((xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
            beta.transpose().array())
        .matrix();
}

// dZ for train-mode batch norm; accumulates dgamma/dbeta.
Eigen::MatrixXd batch_norm_backward(const Eigen::MatrixXd& d_y, const Eigen::MatrixXd& xhat,
                                    const Eigen::VectorXd& inv_std,
                                    const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                    Eigen::Ref<Eigen::VectorXd> d_gamma,
                                    Eigen::Ref<Eigen::VectorXd> d_beta) {
    const double batch = static_cast<double>(d_y.rows());
    d_gamma += (d_y.array() * xhat.array()).colwise().sum().matrix().transpose();
    d_beta += d_y.colwise().sum().transpose();
    Eigen::MatrixXd d_xhat = d_y.array().rowwise() * gamma.transpose().array();
    Eigen::RowVectorXd sum_dxhat = d_xhat.colwise().sum();
    Eigen::RowVectorXd sum_dxhat_xhat = (d_xhat.array() * xhat.array()).colwise().sum();
    Eigen::MatrixXd d_z =
        (batch * d_xhat.array() - (Eigen::MatrixXd::Ones(d_y.rows(), 1) * sum_dxhat).array() -
         xhat.array() * (Eigen::MatrixXd::Ones(d_y.rows(), 1) * sum_dxhat_xhat).array())
            .rowwise() *
        (inv_std.transpose().array() / batch);
    return d_z;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ParamLayout L(config);
    ModelParams params;
    params.trainable = Eigen::VectorXd::Zero(L.trainable_size);
    params.buffers = Eigen::VectorXd::Zero(L.buffer_size);

    Rng rng(seed);
    auto fill_uniform = [&rng, &params](Eigen::Index off, Eigen::Index n, double bound) {
        for (Eigen::Index i = 0; i < n; ++i) {
            params.trainable[off + i] = uniform(rng, -bound, bound);
        }
    };
    auto fill_const = [&params](Eigen::Index off, Eigen::Index n, double v) {
        params.trainable.segment(off, n).setConstant(v);
    };

    // Fan-in uniform scaling for every linear layer, +/-pi for the circuit.
    const double k1 = 1.0 / std::sqrt(static_cast<double>(L.in));
    const double k2 = 1.0 / std::sqrt(static_cast<double>(L.h1));
    const double k3 = 1.0 / std::sqrt(static_cast<double>(L.h2));
    fill_uniform(L.w1, Eigen::Index(L.h1) * L.in, k1);
    fill_uniform(L.b1, L.h1, k1);
    fill_const(L.g1, L.h1, 1.0);
    fill_const(L.be1, L.h1, 0.0);
    fill_uniform(L.w2, Eigen::Index(L.h2) * L.h1, k2);
    fill_uniform(L.b2, L.h2, k2);
    fill_const(L.g2, L.h2, 1.0);
    fill_const(L.be2, L.h2, 0.0);
    fill_uniform(L.w3, Eigen::Index(L.emb) * L.h2, k3);
    fill_uniform(L.b3, L.emb, k3);
    if (L.ln_g >= 0) {
        fill_const(L.ln_g, L.emb, 1.0);
        fill_const(L.ln_b, L.emb, 0.0);
    }
    if (L.theta >= 0) fill_uniform(L.theta, L.theta_size(), kPi);
    if (L.head_w >= 0) {
        const double kh = 1.0 / std::sqrt(static_cast<double>(L.n1));
        fill_uniform(L.head_w, L.n1, kh);
        fill_uniform(L.head_b, 1, kh);
    }
    if (L.out_w >= 0) {
        const double ko = 1.0 / std::sqrt(static_cast<double>(L.emb));
        fill_uniform(L.out_w, L.emb, ko);
        fill_uniform(L.out_b, 1, ko);
    }

    BufAccess buf{params.buffers.data(), L};
    buf.bn1_mean().setZero();
    buf.bn1_var().setOnes();
    buf.bn2_mean().setZero();
    buf.bn2_var().setOnes();
    return params;
}

Eigen::VectorXd silu(const Eigen::Ref<const Eigen::VectorXd>& x) {
    return (x.array() * (1.0 / (1.0 + (-x.array()).exp()))).matrix();
}

Eigen::MatrixXd encoder_forward(const ModelConfig& config, ModelParams& params,
                                const Eigen::Ref<const Eigen::MatrixXd>& batch, Mode mode,
                                ForwardCache* cache) {
    config.validate();
    ParamLayout L(config);
    if (batch.cols() != L.in) {
        throw std::invalid_argument("shape error: batch has " + std::to_string(batch.cols()) +
                                    " features, encoder expects " + std::to_string(L.in));
    }
    ConstAccess P{params.trainable.data(), L};
    BufAccess buf{params.buffers.data(), L};

    Eigen::MatrixXd z1 = (batch * P.w1().transpose()).rowwise() + P.b1().transpose();
    Eigen::MatrixXd xhat1;
    Eigen::VectorXd inv_std1;
    Eigen::MatrixXd y1 = batch_norm(z1, P.g1(), P.be1(), buf.bn1_mean(), buf.bn1_var(), mode,
                                    cache ? &xhat1 : nullptr, cache ? &inv_std1 : nullptr);
    Eigen::MatrixXd a1 = silu_matrix(y1);

    Eigen::MatrixXd z2 = (a1 * P.w2().transpose()).rowwise() + P.b2().transpose();
    Eigen::MatrixXd xhat2;
    Eigen::VectorXd inv_std2;
    Eigen::MatrixXd y2 = batch_norm(z2, P.g2(), P.be2(), buf.bn2_mean(), buf.bn2_var(), mode,
                                    cache ? &xhat2 : nullptr, cache ? &inv_std2 : nullptr);
    Eigen::MatrixXd a2 = silu_matrix(y2);

    Eigen::MatrixXd phi = (a2 * P.w3().transpose()).rowwise() + P.b3().transpose();
    if (cache) {
        cache->x = batch;
        cache->xhat1 = std::move(xhat1);
        cache->inv_std1 = std::move(inv_std1);
        cache->y1 = std::move(y1);
        cache->a1 = std::move(a1);
        cache->xhat2 = std::move(xhat2);
        cache->inv_std2 = std::move(inv_std2);
        cache->y2 = std::move(y2);
        cache->a2 = std::move(a2);
        cache->phi = phi;
    }
    return phi;
}

Eigen::VectorXd model_forward(const ModelConfig& config, const CircuitPlan& plan,
                              ModelParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& batch, Mode mode,
                              ForwardCache* cache) {
    ParamLayout L(config);
    ConstAccess P{params.trainable.data(), L};
    Eigen::MatrixXd phi = encoder_forward(config, params, batch, mode, cache);
    const Eigen::Index n = batch.rows();

    if (config.kind == ModelKind::Classic) {
        return ((phi * P.out_w()).array() + P.out_b()).matrix();
    }

    // Normalize the angles, run the circuit sample by sample.
    Eigen::MatrixXd phi_prime(n, L.emb);
    if (config.norm.kind == NormKind::LayerNorm) {
        if (cache) cache->ln.resize(static_cast<std::size_t>(n));
        for (Eigen::Index s = 0; s < n; ++s) {
            LayerNormCache lc;
            phi_prime.row(s) =
                layer_norm_forward(phi.row(s).transpose(), P.ln_g(), P.ln_b(),
                                   cache ? &lc : nullptr)
                    .transpose();
            if (cache) cache->ln[static_cast<std::size_t>(s)] = std::move(lc);
        }
    } else {
        phi_prime = normalize_batch(config.norm, phi);
    }

    const Eigen::Index n_out = plan.config.output_count();
    Eigen::MatrixXd expect(n, n_out);
    for (Eigen::Index s = 0; s < n; ++s) {
        expect.row(s) =
            circuit_forward(plan, phi_prime.row(s).transpose(), P.theta()).transpose();
    }
    if (cache) {
        cache->phi_prime = phi_prime;
        cache->expect = expect;
    }

    if (config.circuit.head == MeasureHead::MultiMeasure) {
        return ((expect * P.head_w()).array() + P.head_b()).matrix();
    }
    return expect.col(0);
}

Eigen::VectorXd model_backward(const ModelConfig& config, const CircuitPlan& plan,
                               const ModelParams& params, const ForwardCache& cache,
                               const Eigen::Ref<const Eigen::VectorXd>& d_pred) {
    ParamLayout L(config);
    ConstAccess P{params.trainable.data(), L};
    Eigen::VectorXd grads = Eigen::VectorXd::Zero(L.trainable_size);
    Access G{grads.data(), L};
    const Eigen::Index n = d_pred.size();

    Eigen::MatrixXd d_phi(n, L.emb);
    if (config.kind == ModelKind::Classic) {
        G.out_w() += cache.phi.transpose() * d_pred;
        G.out_b() += d_pred.sum();
        d_phi = d_pred * P.out_w().transpose();
    } else {
        const Eigen::Index n_out = plan.config.output_count();
        Eigen::MatrixXd d_expect(n, n_out);
        if (config.circuit.head == MeasureHead::MultiMeasure) {
            G.head_w() += cache.expect.transpose() * d_pred;
            G.head_b() += d_pred.sum();
            d_expect = d_pred * P.head_w().transpose();
        } else {
            d_expect = d_pred;
        }

        // Chain through the circuit with parameter-shift Jacobians.
        Eigen::MatrixXd d_phi_prime(n, L.emb);
        for (Eigen::Index s = 0; s < n; ++s) {
            CircuitGradient cg =
                circuit_gradient(plan, cache.phi_prime.row(s).transpose(), P.theta());
            d_phi_prime.row(s) =
                (cg.d_inputs.transpose() * d_expect.row(s).transpose()).transpose();
            G.theta() += cg.d_params.transpose() * d_expect.row(s).transpose();
        }

        if (config.norm.kind == NormKind::LayerNorm) {
            for (Eigen::Index s = 0; s < n; ++s) {
                d_phi.row(s) = layer_norm_backward(d_phi_prime.row(s).transpose(),
                                                   cache.ln[static_cast<std::size_t>(s)],
                                                   P.ln_g(), G.ln_g(), G.ln_b())
                                   .transpose();
            }
        } else if (config.norm.kind == NormKind::Identity) {
            d_phi = d_phi_prime;
        } else {
            const double a = config.norm.eff_a();
            const double r = config.norm.eff_r();
            Eigen::ArrayXXd t = (cache.phi.array() / a).tanh();
            d_phi = (d_phi_prime.array() * (r / a) * (1.0 - t.square())).matrix();
        }
    }

    // Encoder backward (train-mode batch norm).
    G.w3() += d_phi.transpose() * cache.a2;
    G.b3() += d_phi.colwise().sum().transpose();
    Eigen::MatrixXd d_a2 = d_phi * P.w3();

    Eigen::ArrayXXd sig2 = sigmoid(cache.y2.array());
    Eigen::MatrixXd d_y2 =
        (d_a2.array() * sig2 * (1.0 + cache.y2.array() * (1.0 - sig2))).matrix();
    Eigen::MatrixXd d_z2 =
        batch_norm_backward(d_y2, cache.xhat2, cache.inv_std2, P.g2(), G.g2(), G.be2());

    G.w2() += d_z2.transpose() * cache.a1;
    G.b2() += d_z2.colwise().sum().transpose();
    Eigen::MatrixXd d_a1 = d_z2 * P.w2();

    Eigen::ArrayXXd sig1 = sigmoid(cache.y1.array());
    Eigen::MatrixXd d_y1 =
        (d_a1.array() * sig1 * (1.0 + cache.y1.array() * (1.0 - sig1))).matrix();
    Eigen::MatrixXd d_z1 =
        batch_norm_backward(d_y1, cache.xhat1, cache.inv_std1, P.g1(), G.g1(), G.be1());

    G.w1() += d_z1.transpose() * cache.x;
    G.b1() += d_z1.colwise().sum().transpose();
    return grads;
}

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["kind"] = c.kind == ModelKind::Hybrid ? "hybrid" : "classic";
    j["encoder"] = {{"input_dim", c.encoder.input_dim},
                    {"hidden1", c.encoder.hidden1},
                    {"hidden2", c.encoder.hidden2},
                    {"output_dim", c.encoder.output_dim}};
    j["circuit"] = {{"n1", c.circuit.n1},
                    {"n2", c.circuit.n2},
                    {"n3", c.circuit.n3},
                    {"head", c.circuit.head == MeasureHead::MultiMeasure ? "multi" : "single"}};
    j["normalization"] = {{"kind", to_string(c.norm.kind)}, {"a", c.norm.a}, {"r", c.norm.r}};
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.kind = j.at("kind") == "hybrid" ? ModelKind::Hybrid : ModelKind::Classic;
    c.encoder.input_dim = j.at("encoder").at("input_dim");
    c.encoder.hidden1 = j.at("encoder").at("hidden1");
    c.encoder.hidden2 = j.at("encoder").at("hidden2");
    c.encoder.output_dim = j.at("encoder").at("output_dim");
    c.circuit.n1 = j.at("circuit").at("n1");
    c.circuit.n2 = j.at("circuit").at("n2");
    c.circuit.n3 = j.at("circuit").at("n3");
    c.circuit.head = j.at("circuit").at("head") == "multi" ? MeasureHead::MultiMeasure
                                                           : MeasureHead::SingleMeasure;
    c.norm.kind = norm_kind_from_string(j.at("normalization").at("kind"));
    c.norm.a = j.at("normalization").at("a");
    c.norm.r = j.at("normalization").at("r");
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParams& params, const std::string& extra_json) {
    nlohmann::json j;
    j["format"] = "qhr-checkpoint";
    j["version"] = 1;
    j["config"] = config_to_json(config);
    j["trainable"] = std::vector<double>(params.trainable.data(),
                                         params.trainable.data() + params.trainable.size());
    j["buffers"] = std::vector<double>(params.buffers.data(),
                                       params.buffers.data() + params.buffers.size());
    if (!extra_json.empty()) j["pipeline"] = nlohmann::json::parse(extra_json);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "qhr-checkpoint" || j.value("version", 0) != 1) {
        throw std::runtime_error("unrecognized checkpoint format in " + path);
    }
    Checkpoint ck;
    ck.config = config_from_json(j.at("config"));
    ParamLayout L(ck.config);
    auto tr = j.at("trainable").get<std::vector<double>>();
    auto bu = j.at("buffers").get<std::vector<double>>();
    if (Eigen::Index(tr.size()) != L.trainable_size ||
        Eigen::Index(bu.size()) != L.buffer_size) {
        throw std::runtime_error("checkpoint parameter sizes do not match its config");
    }
    ck.params.trainable = Eigen::Map<Eigen::VectorXd>(tr.data(), Eigen::Index(tr.size()));
    ck.params.buffers = Eigen::Map<Eigen::VectorXd>(bu.data(), Eigen::Index(bu.size()));
    if (j.contains("pipeline")) ck.extra_json = j["pipeline"].dump();
    return ck;
}

}  // namespace qhr
