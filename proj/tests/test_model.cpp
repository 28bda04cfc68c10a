#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "qhr/model.hpp"
#include "qhr/rng.hpp"
#include "qhr/train.hpp"

using namespace qhr;

namespace {
constexpr double kPi = 3.141592653589793;

ModelConfig toy_config(ModelKind kind, NormalizationSpec norm, MeasureHead head,
                       int genes = 4, int n1 = 2, int n2 = 1, int n3 = 1) {
    ModelConfig c;
    c.kind = kind;
    c.circuit = {n1, n2, n3, head};
    c.encoder = {genes, 7, 5, n1 * n2};
    c.norm = norm;
    return c;
}

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    }
    return m;
}

// Loss under train-mode statistics, side-effect free: buffers are copied
// per call so finite differences see a pure function of the trainables.
double probe_loss(const ModelConfig& config, const CircuitPlan& plan,
                  const ModelParams& params, const Eigen::VectorXd& trainable,
                  const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    ModelParams local = params;
    local.trainable = trainable;
    Eigen::VectorXd pred = model_forward(config, plan, local, x, Mode::Train);
    return mse_loss(pred, y);
}
}  // namespace

TEST_CASE("silu values") {
    Eigen::VectorXd x(3);
    x << 0.0, 1.0, 30.0;
    Eigen::VectorXd y = silu(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
    CHECK(y[2] == doctest::Approx(30.0).epsilon(1e-12));  // sigmoid -> 1
}

TEST_CASE("trainable count matches the closed form on the full grid") {
    for (int n1 : {4, 8}) {
        for (int n2 : {2, 4}) {
            for (int n3 : {1, 2, 4}) {
                for (double lr : {1e-6, 1e-5, 1e-4}) {
                    (void)lr;
                    const int in = 100, h1 = 512, h2 = 128, emb = n1 * n2;
                    ModelConfig c;
                    c.kind = ModelKind::Hybrid;
                    c.circuit = {n1, n2, n3, MeasureHead::MultiMeasure};
                    c.encoder = {in, h1, h2, emb};
                    c.norm = NormalizationSpec::gradual(20.0, kPi / 2);
                    ParamLayout L(c);
                    const Eigen::Index expected =
                        Eigen::Index(h1) * in + h1 + 2 * h1 +    // linear1 + bn1
                        Eigen::Index(h2) * h1 + h2 + 2 * h2 +    // linear2 + bn2
                        Eigen::Index(emb) * h2 + emb +           // linear3
                        Eigen::Index(n1) * n3 +                  // circuit thetas
                        n1 + 1;                                  // head
                    CHECK(L.trainable_size == expected);

                    c.circuit.head = MeasureHead::SingleMeasure;
                    ParamLayout Ls(c);
                    CHECK(Ls.trainable_size == expected - n1 - 1);

                    c.norm = NormalizationSpec::layer_norm();
                    c.circuit.head = MeasureHead::MultiMeasure;
                    ParamLayout Ln(c);
                    CHECK(Ln.trainable_size == expected + 2 * emb);

                    c.kind = ModelKind::Classic;
                    ParamLayout Lc(c);
                    CHECK(Lc.trainable_size ==
                          Eigen::Index(h1) * in + h1 + 2 * h1 + Eigen::Index(h2) * h1 + h2 +
                              2 * h2 + Eigen::Index(emb) * h2 + emb + emb + 1);
                }
            }
        }
    }
}

TEST_CASE("zero parameters give a zero embedding and zero prediction") {
    auto config = toy_config(ModelKind::Hybrid, NormalizationSpec::gradual(20.0, kPi / 2),
                             MeasureHead::MultiMeasure);
    ModelParams params = init_params(config, 1);
    params.trainable.setZero();
    Rng rng(2);
    Eigen::MatrixXd x = random_batch(3, 4, rng);
    ForwardCache cache;
    CircuitPlan plan = build_circuit(config.circuit);
    Eigen::VectorXd pred = model_forward(config, plan, params, x, Mode::Train, &cache);
    CHECK(cache.phi.cwiseAbs().maxCoeff() == 0.0);
    // zero angles put every qubit on the equator: expectations 0, head 0
    CHECK(pred.cwiseAbs().maxCoeff() < 1e-12);

    auto single = toy_config(ModelKind::Hybrid, NormalizationSpec::gradual(20.0, kPi / 2),
                             MeasureHead::SingleMeasure);
    ModelParams sp = init_params(single, 1);
    sp.trainable.setZero();
    CircuitPlan splan = build_circuit(single.circuit);
    Eigen::VectorXd spred = model_forward(single, splan, sp, x, Mode::Train);
    CHECK(spred.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("eval mode is deterministic and differs from train mode") {
    auto config = toy_config(ModelKind::Hybrid, NormalizationSpec::gradual(20.0, kPi / 2),
                             MeasureHead::MultiMeasure);
    ModelParams params = init_params(config, 3);
    Rng rng(4);
    Eigen::MatrixXd x = random_batch(5, 4, rng);
    CircuitPlan plan = build_circuit(config.circuit);

    Eigen::VectorXd e1 = model_forward(config, plan, params, x, Mode::Eval);
    Eigen::VectorXd e2 = model_forward(config, plan, params, x, Mode::Eval);
    CHECK(e1 == e2);  // bit-identical, no buffer mutation in eval

    ModelParams fresh = init_params(config, 3);
    Eigen::VectorXd t1 = model_forward(config, plan, fresh, x, Mode::Train);
    CHECK((t1 - e1).cwiseAbs().maxCoeff() > 1e-9);  // batch vs running statistics

    // train mode must update the running statistics
    CHECK((fresh.buffers - params.buffers).cwiseAbs().maxCoeff() > 1e-12);
}

TEST_CASE("train mode rejects a batch of one") {
    auto config = toy_config(ModelKind::Hybrid, NormalizationSpec::gradual(20.0, kPi / 2),
                             MeasureHead::MultiMeasure);
    ModelParams params = init_params(config, 3);
    CircuitPlan plan = build_circuit(config.circuit);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 4);
    CHECK_THROWS_AS(model_forward(config, plan, params, x, Mode::Train),
                    std::invalid_argument);
    CHECK_NOTHROW(model_forward(config, plan, params, x, Mode::Eval));
}

TEST_CASE("single-measure predictions stay in [-1, 1]") {
    auto config = toy_config(ModelKind::Hybrid, NormalizationSpec::identity(),
                             MeasureHead::SingleMeasure, 6, 3, 2, 2);
    CircuitPlan plan = build_circuit(config.circuit);
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        ModelParams params = init_params(config, 10 + trial);
        Eigen::MatrixXd x = 3.0 * random_batch(4, 6, rng);
        Eigen::VectorXd pred = model_forward(config, plan, params, x, Mode::Train);
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
            CHECK(pred[i] <= 1.0 + 1e-12);
            CHECK(pred[i] >= -1.0 - 1e-12);
        }
    }
}

TEST_CASE("end-to-end gradients match finite differences") {
    Rng rng(42);
    std::vector<ModelConfig> configs = {
        toy_config(ModelKind::Classic, NormalizationSpec::identity(),
                   MeasureHead::MultiMeasure),
        toy_config(ModelKind::Hybrid, NormalizationSpec::identity(),
                   MeasureHead::MultiMeasure),
        toy_config(ModelKind::Hybrid, NormalizationSpec::tanh_fixed(),
                   MeasureHead::MultiMeasure),
        toy_config(ModelKind::Hybrid, NormalizationSpec::gradual(20.0, kPi / 2),
                   MeasureHead::MultiMeasure),
        toy_config(ModelKind::Hybrid, NormalizationSpec::gradual(2.0, kPi),
                   MeasureHead::SingleMeasure),
        toy_config(ModelKind::Hybrid, NormalizationSpec::layer_norm(),
                   MeasureHead::MultiMeasure),
    };
    for (const auto& config : configs) {
        CAPTURE(static_cast<int>(config.kind));
        CAPTURE(to_string(config.norm.kind));
        CircuitPlan plan = build_circuit(config.circuit);
        ModelParams params = init_params(config, 77);
        Eigen::MatrixXd x = random_batch(3, 4, rng);
        Eigen::VectorXd y(3);
        y << 0.2, -0.4, 0.1;

        ForwardCache cache;
        ModelParams work = params;
        Eigen::VectorXd pred = model_forward(config, plan, work, x, Mode::Train, &cache);
        Eigen::VectorXd grads = model_backward(config, plan, params, cache, mse_grad(pred, y));

        Eigen::VectorXd fd = oracle::finite_diff(
            [&](const Eigen::VectorXd& v) { return probe_loss(config, plan, params, v, x, y); },
            params.trainable, 1e-5);
        CHECK(oracle::all_close_rel(grads, fd, 1e-5));
    }
}

TEST_CASE("checkpoint round trip preserves outputs") {
    auto config = toy_config(ModelKind::Hybrid, NormalizationSpec::layer_norm(),
                             MeasureHead::MultiMeasure, 5, 2, 2, 1);
    ModelParams params = init_params(config, 123);
    Rng rng(8);
    Eigen::MatrixXd x = random_batch(4, 5, rng);
    CircuitPlan plan = build_circuit(config.circuit);
    model_forward(config, plan, params, x, Mode::Train);  // move the buffers off init
    Eigen::VectorXd before = model_forward(config, plan, params, x, Mode::Eval);

    auto path = std::filesystem::temp_directory_path() / "qhr_test_checkpoint.json";
    save_checkpoint(path.string(), config, params, R"({"note":"round-trip"})");
    Checkpoint loaded = load_checkpoint(path.string());
    CHECK(loaded.params.trainable == params.trainable);
    CHECK(loaded.params.buffers == params.buffers);
    CHECK(loaded.extra_json.find("round-trip") != std::string::npos);

    CircuitPlan plan2 = build_circuit(loaded.config.circuit);
    Eigen::VectorXd after = model_forward(loaded.config, plan2, loaded.params, x, Mode::Eval);
    CHECK(before == after);
    std::filesystem::remove(path);
}

TEST_CASE("config validation") {
    ModelConfig c = toy_config(ModelKind::Hybrid, NormalizationSpec::identity(),
                               MeasureHead::MultiMeasure);
    c.encoder.output_dim = 5;  // != n1 * n2
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.encoder.output_dim = 2;
    c.encoder.input_dim = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
