#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qhr/data.hpp"
#include "qhr/metrics.hpp"
#include "qhr/model.hpp"
#include "qhr/train.hpp"

namespace qhr {

struct GridPoint {
    int n1 = 4;
    int n2 = 2;
    int n3 = 1;
    double lr = 1e-4;
};

struct GridSpec {
    std::vector<int> n1{4, 8};
    std::vector<int> n2{2, 4};
    std::vector<int> n3{1, 2, 4};
    std::vector<double> lr{1e-6, 1e-5, 1e-4};
};

/// n1-major lexicographic enumeration, matching the listing order of the
/// hyperparameter table.
std::vector<GridPoint> enumerate_grid(const GridSpec& grid);

/// The six training setups of the method comparison.
enum class Method { Classic, Identity, LayerNorm, Tanh, ProposedMulti, ProposedSingle };
Method method_from_string(const std::string& name);
std::string to_string(Method method);

struct MethodSpec {
    Method method = Method::ProposedMulti;
    GridPoint config;
    double a = 20.0;
    double r = 1.5707963267948966;  // pi/2
};

/// A reproducible experiment description, loaded from a JSON plan file.
/// CLI flags override individual fields after loading.
struct ExperimentPlan {
    std::string drug;
    std::string expression_csv;
    std::string response_csv;
    std::string meta_json;
    std::string out_dir = "out";
    std::uint64_t base_seed = 42;

    int repeats = 10;
    int folds = 5;
    int epochs = 100;
    int batch_size = 128;
    int patience = 3;
    double variance_threshold = 0.1;
    int strata_bins = 4;
    double test_fraction = 0.1;  // outer split is plain random
    double val_fraction = 0.2;   // inner split is stratified
    int hidden1 = 512;
    int hidden2 = 128;
    int workers = 2;
    int test_repeats = 1;
    std::string split_plan_path;  // optional: replay a saved split exactly

    MethodSpec grid_method;  // model family the grid search trains
    GridSpec grid;
    std::vector<double> a_values{0.5, 1.0, 10.0, 20.0, 100.0};
    std::vector<double> r_values;  // defaults to pi/4 ... 8*pi
    std::optional<GridPoint> sweep_config;
    std::vector<MethodSpec> methods;

    static ExperimentPlan from_json_file(const std::string& path);
    std::string canonical_json() const;

    ModelConfig model_config(const MethodSpec& spec, int input_dim) const;
};

/// Training pool / test split plus every preprocessing artifact, all
/// fitted on the training rows only.
struct PreparedData {
    std::vector<int> train_rows;
    std::vector<int> test_rows;
    std::vector<int> kept_genes;
    LabelNormalizer label_norm;
    Eigen::VectorXi strata;  // over the training pool
    std::optional<HoldoutSplit> preset_inner;  // from a replayed split plan

    Eigen::MatrixXd x_train;  // filtered genes
    Eigen::VectorXd y_train;  // normalized labels
    Eigen::VectorXi resp_train;
    std::vector<std::string> train_ids;
    Eigen::MatrixXd x_test;
    Eigen::VectorXi resp_test;
};

PreparedData prepare_data(const Dataset& data, const ExperimentPlan& plan);

/// 10x5 stratified CV over the full grid: one EvalRecord per
/// (config, repeat, fold), per-run results cached to disk so an
/// interrupted search resumes, then a ranked table of best mean AUC.
void run_grid_search(const ExperimentPlan& plan);

/// Early-stopped training on the stratified inner split, evaluated once
/// per method on the held-out test set. Checkpoints saved per method.
void run_comparison(const ExperimentPlan& plan);

/// The comparison protocol per value of `a` (r fixed) or `r` (a fixed),
/// with the proposed multi-measurement model.
void run_ar_sweep(const ExperimentPlan& plan, char which);

/// Pre/post-normalization values of the embedding over training samples,
/// for the value-distribution figure.
void emit_distribution(const ExperimentPlan& plan, const std::string& checkpoint_path,
                       int n_samples, const std::string& out_csv);

/// Per-epoch mean AUC per config with the best-epoch marker, rebuilt from
/// the cached grid-search run files.
void emit_curves(const ExperimentPlan& plan, const std::string& out_csv);

/// One early-stopped training run (method/config from the plan's first
/// method entry unless overridden); writes trace, checkpoint and summary.
void train_one(const ExperimentPlan& plan, const MethodSpec& spec);

}  // namespace qhr
