#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace qhr {

/// Joined expression/response table for one drug. Rows follow the
/// response file order; expression rows without a response are unused and
/// response rows without expression are dropped (counted in
/// join_warnings).
struct Dataset {
    Eigen::MatrixXd x;          // samples x genes, log-TPM, standardized upstream
    Eigen::VectorXd log_ic50;   // continuous training label
    Eigen::VectorXi responder;  // binary evaluation label
    std::vector<std::string> sample_ids;
    std::vector<std::string> gene_ids;
    std::string drug;
    int join_warnings = 0;
};

/// Expression CSV: header `sample_id,<gene>,<gene>,...`, one row per
/// sample. Response CSV columns and the drug name come from a small JSON
/// sidecar: {"drug", "sample_column", "label_column", "response_column"}.
Dataset load_dataset(const std::string& expression_csv, const std::string& response_csv,
                     const std::string& meta_json);

/// Genes whose population variance over the training rows exceeds the
/// threshold. Held-out rows never influence the selection.
std::vector<int> variance_filter(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 const std::vector<int>& train_rows, double threshold);

/// Equal-width bins between min and max; half-open [lo, hi) except the
/// final bin, which is closed so the maximum lands in bin n_bins-1.
/// Constant labels collapse to a single stratum (degenerate flag set).
Eigen::VectorXi stratify(const Eigen::Ref<const Eigen::VectorXd>& labels, int n_bins,
                         bool* degenerate = nullptr);

/// Fold assignment per repeat: within each stratum, samples are shuffled
/// with a repeat-derived seed and dealt round-robin (the dealing position
/// carries across strata so overall fold sizes stay balanced).
std::vector<Eigen::VectorXi> stratified_kfold(const Eigen::Ref<const Eigen::VectorXi>& strata,
                                              int k, int repeats, std::uint64_t seed);

struct HoldoutSplit {
    std::vector<int> train;
    std::vector<int> held_out;  // test or validation indices
};

/// Plain random split; held_out gets round(n * fraction) samples.
HoldoutSplit random_holdout(int n_samples, double held_out_fraction, std::uint64_t seed);

/// Stratified split: per-stratum largest-remainder allocation of the
/// held-out quota, shuffled within strata. Returned indices are positions
/// into `strata`.
HoldoutSplit stratified_holdout(const Eigen::Ref<const Eigen::VectorXi>& strata,
                                double held_out_fraction, std::uint64_t seed);

/// Audit record of a full split: exportable to JSON and re-importable so
/// a run can be reproduced exactly.
struct SplitPlan {
    std::vector<int> train;
    std::vector<int> test;
    std::vector<int> inner_train;  // subset of train
    std::vector<int> inner_val;
    Eigen::VectorXi strata;  // over train, from training-only statistics

    std::string to_json() const;
    static SplitPlan from_json(const std::string& text);
};

/// Deterministic linear-teacher dataset for desk-scale runs: the label is
/// a noisy linear read-out of a few informative genes, responders are the
/// lowest log(IC50) quantile, and a couple of near-constant genes are
/// planted for the variance filter to drop.
struct SynthSpec {
    int samples = 500;
    int genes = 50;
    int informative = 10;
    double noise = 0.25;
    double responder_fraction = 0.2;
    std::uint64_t seed = 7;
};

Dataset make_synth_dataset(const SynthSpec& spec);

/// Writes expression.csv, response.csv and meta.json under dir.
void write_dataset_csv(const Dataset& data, const std::string& dir);

}  // namespace qhr
