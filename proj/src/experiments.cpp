#include "qhr/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "qhr/io.hpp"
#include "qhr/rng.hpp"

namespace qhr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "qhr 0.1.0";
constexpr double kPi = 3.141592653589793;

struct RunStatus {
    std::string id;
    std::string status;  // done | skipped | failed
    std::string note;
    double wall_ms = 0.0;
};

void parallel_for(int workers, int n_jobs, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, n_jobs));
    if (workers == 1) {
        for (int i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&next, n_jobs, &fn] {
            while (true) {
                int i = next.fetch_add(1);
                if (i >= n_jobs) break;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

std::string hash_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

void write_manifest(const ExperimentPlan& plan, const std::string& op,
                    const std::vector<RunStatus>& runs,
                    const std::vector<fs::path>& artifacts) {
    json j;
    j["version"] = kVersion;
    j["operation"] = op;
    j["plan_hash"] = hash_hex(plan.canonical_json());
    j["runs"] = json::object();
    for (const auto& r : runs) {
        j["runs"][r.id] = {{"status", r.status}, {"wall_ms", r.wall_ms}};
        if (!r.note.empty()) j["runs"][r.id]["note"] = r.note;
    }
    j["artifacts"] = json::object();
    for (const auto& p : artifacts) {
        j["artifacts"][p.string()] = hash_hex(read_text(p));
    }
    write_text_atomic(fs::path(plan.out_dir) / ("manifest_" + op + ".json"),
                      j.dump(2) + "\n");
}

GridPoint grid_point_from_json(const json& j) {
    GridPoint gp;
    gp.n1 = j.at("n1");
    gp.n2 = j.at("n2");
    gp.n3 = j.at("n3");
    gp.lr = j.at("lr");
    return gp;
}

json grid_point_to_json(const GridPoint& gp) {
    return {{"n1", gp.n1}, {"n2", gp.n2}, {"n3", gp.n3}, {"lr", gp.lr}};
}

MethodSpec method_spec_from_json(const json& j) {
    MethodSpec spec;
    spec.method = method_from_string(j.at("name"));
    if (j.contains("config")) spec.config = grid_point_from_json(j.at("config"));
    spec.a = j.value("a", 20.0);
    spec.r = j.value("r", kPi / 2);
    return spec;
}

Eigen::MatrixXd take_rows_cols(const Eigen::MatrixXd& x, const std::vector<int>& rows,
                               const std::vector<int>& cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j2 = 0; j2 < cols.size(); ++j2) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j2)) =
                x(rows[i], cols[j2]);
        }
    }
    return out;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    }
    return out;
}

template <typename Vec>
Vec take(const Vec& v, const std::vector<int>& idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = v[idx[i]];
    }
    return out;
}

bool both_classes(const Eigen::VectorXi& labels) {
    return (labels.array() != 0).any() && (labels.array() == 0).any();
}

}  // namespace

std::vector<GridPoint> enumerate_grid(const GridSpec& grid) {
    if (grid.n1.empty() || grid.n2.empty() || grid.n3.empty() || grid.lr.empty()) {
        throw std::invalid_argument("configuration error: empty hyperparameter grid");
    }
    std::vector<GridPoint> points;
    for (int n1 : grid.n1) {
        for (int n2 : grid.n2) {
            for (int n3 : grid.n3) {
                for (double lr : grid.lr) points.push_back({n1, n2, n3, lr});
            }
        }
    }
    return points;
}

Method method_from_string(const std::string& name) {
    if (name == "classic") return Method::Classic;
    if (name == "identity") return Method::Identity;
    if (name == "layernorm") return Method::LayerNorm;
    if (name == "tanh") return Method::Tanh;
    if (name == "proposed_multi") return Method::ProposedMulti;
    if (name == "proposed_single") return Method::ProposedSingle;
    throw std::invalid_argument("configuration error: unknown method '" + name + "'");
}

std::string to_string(Method method) {
    switch (method) {
        case Method::Classic: return "classic";
        case Method::Identity: return "identity";
        case Method::LayerNorm: return "layernorm";
        case Method::Tanh: return "tanh";
        case Method::ProposedMulti: return "proposed_multi";
        case Method::ProposedSingle: return "proposed_single";
    }
    return "?";
}

ExperimentPlan ExperimentPlan::from_json_file(const std::string& path) {
    json j = json::parse(read_text(path));
    ExperimentPlan plan;
    plan.drug = j.value("drug", "");
    if (j.contains("data")) {
        plan.expression_csv = j["data"].value("expression", "");
        plan.response_csv = j["data"].value("response", "");
        plan.meta_json = j["data"].value("meta", "");
    }
    plan.out_dir = j.value("out_dir", plan.out_dir);
    plan.base_seed = j.value("base_seed", plan.base_seed);
    plan.repeats = j.value("repeats", plan.repeats);
    plan.folds = j.value("folds", plan.folds);
    plan.epochs = j.value("epochs", plan.epochs);
    plan.batch_size = j.value("batch_size", plan.batch_size);
    plan.patience = j.value("patience", plan.patience);
    plan.variance_threshold = j.value("variance_threshold", plan.variance_threshold);
    plan.strata_bins = j.value("strata_bins", plan.strata_bins);
    plan.test_fraction = j.value("test_fraction", plan.test_fraction);
    plan.val_fraction = j.value("val_fraction", plan.val_fraction);
    if (j.contains("encoder")) {
        plan.hidden1 = j["encoder"].value("hidden1", plan.hidden1);
        plan.hidden2 = j["encoder"].value("hidden2", plan.hidden2);
    }
    plan.workers = j.value("workers", plan.workers);
    plan.test_repeats = j.value("test_repeats", plan.test_repeats);
    if (j.contains("grid")) {
        plan.grid.n1 = j["grid"].value("n1", plan.grid.n1);
        plan.grid.n2 = j["grid"].value("n2", plan.grid.n2);
        plan.grid.n3 = j["grid"].value("n3", plan.grid.n3);
        plan.grid.lr = j["grid"].value("lr", plan.grid.lr);
    }
    if (j.contains("grid_method")) {
        plan.grid_method = method_spec_from_json(j["grid_method"]);
    }
    plan.a_values = j.value("a_values", plan.a_values);
    if (j.contains("r_values")) {
        plan.r_values = j["r_values"].get<std::vector<double>>();
    }
    if (j.contains("sweep_config")) {
        plan.sweep_config = grid_point_from_json(j["sweep_config"]);
    }
    if (j.contains("methods")) {
        for (const auto& m : j["methods"]) plan.methods.push_back(method_spec_from_json(m));
    }
    plan.split_plan_path = j.value("split_plan", "");
    return plan;
}

std::string ExperimentPlan::canonical_json() const {
    json j;  // nlohmann objects are key-sorted, so the dump is canonical
    j["drug"] = drug;
    j["data"] = {{"expression", expression_csv},
                 {"response", response_csv},
                 {"meta", meta_json}};
    j["base_seed"] = base_seed;
    j["repeats"] = repeats;
    j["folds"] = folds;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["patience"] = patience;
    j["variance_threshold"] = variance_threshold;
    j["strata_bins"] = strata_bins;
    j["test_fraction"] = test_fraction;
    j["val_fraction"] = val_fraction;
    j["encoder"] = {{"hidden1", hidden1}, {"hidden2", hidden2}};
    j["grid"] = {{"n1", grid.n1}, {"n2", grid.n2}, {"n3", grid.n3}, {"lr", grid.lr}};
    j["grid_method"] = {{"name", to_string(grid_method.method)},
                        {"a", grid_method.a},
                        {"r", grid_method.r}};
    j["a_values"] = a_values;
    j["r_values"] = r_values;
    if (sweep_config) j["sweep_config"] = grid_point_to_json(*sweep_config);
    j["methods"] = json::array();
    for (const auto& m : methods) {
        j["methods"].push_back({{"name", to_string(m.method)},
                                {"config", grid_point_to_json(m.config)},
                                {"a", m.a},
                                {"r", m.r}});
    }
    j["test_repeats"] = test_repeats;
    j["split_plan"] = split_plan_path;
    return j.dump();
}

ModelConfig ExperimentPlan::model_config(const MethodSpec& spec, int input_dim) const {
    ModelConfig config;
    config.kind = spec.method == Method::Classic ? ModelKind::Classic : ModelKind::Hybrid;
    config.circuit.n1 = spec.config.n1;
    config.circuit.n2 = spec.config.n2;
    config.circuit.n3 = spec.config.n3;
    config.circuit.head = spec.method == Method::ProposedSingle ? MeasureHead::SingleMeasure
                                                                : MeasureHead::MultiMeasure;
    config.encoder.input_dim = input_dim;
    config.encoder.hidden1 = hidden1;
    config.encoder.hidden2 = hidden2;
    config.encoder.output_dim = config.circuit.input_count();
    switch (spec.method) {
        case Method::Classic:
        case Method::Identity:
            config.norm = NormalizationSpec::identity();
            break;
        case Method::LayerNorm:
            config.norm = NormalizationSpec::layer_norm();
            break;
        case Method::Tanh:
            config.norm = NormalizationSpec::tanh_fixed();
            break;
        case Method::ProposedMulti:
        case Method::ProposedSingle:
            config.norm = NormalizationSpec::gradual(spec.a, spec.r);
            break;
    }
    return config;
}

PreparedData prepare_data(const Dataset& data, const ExperimentPlan& plan) {
    const int n = static_cast<int>(data.x.rows());
    PreparedData prep;
    if (!plan.split_plan_path.empty()) {
        SplitPlan saved = SplitPlan::from_json(read_text(plan.split_plan_path));
        for (int r : saved.train) {
            if (r < 0 || r >= n) {
                throw std::runtime_error("split plan index out of range for this dataset");
            }
        }
        prep.train_rows = saved.train;
        prep.test_rows = saved.test;
        if (!saved.inner_train.empty()) {
            prep.preset_inner = HoldoutSplit{saved.inner_train, saved.inner_val};
        }
    } else {
        HoldoutSplit outer = random_holdout(n, plan.test_fraction,
                                            derive_seed(plan.base_seed, "outer|" + plan.drug));
        prep.train_rows = outer.train;
        prep.test_rows = outer.held_out;
    }
    prep.kept_genes = variance_filter(data.x, prep.train_rows, plan.variance_threshold);

    Eigen::VectorXd train_labels = take(data.log_ic50, prep.train_rows);
    prep.label_norm = fit_label_normalizer(train_labels);
    prep.y_train = prep.label_norm.transform(train_labels);
    prep.strata = stratify(prep.y_train, plan.strata_bins);

    prep.x_train = take_rows_cols(data.x, prep.train_rows, prep.kept_genes);
    prep.x_test = take_rows_cols(data.x, prep.test_rows, prep.kept_genes);
    prep.resp_train = take(data.responder, prep.train_rows);
    prep.resp_test = take(data.responder, prep.test_rows);
    for (int r : prep.train_rows) prep.train_ids.push_back(data.sample_ids[std::size_t(r)]);
    return prep;
}

namespace {

Dataset load_plan_dataset(const ExperimentPlan& plan) {
    if (plan.expression_csv.empty() || plan.response_csv.empty() || plan.meta_json.empty()) {
        throw std::invalid_argument("configuration error: plan is missing data paths");
    }
    return load_dataset(plan.expression_csv, plan.response_csv, plan.meta_json);
}

std::string run_id(int config_index, int repeat, int fold) {
    return "c" + std::to_string(config_index) + "_r" + std::to_string(repeat) + "_f" +
           std::to_string(fold);
}

json eval_record_to_json(const EvalRecord& rec, const std::string& status,
                         const std::string& note) {
    json j;
    j["config_index"] = rec.config_index;
    j["repeat"] = rec.repeat;
    j["fold"] = rec.fold;
    j["status"] = status;
    if (!note.empty()) j["note"] = note;
    j["epoch_auc"] = rec.epoch_auc;
    j["best_auc"] = rec.best_auc;
    j["best_epoch"] = rec.best_epoch;
    return j;
}

struct LoadedRun {
    EvalRecord record;
    std::string status;
    std::string note;
};

std::optional<LoadedRun> try_load_run(const fs::path& path, int expect_epochs) {
    if (!fs::exists(path)) return std::nullopt;
    try {
        json j = json::parse(read_text(path));
        LoadedRun run;
        run.status = j.at("status");
        run.note = j.value("note", "");
        run.record.config_index = j.at("config_index");
        run.record.repeat = j.at("repeat");
        run.record.fold = j.at("fold");
        run.record.epoch_auc = j.at("epoch_auc").get<std::vector<double>>();
        run.record.best_auc = j.at("best_auc");
        run.record.best_epoch = j.at("best_epoch");
        if (run.status == "done" &&
            run.record.epoch_auc.size() != static_cast<std::size_t>(expect_epochs)) {
            return std::nullopt;  // stale cache from a different plan
        }
        return run;
    } catch (const std::exception&) {
        return std::nullopt;  // partial or corrupt file: redo the run
    }
}

/// The test-set protocol shared by compare, the sweeps and train-one:
/// stratified inner split, early-stopped training, one test evaluation.
struct TestEval {
    double test_auc = 0.0;
    double best_val_auc = 0.0;
    int best_epoch = -1;   // 0-based
    int epochs_run = 0;
    bool early_stopped = false;
    ModelConfig config;
    ModelParams params;  // best snapshot
    std::vector<double> train_loss;
    std::vector<double> val_auc;
};

TestEval run_test_protocol(const ExperimentPlan& plan, const PreparedData& prep,
                           const MethodSpec& spec, int repeat) {
    HoldoutSplit inner;
    if (prep.preset_inner && repeat == 0) {
        inner = *prep.preset_inner;
    } else {
        inner = stratified_holdout(
            prep.strata, plan.val_fraction,
            derive_seed(plan.base_seed, "inner|" + plan.drug + "|" + to_string(spec.method),
                        repeat));
    }

    TrainSet train_set{take_rows(prep.x_train, inner.train), take(prep.y_train, inner.train)};
    EvalSet val_set{take_rows(prep.x_train, inner.held_out),
                    take(prep.resp_train, inner.held_out)};
    if (!both_classes(val_set.responder)) {
        throw std::runtime_error("undefined-metric error: single-class validation split");
    }

    TestEval out;
    out.config = plan.model_config(spec, static_cast<int>(prep.x_train.cols()));
    CircuitPlan circuit = build_circuit(out.config.circuit);

    TrainConfig tc;
    tc.batch_size = plan.batch_size;
    tc.epochs = plan.epochs;
    tc.learning_rate = spec.config.lr;
    tc.early_stop_patience = plan.patience;
    tc.early_stopping = true;
    tc.seed = derive_seed(plan.base_seed, "test|" + plan.drug + "|" + to_string(spec.method),
                          repeat);

    ModelParams init = init_params(out.config, derive_seed(tc.seed, "init"));
    TrainTrace trace = train(out.config, circuit, std::move(init), train_set, val_set, tc);

    out.best_val_auc = trace.best_auc;
    out.best_epoch = trace.best_epoch;
    out.epochs_run = static_cast<int>(trace.val_auc.size());
    out.early_stopped = trace.early_stopped;
    out.params = trace.best_params;
    out.train_loss = trace.train_loss;
    out.val_auc = trace.val_auc;

    Eigen::VectorXd test_pred =
        model_forward(out.config, circuit, out.params, prep.x_test, Mode::Eval);
    out.test_auc = response_auc(test_pred, prep.resp_test);
    return out;
}

std::string pipeline_extra_json(const ExperimentPlan& plan, const PreparedData& prep) {
    json j;
    j["drug"] = plan.drug;
    j["kept_genes"] = prep.kept_genes;
    j["label_norm"] = {{"mean", prep.label_norm.mean}, {"std", prep.label_norm.std}};
    return j.dump();
}

void write_curves_csv(const std::vector<GridPoint>& points,
                      const std::vector<std::vector<EvalRecord>>& by_config,
                      const fs::path& path) {
    std::ostringstream csv;
    csv << "config_index,n1,n2,n3,lr,epoch,mean_auc,is_best\n";
    for (std::size_t c = 0; c < by_config.size(); ++c) {
        if (by_config[c].empty()) continue;
        CvAggregate agg = aggregate_cv(by_config[c]);
        for (std::size_t e = 0; e < agg.mean_auc.size(); ++e) {
            csv << c << "," << points[c].n1 << "," << points[c].n2 << "," << points[c].n3
                << "," << format_double(points[c].lr) << "," << (e + 1) << ","
                << format_double(agg.mean_auc[e]) << ","
                << (static_cast<int>(e) == agg.best_epoch ? 1 : 0) << "\n";
        }
    }
    write_text_atomic(path, csv.str());
}

}  // namespace

void run_grid_search(const ExperimentPlan& plan) {
    Dataset data = load_plan_dataset(plan);
    PreparedData prep = prepare_data(data, plan);
    const std::vector<GridPoint> points = enumerate_grid(plan.grid);
    const std::vector<Eigen::VectorXi> folds = stratified_kfold(
        prep.strata, plan.folds, plan.repeats, derive_seed(plan.base_seed, "folds|" + plan.drug));

    const std::string method_name = to_string(plan.grid_method.method);
    const fs::path runs_dir = fs::path(plan.out_dir) / "runs" / method_name;
    fs::create_directories(runs_dir);

    struct Job {
        int config_index, repeat, fold;
    };
    std::vector<Job> jobs;
    for (int c = 0; c < static_cast<int>(points.size()); ++c) {
        for (int r = 0; r < plan.repeats; ++r) {
            for (int f = 0; f < plan.folds; ++f) jobs.push_back({c, r, f});
        }
    }

    std::vector<LoadedRun> results(jobs.size());
    std::vector<RunStatus> statuses(jobs.size());
    std::atomic<int> failures{0};

    parallel_for(plan.workers, static_cast<int>(jobs.size()), [&](int ji) {
        const Job& job = jobs[static_cast<std::size_t>(ji)];
        const std::string id = run_id(job.config_index, job.repeat, job.fold);
        const fs::path run_path = runs_dir / (id + ".json");
        auto t0 = std::chrono::steady_clock::now();

        if (auto cached = try_load_run(run_path, plan.epochs)) {
            results[static_cast<std::size_t>(ji)] = *cached;
            statuses[static_cast<std::size_t>(ji)] = {id, "cached:" + cached->status, "", 0.0};
            if (cached->status == "failed") failures.fetch_add(1);
            return;
        }

        LoadedRun run;
        run.record.drug = plan.drug;
        run.record.config_index = job.config_index;
        run.record.repeat = job.repeat;
        run.record.fold = job.fold;
        try {
            const Eigen::VectorXi& assign = folds[static_cast<std::size_t>(job.repeat)];
            std::vector<int> tr, va;
            for (Eigen::Index i = 0; i < assign.size(); ++i) {
                (assign[i] == job.fold ? va : tr).push_back(static_cast<int>(i));
            }
            std::vector<int> all_genes(static_cast<std::size_t>(prep.x_train.cols()));
            for (std::size_t i = 0; i < all_genes.size(); ++i) {
                all_genes[i] = static_cast<int>(i);
            }
            EvalSet val_set{take_rows_cols(prep.x_train, va, all_genes),
                            take(prep.resp_train, va)};
            if (!both_classes(val_set.responder)) {
                run.status = "skipped";
                run.note = "single-class validation fold";
            } else {
                TrainSet train_set{take_rows_cols(prep.x_train, tr, all_genes),
                                   take(prep.y_train, tr)};
                MethodSpec spec = plan.grid_method;
                spec.config = points[static_cast<std::size_t>(job.config_index)];
                ModelConfig config =
                    plan.model_config(spec, static_cast<int>(prep.x_train.cols()));
                CircuitPlan circuit = build_circuit(config.circuit);

                TrainConfig tc;
                tc.batch_size = plan.batch_size;
                tc.epochs = plan.epochs;
                tc.learning_rate = spec.config.lr;
                tc.early_stop_patience = plan.patience;
                tc.early_stopping = false;  // CV scores all epochs
                tc.seed = derive_seed(plan.base_seed, "cv|" + plan.drug + "|" + method_name,
                                      job.config_index, job.repeat, job.fold);

                ModelParams init = init_params(config, derive_seed(tc.seed, "init"));
                TrainTrace trace =
                    train(config, circuit, std::move(init), train_set, val_set, tc);
                run.record.epoch_auc = trace.val_auc;
                run.record.best_auc = trace.best_auc;
                run.record.best_epoch = trace.best_epoch;
                run.status = "done";
            }
        } catch (const std::exception& e) {
            run.status = "failed";
            run.note = e.what();
            failures.fetch_add(1);
        }

        write_text_atomic(run_path,
                          eval_record_to_json(run.record, run.status, run.note).dump(2) + "\n");
        auto t1 = std::chrono::steady_clock::now();
        results[static_cast<std::size_t>(ji)] = run;
        statuses[static_cast<std::size_t>(ji)] = {
            id, run.status, run.note,
            std::chrono::duration<double, std::milli>(t1 - t0).count()};
    });

    if (failures.load() * 10 > static_cast<int>(jobs.size())) {
        json summary;
        summary["error"] = "grid search aborted: more than 10% of runs failed";
        summary["failed_runs"] = json::array();
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].status == "failed") {
                summary["failed_runs"].push_back(
                    {{"id", statuses[i].id}, {"note", results[i].note}});
            }
        }
        write_text_atomic(fs::path(plan.out_dir) / "failures.json", summary.dump(2) + "\n");
        throw std::runtime_error("grid search aborted: >10% of runs failed (see failures.json)");
    }

    // Aggregate, rank and write the result tables.
    std::vector<std::vector<EvalRecord>> by_config(points.size());
    std::vector<int> skipped(points.size(), 0), failed(points.size(), 0);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& run = results[i];
        if (run.status == "done") {
            by_config[static_cast<std::size_t>(run.record.config_index)].push_back(run.record);
        } else if (run.status == "skipped") {
            ++skipped[static_cast<std::size_t>(run.record.config_index)];
        } else {
            ++failed[static_cast<std::size_t>(run.record.config_index)];
        }
    }

    struct Ranked {
        int config_index;
        double best_value = -1.0;
        int best_epoch = 0;
        int runs = 0;
    };
    std::vector<Ranked> ranked;
    for (std::size_t c = 0; c < points.size(); ++c) {
        Ranked row{static_cast<int>(c), -1.0, 0, 0};
        if (!by_config[c].empty()) {
            CvAggregate agg = aggregate_cv(by_config[c]);
            row.best_value = agg.best_value;
            row.best_epoch = agg.best_epoch;
            row.runs = agg.runs;
        }
        ranked.push_back(row);
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.best_value != b.best_value) return a.best_value > b.best_value;
        if (a.best_epoch != b.best_epoch) return a.best_epoch < b.best_epoch;
        return a.config_index < b.config_index;
    });

    std::ostringstream records_csv;
    records_csv << "config_index,n1,n2,n3,lr,repeat,fold,status,best_auc,best_epoch\n";
    for (const auto& run : results) {
        const auto& gp = points[static_cast<std::size_t>(run.record.config_index)];
        records_csv << run.record.config_index << "," << gp.n1 << "," << gp.n2 << ","
                    << gp.n3 << "," << format_double(gp.lr) << "," << run.record.repeat
                    << "," << run.record.fold << "," << run.status << ",";
        if (run.status == "done") {
            records_csv << format_double(run.record.best_auc) << ","
                        << (run.record.best_epoch + 1);
        } else {
            records_csv << ",";
        }
        records_csv << "\n";
    }
    const fs::path records_path = fs::path(plan.out_dir) / "eval_records.csv";
    write_text_atomic(records_path, records_csv.str());

    std::ostringstream csv;
    csv << "rank,config_index,n1,n2,n3,lr,best_mean_auc,best_epoch,runs_used,"
           "runs_skipped,runs_failed\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& row = ranked[i];
        const auto& gp = points[static_cast<std::size_t>(row.config_index)];
        csv << (i + 1) << "," << row.config_index << "," << gp.n1 << "," << gp.n2 << ","
            << gp.n3 << "," << format_double(gp.lr) << "," << format_double(row.best_value)
            << "," << (row.best_epoch + 1) << "," << row.runs << ","
            << skipped[static_cast<std::size_t>(row.config_index)] << ","
            << failed[static_cast<std::size_t>(row.config_index)] << "\n";
    }
    const fs::path results_path = fs::path(plan.out_dir) / "grid_results.csv";
    write_text_atomic(results_path, csv.str());

    const fs::path curves_path = fs::path(plan.out_dir) / "grid_curves.csv";
    write_curves_csv(points, by_config, curves_path);

    json best;
    if (!ranked.empty() && ranked.front().runs > 0) {
        const auto& top = ranked.front();
        best["config_index"] = top.config_index;
        best["config"] = grid_point_to_json(points[static_cast<std::size_t>(top.config_index)]);
        best["best_mean_auc"] = top.best_value;
        best["best_epoch"] = top.best_epoch + 1;
    }
    const fs::path best_path = fs::path(plan.out_dir) / "best_config.json";
    write_text_atomic(best_path, best.dump(2) + "\n");

    write_manifest(plan, "grid-search", statuses,
                   {results_path, curves_path, best_path, records_path});
}

void run_comparison(const ExperimentPlan& plan) {
    if (plan.methods.empty()) {
        throw std::invalid_argument("configuration error: compare needs a methods list");
    }
    Dataset data = load_plan_dataset(plan);
    PreparedData prep = prepare_data(data, plan);

    struct Cell {
        std::string method;
        int repeat;
        bool ok = false;
        std::string note;
        TestEval eval;
    };
    std::vector<Cell> cells;
    for (const auto& m : plan.methods) {
        for (int rep = 0; rep < plan.test_repeats; ++rep) {
            cells.push_back({to_string(m.method), rep, false, "", {}});
        }
    }

    std::vector<RunStatus> statuses(cells.size());
    parallel_for(plan.workers, static_cast<int>(cells.size()), [&](int i) {
        Cell& cell = cells[static_cast<std::size_t>(i)];
        const MethodSpec& spec = plan.methods[static_cast<std::size_t>(i) /
                                              static_cast<std::size_t>(plan.test_repeats)];
        auto t0 = std::chrono::steady_clock::now();
        try {
            cell.eval = run_test_protocol(plan, prep, spec, cell.repeat);
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.note = e.what();
        }
        auto t1 = std::chrono::steady_clock::now();
        statuses[static_cast<std::size_t>(i)] = {
            cell.method + "_rep" + std::to_string(cell.repeat), cell.ok ? "done" : "failed",
            cell.note, std::chrono::duration<double, std::milli>(t1 - t0).count()};
    });

    std::ostringstream csv;
    csv << "method,drug,repeat,test_auc,best_val_auc,best_epoch,epochs_run,early_stopped\n";
    std::vector<fs::path> artifacts;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& cell = cells[i];
        if (!cell.ok) {
            csv << cell.method << "," << plan.drug << "," << cell.repeat << ",,,,,\n";
            continue;
        }
        csv << cell.method << "," << plan.drug << "," << cell.repeat << ","
            << format_double(cell.eval.test_auc) << ","
            << format_double(cell.eval.best_val_auc) << "," << (cell.eval.best_epoch + 1)
            << "," << cell.eval.epochs_run << "," << (cell.eval.early_stopped ? 1 : 0)
            << "\n";
        const fs::path ck_path = fs::path(plan.out_dir) / "checkpoints" /
                                 (cell.method + "_rep" + std::to_string(cell.repeat) + ".json");
        fs::create_directories(ck_path.parent_path());
        save_checkpoint(ck_path.string(), cell.eval.config, cell.eval.params,
                        pipeline_extra_json(plan, prep));
        artifacts.push_back(ck_path);
    }
    const fs::path csv_path = fs::path(plan.out_dir) / "comparison.csv";
    write_text_atomic(csv_path, csv.str());
    artifacts.push_back(csv_path);
    write_manifest(plan, "compare", statuses, artifacts);

    for (const auto& cell : cells) {
        if (!cell.ok) {
            throw std::runtime_error("comparison cell " + cell.method + " failed: " +
                                     cell.note);
        }
    }
}

void run_ar_sweep(const ExperimentPlan& plan, char which) {
    if (!plan.sweep_config) {
        throw std::invalid_argument("configuration error: sweep needs sweep_config in the plan");
    }
    std::vector<double> values;
    if (which == 'a') {
        values = plan.a_values;
    } else if (which == 'r') {
        values = plan.r_values;
        if (values.empty()) {
            values = {kPi / 4,     kPi / 2, 3 * kPi / 4, kPi,
                      3 * kPi / 2, 2 * kPi, 4 * kPi,     8 * kPi};
        }
    } else {
        throw std::invalid_argument("sweep axis must be 'a' or 'r'");
    }
    if (values.empty()) {
        throw std::invalid_argument("configuration error: empty sweep value list");
    }

    Dataset data = load_plan_dataset(plan);
    PreparedData prep = prepare_data(data, plan);

    struct Cell {
        double value;
        int repeat;
        bool ok = false;
        std::string note;
        TestEval eval;
    };
    std::vector<Cell> cells;
    for (double v : values) {
        for (int rep = 0; rep < plan.test_repeats; ++rep) cells.push_back({v, rep, false, "", {}});
    }

    std::vector<RunStatus> statuses(cells.size());
    parallel_for(plan.workers, static_cast<int>(cells.size()), [&](int i) {
        Cell& cell = cells[static_cast<std::size_t>(i)];
        MethodSpec spec;
        spec.method = Method::ProposedMulti;  // sweep measurements are integrated by the head
        spec.config = *plan.sweep_config;
        spec.a = which == 'a' ? cell.value : 20.0;
        spec.r = which == 'r' ? cell.value : kPi / 2;
        auto t0 = std::chrono::steady_clock::now();
        try {
            cell.eval = run_test_protocol(plan, prep, spec, cell.repeat);
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.note = e.what();
        }
        auto t1 = std::chrono::steady_clock::now();
        statuses[static_cast<std::size_t>(i)] = {
            std::string(1, which) + "=" + format_double(cell.value) + "_rep" +
                std::to_string(cell.repeat),
            cell.ok ? "done" : "failed", cell.note,
            std::chrono::duration<double, std::milli>(t1 - t0).count()};
    });

    std::ostringstream csv;
    csv << which << ",drug,repeat,test_auc,best_val_auc,best_epoch,epochs_run,early_stopped\n";
    for (const Cell& cell : cells) {
        if (!cell.ok) {
            csv << format_double(cell.value) << "," << plan.drug << "," << cell.repeat
                << ",,,,,\n";
            continue;
        }
        csv << format_double(cell.value) << "," << plan.drug << "," << cell.repeat << ","
            << format_double(cell.eval.test_auc) << ","
            << format_double(cell.eval.best_val_auc) << "," << (cell.eval.best_epoch + 1)
            << "," << cell.eval.epochs_run << "," << (cell.eval.early_stopped ? 1 : 0) << "\n";
    }
    const fs::path csv_path =
        fs::path(plan.out_dir) / (which == 'a' ? "sweep_a.csv" : "sweep_r.csv");
    write_text_atomic(csv_path, csv.str());
    write_manifest(plan, which == 'a' ? "sweep-a" : "sweep-r", statuses, {csv_path});

    for (const auto& cell : cells) {
        if (!cell.ok) {
            throw std::runtime_error("sweep cell " + std::string(1, which) + "=" +
                                     format_double(cell.value) + " failed: " + cell.note);
        }
    }
}

void emit_distribution(const ExperimentPlan& plan, const std::string& checkpoint_path,
                       int n_samples, const std::string& out_csv) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.config.kind != ModelKind::Hybrid) {
        throw std::invalid_argument("distribution export needs a hybrid-model checkpoint");
    }
    Dataset data = load_plan_dataset(plan);
    PreparedData prep = prepare_data(data, plan);
    if (!ck.extra_json.empty()) {
        json pipe = json::parse(ck.extra_json);
        if (pipe.contains("kept_genes") &&
            pipe["kept_genes"].get<std::vector<int>>() != prep.kept_genes) {
            throw std::runtime_error(
                "checkpoint was trained with a different gene selection than this plan");
        }
    }
    if (static_cast<int>(prep.x_train.cols()) != ck.config.encoder.input_dim) {
        throw std::runtime_error("checkpoint input width does not match the prepared data");
    }

    const int n = std::min<int>(n_samples, static_cast<int>(prep.x_train.rows()));
    Eigen::MatrixXd batch = prep.x_train.topRows(n);

    CircuitPlan circuit = build_circuit(ck.config.circuit);
    ForwardCache cache;
    model_forward(ck.config, circuit, ck.params, batch, Mode::Eval, &cache);

    std::ostringstream csv;
    csv << "sample_id,dim,phi,phi_prime\n";
    for (int s = 0; s < n; ++s) {
        for (Eigen::Index d = 0; d < cache.phi.cols(); ++d) {
            csv << prep.train_ids[static_cast<std::size_t>(s)] << "," << d << ","
                << format_double(cache.phi(s, d)) << ","
                << format_double(cache.phi_prime(s, d)) << "\n";
        }
    }
    write_text_atomic(out_csv, csv.str());

    // Histogram summary, enough to redraw the distribution figure.
    auto histogram = [](const Eigen::MatrixXd& m, int bins) {
        json h;
        const double lo = m.minCoeff();
        const double hi = m.maxCoeff();
        std::vector<int> counts(static_cast<std::size_t>(bins), 0);
        const double width = hi > lo ? (hi - lo) / bins : 1.0;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                int b = static_cast<int>((m(i, j) - lo) / width);
                b = std::clamp(b, 0, bins - 1);
                ++counts[static_cast<std::size_t>(b)];
            }
        }
        h["min"] = lo;
        h["max"] = hi;
        h["counts"] = counts;
        return h;
    };
    json summary;
    summary["samples"] = n;
    summary["dims"] = cache.phi.cols();
    summary["phi"] = histogram(cache.phi, 61);
    summary["phi_prime"] = histogram(cache.phi_prime, 61);
    if (ck.config.norm.is_tanh_family()) {
        const double r = ck.config.norm.eff_r();
        summary["r"] = r;
        summary["boundary_crowding_fraction"] =
            static_cast<double>((cache.phi_prime.array().abs() > 0.99 * r).count()) /
            static_cast<double>(cache.phi_prime.size());
    }
    fs::path summary_path = fs::path(out_csv).replace_extension(".summary.json");
    write_text_atomic(summary_path, summary.dump(2) + "\n");
}

void emit_curves(const ExperimentPlan& plan, const std::string& out_csv) {
    const std::vector<GridPoint> points = enumerate_grid(plan.grid);
    const fs::path runs_dir =
        fs::path(plan.out_dir) / "runs" / to_string(plan.grid_method.method);
    if (!fs::exists(runs_dir)) {
        throw std::runtime_error("no cached grid runs under " + runs_dir.string() +
                                 "; run grid-search first");
    }
    std::vector<std::vector<EvalRecord>> by_config(points.size());
    for (int c = 0; c < static_cast<int>(points.size()); ++c) {
        for (int r = 0; r < plan.repeats; ++r) {
            for (int f = 0; f < plan.folds; ++f) {
                auto run = try_load_run(runs_dir / (run_id(c, r, f) + ".json"), plan.epochs);
                if (run && run->status == "done") {
                    by_config[static_cast<std::size_t>(c)].push_back(run->record);
                }
            }
        }
    }
    write_curves_csv(points, by_config, out_csv);
}

void train_one(const ExperimentPlan& plan, const MethodSpec& spec) {
    Dataset data = load_plan_dataset(plan);
    PreparedData prep = prepare_data(data, plan);

    auto t0 = std::chrono::steady_clock::now();
    TestEval eval = run_test_protocol(plan, prep, spec, 0);
    auto t1 = std::chrono::steady_clock::now();

    const fs::path out = fs::path(plan.out_dir);
    const fs::path ck_path = out / ("checkpoint_" + to_string(spec.method) + ".json");
    fs::create_directories(out);
    save_checkpoint(ck_path.string(), eval.config, eval.params,
                    pipeline_extra_json(plan, prep));

    std::ostringstream trace_csv;
    trace_csv << "epoch,train_loss,val_auc\n";
    for (std::size_t e = 0; e < eval.val_auc.size(); ++e) {
        trace_csv << (e + 1) << "," << format_double(eval.train_loss[e]) << ","
                  << format_double(eval.val_auc[e]) << "\n";
    }
    const fs::path trace_path = out / ("trace_" + to_string(spec.method) + ".csv");
    write_text_atomic(trace_path, trace_csv.str());

    SplitPlan split;
    split.train = prep.train_rows;
    split.test = prep.test_rows;
    HoldoutSplit inner;
    if (prep.preset_inner) {
        inner = *prep.preset_inner;
    } else {
        inner = stratified_holdout(
            prep.strata, plan.val_fraction,
            derive_seed(plan.base_seed, "inner|" + plan.drug + "|" + to_string(spec.method),
                        0));
    }
    split.inner_train = inner.train;
    split.inner_val = inner.held_out;
    split.strata = prep.strata;
    const fs::path split_path = out / "split_plan.json";
    write_text_atomic(split_path, split.to_json() + "\n");

    json summary;
    summary["drug"] = plan.drug;
    summary["method"] = to_string(spec.method);
    summary["config"] = grid_point_to_json(spec.config);
    summary["a"] = spec.a;
    summary["r"] = spec.r;
    summary["test_auc"] = eval.test_auc;
    summary["best_val_auc"] = eval.best_val_auc;
    summary["best_epoch"] = eval.best_epoch + 1;
    summary["epochs_run"] = eval.epochs_run;
    summary["early_stopped"] = eval.early_stopped;
    summary["kept_genes"] = prep.kept_genes.size();
    summary["join_warnings"] = data.join_warnings;
    const fs::path summary_path = out / ("summary_" + to_string(spec.method) + ".json");
    write_text_atomic(summary_path, summary.dump(2) + "\n");

    std::vector<RunStatus> statuses{
        {"train_one_" + to_string(spec.method), "done", "",
         std::chrono::duration<double, std::milli>(t1 - t0).count()}};
    write_manifest(plan, "train-one", statuses,
                   {ck_path, trace_path, split_path, summary_path});
}

}  // namespace qhr
