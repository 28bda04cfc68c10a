#include "qhr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "qhr/io.hpp"
#include "qhr/rng.hpp"

namespace qhr {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
        out.back().pop_back();
    }
    return out;
}

double parse_double(const std::string& cell, const std::string& file, std::size_t row,
                    std::size_t col) {
    double v = 0.0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw std::runtime_error("malformed numeric value '" + cell + "' in " + file +
                                 " at row " + std::to_string(row) + ", column " +
                                 std::to_string(col));
    }
    return v;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(split_csv_line(line));
    }
    if (rows.empty()) throw std::runtime_error("empty CSV file " + path);
    return rows;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name,
                        const std::string& file) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw std::runtime_error("column '" + name + "' not found in " + file);
}

}  // namespace

Dataset load_dataset(const std::string& expression_csv, const std::string& response_csv,
                     const std::string& meta_json) {
    nlohmann::json meta = nlohmann::json::parse(read_text(meta_json));
    const std::string sample_col = meta.value("sample_column", "sample_id");
    const std::string label_col = meta.value("label_column", "log_ic50");
    const std::string resp_col = meta.value("response_column", "responder");

    auto expr_rows = read_csv(expression_csv);
    const auto& expr_header = expr_rows.front();
    if (expr_header.size() < 2 || expr_header[0] != sample_col) {
        throw std::runtime_error("expression file must start with the '" + sample_col +
                                 "' column");
    }
    const std::size_t n_genes = expr_header.size() - 1;

    std::unordered_map<std::string, std::size_t> expr_index;
    for (std::size_t r = 1; r < expr_rows.size(); ++r) {
        const auto& row = expr_rows[r];
        if (row.size() != expr_header.size()) {
            throw std::runtime_error("ragged row " + std::to_string(r + 1) + " in " +
                                     expression_csv);
        }
        if (!expr_index.emplace(row[0], r).second) {
            throw std::runtime_error("duplicated sample id '" + row[0] + "' in " +
                                     expression_csv);
        }
    }

    auto resp_rows = read_csv(response_csv);
    const auto& resp_header = resp_rows.front();
    const std::size_t id_at = find_column(resp_header, sample_col, response_csv);
    const std::size_t label_at = find_column(resp_header, label_col, response_csv);
    const std::size_t resp_at = find_column(resp_header, resp_col, response_csv);

    Dataset data;
    data.drug = meta.value("drug", "");
    data.gene_ids.assign(expr_header.begin() + 1, expr_header.end());

    std::vector<std::size_t> expr_row_of;
    std::unordered_map<std::string, bool> seen_resp;
    std::vector<double> labels;
    std::vector<int> responders;
    for (std::size_t r = 1; r < resp_rows.size(); ++r) {
        const auto& row = resp_rows[r];
        if (row.size() != resp_header.size()) {
            throw std::runtime_error("ragged row " + std::to_string(r + 1) + " in " +
                                     response_csv);
        }
        const std::string& id = row[id_at];
        if (!seen_resp.emplace(id, true).second) {
            throw std::runtime_error("duplicated sample id '" + id + "' in " + response_csv);
        }
        auto hit = expr_index.find(id);
        if (hit == expr_index.end()) {
            ++data.join_warnings;  // response row without expression: dropped
            continue;
        }
        expr_row_of.push_back(hit->second);
        data.sample_ids.push_back(id);
        labels.push_back(parse_double(row[label_at], response_csv, r + 1, label_at + 1));
        const double resp = parse_double(row[resp_at], response_csv, r + 1, resp_at + 1);
        responders.push_back(resp != 0.0 ? 1 : 0);
    }
    if (data.sample_ids.empty()) {
        throw std::runtime_error("no response rows joined against " + expression_csv);
    }

    const Eigen::Index n = static_cast<Eigen::Index>(data.sample_ids.size());
    data.x.resize(n, static_cast<Eigen::Index>(n_genes));
    data.log_ic50.resize(n);
    data.responder.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = expr_rows[expr_row_of[static_cast<std::size_t>(i)]];
        for (std::size_t g = 0; g < n_genes; ++g) {
            data.x(i, static_cast<Eigen::Index>(g)) =
                parse_double(row[g + 1], expression_csv,
                             expr_row_of[static_cast<std::size_t>(i)] + 1, g + 2);
        }
        data.log_ic50[i] = labels[static_cast<std::size_t>(i)];
        data.responder[i] = responders[static_cast<std::size_t>(i)];
    }
    return data;
}

std::vector<int> variance_filter(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 const std::vector<int>& train_rows, double threshold) {
    if (train_rows.size() < 2) {
        throw std::invalid_argument("variance filter needs at least 2 training samples");
    }
    std::vector<int> kept;
    const double inv_n = 1.0 / static_cast<double>(train_rows.size());
    for (Eigen::Index g = 0; g < x.cols(); ++g) {
        double mean = 0.0;
        for (int r : train_rows) mean += x(r, g);
        mean *= inv_n;
        double var = 0.0;
        for (int r : train_rows) {
            const double d = x(r, g) - mean;
            var += d * d;
        }
        var *= inv_n;  // population convention
        if (var > threshold) kept.push_back(static_cast<int>(g));
    }
    if (kept.empty()) {
        throw std::runtime_error("configuration error: variance filter removed every gene");
    }
    return kept;
}

Eigen::VectorXi stratify(const Eigen::Ref<const Eigen::VectorXd>& labels, int n_bins,
                         bool* degenerate) {
    if (labels.size() == 0 || n_bins < 1) {
        throw std::invalid_argument("stratify needs labels and n_bins >= 1");
    }
    const double lo = labels.minCoeff();
    const double hi = labels.maxCoeff();
    Eigen::VectorXi strata = Eigen::VectorXi::Zero(labels.size());
    if (degenerate) *degenerate = false;
    if (!(hi > lo)) {
        if (degenerate) *degenerate = true;  // constant labels: one stratum
        return strata;
    }
    const double width_inv = static_cast<double>(n_bins) / (hi - lo);
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        int b = static_cast<int>(std::floor((labels[i] - lo) * width_inv));
        strata[i] = std::clamp(b, 0, n_bins - 1);  // max value closes the top bin
    }
    return strata;
}

std::vector<Eigen::VectorXi> stratified_kfold(const Eigen::Ref<const Eigen::VectorXi>& strata,
                                              int k, int repeats, std::uint64_t seed) {
    const Eigen::Index n = strata.size();
    if (k < 2 || n < k) {
        throw std::invalid_argument("configuration error: k-fold needs 2 <= k <= n");
    }
    const int max_stratum = strata.maxCoeff();
    std::vector<std::vector<int>> by_stratum(static_cast<std::size_t>(max_stratum) + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        by_stratum[static_cast<std::size_t>(strata[i])].push_back(static_cast<int>(i));
    }

    std::vector<Eigen::VectorXi> folds_per_repeat;
    for (int rep = 0; rep < repeats; ++rep) {
        Rng rng(derive_seed(seed, "kfold", rep));
        Eigen::VectorXi folds(n);
        int deal = 0;  // carries across strata so overall fold sizes balance
        for (auto members : by_stratum) {
            shuffle_in_place(members, rng);
            for (int idx : members) {
                folds[idx] = deal % k;
                ++deal;
            }
        }
        for (int f = 0; f < k; ++f) {
            if ((folds.array() == f).count() == 0) {
                throw std::runtime_error("configuration error: fold " + std::to_string(f) +
                                         " is empty");
            }
        }
        folds_per_repeat.push_back(std::move(folds));
    }
    return folds_per_repeat;
}

HoldoutSplit random_holdout(int n_samples, double held_out_fraction, std::uint64_t seed) {
    if (n_samples < 2) throw std::invalid_argument("holdout needs at least 2 samples");
    int n_held = static_cast<int>(std::lround(n_samples * held_out_fraction));
    n_held = std::clamp(n_held, 1, n_samples - 1);
    Rng rng(derive_seed(seed, "holdout"));
    std::vector<int> order = shuffled_indices(n_samples, rng);
    HoldoutSplit split;
    split.held_out.assign(order.begin(), order.begin() + n_held);
    split.train.assign(order.begin() + n_held, order.end());
    std::sort(split.held_out.begin(), split.held_out.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

HoldoutSplit stratified_holdout(const Eigen::Ref<const Eigen::VectorXi>& strata,
                                double held_out_fraction, std::uint64_t seed) {
    const int n = static_cast<int>(strata.size());
    if (n < 2) throw std::invalid_argument("holdout needs at least 2 samples");
    int total = static_cast<int>(std::lround(n * held_out_fraction));
    total = std::clamp(total, 1, n - 1);

    const int max_stratum = strata.maxCoeff();
    std::vector<std::vector<int>> by_stratum(static_cast<std::size_t>(max_stratum) + 1);
    for (int i = 0; i < n; ++i) {
        by_stratum[static_cast<std::size_t>(strata[i])].push_back(i);
    }

    // Largest-remainder allocation of the held-out quota across strata.
    std::vector<int> quota(by_stratum.size(), 0);
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (std::size_t s = 0; s < by_stratum.size(); ++s) {
        const double exact = by_stratum[s].size() * held_out_fraction;
        quota[s] = static_cast<int>(std::floor(exact));
        quota[s] = std::min<int>(quota[s], static_cast<int>(by_stratum[s].size()));
        assigned += quota[s];
        remainders.push_back({exact - quota[s], static_cast<int>(s)});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; i = (i + 1) % remainders.size()) {
        const int s = remainders[i].second;
        if (quota[static_cast<std::size_t>(s)] <
            static_cast<int>(by_stratum[static_cast<std::size_t>(s)].size())) {
            ++quota[static_cast<std::size_t>(s)];
            ++assigned;
        }
    }

    Rng rng(derive_seed(seed, "stratified-holdout"));
    HoldoutSplit split;
    for (std::size_t s = 0; s < by_stratum.size(); ++s) {
        auto members = by_stratum[s];
        shuffle_in_place(members, rng);
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (static_cast<int>(i) < quota[s]) {
                split.held_out.push_back(members[i]);
            } else {
                split.train.push_back(members[i]);
            }
        }
    }
    std::sort(split.held_out.begin(), split.held_out.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

std::string SplitPlan::to_json() const {
    nlohmann::json j;
    j["train"] = train;
    j["test"] = test;
    j["inner_train"] = inner_train;
    j["inner_val"] = inner_val;
    j["strata"] = std::vector<int>(strata.data(), strata.data() + strata.size());
    return j.dump(2);
}

SplitPlan SplitPlan::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SplitPlan plan;
    plan.train = j.at("train").get<std::vector<int>>();
    plan.test = j.at("test").get<std::vector<int>>();
    plan.inner_train = j.at("inner_train").get<std::vector<int>>();
    plan.inner_val = j.at("inner_val").get<std::vector<int>>();
    auto strata = j.at("strata").get<std::vector<int>>();
    plan.strata = Eigen::Map<Eigen::VectorXi>(strata.data(),
                                              static_cast<Eigen::Index>(strata.size()));
    return plan;
}

Dataset make_synth_dataset(const SynthSpec& spec) {
    if (spec.informative >= spec.genes - 2) {
        throw std::invalid_argument("synth spec: need informative < genes - 2");
    }
    Rng rng(spec.seed);
    Dataset data;
    data.drug = "synthetic";
    data.x.resize(spec.samples, spec.genes);
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        for (Eigen::Index g = 0; g < data.x.cols(); ++g) {
            data.x(i, g) = normal(rng);
        }
    }
    // Two planted near-constant genes for the variance filter to drop.
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        data.x(i, spec.genes - 1) = 3.7 + 0.01 * normal(rng);
        data.x(i, spec.genes - 2) = -1.2 + 0.01 * normal(rng);
    }

    Eigen::VectorXd w(spec.informative);
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = normal(rng);
    w /= w.norm();  // unit-variance teacher signal

    data.log_ic50.resize(spec.samples);
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        const double signal = data.x.row(i).head(spec.informative).dot(w);
        data.log_ic50[i] = 2.0 + 1.5 * (signal + spec.noise * normal(rng));
    }

    // Responders: the lowest log(IC50) quantile.
    std::vector<double> sorted(data.log_ic50.data(), data.log_ic50.data() + spec.samples);
    std::sort(sorted.begin(), sorted.end());
    const auto cut_at = static_cast<std::size_t>(
        std::clamp<double>(spec.responder_fraction * spec.samples, 1.0, spec.samples - 1.0));
    const double cut = sorted[cut_at];
    data.responder.resize(spec.samples);
    for (Eigen::Index i = 0; i < data.log_ic50.size(); ++i) {
        data.responder[i] = data.log_ic50[i] < cut ? 1 : 0;
    }

    char buf[32];
    for (int i = 0; i < spec.samples; ++i) {
        std::snprintf(buf, sizeof(buf), "CL%04d", i + 1);
        data.sample_ids.push_back(buf);
    }
    for (int g = 0; g < spec.genes; ++g) {
        std::snprintf(buf, sizeof(buf), "G%04d", g + 1);
        data.gene_ids.push_back(buf);
    }
    return data;
}

void write_dataset_csv(const Dataset& data, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream expr;
    expr << "sample_id";
    for (const auto& g : data.gene_ids) expr << "," << g;
    expr << "\n";
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        expr << data.sample_ids[static_cast<std::size_t>(i)];
        for (Eigen::Index g = 0; g < data.x.cols(); ++g) {
            expr << "," << format_double(data.x(i, g));
        }
        expr << "\n";
    }
    write_text_atomic(std::filesystem::path(dir) / "expression.csv", expr.str());

    std::ostringstream resp;
    resp << "sample_id,log_ic50,responder\n";
    for (Eigen::Index i = 0; i < data.log_ic50.size(); ++i) {
        resp << data.sample_ids[static_cast<std::size_t>(i)] << ","
             << format_double(data.log_ic50[i]) << "," << data.responder[i] << "\n";
    }
    write_text_atomic(std::filesystem::path(dir) / "response.csv", resp.str());

    nlohmann::json meta;
    meta["drug"] = data.drug;
    meta["sample_column"] = "sample_id";
    meta["label_column"] = "log_ic50";
    meta["response_column"] = "responder";
    write_text_atomic(std::filesystem::path(dir) / "meta.json", meta.dump(2) + "\n");
}

}  // namespace qhr
