// Command-line front end: discrepancy computation, domain-adaptation
// training, sensitivity sweeps, gradient checks, and activation dumps.

#include "momentmatch/adaptation.hpp"
#include "momentmatch/discrepancy.hpp"
#include "momentmatch/gradcheck.hpp"
#include "momentmatch/network.hpp"
#include "momentmatch/samples.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mm = momentmatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumericalAbort = 3;

std::string format_double(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

std::string timestamp_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

/// Ordered key=value pairs echoed into every output file header.
class ResolvedConfig {
public:
    void add(const std::string& key, const std::string& value) { items_.emplace_back(key, value); }
    void add(const std::string& key, double value) { add(key, format_double(value)); }
    void add(const std::string& key, long long value) { add(key, std::to_string(value)); }

    std::string header_line() const {
        std::string out = "# config:";
        for (const auto& [k, v] : items_) out += " " + k + "=" + v;
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (const auto& [k, v] : items_) j[k] = v;
        return j;
    }

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

void write_header(std::ostream& out, const ResolvedConfig& config) {
    out << "# timestamp: " << timestamp_now() << "\n" << config.header_line() << "\n";
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
    return out;
}

// -- shared flag bundles --------------------------------------------------

struct DatasetFlags {
    std::string synthetic;  // "shift:0.8" style
    std::string source_path, target_path, target_test_path;
    std::string format = "dense";
    std::string label_column = "y";
    long long dim = 0;
    bool one_based = false;
    long long n_source = 500, n_target = 500, n_test = 500;

    void attach(CLI::App* cmd) {
        cmd->add_option("--synthetic", synthetic, "Synthetic task as kind:magnitude");
        cmd->add_option("--source", source_path, "Labeled source file");
        cmd->add_option("--target", target_path, "Unlabeled target file");
        cmd->add_option("--target-test", target_test_path, "Labeled target test file");
        cmd->add_option("--format", format, "File format: dense|sparse")
            ->check(CLI::IsMember({"dense", "sparse"}));
        cmd->add_option("--label-column", label_column, "Label column name (dense format)");
        cmd->add_option("--dim", dim, "Feature dimension (sparse format)");
        cmd->add_flag("--one-based", one_based, "Sparse indices are 1-based");
        cmd->add_option("--n-source", n_source, "Synthetic source size");
        cmd->add_option("--n-target", n_target, "Synthetic target size");
        cmd->add_option("--n-test", n_test, "Synthetic test size");
    }

    mm::DomainDataset build(std::uint64_t seed, ResolvedConfig& config) const {
        if (!synthetic.empty()) {
            auto colon = synthetic.find(':');
            if (colon == std::string::npos) {
                throw CLI::ValidationError("--synthetic", "expected kind:magnitude");
            }
            auto kind = mm::synthetic_kind_from_string(synthetic.substr(0, colon));
            double magnitude = std::stod(synthetic.substr(colon + 1));
            config.add("synthetic", synthetic);
            config.add("n_source", n_source);
            config.add("n_target", n_target);
            config.add("n_test", n_test);
            return mm::make_synthetic_pair(kind, magnitude, n_source, n_target, n_test, seed);
        }
        if (source_path.empty() || target_path.empty() || target_test_path.empty()) {
            throw CLI::ValidationError(
                "dataset", "need --synthetic or all of --source/--target/--target-test");
        }
        config.add("source", source_path);
        config.add("target", target_path);
        config.add("target_test", target_test_path);
        config.add("format", format);
        if (format == "sparse") {
            if (dim < 1) throw CLI::ValidationError("--dim", "required for sparse format");
            auto src = mm::load_sparse_bow(source_path, dim, one_based);
            auto tgt = mm::load_sparse_bow(target_path, dim, one_based);
            auto test = mm::load_sparse_bow(target_test_path, dim, one_based);
            return mm::DomainDataset(src, tgt.inputs, test, source_path + "->" + target_path);
        }
        auto src = mm::load_dense_csv(source_path, label_column).to_labeled();
        auto tgt = mm::load_dense_csv(target_path).matrix;
        auto test = mm::load_dense_csv(target_test_path, label_column).to_labeled();
        return mm::DomainDataset(src, tgt, test, source_path + "->" + target_path);
    }
};

struct ModelFlags {
    std::string measure = "cmd";
    long long K = 5;
    double beta = 1.0;
    double lambda = 1.0;
    std::string optimizer = "adadelta";
    long long epochs = 50;
    long long batch_size = 64;
    long long hidden = 16;
    std::string activation = "sigmoid";
    bool balance_source = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--discrepancy", measure, "Regularizer: cmd|mmd|mkl")
            ->check(CLI::IsMember({"cmd", "mmd", "mkl"}));
        cmd->add_option("--K", K, "Number of moment terms (cmd)");
        cmd->add_option("--beta", beta, "Gaussian kernel parameter (mmd)");
        cmd->add_option("--lambda", lambda, "Regularizer weight");
        cmd->add_option("--optimizer", optimizer, "Optimizer: sgd|adagrad|adadelta")
            ->check(CLI::IsMember({"sgd", "adagrad", "adadelta"}));
        cmd->add_option("--epochs", epochs, "Training epochs");
        cmd->add_option("--batch-size", batch_size, "Mini-batch size");
        cmd->add_option("--hidden", hidden, "Hidden layer width");
        cmd->add_option("--activation", activation, "Hidden activation: sigmoid|tanh")
            ->check(CLI::IsMember({"sigmoid", "tanh"}));
        cmd->add_flag("--balance-source", balance_source, "Class-balance source batches");
    }

    mm::DiscrepancySpec discrepancy() const {
        if (measure == "cmd") return mm::DiscrepancySpec::cmd(static_cast<int>(K), lambda);
        if (measure == "mmd") return mm::DiscrepancySpec::mmd(beta, lambda);
        return mm::DiscrepancySpec::mkl(lambda);
    }

    mm::TrainConfig train_config(const mm::DomainDataset& dataset, std::uint64_t seed,
                                 ResolvedConfig& config) const {
        mm::TrainConfig c;
        mm::Activation act =
            (activation == "tanh") ? mm::Activation::Tanh : mm::Activation::Sigmoid;
        c.layer_specs = {
            {dataset.source.input_dim(), hidden, act, 0.0, 1.0, true},
            {hidden, dataset.source.num_classes(), mm::Activation::Softmax, 0.0, 1.0, false},
        };
        c.discrepancy = discrepancy();
        c.optimizer = optimizer;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.seed = seed;
        c.balance_source = balance_source;

        config.add("discrepancy", measure);
        if (measure == "cmd") config.add("K", K);
        if (measure == "mmd") config.add("beta", beta);
        config.add("lambda", lambda);
        config.add("optimizer", optimizer);
        config.add("epochs", epochs);
        config.add("batch_size", batch_size);
        config.add("hidden", hidden);
        config.add("activation", activation);
        config.add("balance_source", static_cast<long long>(balance_source));
        config.add("seed", static_cast<long long>(seed));
        return c;
    }
};

mm::Matrix load_matrix(const std::string& path) { return mm::load_dense_csv(path).matrix; }

// -- subcommand bodies ----------------------------------------------------

int run_discrepancy(const std::string& x_path, const std::string& y_path,
                    const std::string& measure, long long K, double beta, double lo, double hi) {
    mm::Matrix X = load_matrix(x_path);
    mm::Matrix Y = load_matrix(y_path);
    if (X.cols() != Y.cols()) {
        throw std::runtime_error("input files have different column counts");
    }
    if (measure == "cmd") {
        mm::Sample sx(X, mm::Bounds(lo, hi));
        mm::Sample sy(Y, mm::Bounds(lo, hi));
        auto v = mm::cmd_k(sx, sy, static_cast<int>(K));
        std::cout << "value " << format_double(v.value) << "\n";
        for (size_t k = 0; k < v.per_term.size(); ++k) {
            std::cout << "term " << (k + 1) << " " << format_double(v.per_term[k]) << "\n";
        }
    } else {
        // mmd/mkl take no bounds; wrap with the data's own hull.
        double mn = std::min(X.minCoeff(), Y.minCoeff());
        double mx = std::max(X.maxCoeff(), Y.maxCoeff());
        if (mn == mx) mx = mn + 1.0;
        mm::Sample sx(X, mm::Bounds(mn, mx));
        mm::Sample sy(Y, mm::Bounds(mn, mx));
        double v = (measure == "mmd") ? mm::mmd2(sx, sy, beta) : mm::mkl(sx, sy);
        std::cout << "value " << format_double(v) << "\n";
    }
    return kExitOk;
}

void write_history_csv(const std::string& path, const mm::RunResult& result,
                       const ResolvedConfig& config) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    write_header(out, config);
    out << "epoch,task_loss,reg_value,source_acc\n";
    for (size_t e = 0; e < result.history.size(); ++e) {
        const auto& h = result.history[e];
        out << e << "," << format_double(h.task_loss) << "," << format_double(h.reg_value) << ","
            << format_double(h.source_train_accuracy) << "\n";
    }
}

void write_result_json(const std::string& path, const mm::RunResult& result,
                       const ResolvedConfig& config) {
    nlohmann::json j;
    j["timestamp"] = timestamp_now();
    j["config"] = config.to_json();
    j["target_test_accuracy"] = result.target_test_accuracy;
    j["epochs_run"] = result.history.size();
    j["final_task_loss"] = result.history.back().task_loss;
    j["final_reg_value"] = result.history.back().reg_value;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

int run_train(const DatasetFlags& data_flags, const ModelFlags& model_flags, std::uint64_t seed,
              const std::string& out_dir, const std::string& checkpoint_path) {
    ResolvedConfig config;
    config.add("subcommand", std::string("train"));
    mm::DomainDataset dataset = data_flags.build(seed, config);
    mm::TrainConfig train_config = model_flags.train_config(dataset, seed, config);

    mm::RunResult result = mm::train(dataset, train_config);

    std::filesystem::create_directories(out_dir);
    write_history_csv(out_dir + "/history.csv", result, config);
    write_result_json(out_dir + "/result.json", result, config);
    if (!checkpoint_path.empty()) mm::save_checkpoint(result.final_state, checkpoint_path);

    std::cout << "target_test_accuracy " << format_double(result.target_test_accuracy) << "\n";
    return kExitOk;
}

int run_sweep(const DatasetFlags& data_flags, const ModelFlags& model_flags,
              const std::string& axis_name, const std::string& values_csv, double reference,
              const std::string& tasks_csv, const std::string& seeds_csv,
              const std::string& out_path) {
    mm::SweepAxis axis = mm::sweep_axis_from_string(axis_name);
    std::vector<double> values = parse_double_list(values_csv);
    std::vector<std::uint64_t> seeds = parse_seed_list(seeds_csv);
    if (values.empty()) throw CLI::ValidationError("--values", "empty grid");
    if (seeds.empty()) throw CLI::ValidationError("--seeds", "need at least one seed");

    ResolvedConfig config;
    config.add("subcommand", std::string("sweep"));
    config.add("axis", axis_name);
    config.add("values", values_csv);
    config.add("reference", reference);
    config.add("seeds", seeds_csv);

    std::vector<mm::DomainDataset> tasks;
    if (!tasks_csv.empty()) {
        std::istringstream ss(tasks_csv);
        std::string spec;
        while (std::getline(ss, spec, ',')) {
            DatasetFlags f = data_flags;
            f.synthetic = spec;
            tasks.push_back(f.build(seeds.front(), config));
        }
    } else {
        tasks.push_back(data_flags.build(seeds.front(), config));
    }

    mm::TrainConfig base = model_flags.train_config(tasks.front(), seeds.front(), config);
    mm::SweepResult result = mm::sensitivity_sweep(tasks, base, axis, values, reference, seeds);

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    write_header(out, config);
    out << "axis_value,task,seed,accuracy,ratio\n";
    for (const auto& cell : result.cells) {
        out << format_double(cell.axis_value) << "," << cell.task << "," << cell.seed << ","
            << format_double(cell.accuracy) << "," << format_double(cell.ratio) << "\n";
    }
    std::cout << "wrote " << result.cells.size() << " rows to " << out_path << "\n";
    return kExitOk;
}

int run_gradcheck(const std::string& measure, long long K, double beta, long long n, long long N,
                  std::uint64_t seed, double fd_step) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    auto random_sample = [&](long long rows) {
        mm::Matrix m(rows, N);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = unif(rng);
        }
        return m;
    };
    mm::Matrix X = random_sample(n);
    mm::Matrix Y = random_sample(n);
    mm::Bounds bounds(0.0, 1.0);

    auto check_one = [&](const std::string& name) {
        mm::Sample sy(Y, bounds);
        std::function<double(const mm::Matrix&)> f;
        mm::Matrix analytic;
        if (name == "cmd") {
            f = [&](const mm::Matrix& m) {
                return mm::cmd_k(mm::Sample(m, bounds), sy, static_cast<int>(K)).value;
            };
            analytic = mm::cmd_k_grad(mm::Sample(X, bounds), sy, static_cast<int>(K));
        } else if (name == "mmd") {
            f = [&](const mm::Matrix& m) { return mm::mmd2(mm::Sample(m, bounds), sy, beta); };
            analytic = mm::mmd2_grad(mm::Sample(X, bounds), sy, beta);
        } else {
            f = [&](const mm::Matrix& m) { return mm::mkl(mm::Sample(m, bounds), sy); };
            analytic = mm::mkl_grad(mm::Sample(X, bounds), sy);
        }
        mm::Matrix numeric = mm::finite_difference(f, X, fd_step);
        double err = mm::max_relative_error(analytic, numeric);
        std::cout << name << " max_rel_error " << format_double(err) << "\n";
        return err;
    };

    double worst = 0.0;
    if (measure == "all") {
        worst = std::max({check_one("cmd"), check_one("mmd"), check_one("mkl")});
    } else {
        worst = check_one(measure);
    }
    return worst < 1e-4 ? kExitOk : kExitCheckFailure;
}

int run_activations(const DatasetFlags& data_flags, const ModelFlags& model_flags,
                    std::uint64_t seed, const std::string& out_prefix) {
    ResolvedConfig config;
    config.add("subcommand", std::string("activations"));
    mm::DomainDataset dataset = data_flags.build(seed, config);
    mm::TrainConfig train_config = model_flags.train_config(dataset, seed, config);

    mm::RunResult result = mm::train(dataset, train_config);

    auto dump = [&](const std::string& path, const mm::Matrix& inputs) {
        mm::ForwardTrace trace = mm::forward(result.final_state, inputs);
        mm::Sample acts = trace.hidden_activations_at_h();
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open " + path);
        write_header(out, config);
        for (Eigen::Index i = 0; i < acts.rows(); ++i) {
            for (Eigen::Index j = 0; j < acts.cols(); ++j) {
                out << (j ? "," : "") << format_double(acts.data()(i, j));
            }
            out << "\n";
        }
    };
    dump(out_prefix + "_source.csv", dataset.source.inputs);
    dump(out_prefix + "_target.csv", dataset.target_unlabeled);
    std::cout << "wrote " << out_prefix << "_source.csv and " << out_prefix << "_target.csv\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Moment-matching discrepancy measures and domain-adaptation training"};
    app.require_subcommand(1);

    // discrepancy
    auto* disc = app.add_subcommand("discrepancy", "Compute a discrepancy between two samples");
    std::string x_path, y_path, measure = "cmd";
    long long K = 5;
    double beta = 1.0, lo = 0.0, hi = 1.0;
    disc->add_option("--x", x_path, "First sample CSV")->required();
    disc->add_option("--y", y_path, "Second sample CSV")->required();
    disc->add_option("--measure", measure, "cmd|mmd|mkl")
        ->check(CLI::IsMember({"cmd", "mmd", "mkl"}));
    disc->add_option("--K", K, "Number of moment terms (cmd)");
    disc->add_option("--beta", beta, "Gaussian kernel parameter (mmd)");
    disc->add_option("--bounds-lo", lo, "Lower activation bound (cmd)");
    disc->add_option("--bounds-hi", hi, "Upper activation bound (cmd)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a domain-adapted classifier");
    DatasetFlags train_data;
    ModelFlags train_model;
    std::uint64_t train_seed = 0;
    std::string train_out = "run";
    std::string checkpoint_path;
    train_data.attach(train_cmd);
    train_model.attach(train_cmd);
    train_cmd->add_option("--seed", train_seed, "RNG seed");
    train_cmd->add_option("--out-dir", train_out, "Output directory");
    train_cmd->add_option("--checkpoint", checkpoint_path, "Also save a network checkpoint here");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Parameter sensitivity sweep");
    DatasetFlags sweep_data;
    ModelFlags sweep_model;
    std::string axis, values_csv, tasks_csv, seeds_csv = "0", sweep_out = "sweep.csv";
    double reference = 5.0;
    sweep_data.attach(sweep_cmd);
    sweep_model.attach(sweep_cmd);
    sweep_cmd->add_option("--axis", axis, "K|lambda|beta|hidden_nodes")->required();
    sweep_cmd->add_option("--values", values_csv, "Comma-separated grid values")->required();
    sweep_cmd->add_option("--reference", reference, "Reference grid value for ratios");
    sweep_cmd->add_option("--tasks", tasks_csv, "Comma-separated synthetic task specs");
    sweep_cmd->add_option("--seeds", seeds_csv, "Comma-separated seeds");
    sweep_cmd->add_option("--out", sweep_out, "Output CSV path");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
    std::string gc_measure = "all";
    long long gc_K = 5, gc_n = 6, gc_N = 3;
    double gc_beta = 1.0, gc_step = 1e-5;
    std::uint64_t gc_seed = 1;
    grad_cmd->add_option("--measure", gc_measure, "cmd|mmd|mkl|all")
        ->check(CLI::IsMember({"cmd", "mmd", "mkl", "all"}));
    grad_cmd->add_option("--K", gc_K, "Number of moment terms (cmd)");
    grad_cmd->add_option("--beta", gc_beta, "Gaussian kernel parameter (mmd)");
    grad_cmd->add_option("--n", gc_n, "Sample size");
    grad_cmd->add_option("--N", gc_N, "Sample dimension");
    grad_cmd->add_option("--seed", gc_seed, "RNG seed");
    grad_cmd->add_option("--fd-step", gc_step, "Finite-difference step (debugging)");

    // activations
    auto* act_cmd = app.add_subcommand("activations", "Train, then dump hidden activations per domain");
    DatasetFlags act_data;
    ModelFlags act_model;
    std::uint64_t act_seed = 0;
    std::string act_out;
    act_data.attach(act_cmd);
    act_model.attach(act_cmd);
    act_cmd->add_option("--seed", act_seed, "RNG seed");
    act_cmd->add_option("--out", act_out, "Output path prefix")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (disc->parsed()) return run_discrepancy(x_path, y_path, measure, K, beta, lo, hi);
        if (train_cmd->parsed()) {
            return run_train(train_data, train_model, train_seed, train_out, checkpoint_path);
        }
        if (sweep_cmd->parsed()) {
            return run_sweep(sweep_data, sweep_model, axis, values_csv, reference, tasks_csv,
                             seeds_csv, sweep_out);
        }
        if (grad_cmd->parsed()) {
            return run_gradcheck(gc_measure, gc_K, gc_beta, gc_n, gc_N, gc_seed, gc_step);
        }
        if (act_cmd->parsed()) return run_activations(act_data, act_model, act_seed, act_out);
    } catch (const mm::NumericalAbort& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumericalAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
