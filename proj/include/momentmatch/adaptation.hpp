#pragma once

#include "momentmatch/network.hpp"
#include "momentmatch/optim.hpp"
#include "momentmatch/samples.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace momentmatch {

struct TrainConfig {
    std::vector<LayerSpec> layer_specs;
    DiscrepancySpec discrepancy = DiscrepancySpec::cmd(5, 1.0);
    std::string optimizer = "adadelta";
    Eigen::Index epochs = 50;
    Eigen::Index batch_size = 64;
    std::uint64_t seed = 0;
    bool balance_source = false;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
};

struct EpochStats {
    double task_loss;
    double reg_value;
    double source_train_accuracy;
};

struct RunResult {
    NetworkState final_state;
    std::vector<EpochStats> history;
    double target_test_accuracy = 0.0;
};

/// Aborted training step, carries the epoch/step where the loss went
/// non-finite.
struct NumericalAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Endless seeded pass over row indices, reshuffling on wrap.
class EpochShuffler {
public:
    EpochShuffler(Eigen::Index n, std::uint64_t seed) : rng_(seed), order_(static_cast<size_t>(n)) {
        std::iota(order_.begin(), order_.end(), Eigen::Index{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    std::vector<Eigen::Index> next_batch(Eigen::Index size) {
        std::vector<Eigen::Index> batch;
        batch.reserve(static_cast<size_t>(size));
        for (Eigen::Index i = 0; i < size; ++i) {
            if (pos_ == order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                pos_ = 0;
            }
            batch.push_back(order_[pos_++]);
        }
        return batch;
    }

    void reshuffle() {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
    }

private:
    std::mt19937_64 rng_;
    std::vector<Eigen::Index> order_;
    size_t pos_ = 0;
};

inline Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

inline LabeledSample take_rows(const LabeledSample& s, const std::vector<Eigen::Index>& rows) {
    return LabeledSample(take_rows(s.inputs, rows), take_rows(s.labels, rows));
}

}  // namespace detail

/// Train from a given initial network. Per epoch both domains are
/// reshuffled; paired mini-batches step through loss_and_grad and the
/// optimizer; the shorter domain recycles by reshuffle. Target labels are
/// touched only for the final test accuracy.
inline RunResult train_from(NetworkState state, const LabeledSample& source,
                            const Matrix& target_unlabeled, const LabeledSample& target_test,
                            const TrainConfig& config) {
    config.validate();
    if (source.input_dim() != state.layers.front().spec.in_dim) {
        throw std::invalid_argument("train: source dimension does not match network");
    }

    Optimizer opt = Optimizer::from_name(config.optimizer);
    std::mt19937_64 seed_stream(config.seed ^ 0x9e3779b97f4a7c15ULL);

    Eigen::Index shorter = std::min(source.size(), target_unlabeled.rows());
    Eigen::Index batches_per_epoch =
        (shorter + config.batch_size - 1) / config.batch_size;

    detail::EpochShuffler src_shuffle(source.size(), seed_stream());
    detail::EpochShuffler tgt_shuffle(target_unlabeled.rows(), seed_stream());

    RunResult result;
    for (Eigen::Index epoch = 0; epoch < config.epochs; ++epoch) {
        src_shuffle.reshuffle();
        tgt_shuffle.reshuffle();
        double task_sum = 0.0, reg_sum = 0.0;
        for (Eigen::Index step = 0; step < batches_per_epoch; ++step) {
            LabeledSample src_batch =
                config.balance_source
                    ? resample_source_balanced(source, config.batch_size, seed_stream())
                    : detail::take_rows(source, src_shuffle.next_batch(
                                                    std::min(config.batch_size, source.size())));
            Matrix tgt_batch = detail::take_rows(
                target_unlabeled,
                tgt_shuffle.next_batch(std::min(config.batch_size, target_unlabeled.rows())));

            LossResult lr = loss_and_grad(state, src_batch, tgt_batch, config.discrepancy);
            if (!std::isfinite(lr.loss)) {
                throw NumericalAbort("train: non-finite loss at epoch " + std::to_string(epoch) +
                                     " step " + std::to_string(step));
            }
            opt.step(state, lr.grads);
            task_sum += lr.task_loss;
            reg_sum += lr.reg_value;
        }
        double nb = static_cast<double>(batches_per_epoch);
        result.history.push_back(
            {task_sum / nb, reg_sum / nb, accuracy(state, source)});
    }
    result.target_test_accuracy = accuracy(state, target_test);
    result.final_state = std::move(state);
    return result;
}

inline RunResult train(const DomainDataset& dataset, const TrainConfig& config) {
    NetworkState init = init_network(config.layer_specs, config.seed);
    return train_from(std::move(init), dataset.source, dataset.target_unlabeled,
                      dataset.target_test, config);
}

namespace detail {

/// Seeded class-stratified split of a labeled sample into (train, holdout)
/// with roughly `holdout_frac` of each class held out.
inline std::pair<LabeledSample, LabeledSample> stratified_split(const LabeledSample& data,
                                                               double holdout_frac,
                                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<Eigen::Index>> by_class(static_cast<size_t>(data.num_classes()));
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        by_class[static_cast<size_t>(data.class_of(i))].push_back(i);
    }
    std::vector<Eigen::Index> train_rows, hold_rows;
    for (auto& pool : by_class) {
        std::shuffle(pool.begin(), pool.end(), rng);
        size_t n_hold = static_cast<size_t>(
            std::llround(holdout_frac * static_cast<double>(pool.size())));
        n_hold = std::max<size_t>(n_hold, pool.size() >= 2 ? 1 : 0);
        if (pool.size() >= 2 && n_hold >= pool.size()) n_hold = pool.size() - 1;
        hold_rows.insert(hold_rows.end(), pool.begin(), pool.begin() + n_hold);
        train_rows.insert(train_rows.end(), pool.begin() + n_hold, pool.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(hold_rows.begin(), hold_rows.end());
    return {take_rows(data, train_rows), take_rows(data, hold_rows)};
}

inline LabeledSample self_label(const NetworkState& model, const Matrix& inputs,
                                Eigen::Index num_classes) {
    auto preds = predict(model, inputs);
    Matrix labels = Matrix::Zero(inputs.rows(), num_classes);
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        labels(i, preds[static_cast<size_t>(i)]) = 1.0;
    }
    return LabeledSample(inputs, std::move(labels));
}

}  // namespace detail

struct ReverseCvResult {
    DiscrepancySpec best;
    std::vector<double> scores;  // one per grid entry, grid order
};

/// Reverse cross-validation: per candidate spec, train a forward model on an
/// 80/20 stratified source split, self-label the target with it, then train
/// a reverse classifier (initialized from the forward weights) on the
/// self-labeled target adapting toward source-train inputs, and score it on
/// the held-out labeled source split. Target test labels are never read.
inline ReverseCvResult reverse_cross_validate(const DomainDataset& dataset,
                                              const TrainConfig& base_config,
                                              const std::vector<DiscrepancySpec>& grid) {
    if (grid.empty()) throw std::invalid_argument("reverse_cross_validate: empty grid");

    auto [src_train, src_val] =
        detail::stratified_split(dataset.source, 0.2, base_config.seed ^ 0xa5a5a5a5ULL);
    for (Eigen::Index c = 0; c < dataset.source.num_classes(); ++c) {
        Eigen::Index count = 0;
        for (Eigen::Index i = 0; i < src_val.size(); ++i) {
            if (src_val.class_of(i) == static_cast<int>(c)) ++count;
        }
        if (count < 2) {
            throw std::invalid_argument(
                "reverse_cross_validate: class " + std::to_string(c) +
                " has fewer than 2 validation examples");
        }
    }

    ReverseCvResult result{grid.front(), {}};
    double best_score = -1.0;
    for (size_t gi = 0; gi < grid.size(); ++gi) {
        TrainConfig fwd_config = base_config;
        fwd_config.discrepancy = grid[gi];

        NetworkState init = init_network(fwd_config.layer_specs, fwd_config.seed);
        RunResult forward_run = train_from(init, src_train, dataset.target_unlabeled,
                                           src_val /* placeholder, unused score */, fwd_config);

        LabeledSample target_selflabeled = detail::self_label(
            forward_run.final_state, dataset.target_unlabeled, dataset.source.num_classes());

        // Reverse direction: target is now the labeled domain, source-train
        // inputs the unlabeled one; same budget, weights start from the
        // forward model.
        RunResult reverse_run = train_from(forward_run.final_state, target_selflabeled,
                                           src_train.inputs, src_val, fwd_config);
        double score = reverse_run.target_test_accuracy;  // accuracy on held-out source
        result.scores.push_back(score);
        if (score > best_score) {
            best_score = score;
            result.best = grid[gi];
        }
    }
    return result;
}

enum class SweepAxis { K, Lambda, Beta, HiddenNodes };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "K") return SweepAxis::K;
    if (s == "lambda") return SweepAxis::Lambda;
    if (s == "beta") return SweepAxis::Beta;
    if (s == "hidden_nodes") return SweepAxis::HiddenNodes;
    throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

struct SweepCell {
    double axis_value;
    std::string task;
    std::uint64_t seed;
    double accuracy;
    double ratio;  // vs. reference value (hidden_nodes: vs. source-only)
};

struct SweepResult {
    std::string axis;
    std::vector<double> values;
    double reference;
    std::vector<SweepCell> cells;  // ordered by (value, task, seed)
};

namespace detail {

inline TrainConfig config_for_axis(const TrainConfig& base, SweepAxis axis, double value) {
    TrainConfig c = base;
    switch (axis) {
        case SweepAxis::K:
            if (c.discrepancy.kind != DiscrepancySpec::Kind::Cmd) {
                throw std::invalid_argument("sweep: K axis requires a CMD discrepancy");
            }
            c.discrepancy.K = static_cast<int>(value);
            break;
        case SweepAxis::Lambda:
            c.discrepancy.lambda = value;
            break;
        case SweepAxis::Beta:
            if (c.discrepancy.kind != DiscrepancySpec::Kind::Mmd) {
                throw std::invalid_argument("sweep: beta axis requires an MMD discrepancy");
            }
            c.discrepancy.beta = value;
            break;
        case SweepAxis::HiddenNodes:
            for (auto& spec : c.layer_specs) {
                if (spec.regularized) spec.out_dim = static_cast<Eigen::Index>(value);
            }
            for (size_t i = 1; i < c.layer_specs.size(); ++i) {
                c.layer_specs[i].in_dim = c.layer_specs[i - 1].out_dim;
            }
            break;
    }
    return c;
}

inline unsigned sweep_thread_count() {
    if (const char* env = std::getenv("MOMENT_MATCH_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

}  // namespace detail

/// Train one model per (task, axis value, seed) and report accuracies plus
/// per-task ratios against the reference value, averaged over seeds. For
/// the hidden_nodes axis the ratio compares the regularized run against a
/// source-only (lambda = 0) run at the same width. Cells run in parallel
/// (capped by MOMENT_MATCH_THREADS) and merge deterministically by key.
inline SweepResult sensitivity_sweep(const std::vector<DomainDataset>& tasks,
                                     const TrainConfig& base_config, SweepAxis axis,
                                     const std::vector<double>& values, double reference,
                                     const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("sensitivity_sweep: seeds must be nonempty");
    bool ratio_vs_source_only = (axis == SweepAxis::HiddenNodes);
    if (!ratio_vs_source_only &&
        std::find(values.begin(), values.end(), reference) == values.end()) {
        throw std::invalid_argument("sensitivity_sweep: reference missing from values");
    }

    struct Job {
        size_t vi, ti, si;
        bool source_only;
    };
    std::vector<Job> jobs;
    for (size_t vi = 0; vi < values.size(); ++vi) {
        for (size_t ti = 0; ti < tasks.size(); ++ti) {
            for (size_t si = 0; si < seeds.size(); ++si) {
                jobs.push_back({vi, ti, si, false});
                if (ratio_vs_source_only) jobs.push_back({vi, ti, si, true});
            }
        }
    }

    std::vector<double> acc(jobs.size(), 0.0);
    unsigned n_threads = std::min<unsigned>(detail::sweep_thread_count(),
                                            static_cast<unsigned>(jobs.size()));
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
            const Job& job = jobs[j];
            TrainConfig c = detail::config_for_axis(base_config, axis, values[job.vi]);
            if (job.source_only) c.discrepancy.lambda = 0.0;
            c.seed = seeds[job.si];
            acc[j] = train(tasks[job.ti], c).target_test_accuracy;
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    // Mean accuracy over seeds per (value, task), then ratios.
    auto mean_acc = [&](size_t vi, size_t ti, bool source_only) {
        double sum = 0.0;
        size_t count = 0;
        for (size_t j = 0; j < jobs.size(); ++j) {
            if (jobs[j].vi == vi && jobs[j].ti == ti && jobs[j].source_only == source_only) {
                sum += acc[j];
                ++count;
            }
        }
        return sum / static_cast<double>(count);
    };

    SweepResult result;
    result.values = values;
    result.reference = reference;
    switch (axis) {
        case SweepAxis::K: result.axis = "K"; break;
        case SweepAxis::Lambda: result.axis = "lambda"; break;
        case SweepAxis::Beta: result.axis = "beta"; break;
        case SweepAxis::HiddenNodes: result.axis = "hidden_nodes"; break;
    }

    size_t ref_vi = 0;
    if (!ratio_vs_source_only) {
        ref_vi = static_cast<size_t>(
            std::find(values.begin(), values.end(), reference) - values.begin());
    }
    for (size_t vi = 0; vi < values.size(); ++vi) {
        for (size_t ti = 0; ti < tasks.size(); ++ti) {
            double denom = ratio_vs_source_only ? mean_acc(vi, ti, true)
                                                : mean_acc(ref_vi, ti, false);
            double ratio = (vi == ref_vi && !ratio_vs_source_only)
                               ? 1.0
                               : mean_acc(vi, ti, false) / denom;
            for (size_t si = 0; si < seeds.size(); ++si) {
                for (size_t j = 0; j < jobs.size(); ++j) {
                    if (jobs[j].vi == vi && jobs[j].ti == ti && jobs[j].si == si &&
                        !jobs[j].source_only) {
                        result.cells.push_back({values[vi], tasks[ti].name, seeds[si], acc[j],
                                                ratio});
                    }
                }
            }
        }
    }
    return result;
}

}  // namespace momentmatch
