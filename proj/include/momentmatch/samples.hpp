#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace momentmatch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Activation range [lo, hi]. The range length appears as a divisor in the
/// discrepancy normalization, so lo < hi is strict.
struct Bounds {
    double lo;
    double hi;

    Bounds(double lo_, double hi_) : lo(lo_), hi(hi_) {
        if (!(lo < hi)) {
            throw std::invalid_argument("Bounds: lo must be strictly less than hi");
        }
    }

    double range() const { return hi - lo; }
    bool operator==(const Bounds& o) const { return lo == o.lo && hi == o.hi; }
    bool operator!=(const Bounds& o) const { return !(*this == o); }
};

/// A bounded sample: n points in [lo,hi]^N, one row per point.
/// Entries outside the bounds are rejected at construction, not clamped.
class Sample {
public:
    Sample(Matrix data, Bounds bounds) : data_(std::move(data)), bounds_(bounds) {
        if (data_.rows() < 1 || data_.cols() < 1) {
            throw std::invalid_argument("Sample: need at least one row and one column");
        }
        if ((data_.array() < bounds_.lo).any() || (data_.array() > bounds_.hi).any()) {
            throw std::invalid_argument("Sample: entry outside declared bounds");
        }
    }

    const Matrix& data() const { return data_; }
    const Bounds& bounds() const { return bounds_; }
    Eigen::Index rows() const { return data_.rows(); }
    Eigen::Index cols() const { return data_.cols(); }

private:
    Matrix data_;
    Bounds bounds_;
};

/// Labeled data: inputs paired with one-hot labels over |C| classes.
struct LabeledSample {
    Matrix inputs;  // n x I
    Matrix labels;  // n x |C|, one-hot rows

    LabeledSample(Matrix in, Matrix lab)
        : inputs(std::move(in)), labels(std::move(lab)) {
        if (inputs.rows() != labels.rows()) {
            throw std::invalid_argument("LabeledSample: input/label row count mismatch");
        }
        for (Eigen::Index i = 0; i < labels.rows(); ++i) {
            double sum = 0.0;
            for (Eigen::Index j = 0; j < labels.cols(); ++j) {
                double v = labels(i, j);
                if (v != 0.0 && v != 1.0) {
                    throw std::invalid_argument("LabeledSample: labels must be one-hot");
                }
                sum += v;
            }
            if (sum != 1.0) {
                throw std::invalid_argument("LabeledSample: each label row must sum to 1");
            }
        }
    }

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index input_dim() const { return inputs.cols(); }
    Eigen::Index num_classes() const { return labels.cols(); }

    /// Class index of row i (position of the 1 in the one-hot row).
    int class_of(Eigen::Index i) const {
        for (Eigen::Index j = 0; j < labels.cols(); ++j) {
            if (labels(i, j) == 1.0) return static_cast<int>(j);
        }
        return -1;  // unreachable for a validated sample
    }
};

/// The unsupervised domain-adaptation data contract: labeled source,
/// unlabeled target, and a held-out labeled target test set that training
/// never sees.
struct DomainDataset {
    LabeledSample source;
    Matrix target_unlabeled;  // m x I
    LabeledSample target_test;
    std::string name;

    DomainDataset(LabeledSample src, Matrix tgt, LabeledSample tgt_test, std::string task_name)
        : source(std::move(src)),
          target_unlabeled(std::move(tgt)),
          target_test(std::move(tgt_test)),
          name(std::move(task_name)) {
        if (source.input_dim() != target_unlabeled.cols() ||
            source.input_dim() != target_test.input_dim()) {
            throw std::invalid_argument("DomainDataset: domains must share input dimension");
        }
    }
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.push_back("");
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    try {
        size_t pos = 0;
        out = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

/// One-hot encode integer class ids, classes sorted ascending.
inline Matrix one_hot(const std::vector<int>& ids) {
    std::vector<int> classes(ids);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    Matrix labels = Matrix::Zero(static_cast<Eigen::Index>(ids.size()),
                                 static_cast<Eigen::Index>(classes.size()));
    for (size_t i = 0; i < ids.size(); ++i) {
        auto it = std::lower_bound(classes.begin(), classes.end(), ids[i]);
        labels(static_cast<Eigen::Index>(i), it - classes.begin()) = 1.0;
    }
    return labels;
}

}  // namespace detail

/// Result of loading a dense CSV: a plain matrix, or a LabeledSample when a
/// label column was requested.
struct DenseCsv {
    Matrix matrix;                 // always set (features only when labeled)
    std::vector<int> label_ids;    // empty when no label column
    bool labeled = false;

    LabeledSample to_labeled() const {
        if (!labeled) throw std::logic_error("DenseCsv: no label column was loaded");
        return LabeledSample(matrix, detail::one_hot(label_ids));
    }
};

/// Load a dense CSV file. An optional single header row is detected by its
/// first cell failing to parse as a number. If label_column is non-empty the
/// file must have a header naming it; that column holds integer class ids.
inline DenseCsv load_dense_csv(const std::string& path, const std::string& label_column = "") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dense_csv: cannot open " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!line.empty() && line[0] == '#') continue;
        rows.push_back(detail::split(line, ','));
    }
    if (rows.empty()) throw std::runtime_error("load_dense_csv: empty file " + path);

    size_t ncols = rows[0].size();
    for (size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != ncols) {
            throw std::runtime_error("load_dense_csv: ragged row " + std::to_string(r + 1) +
                                     " in " + path);
        }
    }

    // Header detection: first row whose first cell is not numeric.
    double probe;
    bool has_header = !detail::parse_double(rows[0][0], probe);
    std::vector<std::string> header;
    size_t first_data = 0;
    if (has_header) {
        header = rows[0];
        first_data = 1;
        if (rows.size() == 1) throw std::runtime_error("load_dense_csv: header but no data rows");
    }

    long label_idx = -1;
    if (!label_column.empty()) {
        if (!has_header) {
            throw std::runtime_error("load_dense_csv: label column requested but file has no header");
        }
        auto it = std::find(header.begin(), header.end(), label_column);
        if (it == header.end()) {
            throw std::runtime_error("load_dense_csv: unknown label column '" + label_column + "'");
        }
        label_idx = it - header.begin();
    }

    size_t n = rows.size() - first_data;
    size_t nfeat = (label_idx >= 0) ? ncols - 1 : ncols;
    DenseCsv out;
    out.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nfeat));
    out.labeled = (label_idx >= 0);

    for (size_t r = 0; r < n; ++r) {
        const auto& cells = rows[r + first_data];
        Eigen::Index c_out = 0;
        for (size_t c = 0; c < ncols; ++c) {
            double v;
            if (!detail::parse_double(cells[c], v)) {
                throw std::runtime_error("load_dense_csv: non-numeric cell at row " +
                                         std::to_string(r + first_data + 1));
            }
            if (static_cast<long>(c) == label_idx) {
                out.label_ids.push_back(static_cast<int>(v));
            } else {
                out.matrix(static_cast<Eigen::Index>(r), c_out++) = v;
            }
        }
    }
    return out;
}

/// Load a sparse bag-of-words file: one example per line,
/// `<label> <idx>:<val> ...`, binary labels, indices 0- or 1-based.
inline LabeledSample load_sparse_bow(const std::string& path, Eigen::Index dim,
                                     bool one_based = false) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_sparse_bow: cannot open " + path);

    std::vector<std::vector<std::pair<Eigen::Index, double>>> lines;
    std::vector<int> labels;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        int label;
        if (!(ss >> label) || (label != 0 && label != 1)) {
            throw std::runtime_error("load_sparse_bow: bad label on line " + std::to_string(lineno));
        }
        std::vector<std::pair<Eigen::Index, double>> feats;
        std::vector<bool> seen(static_cast<size_t>(dim), false);
        std::string pair;
        while (ss >> pair) {
            auto colon = pair.find(':');
            if (colon == std::string::npos) {
                throw std::runtime_error("load_sparse_bow: malformed pair '" + pair +
                                         "' on line " + std::to_string(lineno));
            }
            double idx_d, val;
            if (!detail::parse_double(pair.substr(0, colon), idx_d) ||
                !detail::parse_double(pair.substr(colon + 1), val)) {
                throw std::runtime_error("load_sparse_bow: malformed pair '" + pair +
                                         "' on line " + std::to_string(lineno));
            }
            Eigen::Index idx = static_cast<Eigen::Index>(idx_d) - (one_based ? 1 : 0);
            if (idx < 0 || idx >= dim) {
                throw std::runtime_error("load_sparse_bow: index out of range on line " +
                                         std::to_string(lineno));
            }
            if (seen[static_cast<size_t>(idx)]) {
                throw std::runtime_error("load_sparse_bow: duplicate index on line " +
                                         std::to_string(lineno));
            }
            seen[static_cast<size_t>(idx)] = true;
            feats.emplace_back(idx, val);
        }
        lines.push_back(std::move(feats));
        labels.push_back(label);
    }
    if (lines.empty()) throw std::runtime_error("load_sparse_bow: empty file " + path);

    Matrix inputs = Matrix::Zero(static_cast<Eigen::Index>(lines.size()), dim);
    for (size_t r = 0; r < lines.size(); ++r) {
        for (const auto& [idx, val] : lines[r]) {
            inputs(static_cast<Eigen::Index>(r), idx) = val;
        }
    }
    Matrix lab = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), 2);
    for (size_t r = 0; r < labels.size(); ++r) {
        lab(static_cast<Eigen::Index>(r), labels[r]) = 1.0;
    }
    return LabeledSample(std::move(inputs), std::move(lab));
}

enum class SyntheticKind { Shift, Rotation };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "shift") return SyntheticKind::Shift;
    if (s == "rotation") return SyntheticKind::Rotation;
    throw std::invalid_argument("unknown synthetic kind '" + s + "'");
}

/// Two-cluster 2-D Gaussian source (class 0 at (-1,0), class 1 at (+1,0),
/// sigma 0.5) with a target domain produced by shifting both coordinates by
/// `magnitude` or rotating about the origin by `magnitude` radians.
/// Deterministic given the seed.
inline DomainDataset make_synthetic_pair(SyntheticKind kind, double magnitude,
                                         Eigen::Index n_source, Eigen::Index n_target,
                                         Eigen::Index n_test, std::uint64_t seed) {
    if (magnitude < 0) throw std::invalid_argument("make_synthetic_pair: magnitude must be >= 0");
    if (n_source < 1 || n_target < 1 || n_test < 1) {
        throw std::invalid_argument("make_synthetic_pair: counts must be >= 1");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::bernoulli_distribution cls(0.5);

    auto draw = [&](Eigen::Index n, Matrix& x, std::vector<int>& y) {
        x.resize(n, 2);
        y.resize(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            int c = cls(rng) ? 1 : 0;
            double cx = (c == 0) ? -1.0 : 1.0;
            x(i, 0) = cx + noise(rng);
            x(i, 1) = noise(rng);
            y[static_cast<size_t>(i)] = c;
        }
    };
    auto transform = [&](Matrix& x) {
        if (kind == SyntheticKind::Shift) {
            x.array() += magnitude;
        } else {
            double c = std::cos(magnitude), s = std::sin(magnitude);
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                double x0 = x(i, 0), x1 = x(i, 1);
                x(i, 0) = c * x0 - s * x1;
                x(i, 1) = s * x0 + c * x1;
            }
        }
    };

    Matrix xs, xt, xe;
    std::vector<int> ys, yt, ye;
    draw(n_source, xs, ys);
    draw(n_target, xt, yt);
    transform(xt);
    draw(n_test, xe, ye);
    transform(xe);

    auto one_hot2 = [](const std::vector<int>& ids) {
        Matrix lab = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), 2);
        for (size_t i = 0; i < ids.size(); ++i) lab(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
        return lab;
    };

    std::string name = (kind == SyntheticKind::Shift ? "shift:" : "rotation:") +
                       std::to_string(magnitude);
    return DomainDataset(LabeledSample(std::move(xs), one_hot2(ys)), std::move(xt),
                         LabeledSample(std::move(xe), one_hot2(ye)), name);
}

/// Draw `size` rows from `source` with per-class counts balanced to within
/// one. Classes that must grow are sampled with replacement, the rest
/// without. Deterministic given the seed.
inline LabeledSample resample_source_balanced(const LabeledSample& source, Eigen::Index size,
                                              std::uint64_t seed) {
    Eigen::Index n_classes = source.num_classes();
    if (size < n_classes) {
        throw std::invalid_argument("resample_source_balanced: size must be >= number of classes");
    }
    std::vector<std::vector<Eigen::Index>> by_class(static_cast<size_t>(n_classes));
    for (Eigen::Index i = 0; i < source.size(); ++i) {
        by_class[static_cast<size_t>(source.class_of(i))].push_back(i);
    }
    for (Eigen::Index c = 0; c < n_classes; ++c) {
        if (by_class[static_cast<size_t>(c)].empty()) {
            throw std::invalid_argument("resample_source_balanced: class " + std::to_string(c) +
                                        " absent from source");
        }
    }

    std::mt19937_64 rng(seed);
    // Per-class quota: size/|C| each, one extra for the first (size mod |C|)
    // classes in a seeded random class order.
    std::vector<Eigen::Index> order(static_cast<size_t>(n_classes));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Eigen::Index> quota(static_cast<size_t>(n_classes), size / n_classes);
    for (Eigen::Index i = 0; i < size % n_classes; ++i) {
        quota[static_cast<size_t>(order[static_cast<size_t>(i)])]++;
    }

    std::vector<Eigen::Index> picks;
    picks.reserve(static_cast<size_t>(size));
    for (Eigen::Index c = 0; c < n_classes; ++c) {
        auto& pool = by_class[static_cast<size_t>(c)];
        Eigen::Index want = quota[static_cast<size_t>(c)];
        if (want <= static_cast<Eigen::Index>(pool.size())) {
            std::vector<Eigen::Index> shuffled(pool);
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            picks.insert(picks.end(), shuffled.begin(), shuffled.begin() + want);
        } else {
            std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
            for (Eigen::Index i = 0; i < want; ++i) picks.push_back(pool[pick(rng)]);
        }
    }
    std::shuffle(picks.begin(), picks.end(), rng);

    Matrix inputs(size, source.input_dim());
    Matrix labels(size, n_classes);
    for (Eigen::Index i = 0; i < size; ++i) {
        inputs.row(i) = source.inputs.row(picks[static_cast<size_t>(i)]);
        labels.row(i) = source.labels.row(picks[static_cast<size_t>(i)]);
    }
    return LabeledSample(std::move(inputs), std::move(labels));
}

}  // namespace momentmatch
