#include "cdpa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdpa/errors.hpp"
#include "cdpa/rng.hpp"

namespace cdpa {

namespace {

constexpr double kBlobSigma = 0.5;

std::vector<std::size_t> shuffled_indices(std::size_t n, KeyedRng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

Dataset take_rows(const Dataset& src, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.feature_dim = src.feature_dim;
    out.classes = src.classes;
    out.n_examples = rows.size();
    out.features.reserve(rows.size() * src.feature_dim);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) {
        const double* p = src.row(r);
        out.features.insert(out.features.end(), p, p + src.feature_dim);
        out.labels.push_back(src.labels[r]);
    }
    return out;
}

}  // namespace

Dataset Dataset::example(std::size_t i) const {
    Dataset out;
    out.feature_dim = feature_dim;
    out.classes = classes;
    out.n_examples = 1;
    out.features.assign(row(i), row(i) + feature_dim);
    out.labels.assign(1, labels[i]);
    return out;
}

Dataset make_synthetic_dataset(std::size_t n, std::size_t d, std::size_t classes,
                               double separation, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("make_synthetic_dataset: classes must be >= 2");
    if (n < classes) throw ConfigError("make_synthetic_dataset: n must be >= classes");
    if (d < 1) throw ConfigError("make_synthetic_dataset: feature dim must be >= 1");

    // Class k mean: separation/sqrt(2) along axis k (wrapping with a growing
    // multiplier when classes exceed the dimension).
    const double base = separation / std::sqrt(2.0);
    auto mean_of = [&](std::size_t k, std::size_t j) {
        const std::size_t axis = k % d;
        if (j != axis) return 0.0;
        return base * static_cast<double>(1 + k / d);
    };

    // Balanced labels, then shuffled.
    std::vector<double> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<double>(i % classes);
    KeyedRng shuffle_rng = KeyedRng::from({seed, stream::labels});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_below(i));
        std::swap(labels[i - 1], labels[j]);
    }

    Dataset out;
    out.n_examples = n;
    out.feature_dim = d;
    out.classes = classes;
    out.labels = std::move(labels);
    out.features.resize(n * d);
    KeyedRng noise = KeyedRng::from({seed, stream::data});
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(out.labels[i]);
        for (std::size_t j = 0; j < d; ++j) {
            out.features[i * d + j] = mean_of(k, j) + kBlobSigma * noise.next_normal();
        }
    }
    return out;
}

Dataset load_csv_dataset(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw IoError("load_csv_dataset: cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_csv_dataset: empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::size_t label_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == label_column) label_idx = i;
    }
    if (label_idx == header.size()) {
        throw ParseError("load_csv_dataset: label column '" + label_column +
                         "' not found in " + path);
    }

    Dataset out;
    out.feature_dim = header.size() - 1;
    std::size_t row_no = 0;  // data row number, 1-based
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_no;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        std::size_t cells = 0;
        while (std::getline(ss, cell, ',')) {
            ++cells;
            if (col >= header.size()) continue;  // length checked below
            double v = 0.0;
            std::size_t consumed = 0;
            try {
                v = std::stod(cell, &consumed);
            } catch (const std::exception&) {
                consumed = 0;
            }
            if (consumed != cell.size() || cell.empty()) {
                throw ParseError("load_csv_dataset: non-numeric cell at row " +
                                 std::to_string(row_no) + ", column '" + header[col] +
                                 "' in " + path);
            }
            if (col == label_idx) {
                out.labels.push_back(v);
            } else {
                out.features.push_back(v);
            }
            ++col;
        }
        if (cells != header.size()) {
            throw ParseError("load_csv_dataset: row " + std::to_string(row_no) + " has " +
                             std::to_string(cells) + " cells, expected " +
                             std::to_string(header.size()) + " in " + path);
        }
    }
    out.n_examples = out.labels.size();
    if (out.n_examples == 0) throw ParseError("load_csv_dataset: no data rows in " + path);

    // Integer, non-negative labels become class indices.
    bool integral = true;
    double max_label = 0.0;
    for (double v : out.labels) {
        if (v < 0.0 || v != std::floor(v)) {
            integral = false;
            break;
        }
        max_label = std::max(max_label, v);
    }
    if (integral && max_label >= 1.0 && max_label < 1e6) {
        out.classes = static_cast<std::size_t>(max_label) + 1;
    } else {
        out.classes = 0;
    }
    return out;
}

std::vector<Dataset> partition_iid(const Dataset& data, std::size_t clients,
                                   std::uint64_t seed) {
    if (clients < 1) throw ConfigError("partition_iid: need at least one client");
    if (clients > data.n_examples) {
        throw ConfigError("partition_iid: more clients (" + std::to_string(clients) +
                          ") than examples (" + std::to_string(data.n_examples) + ")");
    }
    KeyedRng rng = KeyedRng::from({seed, stream::partition});
    const auto idx = shuffled_indices(data.n_examples, rng);

    std::vector<Dataset> shards;
    shards.reserve(clients);
    const std::size_t base = data.n_examples / clients;
    const std::size_t extra = data.n_examples % clients;
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < clients; ++c) {
        const std::size_t take = base + (c < extra ? 1 : 0);
        std::vector<std::size_t> rows(idx.begin() + cursor, idx.begin() + cursor + take);
        cursor += take;
        shards.push_back(take_rows(data, rows));
    }
    return shards;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             std::uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw ConfigError("split_train_test: test_fraction must be in [0, 1)");
    }
    KeyedRng rng = KeyedRng::from({seed, stream::split});
    const auto idx = shuffled_indices(data.n_examples, rng);
    std::size_t n_test = static_cast<std::size_t>(std::floor(
        test_fraction * static_cast<double>(data.n_examples)));
    if (test_fraction > 0.0 && n_test == 0 && data.n_examples > 1) n_test = 1;
    std::vector<std::size_t> test_rows(idx.begin(), idx.begin() + n_test);
    std::vector<std::size_t> train_rows(idx.begin() + n_test, idx.end());
    return {take_rows(data, train_rows), take_rows(data, test_rows)};
}

}  // namespace cdpa
