#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cdpa {

// Row-major feature matrix plus labels. classes == 0 marks a regression
// dataset (real targets); classes >= 2 marks classification (labels are
// class indices stored as doubles).
struct Dataset {
    std::size_t n_examples = 0;
    std::size_t feature_dim = 0;
    std::size_t classes = 0;
    std::vector<double> features;  // n_examples x feature_dim, row-major
    std::vector<double> labels;    // length n_examples

    const double* row(std::size_t i) const { return features.data() + i * feature_dim; }

    // Single-example view (copy) of row i.
    Dataset example(std::size_t i) const;
};

// Gaussian class blobs, componentwise sigma 0.5, blob means pairwise
// `separation` apart (class k centered at separation/sqrt(2) * e_k).
// Labels are balanced across classes and shuffled; deterministic per seed.
Dataset make_synthetic_dataset(std::size_t n, std::size_t d, std::size_t classes,
                               double separation, std::uint64_t seed);

// UTF-8 comma-separated file with a header row; the named column becomes the
// label, remaining columns become features in header order. Labels that are
// all non-negative integers are treated as class indices.
Dataset load_csv_dataset(const std::string& path, const std::string& label_column);

// R disjoint shards covering the input, sizes within 1 of each other,
// assignment shuffled deterministically per seed.
std::vector<Dataset> partition_iid(const Dataset& data, std::size_t clients,
                                   std::uint64_t seed);

// Deterministic shuffled split; second element holds ~test_fraction of rows.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

}  // namespace cdpa
