#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "posbias/corpus.hpp"
#include "posbias/run.hpp"
#include "posbias/tkmodel.hpp"

namespace posbias {

struct kernel_config {
    std::vector<double> centers;
    double sigma = 0.1;

    /// k centers evenly spaced over [-1, 1] (k >= 2), all with width sigma.
    static kernel_config evenly_spaced(std::size_t k = 11, double sigma = 0.1);

    std::size_t size() const noexcept { return centers.size(); }

    /// Throws std::invalid_argument unless centers are non-empty and strictly
    /// increasing and sigma > 0.
    void validate() const;
};

struct score_weights {
    std::vector<double> weights;
    double bias = 0.0;

    /// 1/k for every kernel, zero bias.
    static score_weights uniform(std::size_t k);
};

/// |q| x |p| cosine similarities. Rows or columns with a zero vector get
/// cosine 0 and set has_zero_vectors.
struct match_matrix {
    std::size_t query_len = 0;
    std::size_t passage_len = 0;
    std::vector<double> cosines;
    bool has_zero_vectors = false;

    double at(std::size_t i, std::size_t j) const { return cosines[i * passage_len + j]; }
    std::span<const double> row(std::size_t i) const { return {cosines.data() + i * passage_len, passage_len}; }
};

match_matrix cosine_matrix(const matrix& query_vectors, const matrix& passage_vectors);

/// K matrices of |q| x |p| RBF activations, stored kernel-major.
struct kernel_activation_set {
    std::size_t kernels = 0;
    std::size_t query_len = 0;
    std::size_t passage_len = 0;
    std::vector<double> values;

    double at(std::size_t k, std::size_t i, std::size_t j) const
    {
        return values[(k * query_len + i) * passage_len + j];
    }
};

/// exp(-(cos(q_i, p_j) - mu_k)^2 / (2 sigma^2)). Throws std::invalid_argument
/// on empty sequences or mismatched vector widths.
kernel_activation_set kernel_activations(const matrix& query_vectors, const matrix& passage_vectors,
                                         const kernel_config& config);

/// Per kernel: sum over query terms of log(max(sum over passage terms, 1e-10)).
std::vector<double> pooled_features(const matrix& query_vectors, const matrix& passage_vectors,
                                    const kernel_config& config);

/// Weighted sum of pooled_features plus bias.
double score(const matrix& query_vectors, const matrix& passage_vectors, const kernel_config& config,
             const score_weights& weights);

inline constexpr double log_floor = 1e-10;

struct candidate {
    std::string passage_id;
    double score = 0.0;
};

/// Re-scores the first `depth` candidates with `scorer` and sorts them by
/// descending score, ties by prior rank. Candidates past `depth` follow in
/// their prior order with scores continuing below the lowest re-scored
/// value (min - 1, min - 2, ...), so the run stays descending.
std::vector<run_entry> rerank(const std::string& query_id, std::span<const candidate> candidates, std::size_t depth,
                              const std::function<double(const candidate&)>& scorer, const std::string& tag);

/// Encodes the query and each of the top `depth` passages with the TK
/// encoder and scores them with kernel pooling.
std::vector<run_entry> rerank(const query& q, std::span<const candidate> candidates, const collection& passages,
                              const embedding_table& table, const encoder_params& params,
                              const kernel_config& config, const score_weights& weights, std::size_t depth,
                              const std::string& tag = "tk");

}  // namespace posbias
