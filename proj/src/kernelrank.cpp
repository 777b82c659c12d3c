#include "posbias/kernelrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "posbias/parallel.hpp"
#include "posbias/simd.hpp"

namespace posbias {

kernel_config kernel_config::evenly_spaced(std::size_t k, double sigma)
{
    if (k < 2) {
        throw std::invalid_argument("kernel_config: need at least 2 kernels to span [-1, 1]");
    }
    kernel_config config;
    config.sigma = sigma;
    config.centers.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        config.centers[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(k - 1);
    }
    config.validate();
    return config;
}

void kernel_config::validate() const
{
    if (centers.empty()) {
        throw std::invalid_argument("kernel_config: no kernel centers");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("kernel_config: sigma must be positive");
    }
    for (std::size_t i = 1; i < centers.size(); ++i) {
        if (!(centers[i] > centers[i - 1])) {
            throw std::invalid_argument("kernel_config: centers must be strictly increasing");
        }
    }
}

score_weights score_weights::uniform(std::size_t k)
{
    return {std::vector<double>(k, 1.0 / static_cast<double>(k)), 0.0};
}

match_matrix cosine_matrix(const matrix& query_vectors, const matrix& passage_vectors)
{
    if (query_vectors.rows == 0 || passage_vectors.rows == 0) {
        throw std::invalid_argument("cosine_matrix: empty query or passage sequence");
    }
    if (query_vectors.cols != passage_vectors.cols) {
        throw std::invalid_argument("cosine_matrix: query and passage vector widths differ");
    }
    const auto& kern = simd::active();
    const std::size_t d = query_vectors.cols;
    std::vector<double> q_norms(query_vectors.rows);
    std::vector<double> p_norms(passage_vectors.rows);
    for (std::size_t i = 0; i < q_norms.size(); ++i) {
        q_norms[i] = kern.squared_norm(query_vectors.row(i).data(), d);
    }
    for (std::size_t j = 0; j < p_norms.size(); ++j) {
        p_norms[j] = kern.squared_norm(passage_vectors.row(j).data(), d);
    }

    match_matrix mm;
    mm.query_len = query_vectors.rows;
    mm.passage_len = passage_vectors.rows;
    mm.cosines.resize(mm.query_len * mm.passage_len);
    mm.has_zero_vectors = std::find(q_norms.begin(), q_norms.end(), 0.0) != q_norms.end() ||
                          std::find(p_norms.begin(), p_norms.end(), 0.0) != p_norms.end();
    for (std::size_t i = 0; i < mm.query_len; ++i) {
        for (std::size_t j = 0; j < mm.passage_len; ++j) {
            const double dot = kern.dot(query_vectors.row(i).data(), passage_vectors.row(j).data(), d);
            mm.cosines[i * mm.passage_len + j] = simd::cosine_from_parts(dot, q_norms[i], p_norms[j]);
        }
    }
    return mm;
}

kernel_activation_set kernel_activations(const matrix& query_vectors, const matrix& passage_vectors,
                                         const kernel_config& config)
{
    config.validate();
    const match_matrix mm = cosine_matrix(query_vectors, passage_vectors);
    kernel_activation_set out;
    out.kernels = config.size();
    out.query_len = mm.query_len;
    out.passage_len = mm.passage_len;
    out.values.resize(out.kernels * out.query_len * out.passage_len);
    const double inv = 1.0 / (2.0 * config.sigma * config.sigma);
    for (std::size_t k = 0; k < out.kernels; ++k) {
        for (std::size_t i = 0; i < out.query_len; ++i) {
            for (std::size_t j = 0; j < out.passage_len; ++j) {
                const double diff = mm.at(i, j) - config.centers[k];
                out.values[(k * out.query_len + i) * out.passage_len + j] = std::exp(-diff * diff * inv);
            }
        }
    }
    return out;
}

std::vector<double> pooled_features(const matrix& query_vectors, const matrix& passage_vectors,
                                    const kernel_config& config)
{
    config.validate();
    const match_matrix mm = cosine_matrix(query_vectors, passage_vectors);
    const auto& kern = simd::active();
    const double inv = 1.0 / (2.0 * config.sigma * config.sigma);
    std::vector<double> features(config.size(), 0.0);
    for (std::size_t k = 0; k < config.size(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < mm.query_len; ++i) {
            const double soft_tf = kern.rbf_sum(mm.row(i).data(), mm.passage_len, config.centers[k], inv);
            acc += std::log(std::max(soft_tf, log_floor));
        }
        features[k] = acc;
    }
    return features;
}

double score(const matrix& query_vectors, const matrix& passage_vectors, const kernel_config& config,
             const score_weights& weights)
{
    if (weights.weights.size() != config.size()) {
        throw std::invalid_argument("score: " + std::to_string(weights.weights.size()) + " weights for " +
                                    std::to_string(config.size()) + " kernels");
    }
    const auto features = pooled_features(query_vectors, passage_vectors, config);
    double s = weights.bias;
    for (std::size_t k = 0; k < features.size(); ++k) {
        s += features[k] * weights.weights[k];
    }
    return s;
}

std::vector<run_entry> rerank(const std::string& query_id, std::span<const candidate> candidates, std::size_t depth,
                              const std::function<double(const candidate&)>& scorer, const std::string& tag)
{
    if (depth == 0) {
        throw std::invalid_argument("rerank: depth must be >= 1");
    }
    std::vector<run_entry> out;
    if (candidates.empty()) {
        return out;
    }
    const std::size_t head = std::min(depth, candidates.size());
    std::vector<double> scores(head);
    parallel_for(head, [&](std::size_t i) { scores[i] = scorer(candidates[i]); });

    std::vector<std::size_t> order(head);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    out.reserve(candidates.size());
    for (std::size_t i : order) {
        out.push_back({query_id, candidates[i].passage_id, out.size() + 1, scores[i], tag});
    }
    const double floor_score = head > 0 ? scores[order.back()] : 0.0;
    for (std::size_t i = head; i < candidates.size(); ++i) {
        out.push_back({query_id, candidates[i].passage_id, out.size() + 1,
                       floor_score - static_cast<double>(i - head + 1), tag});
    }
    return out;
}

std::vector<run_entry> rerank(const query& q, std::span<const candidate> candidates, const collection& passages,
                              const embedding_table& table, const encoder_params& params,
                              const kernel_config& config, const score_weights& weights, std::size_t depth,
                              const std::string& tag)
{
    if (candidates.empty()) {
        return {};
    }
    const auto q_ctx = contextualize(q.tokens, sequence_role::query, table, params);
    return rerank(
        q.id, candidates, depth,
        [&](const candidate& c) {
            const auto p_ctx = contextualize(passages.at(c.passage_id).tokens, sequence_role::passage, table, params);
            return score(q_ctx.vectors, p_ctx.vectors, config, weights);
        },
        tag);
}

}  // namespace posbias
