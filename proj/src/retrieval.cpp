#include "posbias/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "posbias/parallel.hpp"

namespace posbias {

inverted_index::inverted_index(const collection& passages, bm25_params params) : m_params(params)
{
    if (passages.empty()) {
        throw std::invalid_argument("inverted_index: empty collection");
    }
    m_lengths.reserve(passages.size());
    m_ids.reserve(passages.size());
    double total = 0.0;
    std::map<std::string_view, std::uint32_t> tf;
    for (std::size_t ord = 0; ord < passages.size(); ++ord) {
        const passage& p = passages[ord];
        tf.clear();
        for (const auto& tok : p.tokens) {
            ++tf[tok];
        }
        for (const auto& [term, count] : tf) {
            m_postings[std::string(term)].push_back({static_cast<std::uint32_t>(ord), count});
        }
        m_lengths.push_back(static_cast<std::uint32_t>(p.length()));
        m_ids.push_back(p.id);
        total += static_cast<double>(p.length());
    }
    m_average_length = total / static_cast<double>(passages.size());
}

const std::vector<posting>& inverted_index::postings(const std::string& term) const
{
    static const std::vector<posting> empty;
    auto it = m_postings.find(term);
    return it == m_postings.end() ? empty : it->second;
}

std::uint64_t inverted_index::collection_frequency(const std::string& term) const
{
    std::uint64_t cf = 0;
    for (const auto& p : postings(term)) {
        cf += p.tf;
    }
    return cf;
}

double inverted_index::idf(const std::string& term) const
{
    const auto n = static_cast<double>(document_count());
    const auto df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double inverted_index::score(const token_list& query_tokens, std::size_t ordinal) const
{
    double s = 0.0;
    const double norm = 1.0 - m_params.b + m_params.b * static_cast<double>(m_lengths[ordinal]) / m_average_length;
    for (const auto& term : query_tokens) {
        const auto& plist = postings(term);
        auto it = std::lower_bound(plist.begin(), plist.end(), ordinal,
                                   [](const posting& p, std::size_t ord) { return p.ordinal < ord; });
        if (it == plist.end() || it->ordinal != ordinal) {
            continue;
        }
        const auto tf = static_cast<double>(it->tf);
        s += idf(term) * tf * (m_params.k1 + 1.0) / (tf + m_params.k1 * norm);
    }
    return s;
}

std::vector<candidate> inverted_index::search(const token_list& query_tokens, std::size_t k) const
{
    if (k == 0) {
        throw std::invalid_argument("bm25_search: k must be >= 1");
    }
    std::unordered_map<std::uint32_t, double> acc;
    for (const auto& term : query_tokens) {
        const auto& plist = postings(term);
        if (plist.empty()) {
            continue;
        }
        const double w = idf(term);
        for (const auto& p : plist) {
            const double norm =
                1.0 - m_params.b + m_params.b * static_cast<double>(m_lengths[p.ordinal]) / m_average_length;
            const auto tf = static_cast<double>(p.tf);
            acc[p.ordinal] += w * tf * (m_params.k1 + 1.0) / (tf + m_params.k1 * norm);
        }
    }
    std::vector<candidate> hits;
    hits.reserve(acc.size());
    for (const auto& [ord, s] : acc) {
        hits.push_back({m_ids[ord], s});
    }
    auto better = [](const candidate& a, const candidate& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.passage_id < b.passage_id;
    };
    if (hits.size() > k) {
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
        hits.resize(k);
    } else {
        std::sort(hits.begin(), hits.end(), better);
    }
    return hits;
}

std::vector<run_entry> retrieve_run(const inverted_index& index, const query_set& queries, std::size_t k)
{
    std::vector<std::vector<candidate>> per_query(queries.size());
    parallel_for(queries.size(), [&](std::size_t i) { per_query[i] = index.search(queries[i].tokens, k); });

    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return queries[a].id < queries[b].id; });

    std::vector<run_entry> run;
    for (std::size_t i : order) {
        for (std::size_t r = 0; r < per_query[i].size(); ++r) {
            run.push_back({queries[i].id, per_query[i][r].passage_id, r + 1, per_query[i][r].score, "bm25"});
        }
    }
    return run;
}

}  // namespace posbias
