#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "posbias/corpus.hpp"
#include "posbias/kernelrank.hpp"
#include "posbias/run.hpp"

namespace posbias {

struct bm25_params {
    double k1 = 0.9;
    double b = 0.4;
};

struct posting {
    std::uint32_t ordinal = 0;
    std::uint32_t tf = 0;

    friend bool operator==(const posting&, const posting&) = default;
};

/// In-memory BM25 index over a collection.
class inverted_index {
  public:
    /// Throws std::invalid_argument on an empty collection.
    explicit inverted_index(const collection& passages, bm25_params params = {});

    std::size_t document_count() const noexcept { return m_lengths.size(); }
    double average_length() const noexcept { return m_average_length; }
    std::size_t length(std::size_t ordinal) const { return m_lengths[ordinal]; }
    const std::string& passage_id(std::size_t ordinal) const { return m_ids[ordinal]; }
    const bm25_params& params() const noexcept { return m_params; }

    /// Postings sorted by ordinal; empty for unknown terms.
    const std::vector<posting>& postings(const std::string& term) const;

    std::size_t document_frequency(const std::string& term) const { return postings(term).size(); }
    std::uint64_t collection_frequency(const std::string& term) const;
    std::size_t vocabulary_size() const noexcept { return m_postings.size(); }

    /// ln(1 + (N - df + 0.5) / (df + 0.5))
    double idf(const std::string& term) const;

    /// BM25 of one passage for a tokenized query (repeated query terms count
    /// once per occurrence).
    double score(const token_list& query_tokens, std::size_t ordinal) const;

    /// Top-k passages by BM25, ties by ascending passage id. Empty when no
    /// query term is in the vocabulary. Throws std::invalid_argument if k == 0.
    std::vector<candidate> search(const token_list& query_tokens, std::size_t k) const;

  private:
    bm25_params m_params;
    std::unordered_map<std::string, std::vector<posting>> m_postings;
    std::vector<std::uint32_t> m_lengths;
    std::vector<std::string> m_ids;
    double m_average_length = 0.0;
};

inline std::vector<candidate> bm25_search(const inverted_index& index, const token_list& query_tokens, std::size_t k)
{
    return index.search(query_tokens, k);
}

/// Ranks `k` candidates per query with tag `bm25`, queries in id order.
std::vector<run_entry> retrieve_run(const inverted_index& index, const query_set& queries, std::size_t k);

}  // namespace posbias
