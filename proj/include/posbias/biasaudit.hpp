#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "posbias/corpus.hpp"

namespace posbias {

struct answer_match {
    std::string query_id;
    std::string passage_id;
    std::size_t start = 0;  // 1-based token index
    std::size_t answer_length = 0;
    std::size_t passage_length = 0;

    /// (start - 1) / n, in [0, 1).
    double relative_position() const noexcept
    {
        return static_cast<double>(start - 1) / static_cast<double>(passage_length);
    }

    friend bool operator==(const answer_match&, const answer_match&) = default;
};

/// All 1-based starts where `answer` occurs contiguously in `passage`,
/// overlapping occurrences included. Throws std::invalid_argument on an empty
/// answer.
std::vector<std::size_t> match_answer(std::span<const std::string> passage, std::span<const std::string> answer);

struct audit_result {
    std::vector<answer_match> matches;  // sorted by (query, passage, start)
    std::size_t omitted_queries = 0;    // queries whose answers never matched
};

/// Matches every answer of every query into each of its relevant passages
/// (grade > 0). Throws validation_error when a qrels passage id is missing.
audit_result audit(const collection& passages, const qrels& judgments, const answer_set& answers);

struct position_histogram {
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    std::size_t bin_count() const noexcept { return counts.size(); }
    std::vector<double> normalized() const;

    /// Total-variation distance to the uniform distribution over the bins.
    double tv_distance_from_uniform() const;
};

position_histogram histogram(std::span<const double> relative_positions, std::size_t bin_count);
position_histogram histogram(std::span<const answer_match> matches, std::size_t bin_count);

// `qid,pid,start,len,relpos`
void write_matches_csv(std::ostream& out, std::span<const answer_match> matches);
/// Reads the relpos column back from a matches CSV.
std::vector<double> read_match_positions_csv(std::istream& in, const std::string& source);
// `bin_low,bin_high,count,fraction`
void write_histogram_csv(std::ostream& out, const position_histogram& hist);

}  // namespace posbias
