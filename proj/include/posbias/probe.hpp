#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posbias/tkmodel.hpp"

namespace posbias {

/// Contextualized vector of one term occurrence.
struct vector_record {
    std::string term;
    std::string passage_id;
    std::size_t position = 0;  // 1-based absolute position in the passage
    std::vector<float> vector;

    friend bool operator==(const vector_record&, const vector_record&) = default;
};

/// One record per token of an encoded passage.
std::vector<vector_record> to_records(const std::string& passage_id, const contextualized_sequence& sequence);

// Text dump: `term<TAB>pid<TAB>pos<TAB>v1,v2,...,vd`, shortest round-trip
// float formatting.
void write_dump(std::ostream& out, std::span<const vector_record> records);
std::vector<vector_record> read_dump(std::istream& in, const std::string& source);

// Binary dump: `path` holds the vectors as little-endian float32 and
// `path.manifest.json` holds d and the (term, pid, pos) triples.
void write_dump_binary(const std::filesystem::path& path, std::span<const vector_record> records);
std::vector<vector_record> read_dump_binary(const std::filesystem::path& path);

/// Picks the binary reader when `path.manifest.json` exists.
std::vector<vector_record> load_dump(const std::filesystem::path& path);

struct term_index_options {
    std::size_t min_occurrences = 2;
    std::size_t cap = 10000;  // couples kept per (term, delta)
    std::uint64_t seed = 0;
};

struct ats_row {
    std::size_t delta = 0;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t couples = 0;
    std::size_t terms = 0;
};

struct mats_result {
    double mats = 0.0;
    double stddev = 0.0;
    std::size_t max_delta = 0;
    std::size_t summands = 0;
    std::vector<std::size_t> missing_deltas;
};

/// Couples of same-term occurrences in different passages, grouped by the
/// absolute position gap. Groups larger than the cap are reduced to a seeded
/// uniform sample.
class term_vector_index {
  public:
    /// Throws validation_error on inconsistent vector widths.
    static term_vector_index build(std::span<const vector_record> records, const term_index_options& options = {});

    std::size_t dim() const noexcept { return m_dim; }
    std::size_t term_count() const noexcept { return m_terms.size(); }
    const std::vector<std::string>& terms() const noexcept { return m_terms; }

    /// Deltas with at least one couple, ascending.
    std::vector<std::size_t> deltas() const;
    std::size_t couple_count(std::size_t delta) const;

    /// Two-level average: per-term mean cosine, then the unweighted mean over
    /// terms that have couples at `delta`. stddev is over all couple
    /// cosines. nullopt when no couple has this delta.
    std::optional<ats_row> ats(std::size_t delta) const;

    /// Largest delta holding at least `min_couples` couples; the largest
    /// available delta when none does.
    std::size_t default_max_delta(std::size_t min_couples = 1000) const;

  private:
    struct delta_bucket {
        std::vector<double> cosines;
        std::vector<std::pair<std::size_t, std::size_t>> term_ranges;  // [begin, end) into cosines
    };

    std::size_t m_dim = 0;
    std::vector<std::string> m_terms;
    std::map<std::size_t, delta_bucket> m_buckets;
};

/// Mean drop of ATS against ATS(0) over deltas 1..max_delta, divided by
/// (max_delta - 1), or by the number of available deltas when
/// normalize_by_count is set. Missing deltas are skipped and listed. Throws
/// validation_error if ATS(0) is unavailable and std::invalid_argument if
/// max_delta < 2.
mats_result mats(const term_vector_index& index, std::size_t max_delta, bool normalize_by_count = false);

// `delta,mean,stddev,count`
void write_ats_csv(std::ostream& out, std::span<const ats_row> rows);
void write_mats_json(std::ostream& out, const mats_result& result, bool normalize_by_count);

}  // namespace posbias
