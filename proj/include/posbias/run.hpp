#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace posbias {

struct run_entry {
    std::string query_id;
    std::string passage_id;
    std::size_t rank = 0;
    double score = 0.0;
    std::string tag;

    friend bool operator==(const run_entry&, const run_entry&) = default;
};

/// query id -> entries ordered by rank (1..n).
using run_file = std::map<std::string, std::vector<run_entry>>;

/// 6-column TREC format `qid Q0 pid rank score tag`. Entries are ordered by
/// rank per query; duplicate or non-contiguous ranks are a validation error.
run_file read_run(std::istream& in, const std::string& source);
run_file load_run(const std::filesystem::path& path);

void write_run(std::ostream& out, std::span<const run_entry> entries);
void write_run(std::ostream& out, const run_file& run);

}  // namespace posbias
