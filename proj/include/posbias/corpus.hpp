#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "posbias/error.hpp"

namespace posbias {

using token_list = std::vector<std::string>;

/// Lowercased maximal runs of Unicode letters and digits; everything else
/// separates tokens. Invalid UTF-8 bytes are treated as separators.
token_list tokenize(std::string_view text);

std::string join_tokens(const token_list& tokens);

struct passage {
    std::string id;
    std::string text;
    token_list tokens;

    std::size_t length() const noexcept { return tokens.size(); }
};

struct query {
    std::string id;
    std::string text;
    token_list tokens;
};

/// Ordered records with a unique string id and O(1) lookup. Ordinals are
/// dense in insertion order.
template <typename Record>
class keyed_sequence {
  public:
    /// Returns false (and leaves the sequence unchanged) on a duplicate id.
    bool add(Record record)
    {
        auto [it, inserted] = m_index.try_emplace(record.id, m_records.size());
        if (!inserted) {
            return false;
        }
        m_records.push_back(std::move(record));
        return true;
    }

    std::size_t size() const noexcept { return m_records.size(); }
    bool empty() const noexcept { return m_records.empty(); }

    const Record& operator[](std::size_t ordinal) const { return m_records[ordinal]; }

    std::optional<std::size_t> ordinal_of(std::string_view id) const
    {
        auto it = m_index.find(std::string(id));
        if (it == m_index.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    bool contains(std::string_view id) const { return ordinal_of(id).has_value(); }

    const Record& at(std::string_view id) const
    {
        auto ord = ordinal_of(id);
        if (!ord) {
            throw validation_error("unknown id '" + std::string(id) + "'");
        }
        return m_records[*ord];
    }

    auto begin() const noexcept { return m_records.begin(); }
    auto end() const noexcept { return m_records.end(); }

    friend bool operator==(const keyed_sequence& a, const keyed_sequence& b) { return a.m_records == b.m_records; }

  private:
    std::vector<Record> m_records;
    std::unordered_map<std::string, std::size_t> m_index;
};

inline bool operator==(const passage& a, const passage& b)
{
    return a.id == b.id && a.text == b.text && a.tokens == b.tokens;
}

inline bool operator==(const query& a, const query& b)
{
    return a.id == b.id && a.text == b.text && a.tokens == b.tokens;
}

using collection = keyed_sequence<passage>;
using query_set = keyed_sequence<query>;

/// query id -> (passage id -> grade). Ordered maps keep every export
/// deterministic.
using qrels = std::map<std::string, std::map<std::string, int>>;

/// query id -> answer strings, in file order.
using answer_set = std::map<std::string, std::vector<std::string>>;

/// Inserts a judgment; a repeated (qid, pid) keeps the larger grade.
void add_judgment(qrels& judgments, const std::string& qid, const std::string& pid, int grade);

passage make_passage(std::string id, std::string text);
query make_query(std::string id, std::string text);

struct load_stats {
    std::size_t records = 0;
    std::size_t skipped_empty = 0;
};

// MS MARCO style TSV: `id<TAB>text`, one record per line, no header.
collection read_collection(std::istream& in, const std::string& source, load_stats* stats = nullptr);
query_set read_queries(std::istream& in, const std::string& source, load_stats* stats = nullptr);
answer_set read_answers(std::istream& in, const std::string& source, load_stats* stats = nullptr);
// `qid 0 pid grade`, any run of spaces/tabs between columns.
qrels read_qrels(std::istream& in, const std::string& source);

collection load_msmarco_collection(const std::filesystem::path& path, load_stats* stats = nullptr);
query_set load_msmarco_queries(const std::filesystem::path& path, load_stats* stats = nullptr);
answer_set load_msmarco_answers(const std::filesystem::path& path, load_stats* stats = nullptr);
qrels load_qrels(const std::filesystem::path& path);

struct squad_bundle {
    collection passages;
    query_set queries;
    qrels judgments;
    answer_set answers;
    std::size_t dropped_unanswerable = 0;
};

/// SQuAD 2.0 JSON. Unique contexts become passages `squad-p<k>` in
/// first-occurrence order; unanswerable questions are dropped.
squad_bundle read_squad(std::istream& in, const std::string& source);
squad_bundle load_squad(const std::filesystem::path& path);

/// Throws validation_error naming every qrels passage id missing from the
/// collection.
void validate_qrels(const collection& passages, const qrels& judgments);

void write_collection(std::ostream& out, const collection& passages);
void write_queries(std::ostream& out, const query_set& queries);
void write_answers(std::ostream& out, const answer_set& answers);
void write_qrels(std::ostream& out, const qrels& judgments);

/// Opens a file for reading or throws io_error.
std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace posbias
