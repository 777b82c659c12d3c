#include "posbias/run.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>

#include "posbias/corpus.hpp"
#include "posbias/error.hpp"

namespace posbias {

run_file read_run(std::istream& in, const std::string& source)
{
    run_file run;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string_view> f;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        f.clear();
        const std::string_view sv(line);
        std::size_t i = 0;
        while (i < sv.size()) {
            while (i < sv.size() && (sv[i] == ' ' || sv[i] == '\t')) {
                ++i;
            }
            const std::size_t start = i;
            while (i < sv.size() && sv[i] != ' ' && sv[i] != '\t') {
                ++i;
            }
            if (i > start) {
                f.push_back(sv.substr(start, i - start));
            }
        }
        if (f.empty()) {
            continue;
        }
        if (f.size() != 6) {
            throw parse_error(source, lineno, "expected 6 columns `qid Q0 pid rank score tag`, found " +
                                                  std::to_string(f.size()));
        }
        run_entry e;
        e.query_id = f[0];
        e.passage_id = f[2];
        e.tag = f[5];
        auto [p1, ec1] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), e.rank);
        auto [p2, ec2] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), e.score);
        if (ec1 != std::errc() || p1 != f[3].data() + f[3].size() || e.rank == 0) {
            throw parse_error(source, lineno, "rank must be a positive integer");
        }
        if (ec2 != std::errc() || p2 != f[4].data() + f[4].size()) {
            throw parse_error(source, lineno, "non-numeric score '" + std::string(f[4]) + "'");
        }
        run[e.query_id].push_back(std::move(e));
    }
    for (auto& [qid, entries] : run) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const run_entry& a, const run_entry& b) { return a.rank < b.rank; });
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].rank != i + 1) {
                throw validation_error(source + ": ranks for query '" + qid + "' are not contiguous 1.." +
                                       std::to_string(entries.size()));
            }
        }
    }
    return run;
}

run_file load_run(const std::filesystem::path& path)
{
    auto in = open_input(path);
    return read_run(in, path.string());
}

void write_run(std::ostream& out, std::span<const run_entry> entries)
{
    char buf[64];
    for (const auto& e : entries) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, e.score);
        out << e.query_id << " Q0 " << e.passage_id << ' ' << e.rank << ' '
            << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << ' ' << e.tag << '\n';
    }
}

void write_run(std::ostream& out, const run_file& run)
{
    for (const auto& [qid, entries] : run) {
        write_run(out, std::span<const run_entry>(entries));
    }
}

}  // namespace posbias
