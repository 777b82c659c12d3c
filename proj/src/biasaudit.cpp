#include "posbias/biasaudit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "posbias/parallel.hpp"

namespace posbias {

std::vector<std::size_t> match_answer(std::span<const std::string> passage, std::span<const std::string> answer)
{
    if (answer.empty()) {
        throw std::invalid_argument("match_answer: empty answer token list");
    }
    std::vector<std::size_t> starts;
    if (answer.size() > passage.size()) {
        return starts;
    }
    for (std::size_t i = 0; i + answer.size() <= passage.size(); ++i) {
        if (std::equal(answer.begin(), answer.end(), passage.begin() + static_cast<std::ptrdiff_t>(i))) {
            starts.push_back(i + 1);
        }
    }
    return starts;
}

audit_result audit(const collection& passages, const qrels& judgments, const answer_set& answers)
{
    validate_qrels(passages, judgments);

    struct work_item {
        const std::string* qid;
        const std::map<std::string, int>* docs;
        const std::vector<std::string>* answers;
    };
    std::vector<work_item> work;
    for (const auto& [qid, docs] : judgments) {
        auto it = answers.find(qid);
        if (it == answers.end() || it->second.empty()) {
            continue;
        }
        work.push_back({&qid, &docs, &it->second});
    }

    std::vector<std::vector<answer_match>> per_query(work.size());
    parallel_for(work.size(), [&](std::size_t w) {
        const auto& item = work[w];
        std::vector<token_list> answer_tokens;
        for (const auto& a : *item.answers) {
            auto toks = tokenize(a);
            if (!toks.empty()) {
                answer_tokens.push_back(std::move(toks));
            }
        }
        for (const auto& [pid, grade] : *item.docs) {
            if (grade <= 0) {
                continue;
            }
            const passage& psg = passages.at(pid);
            for (const auto& toks : answer_tokens) {
                for (std::size_t start : match_answer(psg.tokens, toks)) {
                    per_query[w].push_back({*item.qid, pid, start, toks.size(), psg.length()});
                }
            }
        }
    });

    audit_result result;
    for (auto& rows : per_query) {
        if (rows.empty()) {
            ++result.omitted_queries;
            continue;
        }
        result.matches.insert(result.matches.end(), std::make_move_iterator(rows.begin()),
                              std::make_move_iterator(rows.end()));
    }
    std::stable_sort(result.matches.begin(), result.matches.end(), [](const answer_match& a, const answer_match& b) {
        return std::tie(a.query_id, a.passage_id, a.start) < std::tie(b.query_id, b.passage_id, b.start);
    });
    return result;
}

std::vector<double> position_histogram::normalized() const
{
    std::vector<double> out(counts.size(), 0.0);
    if (total == 0) {
        return out;
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    }
    return out;
}

double position_histogram::tv_distance_from_uniform() const
{
    const auto freq = normalized();
    const double uniform = 1.0 / static_cast<double>(counts.size());
    compensated_sum acc;
    for (double f : freq) {
        acc.add(std::abs(f - uniform));
    }
    return 0.5 * acc.value();
}

position_histogram histogram(std::span<const double> relative_positions, std::size_t bin_count)
{
    if (bin_count == 0) {
        throw std::invalid_argument("histogram: bin count must be >= 1");
    }
    position_histogram hist;
    hist.counts.assign(bin_count, 0);
    for (double pos : relative_positions) {
        auto bin = static_cast<std::size_t>(std::floor(std::max(0.0, pos) * static_cast<double>(bin_count)));
        bin = std::min(bin, bin_count - 1);
        ++hist.counts[bin];
        ++hist.total;
    }
    return hist;
}

position_histogram histogram(std::span<const answer_match> matches, std::size_t bin_count)
{
    std::vector<double> positions;
    positions.reserve(matches.size());
    for (const auto& m : matches) {
        positions.push_back(m.relative_position());
    }
    return histogram(positions, bin_count);
}

void write_matches_csv(std::ostream& out, std::span<const answer_match> matches)
{
    out << "qid,pid,start,len,relpos\n";
    for (const auto& m : matches) {
        out << m.query_id << ',' << m.passage_id << ',' << m.start << ',' << m.answer_length << ','
            << std::setprecision(17) << m.relative_position() << '\n';
    }
}

std::vector<double> read_match_positions_csv(std::istream& in, const std::string& source)
{
    std::vector<double> positions;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || (lineno == 1 && line.rfind("qid,", 0) == 0)) {
            continue;
        }
        const auto columns = std::count(line.begin(), line.end(), ',') + 1;
        if (columns != 5) {
            throw parse_error(source, lineno, "expected 5 columns, found " + std::to_string(columns));
        }
        const std::string_view field = std::string_view(line).substr(line.rfind(',') + 1);
        double relpos = 0.0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), relpos);
        if (ec != std::errc() || ptr != field.data() + field.size() || relpos < 0.0 || relpos >= 1.0) {
            throw parse_error(source, lineno, "relpos must be a number in [0, 1)");
        }
        positions.push_back(relpos);
    }
    return positions;
}

void write_histogram_csv(std::ostream& out, const position_histogram& hist)
{
    out << "bin_low,bin_high,count,fraction\n";
    const auto freq = hist.normalized();
    const auto bins = static_cast<double>(hist.bin_count());
    for (std::size_t i = 0; i < hist.bin_count(); ++i) {
        out << std::setprecision(6) << static_cast<double>(i) / bins << ',' << static_cast<double>(i + 1) / bins << ','
            << hist.counts[i] << ',' << std::setprecision(10) << freq[i] << '\n';
    }
}

}  // namespace posbias
