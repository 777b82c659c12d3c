#include "posbias/corpus.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace posbias {
namespace {

bool is_word_codepoint(UChar32 c)
{
    if (c < 0x80) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    }
    return u_isalpha(c) || u_isdigit(c);
}

void append_utf8(std::string& out, UChar32 c)
{
    char buf[U8_MAX_LENGTH];
    int32_t len = 0;
    UBool error = false;
    U8_APPEND(buf, len, U8_MAX_LENGTH, c, error);
    if (!error) {
        out.append(buf, static_cast<std::size_t>(len));
    }
}

std::string_view trim(std::string_view s)
{
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

void strip_cr(std::string& line)
{
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

// Splits `id<TAB>text`; exactly one tab is required.
std::pair<std::string, std::string> split_tsv_pair(const std::string& line, const std::string& source,
                                                   std::size_t lineno)
{
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t')) + 1;
        throw parse_error(source, lineno, "expected 2 tab-separated columns, found " + std::to_string(columns));
    }
    std::string id = line.substr(0, tab);
    if (trim(id).empty()) {
        throw parse_error(source, lineno, "empty id");
    }
    return {std::move(id), line.substr(tab + 1)};
}

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') {
            ++i;
        }
        if (i > start) {
            fields.push_back(line.substr(start, i - start));
        }
    }
    return fields;
}

template <typename Record, typename Make>
keyed_sequence<Record> read_id_text(std::istream& in, const std::string& source, load_stats* stats, Make make)
{
    keyed_sequence<Record> records;
    load_stats local;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) {
            continue;
        }
        auto [id, text] = split_tsv_pair(line, source, lineno);
        Record record = make(std::move(id), std::move(text));
        if (record.tokens.empty()) {
            ++local.skipped_empty;
            continue;
        }
        const std::string dup = record.id;
        if (!records.add(std::move(record))) {
            throw parse_error(source, lineno, "duplicate id '" + dup + "'");
        }
        ++local.records;
    }
    if (stats != nullptr) {
        *stats = local;
    }
    return records;
}

}  // namespace

token_list tokenize(std::string_view text)
{
    token_list tokens;
    std::string current;
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    int32_t i = 0;
    while (i < length) {
        UChar32 c = 0;
        U8_NEXT(bytes, i, length, c);
        if (c >= 0 && is_word_codepoint(c)) {
            append_utf8(current, u_tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::string join_tokens(const token_list& tokens)
{
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += tokens[i];
    }
    return out;
}

passage make_passage(std::string id, std::string text)
{
    passage p{std::move(id), std::move(text), {}};
    p.tokens = tokenize(p.text);
    return p;
}

query make_query(std::string id, std::string text)
{
    query q{std::move(id), std::move(text), {}};
    q.tokens = tokenize(q.text);
    return q;
}

void add_judgment(qrels& judgments, const std::string& qid, const std::string& pid, int grade)
{
    auto& per_query = judgments[qid];
    auto [it, inserted] = per_query.try_emplace(pid, grade);
    if (!inserted) {
        it->second = std::max(it->second, grade);
    }
}

collection read_collection(std::istream& in, const std::string& source, load_stats* stats)
{
    return read_id_text<passage>(in, source, stats, make_passage);
}

query_set read_queries(std::istream& in, const std::string& source, load_stats* stats)
{
    return read_id_text<query>(in, source, stats, make_query);
}

answer_set read_answers(std::istream& in, const std::string& source, load_stats* stats)
{
    answer_set answers;
    load_stats local;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) {
            continue;
        }
        auto [id, text] = split_tsv_pair(line, source, lineno);
        const auto trimmed = trim(text);
        if (trimmed.empty()) {
            ++local.skipped_empty;
            continue;
        }
        answers[id].emplace_back(trimmed);
        ++local.records;
    }
    if (stats != nullptr) {
        *stats = local;
    }
    return answers;
}

qrels read_qrels(std::istream& in, const std::string& source)
{
    qrels judgments;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        const auto fields = split_ws(line);
        if (fields.empty()) {
            continue;
        }
        if (fields.size() != 4) {
            throw parse_error(source, lineno, "expected 4 columns, found " + std::to_string(fields.size()));
        }
        int grade = 0;
        const auto g = fields[3];
        auto [ptr, ec] = std::from_chars(g.data(), g.data() + g.size(), grade);
        if (ec != std::errc() || ptr != g.data() + g.size()) {
            throw parse_error(source, lineno, "non-integer grade '" + std::string(g) + "'");
        }
        if (grade < 0) {
            throw parse_error(source, lineno, "negative grade " + std::to_string(grade));
        }
        add_judgment(judgments, std::string(fields[0]), std::string(fields[2]), grade);
    }
    return judgments;
}

std::ifstream open_input(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

collection load_msmarco_collection(const std::filesystem::path& path, load_stats* stats)
{
    auto in = open_input(path);
    return read_collection(in, path.string(), stats);
}

query_set load_msmarco_queries(const std::filesystem::path& path, load_stats* stats)
{
    auto in = open_input(path);
    return read_queries(in, path.string(), stats);
}

answer_set load_msmarco_answers(const std::filesystem::path& path, load_stats* stats)
{
    auto in = open_input(path);
    return read_answers(in, path.string(), stats);
}

qrels load_qrels(const std::filesystem::path& path)
{
    auto in = open_input(path);
    return read_qrels(in, path.string());
}

namespace {

using json = nlohmann::json;

const json& require(const json& node, const char* key, const std::string& path, const std::string& source)
{
    if (!node.is_object() || !node.contains(key)) {
        throw parse_error(source, 0, "missing required field '" + path + "." + key + "'");
    }
    return node.at(key);
}

const json& require_array(const json& node, const char* key, const std::string& path, const std::string& source)
{
    const json& value = require(node, key, path, source);
    if (!value.is_array()) {
        throw parse_error(source, 0, "field '" + path + "." + key + "' is not an array");
    }
    return value;
}

std::string require_string(const json& node, const char* key, const std::string& path, const std::string& source)
{
    const json& value = require(node, key, path, source);
    if (!value.is_string()) {
        throw parse_error(source, 0, "field '" + path + "." + key + "' is not a string");
    }
    return value.get<std::string>();
}

}  // namespace

squad_bundle read_squad(std::istream& in, const std::string& source)
{
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw parse_error(source, 0, std::string("invalid JSON: ") + e.what());
    }

    squad_bundle out;
    std::unordered_map<std::string, std::string> context_to_pid;
    const json& data = require_array(root, "data", "$", source);
    for (std::size_t a = 0; a < data.size(); ++a) {
        const std::string article_path = "$.data[" + std::to_string(a) + "]";
        const json& paragraphs = require_array(data[a], "paragraphs", article_path, source);
        for (std::size_t p = 0; p < paragraphs.size(); ++p) {
            const std::string para_path = article_path + ".paragraphs[" + std::to_string(p) + "]";
            const std::string context = require_string(paragraphs[p], "context", para_path, source);
            const json& qas = require_array(paragraphs[p], "qas", para_path, source);

            auto found = context_to_pid.find(context);
            std::string pid;
            if (found == context_to_pid.end()) {
                pid = "squad-p" + std::to_string(context_to_pid.size());
                context_to_pid.emplace(context, pid);
                passage psg = make_passage(pid, context);
                if (!psg.tokens.empty()) {
                    out.passages.add(std::move(psg));
                }
            } else {
                pid = found->second;
            }

            for (std::size_t q = 0; q < qas.size(); ++q) {
                const std::string qa_path = para_path + ".qas[" + std::to_string(q) + "]";
                const json& qa = qas[q];
                const std::string qid = require_string(qa, "id", qa_path, source);
                const std::string question = require_string(qa, "question", qa_path, source);
                const bool impossible = qa.is_object() && qa.contains("is_impossible") && qa.at("is_impossible").is_boolean()
                                            ? qa.at("is_impossible").get<bool>()
                                            : false;
                if (impossible) {
                    ++out.dropped_unanswerable;
                    continue;
                }
                const json& answers = require_array(qa, "answers", qa_path, source);
                if (!out.passages.contains(pid)) {
                    continue;
                }
                query qry = make_query(qid, question);
                if (qry.tokens.empty()) {
                    continue;
                }
                if (!out.queries.add(std::move(qry))) {
                    throw parse_error(source, 0, "duplicate question id '" + qid + "' at " + qa_path);
                }
                add_judgment(out.judgments, qid, pid, 1);
                for (std::size_t k = 0; k < answers.size(); ++k) {
                    const std::string ans_path = qa_path + ".answers[" + std::to_string(k) + "]";
                    const std::string text = require_string(answers[k], "text", ans_path, source);
                    const auto trimmed = trim(text);
                    if (!trimmed.empty()) {
                        out.answers[qid].emplace_back(trimmed);
                    }
                }
            }
        }
    }
    return out;
}

squad_bundle load_squad(const std::filesystem::path& path)
{
    auto in = open_input(path);
    return read_squad(in, path.string());
}

void validate_qrels(const collection& passages, const qrels& judgments)
{
    std::vector<std::string> offenders;
    for (const auto& [qid, docs] : judgments) {
        for (const auto& [pid, grade] : docs) {
            if (!passages.contains(pid)) {
                offenders.push_back(qid + "/" + pid);
            }
        }
    }
    if (offenders.empty()) {
        return;
    }
    std::ostringstream msg;
    msg << offenders.size() << " qrels passage id(s) not found in the collection:";
    const std::size_t shown = std::min<std::size_t>(offenders.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) {
        msg << ' ' << offenders[i];
    }
    if (shown < offenders.size()) {
        msg << " ...";
    }
    throw validation_error(msg.str());
}

void write_collection(std::ostream& out, const collection& passages)
{
    for (const auto& p : passages) {
        out << p.id << '\t' << p.text << '\n';
    }
}

void write_queries(std::ostream& out, const query_set& queries)
{
    for (const auto& q : queries) {
        out << q.id << '\t' << q.text << '\n';
    }
}

void write_answers(std::ostream& out, const answer_set& answers)
{
    for (const auto& [qid, list] : answers) {
        for (const auto& a : list) {
            out << qid << '\t' << a << '\n';
        }
    }
}

void write_qrels(std::ostream& out, const qrels& judgments)
{
    for (const auto& [qid, docs] : judgments) {
        for (const auto& [pid, grade] : docs) {
            out << qid << " 0 " << pid << ' ' << grade << '\n';
        }
    }
}

}  // namespace posbias
