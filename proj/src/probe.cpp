#include "posbias/probe.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "posbias/corpus.hpp"
#include "posbias/error.hpp"
#include "posbias/hash.hpp"
#include "posbias/parallel.hpp"
#include "posbias/simd.hpp"

namespace posbias {

std::vector<vector_record> to_records(const std::string& passage_id, const contextualized_sequence& sequence)
{
    std::vector<vector_record> out;
    out.reserve(sequence.tokens.size());
    for (std::size_t i = 0; i < sequence.tokens.size(); ++i) {
        const auto row = sequence.vectors.row(i);
        out.push_back({sequence.tokens[i], passage_id, sequence.positions[i], {row.begin(), row.end()}});
    }
    return out;
}

void write_dump(std::ostream& out, std::span<const vector_record> records)
{
    char buf[64];
    for (const auto& r : records) {
        out << r.term << '\t' << r.passage_id << '\t' << r.position << '\t';
        for (std::size_t j = 0; j < r.vector.size(); ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r.vector[j]);
            if (j > 0) {
                out << ',';
            }
            out << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
}

std::vector<vector_record> read_dump(std::istream& in, const std::string& source)
{
    std::vector<vector_record> records;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        const auto t3 = t2 == std::string::npos ? t2 : line.find('\t', t2 + 1);
        if (t3 == std::string::npos || line.find('\t', t3 + 1) != std::string::npos) {
            throw parse_error(source, lineno, "expected `term<TAB>pid<TAB>pos<TAB>v1,...,vd`");
        }
        vector_record r;
        r.term = line.substr(0, t1);
        r.passage_id = line.substr(t1 + 1, t2 - t1 - 1);
        if (r.term.empty() || r.passage_id.empty()) {
            throw parse_error(source, lineno, "empty term or passage id");
        }
        auto [pp, pe] = std::from_chars(line.data() + t2 + 1, line.data() + t3, r.position);
        if (pe != std::errc() || pp != line.data() + t3 || r.position == 0) {
            throw parse_error(source, lineno, "position must be a positive integer");
        }
        const char* cur = line.data() + t3 + 1;
        const char* end = line.data() + line.size();
        while (cur <= end) {
            const char* comma = std::find(cur, end, ',');
            float v = 0.0F;
            auto [vp, ve] = std::from_chars(cur, comma, v);
            if (ve != std::errc() || vp != comma || !std::isfinite(v)) {
                throw parse_error(source, lineno, "bad vector component");
            }
            r.vector.push_back(v);
            cur = comma + 1;
        }
        if (dim == 0) {
            dim = r.vector.size();
        } else if (r.vector.size() != dim) {
            throw parse_error(source, lineno,
                              "vector length " + std::to_string(r.vector.size()) + " != " + std::to_string(dim));
        }
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

using json = nlohmann::json;

std::filesystem::path manifest_path_for(const std::filesystem::path& path)
{
    return std::filesystem::path(path.string() + ".manifest.json");
}

std::uint32_t to_little_endian(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::big) {
        return __builtin_bswap32(v);
    }
    return v;
}

}  // namespace

void write_dump_binary(const std::filesystem::path& path, std::span<const vector_record> records)
{
    const std::size_t dim = records.empty() ? 0 : records.front().vector.size();
    json triples = json::array();
    auto bin = open_output(path);
    for (const auto& r : records) {
        if (r.vector.size() != dim) {
            throw validation_error("write_dump_binary: mixed vector widths");
        }
        triples.push_back(json::array({r.term, r.passage_id, r.position}));
        for (float x : r.vector) {
            const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(x));
            bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    }
    if (!bin) {
        throw io_error("failed writing " + path.string());
    }
    auto manifest = open_output(manifest_path_for(path));
    manifest << json{{"format", "posbias-dump-v1"}, {"dtype", "float32-le"}, {"d", dim}, {"records", triples}}.dump()
             << '\n';
}

std::vector<vector_record> read_dump_binary(const std::filesystem::path& path)
{
    const auto mpath = manifest_path_for(path);
    json manifest;
    {
        auto in = open_input(mpath);
        try {
            manifest = json::parse(in);
        } catch (const json::parse_error& e) {
            throw parse_error(mpath.string(), 0, std::string("invalid JSON: ") + e.what());
        }
    }
    std::size_t dim = 0;
    std::vector<vector_record> records;
    try {
        dim = manifest.at("d").get<std::size_t>();
        for (const auto& t : manifest.at("records")) {
            records.push_back({t.at(0).get<std::string>(), t.at(1).get<std::string>(), t.at(2).get<std::size_t>(), {}});
        }
    } catch (const json::exception& e) {
        throw parse_error(mpath.string(), 0, std::string("bad manifest: ") + e.what());
    }
    auto bin = open_input(path);
    std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (raw.size() != records.size() * dim * sizeof(float)) {
        throw parse_error(path.string(), 0, "size does not match manifest (" + std::to_string(records.size()) +
                                                " records x d=" + std::to_string(dim) + ")");
    }
    std::size_t offset = 0;
    for (auto& r : records) {
        r.vector.resize(dim);
        for (auto& v : r.vector) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, raw.data() + offset, sizeof bits);
            offset += sizeof bits;
            v = std::bit_cast<float>(to_little_endian(bits));
        }
    }
    return records;
}

std::vector<vector_record> load_dump(const std::filesystem::path& path)
{
    if (std::filesystem::exists(manifest_path_for(path))) {
        return read_dump_binary(path);
    }
    auto in = open_input(path);
    return read_dump(in, path.string());
}

namespace {

struct occurrence {
    std::size_t record;
    std::string_view passage_id;
    std::size_t position;
};

// Kept couples of one term, keyed by delta.
using term_couples = std::map<std::size_t, std::vector<std::pair<std::uint32_t, std::uint32_t>>>;

term_couples sample_couples(std::span<const occurrence> occ, std::size_t cap, std::uint64_t seed)
{
    term_couples kept;
    std::map<std::size_t, std::uint64_t> seen;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < occ.size(); ++i) {
        for (std::size_t j = i + 1; j < occ.size(); ++j) {
            if (occ[i].passage_id == occ[j].passage_id) {
                continue;
            }
            const std::size_t delta =
                occ[i].position > occ[j].position ? occ[i].position - occ[j].position : occ[j].position - occ[i].position;
            auto& slots = kept[delta];
            const std::uint64_t count = ++seen[delta];
            const std::pair<std::uint32_t, std::uint32_t> couple{static_cast<std::uint32_t>(occ[i].record),
                                                                 static_cast<std::uint32_t>(occ[j].record)};
            if (count <= cap) {
                slots.push_back(couple);
            } else {
                // Reservoir sampling keeps a uniform subset of size cap.
                const auto r = static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * count) >> 64);
                if (r < cap) {
                    slots[r] = couple;
                }
            }
        }
    }
    return kept;
}

}  // namespace

term_vector_index term_vector_index::build(std::span<const vector_record> records, const term_index_options& options)
{
    if (options.cap == 0) {
        throw std::invalid_argument("term_vector_index: cap must be >= 1");
    }
    term_vector_index index;
    if (records.empty()) {
        return index;
    }
    index.m_dim = records.front().vector.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].vector.size() != index.m_dim) {
            throw validation_error("term_vector_index: record " + std::to_string(i) + " has width " +
                                   std::to_string(records[i].vector.size()) + ", expected " +
                                   std::to_string(index.m_dim));
        }
    }

    std::map<std::string_view, std::vector<occurrence>> by_term;
    for (std::size_t i = 0; i < records.size(); ++i) {
        by_term[records[i].term].push_back({i, records[i].passage_id, records[i].position});
    }
    std::vector<std::vector<occurrence>> groups;
    for (auto& [term, occ] : by_term) {
        if (occ.size() < std::max<std::size_t>(options.min_occurrences, 2)) {
            continue;
        }
        std::sort(occ.begin(), occ.end(), [](const occurrence& a, const occurrence& b) {
            return std::tie(a.passage_id, a.position, a.record) < std::tie(b.passage_id, b.position, b.record);
        });
        index.m_terms.emplace_back(term);
        groups.push_back(std::move(occ));
    }

    std::vector<double> sq_norms(records.size());
    const auto& kern = simd::active();
    parallel_for(records.size(), [&](std::size_t i) {
        sq_norms[i] = kern.squared_norm(records[i].vector.data(), index.m_dim);
    });

    // Per term: delta -> couple cosines.
    std::vector<std::map<std::size_t, std::vector<double>>> per_term(groups.size());
    parallel_for(groups.size(), [&](std::size_t t) {
        const std::uint64_t term_seed = options.seed ^ fnv1a64(index.m_terms[t]);
        const auto couples = sample_couples(groups[t], options.cap, term_seed);
        for (const auto& [delta, pairs] : couples) {
            auto& cos = per_term[t][delta];
            cos.reserve(pairs.size());
            for (const auto& [a, b] : pairs) {
                const double dot = kern.dot(records[a].vector.data(), records[b].vector.data(), index.m_dim);
                cos.push_back(simd::cosine_from_parts(dot, sq_norms[a], sq_norms[b]));
            }
        }
    });

    for (auto& term_map : per_term) {
        for (auto& [delta, cos] : term_map) {
            auto& bucket = index.m_buckets[delta];
            const std::size_t begin = bucket.cosines.size();
            bucket.cosines.insert(bucket.cosines.end(), cos.begin(), cos.end());
            bucket.term_ranges.emplace_back(begin, bucket.cosines.size());
        }
    }
    return index;
}

std::vector<std::size_t> term_vector_index::deltas() const
{
    std::vector<std::size_t> out;
    out.reserve(m_buckets.size());
    for (const auto& [delta, bucket] : m_buckets) {
        out.push_back(delta);
    }
    return out;
}

std::size_t term_vector_index::couple_count(std::size_t delta) const
{
    auto it = m_buckets.find(delta);
    return it == m_buckets.end() ? 0 : it->second.cosines.size();
}

std::optional<ats_row> term_vector_index::ats(std::size_t delta) const
{
    auto it = m_buckets.find(delta);
    if (it == m_buckets.end() || it->second.cosines.empty()) {
        return std::nullopt;
    }
    const auto& bucket = it->second;
    std::vector<double> term_means;
    term_means.reserve(bucket.term_ranges.size());
    for (const auto& [begin, end] : bucket.term_ranges) {
        term_means.push_back(
            stable_mean(std::span<const double>(bucket.cosines.data() + begin, end - begin)));
    }
    ats_row row;
    row.delta = delta;
    row.mean = stable_mean(term_means);
    row.stddev = population_stddev(bucket.cosines);
    row.couples = bucket.cosines.size();
    row.terms = term_means.size();
    return row;
}

std::size_t term_vector_index::default_max_delta(std::size_t min_couples) const
{
    std::size_t best = 0;
    bool found = false;
    for (const auto& [delta, bucket] : m_buckets) {
        if (bucket.cosines.size() >= min_couples) {
            best = delta;
            found = true;
        }
    }
    if (!found && !m_buckets.empty()) {
        best = m_buckets.rbegin()->first;
    }
    return best;
}

mats_result mats(const term_vector_index& index, std::size_t max_delta, bool normalize_by_count)
{
    if (max_delta < 2) {
        throw std::invalid_argument("mats: max delta must be >= 2");
    }
    const auto base = index.ats(0);
    if (!base) {
        throw validation_error("no delta=0 couples; MATS undefined");
    }
    mats_result result;
    result.max_delta = max_delta;
    std::vector<double> drops;
    for (std::size_t i = 1; i <= max_delta; ++i) {
        const auto row = index.ats(i);
        if (!row) {
            result.missing_deltas.push_back(i);
            continue;
        }
        drops.push_back(base->mean - row->mean);
    }
    result.summands = drops.size();
    const double denom = normalize_by_count ? static_cast<double>(drops.size()) : static_cast<double>(max_delta - 1);
    result.mats = drops.empty() ? 0.0 : stable_sum(drops) / denom;
    result.stddev = population_stddev(drops);
    return result;
}

void write_ats_csv(std::ostream& out, std::span<const ats_row> rows)
{
    out << "delta,mean,stddev,count\n";
    out << std::setprecision(12);
    for (const auto& r : rows) {
        out << r.delta << ',' << r.mean << ',' << r.stddev << ',' << r.couples << '\n';
    }
}

void write_mats_json(std::ostream& out, const mats_result& result, bool normalize_by_count)
{
    json j{{"mats", result.mats},
           {"mats_stddev", result.stddev},
           {"max_delta", result.max_delta},
           {"summands", result.summands},
           {"missing_deltas", result.missing_deltas},
           {"normalization", normalize_by_count ? "count" : "max_delta_minus_one"}};
    out << j.dump(2) << '\n';
}

}  // namespace posbias
