#include "posbias/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "posbias/biasaudit.hpp"
#include "posbias/corpus.hpp"
#include "posbias/debias.hpp"
#include "posbias/error.hpp"
#include "posbias/evalmetrics.hpp"
#include "posbias/hash.hpp"
#include "posbias/kernelrank.hpp"
#include "posbias/parallel.hpp"
#include "posbias/probe.hpp"
#include "posbias/retrieval.hpp"
#include "posbias/run.hpp"
#include "posbias/synthetic.hpp"
#include "posbias/tkmodel.hpp"

namespace posbias::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json file_entry(const fs::path& path)
{
    auto in = open_input(path);
    std::uint64_t h = fnv1a64({});
    std::uintmax_t bytes = 0;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = static_cast<std::size_t>(in.gcount());
        h = fnv1a64({buf.data(), got}, h);
        bytes += got;
    }
    return {{"path", path.generic_string()}, {"bytes", bytes}, {"fnv1a64", hex64(h)}};
}

// Everything needed to reproduce a run. No timestamps: two identical runs
// produce identical manifests.
struct manifest {
    std::vector<std::string> argv;
    std::string command;
    std::uint64_t seed = 0;
    json config = json::object();
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;

    void input(const std::string& path)
    {
        if (!path.empty()) {
            inputs.emplace_back(path);
        }
    }

    void write(const fs::path& where) const
    {
        json doc;
        doc["tool"] = "posbias";
        doc["version"] = tool_version;
        doc["command"] = command;
        doc["argv"] = argv;
        doc["seed"] = seed;
        doc["config"] = config;
        doc["config_hash"] = hex64(fnv1a64(config.dump()));
        doc["inputs"] = json::array();
        for (const auto& p : inputs) {
            if (fs::is_regular_file(p)) {
                doc["inputs"].push_back(file_entry(p));
            } else {
                doc["inputs"].push_back({{"path", p.generic_string()}});
            }
        }
        doc["outputs"] = json::array();
        for (const auto& p : outputs) {
            doc["outputs"].push_back(file_entry(p));
        }
        auto out = open_output(where);
        out << doc.dump(2) << '\n';
        if (!out) {
            throw io_error("cannot write " + where.string());
        }
    }
};

template <class Fn>
void write_file(const fs::path& path, manifest& m, Fn&& fn)
{
    auto out = open_output(path);
    fn(out);
    out.flush();
    if (!out) {
        throw io_error("cannot write " + path.string());
    }
    m.outputs.push_back(path);
}

fs::path beside(const fs::path& file)
{
    return fs::path(file.string() + ".manifest.json");
}

std::string require(const std::string& value, const char* flag)
{
    if (value.empty()) {
        throw std::invalid_argument(std::string("missing required option ") + flag);
    }
    return value;
}

struct common_options {
    unsigned threads = 1;
    std::uint64_t seed = 0;
};

void add_common(CLI::App* sub, common_options& opts)
{
    sub->add_option("--threads", opts.threads, "worker threads (0 = all cores)")->capture_default_str();
    sub->add_option("--seed", opts.seed, "seed for every random draw")->capture_default_str();
}

// --- ingest -------------------------------------------------------------

struct ingest_options {
    std::string format = "msmarco";
    std::string collection;
    std::string queries;
    std::string qrels_path;
    std::string answers;
    std::string squad;
    bool synthetic = false;
    std::size_t passages = 200;
    std::size_t length = 50;
    std::string answer_position = "0";
    std::size_t answer_length = 1;
    std::size_t distractors = 4;
    std::size_t vocabulary = 300;
    std::string out;
};

void run_ingest(const ingest_options& o, const common_options& c, manifest& m, std::ostream& log)
{
    const fs::path dir = require(o.out, "--out");
    collection passages;
    query_set queries;
    qrels judgments;
    answer_set answers;
    json stats;
    if (o.synthetic) {
        synthetic_options s;
        s.passages = o.passages;
        s.length = o.length;
        if (o.answer_position == "uniform") {
            s.answer_position.reset();
        } else {
            try {
                s.answer_position = std::stod(o.answer_position);
            } catch (const std::exception&) {
                throw std::invalid_argument("--answer-position must be a number in [0,1) or 'uniform'");
            }
        }
        s.answer_length = o.answer_length;
        s.distractors = o.distractors;
        s.vocabulary = o.vocabulary;
        s.seed = c.seed;
        m.config = {{"mode", "synthetic"},
                    {"passages", s.passages},
                    {"length", s.length},
                    {"answer_position", o.answer_position},
                    {"answer_length", s.answer_length},
                    {"distractors", s.distractors},
                    {"vocabulary", s.vocabulary}};
        auto corpus = make_synthetic_corpus(s);
        passages = std::move(corpus.passages);
        queries = std::move(corpus.queries);
        judgments = std::move(corpus.judgments);
        answers = std::move(corpus.answers);
    } else if (o.format == "squad") {
        m.input(require(o.squad, "--squad"));
        m.config = {{"mode", "squad"}};
        auto bundle = load_squad(o.squad);
        passages = std::move(bundle.passages);
        queries = std::move(bundle.queries);
        judgments = std::move(bundle.judgments);
        answers = std::move(bundle.answers);
        stats["dropped_unanswerable"] = bundle.dropped_unanswerable;
    } else if (o.format == "msmarco") {
        m.config = {{"mode", "msmarco"}};
        load_stats ls;
        m.input(require(o.collection, "--collection"));
        passages = load_msmarco_collection(o.collection, &ls);
        stats["skipped_empty_passages"] = ls.skipped_empty;
        if (!o.queries.empty()) {
            m.input(o.queries);
            queries = load_msmarco_queries(o.queries);
        }
        if (!o.qrels_path.empty()) {
            m.input(o.qrels_path);
            judgments = load_qrels(o.qrels_path);
        }
        if (!o.answers.empty()) {
            m.input(o.answers);
            answers = load_msmarco_answers(o.answers);
        }
    } else {
        throw std::invalid_argument("--format must be msmarco or squad");
    }
    if (!judgments.empty()) {
        validate_qrels(passages, judgments);
    }

    write_file(dir / "collection.tsv", m, [&](std::ostream& out) { write_collection(out, passages); });
    if (!queries.empty()) {
        write_file(dir / "queries.tsv", m, [&](std::ostream& out) { write_queries(out, queries); });
    }
    if (!judgments.empty()) {
        write_file(dir / "qrels.txt", m, [&](std::ostream& out) { write_qrels(out, judgments); });
    }
    if (!answers.empty()) {
        write_file(dir / "answers.tsv", m, [&](std::ostream& out) { write_answers(out, answers); });
    }
    stats["passages"] = passages.size();
    stats["queries"] = queries.size();
    stats["judged_queries"] = judgments.size();
    write_file(dir / "stats.json", m, [&](std::ostream& out) { out << stats.dump(2) << '\n'; });
    m.write(dir / "manifest.json");
    log << "ingested " << passages.size() << " passages, " << queries.size() << " queries\n";
}

// --- audit --------------------------------------------------------------

struct audit_options {
    std::string collection;
    std::string qrels_path;
    std::string answers;
    std::size_t bins = 20;
    std::string out;
};

void run_audit(const audit_options& o, manifest& m, std::ostream& log)
{
    const fs::path dir = require(o.out, "--out");
    if (o.bins == 0) {
        throw std::invalid_argument("--bins must be >= 1");
    }
    m.input(require(o.collection, "--collection"));
    m.input(require(o.qrels_path, "--qrels"));
    m.input(require(o.answers, "--answers"));
    m.config = {{"bins", o.bins}};
    const auto passages = load_msmarco_collection(o.collection);
    const auto judgments = load_qrels(o.qrels_path);
    const auto answers = load_msmarco_answers(o.answers);
    const auto result = audit(passages, judgments, answers);
    const auto hist = histogram(std::span<const answer_match>(result.matches), o.bins);

    write_file(dir / "matches.csv", m, [&](std::ostream& out) { write_matches_csv(out, result.matches); });
    write_file(dir / "histogram.csv", m, [&](std::ostream& out) { write_histogram_csv(out, hist); });
    json summary = {{"matches", result.matches.size()},
                    {"omitted_queries", result.omitted_queries},
                    {"tv_distance_from_uniform", hist.tv_distance_from_uniform()}};
    write_file(dir / "summary.json", m, [&](std::ostream& out) { out << summary.dump(2) << '\n'; });
    m.write(dir / "manifest.json");
    log << result.matches.size() << " answer matches, " << result.omitted_queries << " queries omitted\n";
}

// --- debias -------------------------------------------------------------

struct debias_options {
    std::string collection;
    std::string out;
    std::string rotation_map;
};

void run_debias(const debias_options& o, const common_options& c, manifest& m, std::ostream& log)
{
    const fs::path out = require(o.out, "--out");
    const fs::path map_path = require(o.rotation_map, "--rotation-map");
    m.input(require(o.collection, "--collection"));
    const auto passages = load_msmarco_collection(o.collection);
    const auto result = debias_collection(passages, c.seed);
    write_file(out, m, [&](std::ostream& os) { write_collection(os, result.passages); });
    write_file(map_path, m, [&](std::ostream& os) { write_rotation_map(os, passages, result.rotations); });
    m.write(beside(out));
    log << "rotated " << result.passages.size() << " passages\n";
}

// --- retrieve -----------------------------------------------------------

struct retrieve_options {
    std::string collection;
    std::string queries;
    std::size_t k = 1000;
    double k1 = 0.9;
    double b = 0.4;
    std::string out;
};

void run_retrieve(const retrieve_options& o, manifest& m, std::ostream& log)
{
    const fs::path out = require(o.out, "--out");
    m.input(require(o.collection, "--collection"));
    m.input(require(o.queries, "--queries"));
    m.config = {{"k", o.k}, {"k1", o.k1}, {"b", o.b}};
    if (o.k == 0) {
        throw std::invalid_argument("--k must be >= 1");
    }
    const auto passages = load_msmarco_collection(o.collection);
    const auto queries = load_msmarco_queries(o.queries);
    const inverted_index index(passages, {o.k1, o.b});
    const auto run = retrieve_run(index, queries, o.k);
    write_file(out, m, [&](std::ostream& os) { write_run(os, run); });
    m.write(beside(out));
    log << "retrieved " << run.size() << " rows for " << queries.size() << " queries\n";
}

// --- shared model loading -----------------------------------------------

struct model_options {
    std::string embeddings;
    std::string encoder;
    std::string config;
    std::optional<double> alpha;
    std::size_t embedding_dim = 0;
    float embedding_scale = 1.0F;
};

void add_model_options(CLI::App* sub, model_options& o)
{
    sub->add_option("--embeddings", o.embeddings, "word vectors in text format (random when omitted)");
    sub->add_option("--encoder", o.encoder, "directory holding a saved encoder");
    sub->add_option("--config", o.config, "encoder config JSON (random weights from --seed)");
    sub->add_option("--alpha", o.alpha, "override the gate weight");
    sub->add_option("--embedding-dim", o.embedding_dim, "dimension of random embeddings (default: config)");
    sub->add_option("--embedding-scale", o.embedding_scale, "stddev of random embeddings")->capture_default_str();
}

struct loaded_model {
    embedding_table table;
    encoder_params params;
};

loaded_model load_model(const model_options& o, std::uint64_t seed, const std::vector<std::string>& vocabulary,
                        manifest& m)
{
    loaded_model model;
    std::optional<embedding_table> file_table;
    if (!o.embeddings.empty()) {
        m.input(o.embeddings);
        file_table = embedding_table::load_text(o.embeddings);
    }
    if (!o.encoder.empty()) {
        m.input(o.encoder + "/manifest.json");
        m.input(o.encoder + "/weights.bin");
        model.params = encoder_params::load(o.encoder);
    } else {
        encoder_config cfg;
        if (!o.config.empty()) {
            m.input(o.config);
            cfg = load_encoder_config(o.config);
        } else if (file_table) {
            cfg.embedding_dim = file_table->dim();
        } else if (o.embedding_dim) {
            cfg.embedding_dim = o.embedding_dim;
        }
        model.params = encoder_params::random(cfg, seed);
    }
    if (o.alpha) {
        model.params.config.alpha = static_cast<float>(*o.alpha);
    }
    model.params.config.validate();
    if (file_table) {
        model.table = std::move(*file_table);
    } else {
        const std::size_t dim = o.embedding_dim ? o.embedding_dim : model.params.config.embedding_dim;
        model.table = embedding_table::random(vocabulary, dim, seed, o.embedding_scale);
    }
    if (model.table.dim() != model.params.config.embedding_dim) {
        throw validation_error("embedding width " + std::to_string(model.table.dim()) +
                               " does not match encoder embedding_dim " +
                               std::to_string(model.params.config.embedding_dim));
    }
    m.config["encoder"] = json::parse(encoder_config_json(model.params.config));
    m.config["embedding_scale"] = o.embedding_scale;
    return model;
}

template <class Seq>
void collect_vocabulary(const Seq& seq, std::set<std::string>& vocab)
{
    for (const auto& rec : seq) {
        vocab.insert(rec.tokens.begin(), rec.tokens.end());
    }
}

// --- encode -------------------------------------------------------------

struct encode_options {
    std::string collection;
    model_options model;
    std::size_t limit = 0;
    std::string format = "text";
    bool save_model = false;
    std::string out;
};

void run_encode(const encode_options& o, const common_options& c, manifest& m, std::ostream& log)
{
    const fs::path dir = require(o.out, "--out");
    if (o.format != "text" && o.format != "binary") {
        throw std::invalid_argument("--format must be text or binary");
    }
    m.input(require(o.collection, "--collection"));
    const auto passages = load_msmarco_collection(o.collection);
    const std::size_t count = o.limit ? std::min(o.limit, passages.size()) : passages.size();
    std::set<std::string> vocab;
    for (std::size_t i = 0; i < count; ++i) {
        vocab.insert(passages[i].tokens.begin(), passages[i].tokens.end());
    }
    auto model = load_model(o.model, c.seed, {vocab.begin(), vocab.end()}, m);
    m.config["limit"] = o.limit;
    m.config["format"] = o.format;

    std::vector<std::vector<vector_record>> per_passage(count);
    parallel_for(count, [&](std::size_t i) {
        const auto seq = contextualize(passages[i].tokens, sequence_role::passage, model.table, model.params);
        per_passage[i] = to_records(passages[i].id, seq);
    });
    std::vector<vector_record> records;
    for (auto& batch : per_passage) {
        std::move(batch.begin(), batch.end(), std::back_inserter(records));
    }
    if (o.format == "text") {
        write_file(dir / "dump.tsv", m, [&](std::ostream& out) { write_dump(out, records); });
    } else {
        write_dump_binary(dir / "dump.bin", records);
        m.outputs.push_back(dir / "dump.bin");
        m.outputs.push_back(dir / "dump.bin.manifest.json");
    }
    if (o.save_model) {
        model.params.save(dir / "encoder");
        m.outputs.push_back(dir / "encoder" / "manifest.json");
        m.outputs.push_back(dir / "encoder" / "weights.bin");
        write_file(dir / "embeddings.txt", m, [&](std::ostream& out) { model.table.write_text(out); });
    }
    m.write(dir / "manifest.json");
    log << "encoded " << count << " passages into " << records.size() << " vectors\n";
}

// --- probe --------------------------------------------------------------

struct probe_options {
    std::string dump;
    std::size_t max_delta = 0;
    std::size_t cap = 10000;
    std::size_t min_occurrences = 2;
    std::size_t min_couples = 1000;
    bool normalize_by_count = false;
    std::string out;
};

std::vector<ats_row> ats_curve(const term_vector_index& index, std::size_t max_delta)
{
    std::vector<ats_row> rows;
    for (std::size_t d : index.deltas()) {
        if (max_delta && d > max_delta) {
            break;
        }
        if (auto row = index.ats(d)) {
            rows.push_back(*row);
        }
    }
    return rows;
}

void run_probe(const probe_options& o, const common_options& c, manifest& m, std::ostream& log)
{
    const fs::path dir = require(o.out, "--out");
    m.input(require(o.dump, "--dump"));
    if (fs::exists(o.dump + ".manifest.json")) {
        m.input(o.dump + ".manifest.json");
    }
    const auto records = load_dump(o.dump);
    term_index_options opts;
    opts.cap = o.cap;
    opts.min_occurrences = o.min_occurrences;
    opts.seed = c.seed;
    const auto index = term_vector_index::build(records, opts);
    const std::size_t max_delta = o.max_delta ? o.max_delta : index.default_max_delta(o.min_couples);
    m.config = {{"max_delta", o.max_delta},
                {"effective_max_delta", max_delta},
                {"cap", o.cap},
                {"min_occurrences", o.min_occurrences},
                {"min_couples", o.min_couples},
                {"normalize_by_count", o.normalize_by_count}};
    const auto rows = ats_curve(index, max_delta);
    write_file(dir / "ats.csv", m, [&](std::ostream& out) { write_ats_csv(out, rows); });
    const auto result = mats(index, max_delta, o.normalize_by_count);
    write_file(dir / "mats.json", m, [&](std::ostream& out) { write_mats_json(out, result, o.normalize_by_count); });
    m.write(dir / "manifest.json");
    log << "MATS " << result.mats << " over deltas 1.." << result.max_delta << " (" << index.term_count()
        << " terms)\n";
}

// --- rerank -------------------------------------------------------------

struct rerank_options {
    std::string run;
    std::string collection;
    std::string queries;
    model_options model;
    std::size_t depth = 1000;
    std::size_t kernels = 11;
    double sigma = 0.1;
    std::string weights;
    std::string tag = "tk";
    std::string out;
};

score_weights load_weights(const std::string& path, std::size_t kernels)
{
    auto in = open_input(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw parse_error(path, 0, e.what());
    }
    score_weights w;
    try {
        w.weights = doc.at("weights").get<std::vector<double>>();
        w.bias = doc.value("bias", 0.0);
    } catch (const json::exception& e) {
        throw parse_error(path, 0, std::string("expected {\"weights\": [...], \"bias\": x}: ") + e.what());
    }
    if (w.weights.size() != kernels) {
        throw validation_error(path + ": " + std::to_string(w.weights.size()) + " weights for " +
                               std::to_string(kernels) + " kernels");
    }
    return w;
}

void run_rerank(const rerank_options& o, const common_options& c, manifest& m, std::ostream& log)
{
    const fs::path out = require(o.out, "--out");
    m.input(require(o.run, "--run"));
    m.input(require(o.collection, "--collection"));
    m.input(require(o.queries, "--queries"));
    const auto candidates_run = load_run(o.run);
    const auto passages = load_msmarco_collection(o.collection);
    const auto queries = load_msmarco_queries(o.queries);

    std::set<std::string> vocab;
    collect_vocabulary(passages, vocab);
    collect_vocabulary(queries, vocab);
    auto model = load_model(o.model, c.seed, {vocab.begin(), vocab.end()}, m);
    const auto kernels = kernel_config::evenly_spaced(o.kernels, o.sigma);
    score_weights weights = score_weights::uniform(o.kernels);
    if (!o.weights.empty()) {
        m.input(o.weights);
        weights = load_weights(o.weights, o.kernels);
    }
    m.config["depth"] = o.depth;
    m.config["kernels"] = o.kernels;
    m.config["sigma"] = o.sigma;
    m.config["tag"] = o.tag;

    std::vector<std::string> qids;
    for (const auto& [qid, entries] : candidates_run) {
        if (!queries.contains(qid)) {
            throw validation_error(o.run + ": query '" + qid + "' is not in " + o.queries);
        }
        qids.push_back(qid);
    }
    // Each passage in any head is encoded once and shared across queries.
    std::map<std::string, std::size_t> slot_of;
    for (const auto& [qid, entries] : candidates_run) {
        for (std::size_t j = 0; j < std::min(o.depth, entries.size()); ++j) {
            slot_of.try_emplace(entries[j].passage_id, slot_of.size());
        }
    }
    std::vector<const passage*> heads(slot_of.size());
    for (const auto& [pid, slot] : slot_of) {
        heads[slot] = &passages.at(pid);
    }
    std::vector<matrix> encoded(heads.size());
    parallel_for(heads.size(), [&](std::size_t i) {
        encoded[i] = contextualize(heads[i]->tokens, sequence_role::passage, model.table, model.params).vectors;
    });

    std::vector<std::vector<run_entry>> reranked(qids.size());
    parallel_for(qids.size(), [&](std::size_t i) {
        const auto& entries = candidates_run.at(qids[i]);
        std::vector<candidate> cands;
        cands.reserve(entries.size());
        for (const auto& e : entries) {
            cands.push_back({e.passage_id, e.score});
        }
        const auto q_vectors =
            contextualize(queries.at(qids[i]).tokens, sequence_role::query, model.table, model.params).vectors;
        reranked[i] = rerank(
            qids[i], cands, o.depth,
            [&](const candidate& cand) {
                return score(q_vectors, encoded[slot_of.at(cand.passage_id)], kernels, weights);
            },
            o.tag);
    });
    std::vector<run_entry> rows;
    for (auto& r : reranked) {
        std::move(r.begin(), r.end(), std::back_inserter(rows));
    }
    write_file(out, m, [&](std::ostream& os) { write_run(os, rows); });
    m.write(beside(out));
    log << "re-ranked " << qids.size() << " queries\n";
}

// --- eval ---------------------------------------------------------------

struct eval_options {
    std::string run;
    std::string run_b;
    std::string qrels_path;
    std::size_t k = 10;
    bool pratt = false;
    std::string delta_base = "a";
    std::string out;
};

delta_base parse_delta_base(const std::string& v)
{
    if (v == "a") {
        return delta_base::a;
    }
    if (v == "b") {
        return delta_base::b;
    }
    throw std::invalid_argument("--delta-base must be a or b");
}

void write_metric_tables(const fs::path& per_query, const fs::path& table, const std::string& run_a,
                         const std::string& run_b, const std::string& qrels_path, std::size_t k, bool pratt,
                         const std::string& base, manifest& m, std::ostream& log)
{
    const auto a = load_run(run_a);
    const auto judgments = load_qrels(qrels_path);
    if (run_b.empty()) {
        const auto report = evaluate(a, judgments, k);
        if (!per_query.empty()) {
            write_file(per_query, m, [&](std::ostream& out) { write_per_query_csv(out, report); });
        }
        write_file(table, m, [&](std::ostream& out) { write_summary_csv(out, report); });
        for (metric which : all_metrics) {
            log << metric_name(which, k) << ' ' << report.mean(which) << '\n';
        }
        return;
    }
    const auto b = load_run(run_b);
    const auto cmp = compare_runs(a, b, judgments, k, pratt ? zero_method::pratt : zero_method::wilcox,
                                  parse_delta_base(base));
    if (!per_query.empty()) {
        write_file(per_query, m, [&](std::ostream& out) { write_per_query_csv(out, cmp); });
    }
    write_file(table, m, [&](std::ostream& out) { write_comparison_csv(out, cmp); });
    write_comparison_csv(log, cmp);
}

void run_eval(const eval_options& o, manifest& m, std::ostream& log)
{
    const fs::path dir = require(o.out, "--out");
    m.input(require(o.run, "--run"));
    m.input(o.run_b);
    m.input(require(o.qrels_path, "--qrels"));
    m.config = {{"k", o.k}, {"zero_method", o.pratt ? "pratt" : "wilcox"}, {"delta_base", o.delta_base}};
    write_metric_tables(dir / "per_query.csv", dir / "metrics.csv", o.run, o.run_b, o.qrels_path, o.k, o.pratt,
                        o.delta_base, m, log);
    m.write(dir / "manifest.json");
}

// --- report -------------------------------------------------------------

struct report_options {
    std::string matches;
    std::size_t bins = 20;
    std::string dump;
    std::size_t cap = 10000;
    std::size_t min_occurrences = 2;
    std::size_t max_delta = 0;
    std::string run;
    std::string run_b;
    std::string qrels_path;
    std::size_t k = 10;
    bool pratt = false;
    std::string delta_base = "a";
    std::string out;
};

void run_report(const report_options& o, const common_options& c, manifest& m, std::ostream& log)
{
    const fs::path dir = require(o.out, "--out");
    if (o.matches.empty() && o.dump.empty() && o.run.empty()) {
        throw std::invalid_argument("report needs at least one of --matches, --dump, --run");
    }
    m.config = {{"bins", o.bins}, {"cap", o.cap}, {"min_occurrences", o.min_occurrences},
                {"max_delta", o.max_delta}, {"k", o.k}, {"zero_method", o.pratt ? "pratt" : "wilcox"},
                {"delta_base", o.delta_base}};
    if (!o.matches.empty()) {
        if (o.bins == 0) {
            throw std::invalid_argument("--bins must be >= 1");
        }
        m.input(o.matches);
        auto in = open_input(o.matches);
        const auto positions = read_match_positions_csv(in, o.matches);
        const auto hist = histogram(std::span<const double>(positions), o.bins);
        write_file(dir / "figure1_histogram.csv", m, [&](std::ostream& out) { write_histogram_csv(out, hist); });
        log << "answer-position histogram: TV distance from uniform " << hist.tv_distance_from_uniform() << '\n';
    }
    if (!o.dump.empty()) {
        m.input(o.dump);
        term_index_options opts;
        opts.cap = o.cap;
        opts.min_occurrences = o.min_occurrences;
        opts.seed = c.seed;
        const auto index = term_vector_index::build(load_dump(o.dump), opts);
        const auto rows = ats_curve(index, o.max_delta);
        write_file(dir / "figure2_ats.csv", m, [&](std::ostream& out) { write_ats_csv(out, rows); });
        log << "ATS curve over " << rows.size() << " deltas\n";
    }
    if (!o.run.empty()) {
        m.input(o.run);
        m.input(o.run_b);
        m.input(require(o.qrels_path, "--qrels"));
        write_metric_tables({}, dir / "table_metrics.csv", o.run, o.run_b, o.qrels_path, o.k, o.pratt,
                            o.delta_base, m, log);
    }
    m.write(dir / "manifest.json");
}

// --- replay -------------------------------------------------------------

struct replay_options {
    std::string manifest_path;
    bool verify = false;
};

int run_replay(const replay_options& o, std::ostream& out, std::ostream& err)
{
    auto in = open_input(o.manifest_path);
    json doc;
    std::vector<std::string> argv;
    try {
        doc = json::parse(in);
        argv = doc.at("argv").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw parse_error(o.manifest_path, 0, e.what());
    }
    if (argv.empty() || argv.front() == "replay") {
        throw validation_error(o.manifest_path + ": manifest does not record a replayable command");
    }
    const int code = run_subcommand(argv, out, err);
    if (code != exit_ok || !o.verify) {
        return code;
    }
    std::size_t mismatches = 0;
    for (const auto& recorded : doc.value("outputs", json::array())) {
        const auto now = file_entry(recorded.at("path").get<std::string>());
        if (now.at("fnv1a64") != recorded.at("fnv1a64")) {
            err << "output differs: " << recorded.at("path").get<std::string>() << '\n';
            ++mismatches;
        }
    }
    if (mismatches) {
        return exit_validation;
    }
    out << "replay reproduced " << doc.value("outputs", json::array()).size() << " outputs\n";
    return exit_ok;
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Position-bias analysis and rotation debiasing for passage ranking", "posbias"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", tool_version);

    common_options common;
    ingest_options ingest;
    audit_options aud;
    debias_options deb;
    retrieve_options ret;
    encode_options enc;
    probe_options prb;
    rerank_options rr;
    eval_options ev;
    report_options rep;
    replay_options rpl;

    auto* s_ingest = app.add_subcommand("ingest", "normalize a corpus or generate a synthetic one");
    add_common(s_ingest, common);
    s_ingest->add_option("--format", ingest.format, "msmarco or squad")->capture_default_str();
    s_ingest->add_option("--collection", ingest.collection, "MS MARCO collection TSV");
    s_ingest->add_option("--queries", ingest.queries, "queries TSV");
    s_ingest->add_option("--qrels", ingest.qrels_path, "qrels file");
    s_ingest->add_option("--answers", ingest.answers, "answers TSV (qid<TAB>answer)");
    s_ingest->add_option("--squad", ingest.squad, "SQuAD 2.0 JSON");
    s_ingest->add_flag("--synthetic", ingest.synthetic, "generate a planted-answer corpus");
    s_ingest->add_option("--passages", ingest.passages, "synthetic passage count")->capture_default_str();
    s_ingest->add_option("--length", ingest.length, "synthetic passage length")->capture_default_str();
    s_ingest->add_option("--answer-position", ingest.answer_position, "relative start in [0,1) or 'uniform'")
        ->capture_default_str();
    s_ingest->add_option("--answer-length", ingest.answer_length, "answer tokens")->capture_default_str();
    s_ingest->add_option("--distractors", ingest.distractors, "non-relevant passages per query")
        ->capture_default_str();
    s_ingest->add_option("--vocabulary", ingest.vocabulary, "filler vocabulary size")->capture_default_str();
    s_ingest->add_option("--out", ingest.out, "output directory")->required();

    auto* s_audit = app.add_subcommand("audit", "locate answers and histogram their relative start");
    add_common(s_audit, common);
    s_audit->add_option("--collection", aud.collection)->required();
    s_audit->add_option("--qrels", aud.qrels_path)->required();
    s_audit->add_option("--answers", aud.answers)->required();
    s_audit->add_option("--bins", aud.bins)->capture_default_str();
    s_audit->add_option("--out", aud.out, "output directory")->required();

    auto* s_debias = app.add_subcommand("debias", "rotate every passage at a seeded pivot");
    add_common(s_debias, common);
    s_debias->add_option("--collection", deb.collection)->required();
    s_debias->add_option("--out", deb.out, "debiased collection TSV")->required();
    s_debias->add_option("--rotation-map", deb.rotation_map, "pid<TAB>r<TAB>n output")->required();

    auto* s_retrieve = app.add_subcommand("retrieve", "BM25 first-stage retrieval");
    add_common(s_retrieve, common);
    s_retrieve->add_option("--collection", ret.collection)->required();
    s_retrieve->add_option("--queries", ret.queries)->required();
    s_retrieve->add_option("--k", ret.k)->capture_default_str();
    s_retrieve->add_option("--k1", ret.k1)->capture_default_str();
    s_retrieve->add_option("--b", ret.b)->capture_default_str();
    s_retrieve->add_option("--out", ret.out, "TREC run output")->required();

    auto* s_encode = app.add_subcommand("encode", "dump contextualized passage vectors");
    add_common(s_encode, common);
    s_encode->add_option("--collection", enc.collection)->required();
    add_model_options(s_encode, enc.model);
    s_encode->add_option("--limit", enc.limit, "encode only the first n passages (0 = all)")->capture_default_str();
    s_encode->add_option("--format", enc.format, "text or binary")->capture_default_str();
    s_encode->add_flag("--save-model", enc.save_model, "also write the encoder and embeddings");
    s_encode->add_option("--out", enc.out, "output directory")->required();

    auto* s_probe = app.add_subcommand("probe", "ATS curve and MATS from a vector dump");
    add_common(s_probe, common);
    s_probe->add_option("--dump", prb.dump)->required();
    s_probe->add_option("--max-delta", prb.max_delta, "0 picks the largest well-populated delta")
        ->capture_default_str();
    s_probe->add_option("--cap", prb.cap, "couples kept per term and delta")->capture_default_str();
    s_probe->add_option("--min-occurrences", prb.min_occurrences)->capture_default_str();
    s_probe->add_option("--min-couples", prb.min_couples, "population threshold for the automatic max delta")
        ->capture_default_str();
    s_probe->add_flag("--normalize-by-count", prb.normalize_by_count, "divide by the number of summed deltas");
    s_probe->add_option("--out", prb.out, "output directory")->required();

    auto* s_rerank = app.add_subcommand("rerank", "kernel-pooling re-ranking of a candidate run");
    add_common(s_rerank, common);
    s_rerank->add_option("--run", rr.run, "candidate run")->required();
    s_rerank->add_option("--collection", rr.collection)->required();
    s_rerank->add_option("--queries", rr.queries)->required();
    add_model_options(s_rerank, rr.model);
    s_rerank->add_option("--depth", rr.depth)->capture_default_str();
    s_rerank->add_option("--kernels", rr.kernels)->capture_default_str();
    s_rerank->add_option("--sigma", rr.sigma)->capture_default_str();
    s_rerank->add_option("--weights", rr.weights, "JSON {\"weights\": [...], \"bias\": x}");
    s_rerank->add_option("--tag", rr.tag)->capture_default_str();
    s_rerank->add_option("--out", rr.out, "TREC run output")->required();

    auto* s_eval = app.add_subcommand("eval", "MRR, nDCG and recall, optionally against a second run");
    add_common(s_eval, common);
    s_eval->add_option("--run", ev.run)->required();
    s_eval->add_option("--run-b", ev.run_b);
    s_eval->add_option("--qrels", ev.qrels_path)->required();
    s_eval->add_option("--k", ev.k)->capture_default_str();
    s_eval->add_flag("--pratt", ev.pratt, "keep zero differences when ranking (Pratt)");
    s_eval->add_option("--delta-base", ev.delta_base, "relative delta over run a or run b")->capture_default_str();
    s_eval->add_option("--out", ev.out, "output directory")->required();

    auto* s_report = app.add_subcommand("report", "plot-ready CSVs and metric tables");
    add_common(s_report, common);
    s_report->add_option("--matches", rep.matches, "matches CSV from audit");
    s_report->add_option("--bins", rep.bins)->capture_default_str();
    s_report->add_option("--dump", rep.dump, "vector dump from encode");
    s_report->add_option("--cap", rep.cap)->capture_default_str();
    s_report->add_option("--min-occurrences", rep.min_occurrences)->capture_default_str();
    s_report->add_option("--max-delta", rep.max_delta, "0 = all deltas")->capture_default_str();
    s_report->add_option("--run", rep.run);
    s_report->add_option("--run-b", rep.run_b);
    s_report->add_option("--qrels", rep.qrels_path);
    s_report->add_option("--k", rep.k)->capture_default_str();
    s_report->add_flag("--pratt", rep.pratt);
    s_report->add_option("--delta-base", rep.delta_base)->capture_default_str();
    s_report->add_option("--out", rep.out, "output directory")->required();

    auto* s_replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    s_replay->add_option("manifest", rpl.manifest_path)->required();
    s_replay->add_flag("--verify", rpl.verify, "compare outputs with the recorded hashes");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_usage;
    }

    manifest m;
    m.argv = args;
    m.seed = common.seed;
    try {
        set_thread_count(common.threads);
        if (s_replay->parsed()) {
            return run_replay(rpl, out, err);
        }
        if (s_ingest->parsed()) {
            m.command = "ingest";
            run_ingest(ingest, common, m, out);
        } else if (s_audit->parsed()) {
            m.command = "audit";
            run_audit(aud, m, out);
        } else if (s_debias->parsed()) {
            m.command = "debias";
            run_debias(deb, common, m, out);
        } else if (s_retrieve->parsed()) {
            m.command = "retrieve";
            run_retrieve(ret, m, out);
        } else if (s_encode->parsed()) {
            m.command = "encode";
            run_encode(enc, common, m, out);
        } else if (s_probe->parsed()) {
            m.command = "probe";
            run_probe(prb, common, m, out);
        } else if (s_rerank->parsed()) {
            m.command = "rerank";
            run_rerank(rr, common, m, out);
        } else if (s_eval->parsed()) {
            m.command = "eval";
            run_eval(ev, m, out);
        } else if (s_report->parsed()) {
            m.command = "report";
            run_report(rep, common, m, out);
        }
    } catch (const parse_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    } catch (const io_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_validation;
    }
    return exit_ok;
}

int run_subcommand(const std::vector<std::string>& args)
{
    return run_subcommand(args, std::cout, std::cerr);
}

}  // namespace posbias::cli
