#include "posbias/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "posbias/parallel.hpp"

namespace posbias {

namespace {

bool is_relevant(const relevance_map& judged, const std::string& pid)
{
    auto it = judged.find(pid);
    return it != judged.end() && it->second > 0;
}

std::size_t relevant_count(const relevance_map& judged)
{
    return static_cast<std::size_t>(
        std::count_if(judged.begin(), judged.end(), [](const auto& kv) { return kv.second > 0; }));
}

void check_k(std::size_t k)
{
    if (k == 0) {
        throw std::invalid_argument("metric cutoff k must be >= 1");
    }
}

}  // namespace

double reciprocal_rank_at(std::span<const run_entry> ranked, const relevance_map& judged, std::size_t k)
{
    check_k(k);
    const std::size_t limit = std::min(k, ranked.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (is_relevant(judged, ranked[i].passage_id)) {
            return 1.0 / static_cast<double>(i + 1);
        }
    }
    return 0.0;
}

double ndcg_at(std::span<const run_entry> ranked, const relevance_map& judged, std::size_t k)
{
    check_k(k);
    std::vector<int> ideal;
    for (const auto& [pid, grade] : judged) {
        if (grade > 0) {
            ideal.push_back(grade);
        }
    }
    if (ideal.empty()) {
        return 0.0;
    }
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
        idcg += static_cast<double>(ideal[i]) / std::log2(static_cast<double>(i + 2));
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
        auto it = judged.find(ranked[i].passage_id);
        if (it != judged.end() && it->second > 0) {
            dcg += static_cast<double>(it->second) / std::log2(static_cast<double>(i + 2));
        }
    }
    return dcg / idcg;
}

double recall_at(std::span<const run_entry> ranked, const relevance_map& judged, std::size_t k)
{
    check_k(k);
    const std::size_t total = relevant_count(judged);
    if (total == 0) {
        return 0.0;
    }
    std::size_t found = 0;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
        if (is_relevant(judged, ranked[i].passage_id)) {
            ++found;
        }
    }
    return static_cast<double>(found) / static_cast<double>(total);
}

std::string metric_name(metric m, std::size_t k)
{
    const char* base = m == metric::mrr ? "MRR" : m == metric::ndcg ? "nDCG" : "Recall";
    return std::string(base) + "@" + std::to_string(k);
}

double query_metrics::get(metric m) const
{
    switch (m) {
    case metric::mrr:
        return mrr;
    case metric::ndcg:
        return ndcg;
    case metric::recall:
        return recall;
    }
    return 0.0;
}

double metric_report::mean(metric m) const
{
    switch (m) {
    case metric::mrr:
        return mean_mrr;
    case metric::ndcg:
        return mean_ndcg;
    case metric::recall:
        return mean_recall;
    }
    return 0.0;
}

metric_report evaluate(const run_file& run, const qrels& judgments, std::size_t k)
{
    check_k(k);
    metric_report report;
    report.k = k;
    std::vector<std::pair<const std::vector<run_entry>*, const relevance_map*>> work;
    std::vector<std::string> ids;
    for (const auto& [qid, entries] : run) {
        auto it = judgments.find(qid);
        if (it == judgments.end()) {
            ++report.excluded_not_judged;
            continue;
        }
        if (relevant_count(it->second) == 0) {
            ++report.excluded_no_relevant;
            continue;
        }
        work.emplace_back(&entries, &it->second);
        ids.push_back(qid);
    }
    report.per_query.resize(work.size());
    parallel_for(work.size(), [&](std::size_t i) {
        const auto& [entries, judged] = work[i];
        report.per_query[i] = {ids[i], reciprocal_rank_at(*entries, *judged, k), ndcg_at(*entries, *judged, k),
                               recall_at(*entries, *judged, k)};
    });
    auto mean_of = [&](metric m) {
        std::vector<double> xs;
        xs.reserve(report.per_query.size());
        for (const auto& q : report.per_query) {
            xs.push_back(q.get(m));
        }
        return stable_mean(xs);
    };
    report.mean_mrr = mean_of(metric::mrr);
    report.mean_ndcg = mean_of(metric::ndcg);
    report.mean_recall = mean_of(metric::recall);
    return report;
}

namespace {

// Counts of subsets of `doubled_ranks` by subset sum.
std::vector<double> subset_sum_counts(std::span<const std::size_t> doubled_ranks)
{
    const std::size_t total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), std::size_t{0});
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t r : doubled_ranks) {
        for (std::size_t s = reach + 1; s-- > 0;) {
            if (counts[s] != 0.0) {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    return counts;
}

}  // namespace

wilcoxon_result wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, zero_method zeros)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument("wilcoxon_signed_rank: paired samples differ in length");
    }
    struct diff {
        double magnitude;
        int sign;
    };
    std::vector<diff> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = b[i] - a[i];
        if (d == 0.0 && zeros == zero_method::wilcox) {
            continue;
        }
        diffs.push_back({std::abs(d), d > 0.0 ? 1 : (d < 0.0 ? -1 : 0)});
    }
    std::sort(diffs.begin(), diffs.end(), [](const diff& x, const diff& y) { return x.magnitude < y.magnitude; });

    // Doubled average ranks stay integral: tied block [i, j) gets i + j + 1.
    std::vector<std::size_t> doubled(diffs.size());
    for (std::size_t i = 0; i < diffs.size();) {
        std::size_t j = i + 1;
        while (j < diffs.size() && diffs[j].magnitude == diffs[i].magnitude) {
            ++j;
        }
        for (std::size_t t = i; t < j; ++t) {
            doubled[t] = i + j + 1;
        }
        i = j;
    }

    wilcoxon_result result;
    std::vector<std::size_t> nonzero_ranks;
    std::size_t t_plus = 0;  // doubled W+
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        if (diffs[i].sign == 0) {
            continue;
        }
        nonzero_ranks.push_back(doubled[i]);
        if (diffs[i].sign > 0) {
            t_plus += doubled[i];
            result.w_plus += static_cast<double>(doubled[i]) / 2.0;
        } else {
            result.w_minus += static_cast<double>(doubled[i]) / 2.0;
        }
    }
    result.statistic = result.w_plus - result.w_minus;
    result.n_effective = nonzero_ranks.size();
    if (result.n_effective == 0) {
        return result;
    }

    if (result.n_effective <= 25) {
        result.exact = true;
        const auto counts = subset_sum_counts(nonzero_ranks);
        const double all = std::ldexp(1.0, static_cast<int>(result.n_effective));
        double lower = 0.0;
        double upper = 0.0;
        for (std::size_t s = 0; s < counts.size(); ++s) {
            if (s <= t_plus) {
                lower += counts[s];
            }
            if (s >= t_plus) {
                upper += counts[s];
            }
        }
        result.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
        return result;
    }

    double mean = 0.0;
    double var = 0.0;
    for (std::size_t r2 : nonzero_ranks) {
        const double r = static_cast<double>(r2) / 2.0;
        mean += r / 2.0;
        var += r * r / 4.0;
    }
    const double z = std::max(0.0, std::abs(result.w_plus - mean) - 0.5) / std::sqrt(var);
    result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return result;
}

std::optional<double> relative_delta(double a, double b, delta_base base)
{
    const double denom = base == delta_base::a ? a : b;
    if (denom == 0.0) {
        return std::nullopt;
    }
    return (b - a) / denom * 100.0;
}

run_comparison compare_runs(const run_file& a, const run_file& b, const qrels& judgments, std::size_t k,
                            zero_method zeros, delta_base base)
{
    const metric_report ra = evaluate(a, judgments, k);
    const metric_report rb = evaluate(b, judgments, k);
    run_comparison cmp;
    cmp.k = k;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < ra.per_query.size() && j < rb.per_query.size()) {
        const auto& qa = ra.per_query[i];
        const auto& qb = rb.per_query[j];
        if (qa.query_id < qb.query_id) {
            ++i;
        } else if (qb.query_id < qa.query_id) {
            ++j;
        } else {
            cmp.shared_queries.push_back(qa.query_id);
            cmp.per_query_a.push_back(qa);
            cmp.per_query_b.push_back(qb);
            ++i;
            ++j;
        }
    }
    if (cmp.shared_queries.empty()) {
        throw validation_error("compare_runs: the runs share no evaluable query");
    }
    for (metric m : all_metrics) {
        std::vector<double> xa;
        std::vector<double> xb;
        for (std::size_t q = 0; q < cmp.shared_queries.size(); ++q) {
            xa.push_back(cmp.per_query_a[q].get(m));
            xb.push_back(cmp.per_query_b[q].get(m));
        }
        metric_delta row;
        row.which = m;
        row.mean_a = stable_mean(xa);
        row.mean_b = stable_mean(xb);
        row.delta_pct = relative_delta(row.mean_a, row.mean_b, base);
        row.significance = wilcoxon_signed_rank(xa, xb, zeros);
        cmp.rows.push_back(row);
    }
    return cmp;
}

void write_per_query_csv(std::ostream& out, const metric_report& report)
{
    out << "qid,mrr,ndcg,recall\n" << std::setprecision(12);
    for (const auto& q : report.per_query) {
        out << q.query_id << ',' << q.mrr << ',' << q.ndcg << ',' << q.recall << '\n';
    }
}

void write_summary_csv(std::ostream& out, const metric_report& report)
{
    out << "metric,value\n" << std::setprecision(12);
    for (metric m : all_metrics) {
        out << metric_name(m, report.k) << ',' << report.mean(m) << '\n';
    }
    out << "queries," << report.per_query.size() << '\n';
    out << "excluded_not_judged," << report.excluded_not_judged << '\n';
    out << "excluded_no_relevant," << report.excluded_no_relevant << '\n';
}

void write_per_query_csv(std::ostream& out, const run_comparison& cmp)
{
    out << "qid,mrr_a,mrr_b,ndcg_a,ndcg_b,recall_a,recall_b\n" << std::setprecision(12);
    for (std::size_t q = 0; q < cmp.shared_queries.size(); ++q) {
        const auto& a = cmp.per_query_a[q];
        const auto& b = cmp.per_query_b[q];
        out << cmp.shared_queries[q] << ',' << a.mrr << ',' << b.mrr << ',' << a.ndcg << ',' << b.ndcg << ','
            << a.recall << ',' << b.recall << '\n';
    }
}

void write_comparison_csv(std::ostream& out, const run_comparison& cmp)
{
    out << "metric,orig,deb,delta_pct,p_value,sig\n";
    for (const auto& row : cmp.rows) {
        out << metric_name(row.which, cmp.k) << ',' << std::fixed << std::setprecision(6) << row.mean_a << ','
            << row.mean_b << ',';
        if (row.delta_pct) {
            out << std::setprecision(2) << *row.delta_pct;
        } else {
            out << "NA";
        }
        out << ',';
        const auto& p = row.significance.p_value;
        if (p) {
            out << std::setprecision(6) << *p;
        } else {
            out << "NA";
        }
        out << ',' << (p && *p < 0.05 ? "*" : "") << '\n';
        out << std::defaultfloat;
    }
}

}  // namespace posbias
