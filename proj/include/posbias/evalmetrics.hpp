#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posbias/corpus.hpp"
#include "posbias/run.hpp"

namespace posbias {

using relevance_map = std::map<std::string, int>;

// Single-query metrics over a ranked list. A passage is relevant when its
// grade is > 0.
double reciprocal_rank_at(std::span<const run_entry> ranked, const relevance_map& judged, std::size_t k);
double ndcg_at(std::span<const run_entry> ranked, const relevance_map& judged, std::size_t k);
double recall_at(std::span<const run_entry> ranked, const relevance_map& judged, std::size_t k);

enum class metric { mrr, ndcg, recall };
inline constexpr metric all_metrics[] = {metric::mrr, metric::ndcg, metric::recall};

std::string metric_name(metric m, std::size_t k);

struct query_metrics {
    std::string query_id;
    double mrr = 0.0;
    double ndcg = 0.0;
    double recall = 0.0;

    double get(metric m) const;
};

struct metric_report {
    std::size_t k = 10;
    std::vector<query_metrics> per_query;  // query id order
    double mean_mrr = 0.0;
    double mean_ndcg = 0.0;
    double mean_recall = 0.0;
    std::size_t excluded_not_judged = 0;   // run queries absent from qrels
    std::size_t excluded_no_relevant = 0;  // judged but no grade > 0

    double mean(metric m) const;
};

/// Evaluates every run query that has at least one relevant passage.
/// Throws std::invalid_argument if k == 0.
metric_report evaluate(const run_file& run, const qrels& judgments, std::size_t k = 10);

inline metric_report mrr_at(const run_file& run, const qrels& judgments, std::size_t k = 10)
{
    return evaluate(run, judgments, k);
}
inline metric_report ndcg_at(const run_file& run, const qrels& judgments, std::size_t k = 10)
{
    return evaluate(run, judgments, k);
}
inline metric_report recall_at(const run_file& run, const qrels& judgments, std::size_t k = 10)
{
    return evaluate(run, judgments, k);
}

enum class zero_method {
    wilcox,  // drop zero differences
    pratt,   // rank zeros with the rest, then leave them out of the sums
};

struct wilcoxon_result {
    double w_plus = 0.0;
    double w_minus = 0.0;
    double statistic = 0.0;  // w_plus - w_minus; negates when a and b swap
    std::optional<double> p_value;  // nullopt when n_effective == 0
    std::size_t n_effective = 0;
    bool exact = false;
};

/// Two-sided paired signed-rank test on b - a with average ranks for tied
/// |differences|. Exact null distribution for n_effective <= 25, otherwise
/// normal approximation with continuity correction.
wilcoxon_result wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                     zero_method zeros = zero_method::wilcox);

/// Denominator of the relative delta: the first run (b - a) / a, or the
/// second run (b - a) / b.
enum class delta_base { a, b };

struct metric_delta {
    metric which = metric::mrr;
    double mean_a = 0.0;
    double mean_b = 0.0;
    std::optional<double> delta_pct;  // nullopt when the base mean is 0
    wilcoxon_result significance;
};

struct run_comparison {
    std::size_t k = 10;
    std::vector<std::string> shared_queries;
    std::vector<query_metrics> per_query_a;
    std::vector<query_metrics> per_query_b;
    std::vector<metric_delta> rows;  // mrr, ndcg, recall
};

/// Means over the queries evaluable in both runs, relative delta in percent,
/// and a paired test per metric. Throws validation_error on an empty
/// intersection.
run_comparison compare_runs(const run_file& a, const run_file& b, const qrels& judgments, std::size_t k = 10,
                            zero_method zeros = zero_method::wilcox, delta_base base = delta_base::a);

/// (b - a) / base * 100; nullopt when the base is 0.
std::optional<double> relative_delta(double a, double b, delta_base base = delta_base::a);

// `qid,mrr,ndcg,recall`
void write_per_query_csv(std::ostream& out, const metric_report& report);
// `metric,value`
void write_summary_csv(std::ostream& out, const metric_report& report);
// `qid,mrr_a,mrr_b,ndcg_a,ndcg_b,recall_a,recall_b`
void write_per_query_csv(std::ostream& out, const run_comparison& cmp);
// `metric,orig,deb,delta_pct,p_value,sig` (sig is `*` when p < 0.05)
void write_comparison_csv(std::ostream& out, const run_comparison& cmp);

}  // namespace posbias
