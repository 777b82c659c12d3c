#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "posbias/error.hpp"
#include "posbias/parallel.hpp"
#include "posbias/probe.hpp"

using namespace posbias;

namespace {

vector_record rec(std::string term, std::string pid, std::size_t pos, std::vector<float> v)
{
    return {std::move(term), std::move(pid), pos, std::move(v)};
}

std::vector<vector_record> random_records(std::size_t count, std::size_t dim, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal;
    std::vector<vector_record> out;
    for (std::size_t i = 0; i < count; ++i) {
        vector_record r;
        r.term = "t" + std::to_string(rng() % 5);
        r.passage_id = "p" + std::to_string(rng() % 6);
        r.position = 1 + rng() % 8;
        for (std::size_t j = 0; j < dim; ++j) {
            r.vector.push_back(normal(rng));
        }
        out.push_back(std::move(r));
    }
    return out;
}

double naive_cosine(const std::vector<float>& a, const std::vector<float>& b)
{
    double ab = 0;
    double aa = 0;
    double bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

// delta -> two-level mean, over all couples.
std::map<std::size_t, double> brute_force_ats(const std::vector<vector_record>& recs)
{
    std::map<std::size_t, std::map<std::string, std::vector<double>>> by_delta;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        for (std::size_t j = i + 1; j < recs.size(); ++j) {
            if (recs[i].term != recs[j].term || recs[i].passage_id == recs[j].passage_id) {
                continue;
            }
            const auto d = recs[i].position > recs[j].position ? recs[i].position - recs[j].position
                                                                 : recs[j].position - recs[i].position;
            by_delta[d][recs[i].term].push_back(naive_cosine(recs[i].vector, recs[j].vector));
        }
    }
    std::map<std::size_t, double> out;
    for (const auto& [d, terms] : by_delta) {
        double outer = 0;
        for (const auto& [t, cos] : terms) {
            double inner = 0;
            for (double c : cos) {
                inner += c;
            }
            outer += inner / double(cos.size());
        }
        out[d] = outer / double(terms.size());
    }
    return out;
}

}  // namespace

TEST(Ats, TwoLevelMeanExample)
{
    const float h = std::sqrt(0.75F);
    const std::vector<vector_record> recs{
        rec("x", "p1", 1, {1, 0}),    rec("x", "p2", 3, {0, 1}),    rec("y", "p1", 1, {1, 0}),
        rec("y", "p2", 3, {1, 0}),    rec("y", "p3", 3, {0.5F, h}),
    };
    const auto idx = term_vector_index::build(recs);
    const auto row = idx.ats(2);
    ASSERT_TRUE(row.has_value());
    EXPECT_NEAR(row->mean, 0.375, 1e-7);
    EXPECT_EQ(row->couples, 3U);
    EXPECT_EQ(row->terms, 2U);
    EXPECT_FALSE(idx.ats(1).has_value());
    EXPECT_EQ(idx.couple_count(0), 1U);
}

TEST(Ats, SamePassageOccurrencesAreNotCoupled)
{
    const std::vector<vector_record> recs{rec("x", "p1", 1, {1, 0}), rec("x", "p1", 4, {1, 0})};
    const auto idx = term_vector_index::build(recs);
    EXPECT_TRUE(idx.deltas().empty());
}

TEST(Ats, MinOccurrencesFiltersTerms)
{
    const std::vector<vector_record> recs{rec("x", "p1", 1, {1, 0}), rec("x", "p2", 1, {1, 0}),
                                          rec("y", "p1", 2, {1, 0}), rec("y", "p2", 2, {1, 0}),
                                          rec("y", "p3", 2, {1, 0})};
    term_index_options o;
    o.min_occurrences = 3;
    const auto idx = term_vector_index::build(recs, o);
    EXPECT_EQ(idx.terms(), std::vector<std::string>{"y"});
}

TEST(Ats, MixedWidthsRejected)
{
    const std::vector<vector_record> recs{rec("x", "p1", 1, {1, 0}), rec("x", "p2", 1, {1, 0, 0})};
    EXPECT_THROW(term_vector_index::build(recs), validation_error);
}

TEST(Ats, MatchesBruteForce)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto recs = random_records(50, 7, seed);
        const auto idx = term_vector_index::build(recs);
        const auto expected = brute_force_ats(recs);
        ASSERT_EQ(idx.deltas().size(), expected.size());
        for (const auto& [d, v] : expected) {
            EXPECT_NEAR(idx.ats(d)->mean, v, 1e-9) << "delta " << d;
        }
    }
}

TEST(Ats, CapIsSeedDeterministic)
{
    const auto recs = random_records(300, 5, 9);
    term_index_options o;
    o.cap = 4;
    o.seed = 17;
    const auto a = term_vector_index::build(recs, o);
    const auto b = term_vector_index::build(recs, o);
    for (auto d : a.deltas()) {
        EXPECT_EQ(a.ats(d)->mean, b.ats(d)->mean);
        EXPECT_LE(a.couple_count(d), 4U * a.term_count());
    }
    o.seed = 18;
    const auto c = term_vector_index::build(recs, o);
    bool any_differs = false;
    for (auto d : a.deltas()) {
        any_differs = any_differs || a.ats(d)->mean != c.ats(d)->mean;
    }
    EXPECT_TRUE(any_differs);
}

TEST(Ats, StableAcrossThreadCounts)
{
    const auto recs = random_records(400, 9, 21);
    term_index_options o;
    o.cap = 20;
    set_thread_count(1);
    const auto one = term_vector_index::build(recs, o);
    set_thread_count(4);
    const auto four = term_vector_index::build(recs, o);
    set_thread_count(1);
    ASSERT_EQ(one.deltas(), four.deltas());
    for (auto d : one.deltas()) {
        EXPECT_NEAR(one.ats(d)->mean, four.ats(d)->mean, 1e-12);
    }
}

TEST(Mats, ThreeTermExample)
{
    const float c9 = 0.9F;
    const float c8 = 0.8F;
    const std::vector<vector_record> recs{
        rec("a", "p1", 1, {1, 0}),  rec("a", "p2", 1, {1, 0}),
        rec("b", "p1", 2, {1, 0}),  rec("b", "p2", 3, {c9, std::sqrt(1 - c9 * c9)}),
        rec("c", "p1", 3, {1, 0}),  rec("c", "p2", 5, {c8, std::sqrt(1 - c8 * c8)}),
    };
    const auto idx = term_vector_index::build(recs);
    const auto m = mats(idx, 2);
    EXPECT_NEAR(m.mats, 0.3, 1e-6);
    EXPECT_EQ(m.summands, 2U);
    EXPECT_TRUE(m.missing_deltas.empty());
    const auto m3 = mats(idx, 3);
    EXPECT_EQ(m3.missing_deltas, std::vector<std::size_t>{3});
    EXPECT_NEAR(m3.mats, 0.15, 1e-6);
    EXPECT_NEAR(mats(idx, 3, true).mats, 0.15, 1e-6);
}

TEST(Mats, IdenticalVectorsGiveZero)
{
    auto recs = random_records(200, 4, 5);
    for (auto& r : recs) {
        r.vector = {0.5F, -1.0F, 2.0F, 0.25F};
    }
    const auto idx = term_vector_index::build(recs);
    EXPECT_NEAR(mats(idx, idx.default_max_delta(1)).mats, 0.0, 1e-12);
}

TEST(Mats, Errors)
{
    const std::vector<vector_record> recs{rec("x", "p1", 1, {1, 0}), rec("x", "p2", 2, {1, 0})};
    const auto idx = term_vector_index::build(recs);
    EXPECT_THROW(mats(idx, 1), std::invalid_argument);
    EXPECT_THROW(mats(idx, 2), validation_error);
}

TEST(Mats, DefaultMaxDeltaFallback)
{
    const auto recs = random_records(100, 3, 4);
    const auto idx = term_vector_index::build(recs);
    EXPECT_EQ(idx.default_max_delta(1000000), idx.deltas().back());
    EXPECT_EQ(idx.default_max_delta(1), idx.deltas().back());
}

TEST(Dump, TextRoundTrip)
{
    const auto recs = random_records(30, 6, 2);
    std::stringstream s;
    write_dump(s, recs);
    EXPECT_EQ(read_dump(s, "mem"), recs);
}

TEST(Dump, BinaryRoundTrip)
{
    const auto recs = random_records(30, 6, 3);
    testkit::temp_dir dir("dump");
    write_dump_binary(dir / "d.bin", recs);
    EXPECT_EQ(read_dump_binary(dir / "d.bin"), recs);
    EXPECT_EQ(load_dump(dir / "d.bin"), recs);
}

TEST(Dump, MixedWidthNamesLine)
{
    std::istringstream in("a\tp1\t1\t1,2\nb\tp1\t2\t1,2,3\n");
    try {
        read_dump(in, "mem");
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_EQ(e.line(), 2U);
    }
    std::istringstream bad("a\tp1\t0\t1,2\n");
    EXPECT_THROW(read_dump(bad, "mem"), parse_error);
}

TEST(Dump, TruncatedBinaryRejected)
{
    const auto recs = random_records(5, 4, 3);
    testkit::temp_dir dir("dump");
    write_dump_binary(dir / "d.bin", recs);
    std::filesystem::resize_file(dir / "d.bin", 12);
    EXPECT_THROW(read_dump_binary(dir / "d.bin"), parse_error);
}

TEST(Mats, LiteralNormalizationBound)
{
    // Two drops of 2 over max delta 2: 4 / (2 - 1).
    const std::vector<vector_record> recs{
        rec("a", "p1", 1, {1, 0}), rec("a", "p2", 1, {1, 0}),  rec("b", "p1", 1, {1, 0}),
        rec("b", "p2", 2, {-1, 0}), rec("c", "p1", 1, {1, 0}), rec("c", "p2", 3, {-1, 0}),
    };
    const auto idx = term_vector_index::build(recs);
    const auto m = mats(idx, 2);
    EXPECT_NEAR(m.mats, 4.0, 1e-12);
    EXPECT_LE(std::abs(m.mats), 2.0 * double(m.summands) / double(m.max_delta - 1));
    EXPECT_NEAR(mats(idx, 2, true).mats, 2.0, 1e-12);
}
