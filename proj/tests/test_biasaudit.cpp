#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "posbias/biasaudit.hpp"
#include "posbias/parallel.hpp"
#include "posbias/debias.hpp"
#include "posbias/error.hpp"
#include "posbias/synthetic.hpp"

using namespace posbias;

namespace {

std::vector<std::size_t> match(std::initializer_list<const char*> p, std::initializer_list<const char*> a)
{
    const token_list pt(p.begin(), p.end());
    const token_list at(a.begin(), a.end());
    return match_answer(pt, at);
}

struct tiny_corpus {
    collection passages;
    qrels judgments;
    answer_set answers;
};

tiny_corpus one_query(const std::string& text, const std::string& answer)
{
    tiny_corpus t;
    t.passages.add(make_passage("p1", text));
    add_judgment(t.judgments, "q1", "p1", 1);
    t.answers["q1"] = {answer};
    return t;
}

}  // namespace

TEST(MatchAnswer, Contiguous)
{
    EXPECT_EQ(match({"the", "cat", "sat"}, {"cat", "sat"}), std::vector<std::size_t>{2});
}

TEST(MatchAnswer, OverlappingOccurrencesAllCount)
{
    EXPECT_EQ(match({"a", "b", "a", "b", "a"}, {"a", "b"}), (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(match({"a", "a", "a"}, {"a", "a"}), (std::vector<std::size_t>{1, 2}));
}

TEST(MatchAnswer, NoMatch)
{
    EXPECT_TRUE(match({"the", "cat"}, {"dog"}).empty());
    EXPECT_TRUE(match({"the"}, {"the", "cat"}).empty());
}

TEST(MatchAnswer, EmptyAnswerIsArgumentError)
{
    EXPECT_THROW(match({"a"}, {}), std::invalid_argument);
}

TEST(MatchAnswer, SelfMatchIsFirstPosition)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        token_list p(1 + rng() % 12);
        for (auto& t : p) {
            t = std::string(1, static_cast<char>('a' + rng() % 3));
        }
        EXPECT_EQ(match_answer(p, p), std::vector<std::size_t>{1});
    }
}

TEST(Audit, TwoMatchesInOnePassage)
{
    const auto t = one_query("x answer y answer", "Answer");
    const auto r = audit(t.passages, t.judgments, t.answers);
    ASSERT_EQ(r.matches.size(), 2U);
    EXPECT_EQ(r.matches[0].start, 2U);
    EXPECT_EQ(r.matches[1].start, 4U);
    EXPECT_DOUBLE_EQ(r.matches[1].relative_position(), 0.75);
    EXPECT_EQ(r.omitted_queries, 0U);
}

TEST(Audit, UnmatchedAnswerIsOmitted)
{
    const auto t = one_query("nothing to see", "x y");
    const auto r = audit(t.passages, t.judgments, t.answers);
    EXPECT_TRUE(r.matches.empty());
    EXPECT_EQ(r.omitted_queries, 1U);
}

TEST(Audit, DanglingPassageIsValidationError)
{
    auto t = one_query("a b", "a");
    add_judgment(t.judgments, "q2", "missing", 1);
    EXPECT_THROW(audit(t.passages, t.judgments, t.answers), validation_error);
}

TEST(Audit, PlantedAtFirstTokenGivesZeroPositions)
{
    synthetic_options o;
    o.passages = 300;
    o.length = 30;
    o.answer_position = 0.0;
    o.answer_length = 2;
    o.seed = 9;
    const auto s = make_synthetic_corpus(o);
    const auto r = audit(s.passages, s.judgments, s.answers);
    ASSERT_EQ(r.matches.size(), s.queries.size());
    for (const auto& m : r.matches) {
        EXPECT_EQ(m.start, 1U);
        EXPECT_EQ(m.relative_position(), 0.0);
    }
    const auto h = histogram(std::span<const answer_match>(r.matches), 20);
    EXPECT_EQ(h.counts[0], h.total);
}

TEST(Audit, OutputIsSortedAndThreadIndependent)
{
    synthetic_options o;
    o.passages = 200;
    o.answer_position.reset();
    o.seed = 4;
    const auto s = make_synthetic_corpus(o);
    set_thread_count(1);
    const auto one = audit(s.passages, s.judgments, s.answers);
    set_thread_count(4);
    const auto four = audit(s.passages, s.judgments, s.answers);
    set_thread_count(1);
    EXPECT_EQ(one.matches, four.matches);
    EXPECT_TRUE(std::is_sorted(one.matches.begin(), one.matches.end(), [](const auto& a, const auto& b) {
        return std::tie(a.query_id, a.passage_id, a.start) < std::tie(b.query_id, b.passage_id, b.start);
    }));
}

TEST(Audit, MatchesFollowRotationMap)
{
    synthetic_options o;
    o.passages = 100;
    o.answer_position.reset();
    o.seed = 21;
    const auto s = make_synthetic_corpus(o);
    const auto before = audit(s.passages, s.judgments, s.answers);
    const auto deb = debias_collection(s.passages, 77);
    const auto after = audit(deb.passages, s.judgments, s.answers);
    ASSERT_EQ(before.matches.size(), after.matches.size());
    for (std::size_t i = 0; i < before.matches.size(); ++i) {
        const auto& m = before.matches[i];
        const auto rot = deb.rotations.at(m.passage_id);
        // Single-token answers never straddle the cut.
        EXPECT_EQ(after.matches[i].start, map_position(m.start, rot.pivot, rot.length));
    }
}

TEST(Histogram, BinsAndClamp)
{
    const std::vector<double> pos{0.0, 0.05, 0.95};
    const auto h = histogram(std::span<const double>(pos), 10);
    EXPECT_EQ(h.counts, (std::vector<std::size_t>{2, 0, 0, 0, 0, 0, 0, 0, 0, 1}));
    EXPECT_EQ(h.total, 3U);
    const std::vector<double> edge{0.999999999, 1.0};
    EXPECT_EQ(histogram(std::span<const double>(edge), 4).counts[3], 2U);
}

TEST(Histogram, EmptyInput)
{
    const auto h = histogram(std::span<const double>(), 5);
    EXPECT_EQ(h.counts, std::vector<std::size_t>(5, 0));
    EXPECT_EQ(h.total, 0U);
}

TEST(Histogram, ZeroBinsIsArgumentError)
{
    EXPECT_THROW(histogram(std::span<const double>(), 0), std::invalid_argument);
}

TEST(Histogram, UniformSampleIsFlat)
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> pos(100000);
    for (auto& p : pos) {
        p = u(rng);
    }
    const auto h = histogram(std::span<const double>(pos), 20);
    double sum = 0.0;
    for (double f : h.normalized()) {
        EXPECT_NEAR(f, 0.05, 0.01);
        sum += f;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Histogram, TvDistance)
{
    position_histogram h{{4, 0, 0, 0}, 4};
    EXPECT_DOUBLE_EQ(h.tv_distance_from_uniform(), 0.75);
    position_histogram flat{{2, 2, 2, 2}, 8};
    EXPECT_DOUBLE_EQ(flat.tv_distance_from_uniform(), 0.0);
}

TEST(Csv, MatchesRoundTripPositions)
{
    const std::vector<answer_match> ms{{"q1", "p1", 3, 1, 7}, {"q2", "p9", 1, 2, 10}};
    std::stringstream io;
    write_matches_csv(io, ms);
    EXPECT_EQ(io.str().substr(0, io.str().find('\n')), "qid,pid,start,len,relpos");
    const auto pos = read_match_positions_csv(io, "mem");
    ASSERT_EQ(pos.size(), 2U);
    EXPECT_EQ(pos[0], 2.0 / 7.0);
    EXPECT_EQ(pos[1], 0.0);
}

TEST(Csv, HistogramHeader)
{
    std::ostringstream out;
    write_histogram_csv(out, position_histogram{{1, 3}, 4});
    EXPECT_EQ(out.str(), "bin_low,bin_high,count,fraction\n0,0.5,1,0.25\n0.5,1,3,0.75\n");
}
