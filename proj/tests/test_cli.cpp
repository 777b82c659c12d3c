#include <gtest/gtest.h>

#include <chrono>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "posbias/biasaudit.hpp"
#include "posbias/cli.hpp"

using namespace posbias;
namespace fs = std::filesystem;

namespace {

const fs::path fixture = fs::path(POSBIAS_TEST_DATA) / "fixture200";

struct outcome {
    int code;
    std::string out;
    std::string err;
};

outcome run_cli(std::vector<std::string> args)
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run_subcommand(args, out, err);
    return {code, out.str(), err.str()};
}

std::string f(const fs::path& p)
{
    return p.string();
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError)
{
    EXPECT_EQ(run_cli({"debias", "--bogus"}).code, cli::exit_usage);
    EXPECT_EQ(run_cli({}).code, cli::exit_usage);
    EXPECT_EQ(run_cli({"nonsense"}).code, cli::exit_usage);
}

TEST(Cli, MissingFileIsIoError)
{
    testkit::temp_dir dir("cli");
    const auto r = run_cli({"debias", "--collection", "/nonexistent/c.tsv", "--out", f(dir / "d.tsv"),
                            "--rotation-map", f(dir / "r.tsv")});
    EXPECT_EQ(r.code, cli::exit_io);
    EXPECT_FALSE(r.err.empty());
}

TEST(Cli, DanglingQrelsIsValidationError)
{
    testkit::temp_dir dir("cli");
    testkit::spit(dir / "c.tsv", "p1\tthe answer is here\n");
    testkit::spit(dir / "q.txt", "q1 0 ghost 1\n");
    testkit::spit(dir / "a.tsv", "q1\tanswer\n");
    const auto r = run_cli({"audit", "--collection", f(dir / "c.tsv"), "--qrels", f(dir / "q.txt"), "--answers",
                            f(dir / "a.tsv"), "--out", f(dir / "audit")});
    EXPECT_EQ(r.code, cli::exit_validation);
    EXPECT_NE(r.err.find("ghost"), std::string::npos) << r.err;
}

TEST(Cli, DebiasIsByteReproducible)
{
    testkit::temp_dir dir("cli");
    const std::vector<std::string> args{"debias",  "--collection", f(fixture / "collection.tsv"), "--seed", "99",
                                        "--out",   f(dir / "deb.tsv"), "--rotation-map", f(dir / "rot.tsv")};
    const std::vector<std::string> names{"deb.tsv", "rot.tsv", "deb.tsv.manifest.json"};
    std::vector<std::string> first;
    ASSERT_EQ(run_cli(args).code, 0);
    for (const auto& name : names) {
        first.push_back(testkit::slurp(dir / name));
    }
    ASSERT_EQ(run_cli(args).code, 0);
    for (std::size_t i = 0; i < names.size(); ++i) {
        EXPECT_EQ(testkit::slurp(dir / names[i]), first[i]) << names[i];
    }
    const auto m = nlohmann::json::parse(first[2]);
    EXPECT_EQ(m.at("command"), "debias");
    EXPECT_EQ(m.at("seed"), 99);
    EXPECT_NE(first[0], testkit::slurp(fixture / "collection.tsv"));
}

TEST(Cli, AuditOnPlantedFixtureFillsFirstBin)
{
    testkit::temp_dir dir("cli");
    const auto r = run_cli({"audit", "--collection", f(fixture / "collection.tsv"), "--qrels", f(fixture / "qrels.txt"),
                            "--answers", f(fixture / "answers.tsv"), "--bins", "10", "--out", f(dir / "audit")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = nlohmann::json::parse(testkit::slurp(dir / "audit" / "summary.json"));
    EXPECT_GT(summary.at("matches").get<std::size_t>(), 0U);
    const auto csv = testkit::slurp(dir / "audit" / "histogram.csv");
    EXPECT_NE(csv.find("\n0,0.1,"), std::string::npos);
    EXPECT_NE(csv.find(",1\n"), std::string::npos);
}

TEST(Cli, FullPipelineAndReplay)
{
    const auto start = std::chrono::steady_clock::now();
    testkit::temp_dir dir("cli");
    const auto col = f(fixture / "collection.tsv");
    const auto qry = f(fixture / "queries.tsv");
    const auto qrl = f(fixture / "qrels.txt");
    const auto ans = f(fixture / "answers.tsv");
    const auto deb = f(dir / "deb.tsv");
    const auto cfg = f(dir / "encoder.json");
    testkit::spit(dir / "encoder.json",
                  R"({"embedding_dim": 32, "layers": 2, "heads": 4, "head_size": 8, "ff_dim": 64, "alpha": 0})");
    const std::vector<std::vector<std::string>> steps{
        {"audit", "--collection", col, "--qrels", qrl, "--answers", ans, "--out", f(dir / "audit")},
        {"debias", "--collection", col, "--seed", "3", "--out", deb, "--rotation-map", f(dir / "rot.tsv")},
        {"retrieve", "--collection", col, "--queries", qry, "--k", "50", "--out", f(dir / "bm25.run")},
        {"retrieve", "--collection", deb, "--queries", qry, "--k", "50", "--out", f(dir / "bm25_deb.run")},
        {"encode", "--collection", col, "--config", cfg, "--limit", "100", "--seed", "5", "--out", f(dir / "enc")},
        {"probe", "--dump", f(dir / "enc" / "dump.tsv"), "--max-delta", "10", "--out", f(dir / "probe")},
        {"rerank", "--run", f(dir / "bm25.run"), "--collection", col, "--queries", qry, "--config", cfg, "--depth",
         "20", "--seed", "5", "--out", f(dir / "tk.run")},
        {"rerank", "--run", f(dir / "bm25_deb.run"), "--collection", deb, "--queries", qry, "--config", cfg, "--depth",
         "20", "--seed", "5", "--out", f(dir / "tk_deb.run")},
        {"eval", "--run", f(dir / "tk.run"), "--run-b", f(dir / "tk_deb.run"), "--qrels", qrl, "--out",
         f(dir / "eval")},
        {"report", "--matches", f(dir / "audit" / "matches.csv"), "--dump", f(dir / "enc" / "dump.tsv"), "--run",
         f(dir / "tk.run"), "--run-b", f(dir / "tk_deb.run"), "--qrels", qrl, "--out", f(dir / "report")},
    };
    for (const auto& step : steps) {
        const auto r = run_cli(step);
        ASSERT_EQ(r.code, 0) << step.front() << ": " << r.err;
    }
    for (const char* name : {"figure1_histogram.csv", "figure2_ats.csv", "table_metrics.csv"}) {
        EXPECT_TRUE(fs::exists(dir / "report" / name)) << name;
    }
    const auto table = testkit::slurp(dir / "report" / "table_metrics.csv");
    EXPECT_NE(table.find("MRR@10"), std::string::npos);
    EXPECT_NE(testkit::slurp(dir / "probe" / "mats.json").find("\"mats\""), std::string::npos);

    const auto replay = run_cli({"replay", f(dir / "probe" / "manifest.json"), "--verify"});
    EXPECT_EQ(replay.code, 0) << replay.err;
    testkit::spit(dir / "probe" / "ats.csv", "tampered\n");
    EXPECT_EQ(run_cli({"replay", f(dir / "probe" / "manifest.json"), "--verify"}).code, 0);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    EXPECT_LT(std::chrono::duration<double>(elapsed).count(), 60.0);
}
