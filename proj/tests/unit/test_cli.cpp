#include "bubblecast/checkpoint.hpp"
#include "bubblecast/pipeline.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::path(::testing::TempDir()) /
               ("bubblecast_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(path("run.json")) << json{{"seed", 5},
                                                {"model", {{"hidden_dim", 4}}},
                                                {"train", {{"max_epochs", 2}, {"batch_size", 16}}},
                                                {"psy", {{"mc_replications", 99}}},
                                                {"pipeline", {{"text_dim", 4}}},
                                                {"synth", {{"assets", 3}, {"length", 60}}},
                                                {"planted", {{"assets", 6}, {"length", 60}, {"feature_dim", 4}}}}
                                               .dump();
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Outcome run(const std::string& args) const {
        const std::string out = path("stdout.txt"), err = path("stderr.txt");
        const std::string cmd = std::string("cd '") + dir_.string() + "' && '" + BUBBLECAST_CLI + "' " + args +
                                " >'" + out + "' 2>'" + err + "'";
        const int status = std::system(cmd.c_str());
        Outcome r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    // synth --planted, samples and train with the shared config.
    void build_model() const {
        ASSERT_EQ(run("synth --planted --config run.json --out p.csv --features-out f.jsonl --labels-out l.jsonl").code,
                  0);
        ASSERT_EQ(run("samples --config run.json --prices p.csv --features f.jsonl --labels l.jsonl --out s.jsonl")
                      .code,
                  0);
        const Outcome t = run("train --config run.json --samples s.jsonl --checkpoint m.json");
        ASSERT_EQ(t.code, 0) << t.err;
    }

    fs::path dir_;
};

std::size_t line_count(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_F(Cli, HelpListsEveryFlag) {
    const Outcome top = run("--help");
    EXPECT_EQ(top.code, 0);
    for (const char* cmd : {"label", "synth", "samples", "train", "eval", "predict"}) {
        EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
    }
    const Outcome sub = run("eval --help");
    EXPECT_EQ(sub.code, 0);
    for (const char* flag :
         {"--config", "--seed", "--prices", "--features", "--labels", "--samples", "--checkpoint", "--out"}) {
        EXPECT_NE(sub.out.find(flag), std::string::npos) << flag;
    }
}

TEST_F(Cli, UsageErrorsExitOneWithAJsonLine) {
    for (const char* args : {"", "frobnicate", "synth --bogus", "label --config run.json"}) {
        const Outcome r = run(args);
        EXPECT_EQ(r.code, 1) << args;
        ASSERT_EQ(line_count(r.err), 1u) << args << ": " << r.err;
        const json e = json::parse(r.err);
        EXPECT_TRUE(e.contains("error"));
        EXPECT_TRUE(e.contains("message"));
    }
    std::ofstream(path("bad.json")) << R"({"model": {"hiden_dim": 3}})";
    const Outcome bad = run("synth --config bad.json");
    EXPECT_EQ(bad.code, 1);
    EXPECT_EQ(json::parse(bad.err).at("error"), "config");
}

TEST_F(Cli, SynthAndLabelAreDeterministic) {
    ASSERT_EQ(run("synth --config run.json --out a.csv").code, 0);
    ASSERT_EQ(run("synth --config run.json --out b.csv").code, 0);
    ASSERT_EQ(run("synth --config run.json --seed 6 --out c.csv").code, 0);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
    EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));

    const Outcome l1 = run("label --config run.json --prices a.csv");
    ASSERT_EQ(l1.code, 0) << l1.err;
    EXPECT_EQ(line_count(l1.out), 3u);
    const Outcome l2 = run("label --config run.json --prices a.csv");
    EXPECT_EQ(l1.out, l2.out);
    for (const auto& line : {l1.out.substr(0, l1.out.find('\n'))}) {
        const json j = json::parse(line);
        EXPECT_TRUE(j.contains("asset"));
        EXPECT_TRUE(j.at("spans").is_array());
    }
}

TEST_F(Cli, DataErrorsExitTwo) {
    std::ofstream(path("empty.csv")) << "asset_id,date,open,high,low,close\n";
    const Outcome empty = run("label --prices empty.csv");
    EXPECT_EQ(empty.code, 2);
    EXPECT_EQ(json::parse(empty.err).at("error"), "data");
    const Outcome missing = run("label --prices nope.csv");
    EXPECT_EQ(missing.code, 2);
    EXPECT_FALSE(fs::exists(path("out.jsonl")));
}

TEST_F(Cli, PipelineRunsAreByteIdentical) {
    build_model();
    const std::string ckpt = slurp(path("m.json")), report = slurp(path("m.json.report.json"));
    const Outcome e1 = run("eval --config run.json --samples s.jsonl --checkpoint m.json");
    const Outcome p1 = run("predict --config run.json --samples s.jsonl --checkpoint m.json");
    ASSERT_EQ(e1.code, 0) << e1.err;
    ASSERT_EQ(p1.code, 0) << p1.err;
    const json metrics = json::parse(e1.out);
    EXPECT_TRUE(metrics.at("span").contains("mcc"));
    EXPECT_GT(metrics.at("n_samples").get<int>(), 0);

    build_model();
    EXPECT_EQ(slurp(path("m.json")), ckpt);
    EXPECT_EQ(slurp(path("m.json.report.json")), report);
    EXPECT_EQ(run("eval --config run.json --samples s.jsonl --checkpoint m.json").out, e1.out);
    EXPECT_EQ(run("predict --config run.json --samples s.jsonl --checkpoint m.json").out, p1.out);
}

TEST_F(Cli, ZeroCheckpointPredictsNothing) {
    ASSERT_EQ(run("synth --planted --config run.json --out p.csv --features-out f.jsonl --labels-out l.jsonl").code, 0);
    ASSERT_EQ(
        run("samples --config run.json --prices p.csv --features f.jsonl --labels l.jsonl --out s.jsonl").code, 0);
    const auto file = bubblecast::pipeline::load_samples(path("s.jsonl"));
    bubblecast::network::ModelConfig m;
    m.feature_dim = file.header.feature_dim;
    m.hidden_dim = 4;
    auto params = bubblecast::network::init_params(m, 1);
    for (auto& e : params.entries()) e.value.setZero();
    bubblecast::network::save_checkpoint(path("zero.json"), m, params);

    const Outcome p = run("predict --config run.json --samples s.jsonl --checkpoint zero.json --split all");
    ASSERT_EQ(p.code, 0) << p.err;
    std::istringstream lines(p.out);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const json j = json::parse(line);
        EXPECT_EQ(j.at("count"), 0);
        EXPECT_TRUE(j.at("spans").empty());
        ++n;
    }
    EXPECT_EQ(n, file.split.train.size() + file.split.validation.size() + file.split.test.size());
}

TEST_F(Cli, OraclePredictionsScorePerfectly) {
    ASSERT_EQ(run("synth --planted --config run.json --out p.csv --features-out f.jsonl --labels-out l.jsonl").code, 0);
    ASSERT_EQ(
        run("samples --config run.json --prices p.csv --features f.jsonl --labels l.jsonl --out s.jsonl").code, 0);
    const auto file = bubblecast::pipeline::load_samples(path("s.jsonl"));
    {
        std::ofstream out(path("oracle.jsonl"));
        for (const auto& s : file.split.test) {
            json spans = json::array();
            for (const auto& sp : s.true_spans) spans.push_back({sp.start, sp.end});
            out << json{{"asset", s.asset_id}, {"window_start_date", s.window_start_date}, {"spans", spans},
                        {"count", s.true_count}}
                       .dump()
                << '\n';
        }
    }
    const Outcome e = run("eval --config run.json --samples s.jsonl --predictions oracle.jsonl");
    ASSERT_EQ(e.code, 0) << e.err;
    const json j = json::parse(e.out);
    EXPECT_EQ(j.at("span").at("f1"), 1.0);
    EXPECT_EQ(j.at("span").at("mcc"), 1.0);
    EXPECT_EQ(j.at("span").at("em"), 1.0);
    EXPECT_EQ(j.at("count").at("acc"), 1.0);
}
