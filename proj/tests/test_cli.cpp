#include "advaug/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace advaug;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in) << path;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string& work_dir() {
    static const std::string dir = [] {
        const fs::path p = fs::temp_directory_path() / "advaug_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p.string();
    }();
    return dir;
}

std::string write_config(const std::string& name, int max_steps, const std::string& loss) {
    nlohmann::json j{
        {"loss_config", loss},
        {"seed", 1},
        {"max_steps", max_steps},
        {"batch_size", 4},
        {"eval_every", 10},
        {"label_smoothing", 0.1},
        {"model", {{"d_model", 16}, {"n_heads", 2}, {"n_enc", 1}, {"n_dec", 1}, {"d_ff", 32}, {"dropout", 0.0}}},
        {"data",
         {{"task", "copy"},
          {"vocab_size", 10},
          {"min_len", 3},
          {"max_len", 5},
          {"train_size", 24},
          {"valid_size", 8}}},
    };
    const std::string path = work_dir() + "/" + name;
    std::ofstream f(path);
    f << j.dump(2);
    return path;
}

// One 25-step run shared by the evaluate/attack/sweep/plot tests.
const std::string& shared_run() {
    static const std::string run = [] {
        const std::string cfg = write_config("tiny.json", 25, "aut+adv");
        const std::string dir = work_dir() + "/run";
        EXPECT_EQ(cli_main({"train", "--config", cfg, "--out", dir}), 0);
        return dir;
    }();
    return run;
}

TEST(Cli, TrainPopulatesExperimentDir) {
    const std::string& run = shared_run();
    for (const char* rel : {"/config.json", "/vocab.txt", "/metrics.jsonl", "/corpus/train.tsv",
                            "/corpus/valid.tsv", "/checkpoints/25/params.bin", "/checkpoints/25/meta.json",
                            "/checkpoints/25/vocab.txt"})
        EXPECT_TRUE(fs::exists(run + rel)) << rel;

    const nlohmann::json echo = nlohmann::json::parse(slurp(run + "/config.json"));
    EXPECT_EQ(echo.at("loss_config"), "aut+adv");
    EXPECT_EQ(echo.at("max_steps"), 25);
    EXPECT_EQ(load_metrics(run + "/metrics.jsonl").size(), 25u);
}

TEST(Cli, TrainDefaultOutUsesEnvRoot) {
    const std::string cfg = write_config("rooted.json", 6, "clean");
    const std::string root = work_dir() + "/exp_root";
    ASSERT_EQ(::setenv("ADVAUG_EXPERIMENT_ROOT", root.c_str(), 1), 0);
    EXPECT_EQ(cli_main({"train", "--config", cfg, "--seed", "9"}), 0);
    ::unsetenv("ADVAUG_EXPERIMENT_ROOT");
    EXPECT_TRUE(fs::is_directory(root + "/rooted-clean-s9"));
    EXPECT_TRUE(fs::exists(root + "/rooted-clean-s9/checkpoints/6/params.bin"));
}

TEST(Cli, TrainOverridesChangeTheRun) {
    const std::string cfg = write_config("ovr.json", 6, "clean");
    const std::string a = work_dir() + "/ovr_a";
    const std::string b = work_dir() + "/ovr_b";
    EXPECT_EQ(cli_main({"train", "--config", cfg, "--out", a, "--loss-config", "mixup"}), 0);
    EXPECT_EQ(cli_main({"train", "--config", cfg, "--out", b, "--seed", "5"}), 0);
    EXPECT_EQ(nlohmann::json::parse(slurp(a + "/config.json")).at("loss_config"), "mixup");
    EXPECT_EQ(nlohmann::json::parse(slurp(b + "/config.json")).at("seed"), 5);
}

TEST(Cli, EvaluateIsIdempotent) {
    const std::string& run = shared_run();
    EXPECT_EQ(cli_main({"evaluate", "--run", run}), 0);
    const std::string report = run + "/reports/eval-25.json";
    ASSERT_TRUE(fs::exists(report));
    const std::string first = slurp(report);
    EXPECT_EQ(cli_main({"evaluate", "--run", run}), 0);
    EXPECT_EQ(slurp(report), first);

    const nlohmann::json j = nlohmann::json::parse(first);
    EXPECT_EQ(j.at("step"), 25);
    EXPECT_EQ(j.at("examples"), 8);
    EXPECT_TRUE(j.contains("bleu"));
    EXPECT_TRUE(j.contains("loss"));
}

TEST(Cli, EvaluateErrors) {
    EXPECT_NE(cli_main({"evaluate", "--run", work_dir() + "/no_such_run"}), 0);
    EXPECT_NE(cli_main({"evaluate", "--run", shared_run(), "--step", "999"}), 0);

    // A run whose validation corpus has been mangled surfaces a corpus error.
    const std::string broken = work_dir() + "/broken_run";
    fs::copy(shared_run(), broken, fs::copy_options::recursive);
    std::ofstream(broken + "/corpus/valid.tsv") << "no tab separator here\n";
    EXPECT_NE(cli_main({"evaluate", "--run", broken}), 0);
}

TEST(Cli, AttackDumpsTabSeparatedPairs) {
    const std::string& run = shared_run();
    const std::string out = work_dir() + "/attack.tsv";
    EXPECT_EQ(cli_main({"attack", "--run", run, "--out", out, "--limit", "5", "--seed", "3"}), 0);

    std::ifstream f(out);
    ASSERT_TRUE(f);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        rows.push_back(cols);
    }
    ASSERT_EQ(rows.size(), 5u);

    std::ifstream valid(run + "/corpus/valid.tsv");
    for (const auto& cols : rows) {
        ASSERT_EQ(cols.size(), 4u);
        std::string vline;
        ASSERT_TRUE(std::getline(valid, vline));
        const std::size_t tab = vline.find('\t');
        EXPECT_EQ(cols[0], vline.substr(0, tab));  // x echoes the source
        EXPECT_EQ(cols[2], vline.substr(tab + 1));  // y echoes the reference
        EXPECT_EQ(split_ws(cols[1]).size(), split_ws(cols[0]).size());  // attack preserves length
    }
}

TEST(Cli, SweepNoiseModeWritesReport) {
    const std::string& run = shared_run();
    const std::string out = work_dir() + "/robustness.json";
    EXPECT_EQ(cli_main({"sweep", "--models", run, "--fractions", "0,0.5", "--smooth", "--out", out}), 0);
    const nlohmann::json j = nlohmann::json::parse(slurp(out));
    EXPECT_EQ(j.at("fractions"), (nlohmann::json::array({0.0, 0.5})));
    ASSERT_EQ(j.at("models").size(), 1u);
    EXPECT_EQ(j.at("models")[0].at("name"), "run");
    EXPECT_EQ(j.at("models")[0].at("bleu").size(), 2u);
}

TEST(Cli, SweepAlphaModeWritesTable) {
    const std::string cfg = write_config("asweep.json", 6, "aut");
    const std::string out = work_dir() + "/asweep_out";
    EXPECT_EQ(cli_main({"sweep", "--alphas", "0.2,8", "--loss-configs", "mixup,aut", "--config", cfg, "--out", out}),
              0);
    const nlohmann::json j = nlohmann::json::parse(slurp(out + "/alpha_sweep.json"));
    EXPECT_EQ(j.at("alphas"), (nlohmann::json::array({0.2, 8.0})));
    ASSERT_EQ(j.at("rows").size(), 2u);
    EXPECT_EQ(j.at("rows")[0].at("loss"), "mixup");
    EXPECT_EQ(j.at("rows")[0].at("bleu").size(), 2u);
    EXPECT_TRUE(fs::exists(out + "/mixup-a0.2/metrics.jsonl"));
    EXPECT_TRUE(fs::exists(out + "/aut-a8/metrics.jsonl"));
}

TEST(Cli, SweepArgValidation) {
    const std::string& run = shared_run();
    EXPECT_NE(cli_main({"sweep"}), 0);
    EXPECT_NE(cli_main({"sweep", "--models", run, "--alphas", "8"}), 0);
    EXPECT_NE(cli_main({"sweep", "--alphas", "8"}), 0);  // alpha mode needs --config
}

TEST(Cli, PlotWritesSvg) {
    const std::string& run = shared_run();
    const std::string out = work_dir() + "/curve.svg";
    EXPECT_EQ(cli_main({"plot", "--metrics", run + "/metrics.jsonl", "--labels", "aut+adv", "--field", "bleu",
                        "--out", out}),
              0);
    EXPECT_NE(slurp(out).find("<svg"), std::string::npos);
    EXPECT_EQ(cli_main({"plot", "--metrics", run + "/metrics.jsonl", "--field", "total", "--out", out}), 0);
    EXPECT_NE(cli_main({"plot", "--metrics", run + "/metrics.jsonl", "--field", "bogus", "--out", out}), 0);
}

TEST(Cli, UsageErrors) {
    EXPECT_NE(cli_main({}), 0);
    EXPECT_NE(cli_main({"frobnicate"}), 0);
    EXPECT_NE(cli_main({"train"}), 0);                                             // missing --config
    EXPECT_NE(cli_main({"train", "--config", work_dir() + "/missing.json"}), 0);   // nonexistent config
    EXPECT_NE(cli_main({"train", "--config", shared_run() + "/config.json", "--frob"}), 0);  // unknown flag
}

}  // namespace
