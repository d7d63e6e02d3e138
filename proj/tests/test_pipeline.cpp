#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdp/io.hpp"
#include "cdp/pipeline.hpp"
#include "cdp/synth.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace cdp;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "cdp_pipeline_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

PipelineConfig tiny_config(const std::string& out_dir) {
    PipelineConfig config;
    config.out_dir = out_dir;
    config.seed = 5;
    config.synth.n_clips = 4;
    config.synth.n_prompts = 3;
    config.synth.n_advances = 2;
    config.synth.dim = 24;
    config.search.tau_max = 1;
    config.train.epochs = 4;
    config.train.decay_epochs = {};
    config.model_dim = 16;
    return config;
}

void run_full_pipeline(const PipelineConfig& config) {
    cmd_synth(config);
    cmd_train(config);
    cmd_search(config);
    cmd_eval(config);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CDP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cmd_synth: byte-identical outputs across runs with one seed") {
    const auto dir_a = temp_dir("synth_a");
    const auto dir_b = temp_dir("synth_b");
    cmd_synth(tiny_config(dir_a.string()));
    cmd_synth(tiny_config(dir_b.string()));
    for (const char* name :
         {"instance.cdpe", "instance.cdpe.json", "instance.cdpt", "instance.cdpt.json",
          "ground_truth.json"}) {
        CHECK(slurp((dir_a / name).string()) == slurp((dir_b / name).string()));
    }
}

TEST_CASE("full pipeline: deterministic end to end under a fixed seed") {
    const auto dir_a = temp_dir("full_a");
    const auto dir_b = temp_dir("full_b");
    run_full_pipeline(tiny_config(dir_a.string()));
    run_full_pipeline(tiny_config(dir_b.string()));
    for (const char* name :
         {"instance.cdpe", "instance.cdpt", "ground_truth.json", "surrogate.cdpn",
          "loss_trace.txt", "assignments.jsonl", "search_summary.txt", "report.json"}) {
        CHECK(slurp((dir_a / name).string()) == slurp((dir_b / name).string()));
    }
}

TEST_CASE("cmd_synth: inseparable clips are recorded in the ground-truth sidecar") {
    const auto dir = temp_dir("synth_insep");
    auto config = tiny_config(dir.string());
    config.synth.profile = SeparabilityProfile::contains_inseparable;
    cmd_synth(config);
    const auto gt = nlohmann::json::parse(slurp((dir / "ground_truth.json").string()));
    int inseparable = 0;
    for (const auto& clip : gt.at("clips")) {
        if (!clip.at("separable").get<bool>()) ++inseparable;
    }
    CHECK(inseparable >= 1);
}

TEST_CASE("cmd_search: all-separable instance reports 100% unique") {
    const auto dir = temp_dir("search_unique");
    auto config = tiny_config(dir.string());
    cmd_synth(config);
    cmd_search(config);
    const std::string summary = slurp((dir / "search_summary.txt").string());
    CHECK(summary.find("unique=4") != std::string::npos);
    CHECK(summary.find("non_unique=0") != std::string::npos);
}

TEST_CASE("cmd_search: lambda above the max margin leaves nothing unique") {
    const auto dir = temp_dir("search_lambda");
    auto config = tiny_config(dir.string());
    config.search.lambda = 0.99;
    cmd_synth(config);
    cmd_search(config);
    const std::string summary = slurp((dir / "search_summary.txt").string());
    CHECK(summary.find("unique=0") != std::string::npos);
    const auto assignments = read_assignments((dir / "assignments.jsonl").string());
    for (const auto& a : assignments) {
        CHECK_FALSE(a.unique);
        CHECK(a.advance_used <= config.search.tau_max);
    }
}

TEST_CASE("cmd_search: surrogate path verifies flags against the exact tensor") {
    const auto dir = temp_dir("search_surrogate");
    auto config = tiny_config(dir.string());
    cmd_synth(config);
    cmd_train(config);
    config.use_surrogate = true;
    cmd_search(config);
    const std::string summary = slurp((dir / "search_summary.txt").string());
    CHECK(summary.find("verified_against_exact=true") != std::string::npos);
    CHECK(summary.find("flag_mismatches=") != std::string::npos);
}

TEST_CASE("cmd_eval: perfect assignments give cycle1 = 100.0 in the report") {
    const auto dir = temp_dir("eval_perfect");
    auto config = tiny_config(dir.string());
    cmd_synth(config);
    cmd_search(config);
    cmd_eval(config);
    const std::string report = slurp((dir / "report.json").string());
    CHECK(report.find("\"cycle1\":100.0") != std::string::npos);
}

TEST_CASE("cmd_eval_chance: N=10 chance lands near the published row") {
    const auto dir = temp_dir("eval_chance");
    auto config = tiny_config(dir.string());
    cmd_eval_chance(config, {10}, 2000);
    const auto report = nlohmann::json::parse(slurp((dir / "report.json").string()));
    CHECK(std::abs(report.at("t2v_r1").get<double>() - 10.0) < 1.0);
    CHECK(std::abs(report.at("cycle1").get<double>() - 1.0) < 0.5);
}

TEST_CASE("random_tensor: seeded and in range") {
    const auto a = random_tensor(5, 3, 2, 9);
    const auto b = random_tensor(5, 3, 2, 9);
    CHECK(a.values() == b.values());
    for (float v : a.values()) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("run_bench: reports search work per clip count") {
    BenchOptions options;
    options.n_clips = 30;
    options.n_prompts = 4;
    options.n_advances = 2;
    options.alpha = 2;
    const auto runs = run_bench(options);
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].n_clips == 30);
    CHECK(runs[0].combos_evaluated > 0);
    CHECK(runs[0].wall_seconds >= 0.0);
}

TEST_CASE("cli: exit codes follow the 0/1/2 discipline") {
    CHECK(run_cli("bogus-subcommand") == 2);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("synth --profile nonsense") == 2);
    const auto dir = temp_dir("cli_missing");
    CHECK(run_cli("search --out-dir " + dir.string()) == 1);  // no tensor written yet
    const auto ok_dir = temp_dir("cli_ok");
    CHECK(run_cli("synth --out-dir " + ok_dir.string() + " --clips 4 --prompts 2 --advances 1 --dim 16") == 0);
    CHECK(run_cli("search --out-dir " + ok_dir.string()) == 0);
}

TEST_CASE("cli: config file layering with flag overrides") {
    const auto dir = temp_dir("cli_config");
    PipelineConfig config = tiny_config(dir.string());
    const std::string config_path = (dir / "config.json").string();
    {
        std::ofstream out(config_path);
        out << config_to_json(config);
    }
    CHECK(run_cli("synth --config " + config_path) == 0);
    // Flag overrides the config's clip count.
    CHECK(run_cli("synth --config " + config_path + " --clips 5") == 0);
    const auto sidecar = nlohmann::json::parse(slurp((dir / "instance.cdpt.json").string()));
    CHECK(sidecar.at("clip_ids").size() == 5);
}
