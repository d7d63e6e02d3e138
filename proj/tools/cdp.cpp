#include "cdp/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

struct CliState {
    std::string config_path;
    cdp::PipelineConfig config;
};

cdp::Index parse_index(const std::string& s) { return static_cast<cdp::Index>(std::stoll(s)); }

std::vector<cdp::Index> parse_index_list(const std::string& csv) {
    std::vector<cdp::Index> out;
    std::string token;
    for (char c : csv) {
        if (c == ',') {
            if (!token.empty()) out.push_back(parse_index(token));
            token.clear();
        } else {
            token += c;
        }
    }
    if (!token.empty()) out.push_back(parse_index(token));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"discriminative prompt selection engine"};
    app.require_subcommand(1);

    CliState state;

    std::string config_path;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string profile = "all_separable_at_t0";
    std::string mode = "per_clip";
    cdp::Index n_clips = 10, n_prompts = 10, n_advances = 1, dim = 64;
    double noise = 0.0;
    cdp::Index alpha = 3;
    double lambda = 0.1;
    cdp::Index tau_max = 0;
    cdp::Index epochs = 25;
    double lr = 1e-4;
    cdp::Index batch_size = 64;
    cdp::Index model_dim = 128;
    std::string decay_epochs_csv;
    bool use_surrogate = false;
    bool no_verify = false;
    cdp::Index set_size = 0;
    cdp::Index chance_trials = 0;
    std::string chance_sizes_csv;
    std::string tensor_path, embeddings_path, model_path, assignments_path;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; flags override its fields");
        cmd->add_option("--seed", seed, "global seed; all stage seeds derive from it");
        cmd->add_option("--out-dir", out_dir, "output directory");
        cmd->add_option("--tensor", tensor_path, "CDPT tensor path (sidecar: <path>.json)");
        cmd->add_option("--embeddings", embeddings_path, "CDPE embeddings path");
        cmd->add_option("--model", model_path, "CDPN checkpoint path");
        cmd->add_option("--assignments", assignments_path, "assignment stream path");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark instance");
    add_common(synth);
    synth->add_option("--clips", n_clips, "number of clips");
    synth->add_option("--prompts", n_prompts, "number of prompts");
    synth->add_option("--advances", n_advances, "number of advances (tau + 1)");
    synth->add_option("--dim", dim, "embedding dimension");
    synth->add_option("--profile", profile,
                      "all_separable_at_t0 | requires_advance | contains_inseparable");
    synth->add_option("--noise", noise, "noise scale added to generated embeddings");

    CLI::App* search = app.add_subcommand("search", "select prompt combinations per clip");
    add_common(search);
    search->add_option("--alpha", alpha, "max elements per combination");
    search->add_option("--lambda", lambda, "margin of confidence");
    search->add_option("--tau-max", tau_max, "max advance budget");
    search->add_option("--mode", mode, "per-clip | uniform advancement");
    search->add_flag("--surrogate", use_surrogate, "search a surrogate-predicted tensor");
    search->add_flag("--no-verify", no_verify, "skip exact-tensor re-checking of unique flags");

    CLI::App* train = app.add_subcommand("train-surrogate", "train the similarity predictor");
    add_common(train);
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--batch-size", batch_size, "batch size");
    train->add_option("--model-dim", model_dim, "surrogate token width");
    train->add_option("--decay-epochs", decay_epochs_csv, "comma list of lr decay epochs");

    CLI::App* eval = app.add_subcommand("eval", "compute retrieval metrics");
    add_common(eval);
    eval->add_option("--set-size", set_size, "evaluation set size (0: one set of all clips)");
    eval->add_option("--chance-trials", chance_trials,
                     "run the Monte-Carlo chance baseline with this many trials");
    eval->add_option("--set-sizes", chance_sizes_csv,
                     "comma list of set sizes for the chance baseline");

    CLI::App* bench = app.add_subcommand("bench", "time the combination search");
    cdp::BenchOptions bench_opts;
    std::string scaling_csv;
    bench->add_option("--clips", bench_opts.n_clips, "number of clips");
    bench->add_option("--prompts", bench_opts.n_prompts, "number of prompts");
    bench->add_option("--advances", bench_opts.n_advances, "number of advances (tau + 1)");
    bench->add_option("--alpha", bench_opts.alpha, "max elements per combination");
    bench->add_option("--lambda", bench_opts.lambda, "margin of confidence");
    bench->add_option("--seed", bench_opts.seed, "tensor seed");
    bench->add_option("--scaling", scaling_csv, "comma list of clip counts to sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        cdp::PipelineConfig config;
        if (!config_path.empty()) {
            config = cdp::config_from_json_file(config_path);
        }
        const auto touched = [&](CLI::App* cmd, const std::string& name) {
            return cmd->count(name) > 0;
        };
        CLI::App* active = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
        if (active && active != bench) {
            if (touched(active, "--seed")) config.seed = seed;
            if (touched(active, "--out-dir")) config.out_dir = out_dir;
            if (touched(active, "--tensor")) config.tensor_path = tensor_path;
            if (touched(active, "--embeddings")) config.embeddings_path = embeddings_path;
            if (touched(active, "--model")) config.model_path = model_path;
            if (touched(active, "--assignments")) config.assignments_path = assignments_path;
        }

        if (synth->parsed()) {
            if (touched(synth, "--clips")) config.synth.n_clips = n_clips;
            if (touched(synth, "--prompts")) config.synth.n_prompts = n_prompts;
            if (touched(synth, "--advances")) config.synth.n_advances = n_advances;
            if (touched(synth, "--dim")) config.synth.dim = dim;
            if (touched(synth, "--noise")) config.synth.noise_scale = noise;
            if (touched(synth, "--profile")) {
                if (profile == "all_separable_at_t0") {
                    config.synth.profile = cdp::SeparabilityProfile::all_separable_at_t0;
                } else if (profile == "requires_advance") {
                    config.synth.profile = cdp::SeparabilityProfile::requires_advance;
                } else if (profile == "contains_inseparable") {
                    config.synth.profile = cdp::SeparabilityProfile::contains_inseparable;
                } else {
                    std::cerr << "unknown profile '" << profile << "'\n";
                    return 2;
                }
            }
            cdp::cmd_synth(config);
        } else if (search->parsed()) {
            if (touched(search, "--alpha")) config.search.alpha = alpha;
            if (touched(search, "--lambda")) config.search.lambda = lambda;
            if (touched(search, "--tau-max")) config.search.tau_max = tau_max;
            if (touched(search, "--mode")) {
                if (mode == "per-clip" || mode == "per_clip") {
                    config.search.mode = cdp::AdvancementMode::per_clip;
                } else if (mode == "uniform") {
                    config.search.mode = cdp::AdvancementMode::uniform;
                } else {
                    std::cerr << "unknown mode '" << mode << "'\n";
                    return 2;
                }
            }
            if (use_surrogate) config.use_surrogate = true;
            if (no_verify) config.verify = false;
            cdp::cmd_search(config);
        } else if (train->parsed()) {
            if (touched(train, "--epochs")) config.train.epochs = epochs;
            if (touched(train, "--lr")) config.train.learning_rate = lr;
            if (touched(train, "--batch-size")) config.train.batch_size = batch_size;
            if (touched(train, "--model-dim")) config.model_dim = model_dim;
            if (touched(train, "--decay-epochs")) {
                config.train.decay_epochs = parse_index_list(decay_epochs_csv);
            }
            cdp::cmd_train(config);
        } else if (eval->parsed()) {
            if (touched(eval, "--set-size")) config.eval_set_size = set_size;
            if (chance_trials > 0) {
                std::vector<cdp::Index> sizes = chance_sizes_csv.empty()
                                                    ? std::vector<cdp::Index>{10}
                                                    : parse_index_list(chance_sizes_csv);
                cdp::cmd_eval_chance(config, sizes, chance_trials);
            } else {
                cdp::cmd_eval(config);
            }
        } else if (bench->parsed()) {
            if (!scaling_csv.empty()) {
                bench_opts.scaling_clips = parse_index_list(scaling_csv);
            }
            cdp::cmd_bench(bench_opts);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
