#pragma once

#include "cdp/evaluation.hpp"
#include "cdp/search.hpp"
#include "cdp/surrogate.hpp"
#include "cdp/synth.hpp"

#include <string>
#include <vector>

namespace cdp {

/// Orchestration settings for the synth -> train -> search -> eval pipeline.
/// All randomness flows from `seed`, split into named sub-seeds per stage, so
/// one stage can vary without perturbing the others.
struct PipelineConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    SynthConfig synth;
    SearchConfig search;
    TrainConfig train;
    Index model_dim = 128;  ///< surrogate token width

    /// When set, search runs on a surrogate-predicted tensor instead of the
    /// exact one.
    bool use_surrogate = false;
    /// Re-check surrogate-driven unique flags against the exact tensor when
    /// one is available.
    bool verify = true;

    Index eval_set_size = 0;  ///< 0: evaluate all clips as a single set

    // Input path overrides; empty means the conventional name under out_dir.
    std::string tensor_path;
    std::string tensor_sidecar_path;
    std::string embeddings_path;
    std::string embeddings_sidecar_path;
    std::string model_path;
    std::string assignments_path;
};

/// Conventional file names under config.out_dir.
struct PipelineFiles {
    std::string embeddings;
    std::string embeddings_sidecar;
    std::string tensor;
    std::string tensor_sidecar;
    std::string ground_truth;
    std::string model;
    std::string loss_trace;
    std::string assignments;
    std::string summary;
    std::string report;
};
PipelineFiles pipeline_files(const PipelineConfig& config);

PipelineConfig config_from_json_file(const std::string& path);
std::string config_to_json(const PipelineConfig& config);

/// Generates a synthetic instance and writes the CDPE/CDPT payloads, their
/// sidecars and the ground-truth sidecar.
void cmd_synth(const PipelineConfig& config);

/// Runs the combination search on the exact or surrogate tensor and writes
/// the assignment stream plus a summary.
void cmd_search(const PipelineConfig& config);

/// Trains the surrogate on exhaustive tensor samples and writes the CDPN
/// checkpoint plus a loss trace.
void cmd_train(const PipelineConfig& config);

/// Evaluates stored assignments against the tensor and writes a metric
/// report.
void cmd_eval(const PipelineConfig& config);

/// Monte-Carlo chance baseline report.
void cmd_eval_chance(const PipelineConfig& config, const std::vector<Index>& set_sizes,
                     Index trials);

struct BenchOptions {
    Index n_clips = 483;
    Index n_prompts = 10;
    Index n_advances = 2;  ///< tensor advances; search uses tau_max = n_advances - 1
    Index alpha = 3;
    double lambda = 0.1;
    AdvancementMode mode = AdvancementMode::per_clip;
    std::uint64_t seed = 1;
    std::vector<Index> scaling_clips;  ///< when non-empty, run once per N and report scaling
};

struct BenchRun {
    Index n_clips = 0;
    double wall_seconds = 0.0;
    std::uint64_t combos_evaluated = 0;
};

/// Seeded random exact-provenance tensor in [-1, 1].
SimilarityTensor random_tensor(Index n_clips, Index n_prompts, Index n_advances,
                               std::uint64_t seed);

/// Single-threaded search timing harness.
std::vector<BenchRun> run_bench(const BenchOptions& options);
void cmd_bench(const BenchOptions& options);

// Assignment stream: one JSON object per line with clip_id, elements
// (prompt index, prompt string, advance), margin to six decimals, unique
// flag and the assembled caption when available.
void write_assignments(const std::string& path, const std::vector<PromptAssignment>& assignments,
                       const std::vector<std::string>& prompts);
std::vector<PromptAssignment> read_assignments(const std::string& path);

void write_metric_report(const std::string& path, const MetricReport& report);
std::string format_metric_report(const MetricReport& report);

}  // namespace cdp
