#include "cdp/pipeline.hpp"

#include "cdp/io.hpp"
#include "cdp/oracle.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace cdp {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

std::ofstream open_text(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw load_error(path + ": cannot open for writing");
    }
    return out;
}

const char* profile_name(SeparabilityProfile p) {
    switch (p) {
        case SeparabilityProfile::all_separable_at_t0: return "all_separable_at_t0";
        case SeparabilityProfile::requires_advance: return "requires_advance";
        case SeparabilityProfile::contains_inseparable: return "contains_inseparable";
    }
    return "unknown";
}

SeparabilityProfile profile_from_name(const std::string& name) {
    if (name == "all_separable_at_t0") return SeparabilityProfile::all_separable_at_t0;
    if (name == "requires_advance") return SeparabilityProfile::requires_advance;
    if (name == "contains_inseparable") return SeparabilityProfile::contains_inseparable;
    throw invalid_input("unknown separability profile '" + name + "'");
}

const char* mode_name(AdvancementMode m) {
    return m == AdvancementMode::per_clip ? "per_clip" : "uniform";
}

AdvancementMode mode_from_name(const std::string& name) {
    if (name == "per_clip" || name == "per-clip") return AdvancementMode::per_clip;
    if (name == "uniform") return AdvancementMode::uniform;
    throw invalid_input("unknown advancement mode '" + name + "'");
}

}  // namespace

PipelineFiles pipeline_files(const PipelineConfig& config) {
    PipelineFiles f;
    const auto& dir = config.out_dir;
    f.embeddings = config.embeddings_path.empty() ? join_path(dir, "instance.cdpe")
                                                  : config.embeddings_path;
    f.embeddings_sidecar = config.embeddings_sidecar_path.empty()
                               ? f.embeddings + ".json"
                               : config.embeddings_sidecar_path;
    f.tensor = config.tensor_path.empty() ? join_path(dir, "instance.cdpt") : config.tensor_path;
    f.tensor_sidecar =
        config.tensor_sidecar_path.empty() ? f.tensor + ".json" : config.tensor_sidecar_path;
    f.ground_truth = join_path(dir, "ground_truth.json");
    f.model = config.model_path.empty() ? join_path(dir, "surrogate.cdpn") : config.model_path;
    f.loss_trace = join_path(dir, "loss_trace.txt");
    f.assignments = config.assignments_path.empty() ? join_path(dir, "assignments.jsonl")
                                                    : config.assignments_path;
    f.summary = join_path(dir, "search_summary.txt");
    f.report = join_path(dir, "report.json");
    return f;
}

std::string config_to_json(const PipelineConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["synth"] = {{"n_clips", c.synth.n_clips},
                  {"n_prompts", c.synth.n_prompts},
                  {"n_advances", c.synth.n_advances},
                  {"dim", c.synth.dim},
                  {"profile", profile_name(c.synth.profile)},
                  {"noise_scale", c.synth.noise_scale},
                  {"attr_weight", c.synth.attr_weight},
                  {"gt_alpha", c.synth.gt_alpha}};
    j["search"] = {{"alpha", c.search.alpha},
                   {"lambda", c.search.lambda},
                   {"tau_max", c.search.tau_max},
                   {"mode", mode_name(c.search.mode)}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"learning_rate", c.train.learning_rate},
                  {"decay_epochs", c.train.decay_epochs},
                  {"decay_factor", c.train.decay_factor},
                  {"batch_size", c.train.batch_size},
                  {"shuffle", c.train.shuffle}};
    j["model_dim"] = c.model_dim;
    j["use_surrogate"] = c.use_surrogate;
    j["verify"] = c.verify;
    j["eval_set_size"] = c.eval_set_size;
    j["paths"] = {{"tensor", c.tensor_path},
                  {"tensor_sidecar", c.tensor_sidecar_path},
                  {"embeddings", c.embeddings_path},
                  {"embeddings_sidecar", c.embeddings_sidecar_path},
                  {"model", c.model_path},
                  {"assignments", c.assignments_path}};
    return j.dump(2) + "\n";
}

PipelineConfig config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw load_error(path + ": cannot open for reading");
    }
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw load_error(path + ": invalid config JSON: " + e.what());
    }
    PipelineConfig c;
    try {
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("synth")) {
            const auto& s = j["synth"];
            if (s.contains("n_clips")) c.synth.n_clips = s["n_clips"].get<Index>();
            if (s.contains("n_prompts")) c.synth.n_prompts = s["n_prompts"].get<Index>();
            if (s.contains("n_advances")) c.synth.n_advances = s["n_advances"].get<Index>();
            if (s.contains("dim")) c.synth.dim = s["dim"].get<Index>();
            if (s.contains("profile")) c.synth.profile = profile_from_name(s["profile"]);
            if (s.contains("noise_scale")) c.synth.noise_scale = s["noise_scale"].get<double>();
            if (s.contains("attr_weight")) c.synth.attr_weight = s["attr_weight"].get<double>();
            if (s.contains("gt_alpha")) c.synth.gt_alpha = s["gt_alpha"].get<Index>();
        }
        if (j.contains("search")) {
            const auto& s = j["search"];
            if (s.contains("alpha")) c.search.alpha = s["alpha"].get<Index>();
            if (s.contains("lambda")) c.search.lambda = s["lambda"].get<double>();
            if (s.contains("tau_max")) c.search.tau_max = s["tau_max"].get<Index>();
            if (s.contains("mode")) c.search.mode = mode_from_name(s["mode"]);
        }
        if (j.contains("train")) {
            const auto& s = j["train"];
            if (s.contains("epochs")) c.train.epochs = s["epochs"].get<Index>();
            if (s.contains("learning_rate")) c.train.learning_rate = s["learning_rate"].get<double>();
            if (s.contains("decay_epochs")) {
                c.train.decay_epochs = s["decay_epochs"].get<std::vector<Index>>();
            }
            if (s.contains("decay_factor")) c.train.decay_factor = s["decay_factor"].get<double>();
            if (s.contains("batch_size")) c.train.batch_size = s["batch_size"].get<Index>();
            if (s.contains("shuffle")) c.train.shuffle = s["shuffle"].get<bool>();
        }
        if (j.contains("model_dim")) c.model_dim = j["model_dim"].get<Index>();
        if (j.contains("use_surrogate")) c.use_surrogate = j["use_surrogate"].get<bool>();
        if (j.contains("verify")) c.verify = j["verify"].get<bool>();
        if (j.contains("eval_set_size")) c.eval_set_size = j["eval_set_size"].get<Index>();
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            if (p.contains("tensor")) c.tensor_path = p["tensor"].get<std::string>();
            if (p.contains("tensor_sidecar")) {
                c.tensor_sidecar_path = p["tensor_sidecar"].get<std::string>();
            }
            if (p.contains("embeddings")) c.embeddings_path = p["embeddings"].get<std::string>();
            if (p.contains("embeddings_sidecar")) {
                c.embeddings_sidecar_path = p["embeddings_sidecar"].get<std::string>();
            }
            if (p.contains("model")) c.model_path = p["model"].get<std::string>();
            if (p.contains("assignments")) c.assignments_path = p["assignments"].get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw load_error(path + ": malformed config field: " + e.what());
    }
    return c;
}

// ── synth ────────────────────────────────────────────────────

void cmd_synth(const PipelineConfig& config) {
    SynthConfig synth = config.synth;
    synth.seed = sub_seed(config.seed, "generate");
    const SyntheticInstance instance = synth_generate(synth);
    const PipelineFiles files = pipeline_files(config);
    std::filesystem::create_directories(config.out_dir);

    io::write_embeddings(files.embeddings, instance.clips());
    io::write_embedding_sidecar(files.embeddings_sidecar, {instance.clips().clip_ids()});

    io::write_tensor(files.tensor, instance.exact_tensor());
    io::TensorSidecar sidecar;
    sidecar.clip_ids = instance.clips().clip_ids();
    sidecar.prompts = instance.bank().prompts();
    sidecar.provenance = Provenance::exact;
    const Index n = instance.clips().n_clips();
    const Index p = instance.bank().size();
    const Index ta = instance.clips().n_advances();
    sidecar.captions.reserve(static_cast<std::size_t>(n * p * ta));
    for (Index j = 0; j < n; ++j) {
        for (Index k = 0; k < p; ++k) {
            for (Index t = 0; t < ta; ++t) {
                sidecar.captions.push_back(synthetic_caption(j, k, t));
            }
        }
    }
    io::write_tensor_sidecar(files.tensor_sidecar, sidecar);

    ordered_json gt;
    gt["profile"] = profile_name(synth.profile);
    gt["seed"] = config.seed;
    gt["clips"] = ordered_json::array();
    for (Index j = 0; j < n; ++j) {
        ordered_json entry;
        entry["clip_id"] = instance.clips().clip_id(j);
        const GroundTruth& truth = instance.ground_truth(j);
        entry["separable"] = truth.separable;
        if (truth.separable) {
            ordered_json combo = ordered_json::array();
            for (const auto& e : truth.combination.elements()) {
                combo.push_back({e.prompt, e.advance});
            }
            entry["combination"] = combo;
        }
        gt["clips"].push_back(entry);
    }
    auto out = open_text(files.ground_truth);
    out << gt.dump(2) << '\n';

    Index inseparable = 0;
    for (const auto& truth : instance.ground_truths()) {
        if (!truth.separable) ++inseparable;
    }
    std::cout << "synth wrote " << files.tensor << " n_clips=" << n << " n_prompts=" << p
              << " n_advances=" << ta << " profile=" << profile_name(synth.profile)
              << " inseparable=" << inseparable << "\n";
}

// ── assignments io ───────────────────────────────────────────

void write_assignments(const std::string& path, const std::vector<PromptAssignment>& assignments,
                       const std::vector<std::string>& prompts) {
    auto out = open_text(path);
    for (const auto& a : assignments) {
        out << "{\"clip_id\":" << ordered_json(a.clip_id).dump() << ",\"elements\":[";
        const auto& elems = a.combination.elements();
        for (std::size_t e = 0; e < elems.size(); ++e) {
            if (e > 0) out << ',';
            const auto k = static_cast<std::size_t>(elems[e].prompt);
            const std::string text = k < prompts.size() ? prompts[k] : "";
            out << "{\"prompt\":" << elems[e].prompt << ",\"text\":" << ordered_json(text).dump()
                << ",\"t\":" << elems[e].advance << "}";
        }
        out << "],\"margin\":" << fmt_fixed(a.margin, 6)
            << ",\"unique\":" << (a.unique ? "true" : "false")
            << ",\"advance_used\":" << a.advance_used;
        if (!a.caption_elements.empty()) {
            std::string caption;
            for (std::size_t e = 0; e < a.caption_elements.size(); ++e) {
                if (e == 0) {
                    caption = a.caption_elements[0];
                } else if (elems[e].advance == elems[e - 1].advance) {
                    caption += ", " + a.caption_elements[e];
                } else {
                    caption += " then " + a.caption_elements[e];
                }
            }
            out << ",\"caption\":" << ordered_json(caption).dump();
        }
        out << "}\n";
    }
}

std::vector<PromptAssignment> read_assignments(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw load_error(path + ": cannot open for reading");
    }
    std::vector<PromptAssignment> assignments;
    std::string line;
    Index index = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw load_error(path + ": bad assignment line " + std::to_string(index + 1) + ": " +
                             e.what());
        }
        PromptAssignment a;
        a.clip_id = j.at("clip_id").get<std::string>();
        a.clip_index = index++;
        std::vector<ComboElement> elems;
        for (const auto& e : j.at("elements")) {
            elems.push_back({e.at("prompt").get<Index>(), e.at("t").get<Index>()});
        }
        a.combination = PromptCombination(std::move(elems));
        a.margin = j.at("margin").get<double>();
        a.unique = j.at("unique").get<bool>();
        a.advance_used = j.at("advance_used").get<Index>();
        assignments.push_back(std::move(a));
    }
    return assignments;
}

// ── search ───────────────────────────────────────────────────

void cmd_search(const PipelineConfig& config) {
    const PipelineFiles files = pipeline_files(config);
    std::filesystem::create_directories(config.out_dir);

    auto exact_oracle = oracle_from_files(files.tensor, files.tensor_sidecar);
    const std::vector<std::string> clip_ids = exact_oracle->clip_ids();
    const std::vector<std::string> prompts = exact_oracle->prompts();

    SimilarityTensor search_tensor = exact_oracle->tensor();
    if (config.use_surrogate) {
        const SurrogateModel model = load_model(files.model);
        const ClipSet clips = io::read_embeddings(files.embeddings, files.embeddings_sidecar);
        search_tensor = surrogate_predict_tensor(model, clips, PromptBank(prompts));
    }

    SearchResult result = select_prompts(search_tensor, config.search, clip_ids);

    // Attach caption text where the sidecar provides it.
    for (auto& a : result.assignments) {
        try {
            a.caption_elements = element_captions(a, *exact_oracle);
        } catch (const caption_unavailable&) {
            a.caption_elements.clear();
        }
    }
    write_assignments(files.assignments, result.assignments, prompts);

    Index unique_count = 0;
    double chosen_sum = 0.0;
    for (const auto& a : result.assignments) {
        if (a.unique) ++unique_count;
        chosen_sum += static_cast<double>(a.combination.size());
    }
    const auto n = static_cast<double>(result.assignments.size());

    std::string verification;
    if (config.use_surrogate && config.verify) {
        const SimilarityTensor& exact = exact_oracle->tensor();
        Index mismatches = 0;
        for (const auto& a : result.assignments) {
            const double exact_margin = margin(exact, a.clip_index, a.combination);
            const bool exact_unique = exact_margin > config.search.lambda;
            if (exact_unique != a.unique) ++mismatches;
        }
        verification = " verified_against_exact=true flag_mismatches=" + std::to_string(mismatches);
    }

    std::string summary = "search clips=" + std::to_string(result.assignments.size()) +
                          " unique=" + std::to_string(unique_count) +
                          " non_unique=" + std::to_string(result.assignments.size() -
                                                          static_cast<std::size_t>(unique_count)) +
                          " mean_chosen=" + fmt_fixed(chosen_sum / n, 3) +
                          " combos_evaluated=" + std::to_string(result.stats.combos_evaluated) +
                          verification;
    auto out = open_text(files.summary);
    out << summary << "\n";
    std::cout << summary << "\n";
}

// ── train ────────────────────────────────────────────────────

void cmd_train(const PipelineConfig& config) {
    const PipelineFiles files = pipeline_files(config);
    std::filesystem::create_directories(config.out_dir);

    auto exact_oracle = oracle_from_files(files.tensor, files.tensor_sidecar);
    const ClipSet clips = io::read_embeddings(files.embeddings, files.embeddings_sidecar);
    const auto samples = samples_from_tensor(exact_oracle->tensor(), clips);

    SurrogateConfig scfg;
    scfg.embed_dim = clips.dim();
    scfg.model_dim = config.model_dim;
    scfg.n_prompts = static_cast<Index>(exact_oracle->prompts().size());
    scfg.seed = sub_seed(config.seed, "init");
    TrainConfig tcfg = config.train;
    tcfg.seed = sub_seed(config.seed, "train");
    // Drop decay epochs the shortened schedule never reaches.
    std::erase_if(tcfg.decay_epochs, [&](Index e) { return e >= tcfg.epochs; });

    const SurrogateModel model = SurrogateModel::init(scfg);
    const TrainResult result = surrogate_train(model, samples, tcfg);

    save_model(files.model, result.model);
    auto out = open_text(files.loss_trace);
    char line[96];
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
        std::snprintf(line, sizeof(line), "%zu %.10e %.3e\n", e + 1, result.loss_trace[e],
                      result.lr_trace[e]);
        out << line;
    }
    char final_mse[32];
    std::snprintf(final_mse, sizeof(final_mse), "%.4e", result.loss_trace.back());
    std::cout << "train epochs=" << result.loss_trace.size() << " samples=" << samples.size()
              << " final_mse=" << final_mse << " wrote " << files.model << "\n";
}

// ── eval ─────────────────────────────────────────────────────

std::string format_metric_report(const MetricReport& report) {
    const auto set_line = [](const SetMetrics& m) {
        std::string s = "{";
        s += "\"n_clips\":" + std::to_string(m.n_clips);
        s += ",\"t2v_r1\":" + fmt_fixed(m.t2v_r1, 1);
        s += ",\"t2v_r2\":" + fmt_fixed(m.t2v_r2, 1);
        s += ",\"t2v_r3\":" + fmt_fixed(m.t2v_r3, 1);
        s += ",\"v2t_r1\":" + fmt_fixed(m.v2t_r1, 1);
        s += ",\"v2t_r2\":" + fmt_fixed(m.v2t_r2, 1);
        s += ",\"v2t_r3\":" + fmt_fixed(m.v2t_r3, 1);
        s += ",\"avg_r1\":" + fmt_fixed(m.avg_r1, 1);
        s += ",\"cycle1\":" + fmt_fixed(m.cycle1, 1);
        s += "}";
        return s;
    };
    std::string text = set_line(report.overall);
    if (!report.per_set.empty()) {
        text.pop_back();  // reopen the object to append per_set
        text += ",\"per_set\":[";
        for (std::size_t s = 0; s < report.per_set.size(); ++s) {
            if (s > 0) text += ',';
            text += set_line(report.per_set[s]);
        }
        text += "]}";
    }
    return text + "\n";
}

void write_metric_report(const std::string& path, const MetricReport& report) {
    auto out = open_text(path);
    out << format_metric_report(report);
}

namespace {
std::vector<std::vector<Index>> make_sets(Index n_clips, Index set_size) {
    std::vector<std::vector<Index>> sets;
    if (set_size <= 0) set_size = n_clips;
    for (Index begin = 0; begin < n_clips; begin += set_size) {
        std::vector<Index> set;
        for (Index i = begin; i < std::min(n_clips, begin + set_size); ++i) set.push_back(i);
        sets.push_back(std::move(set));
    }
    return sets;
}
}  // namespace

void cmd_eval(const PipelineConfig& config) {
    const PipelineFiles files = pipeline_files(config);
    std::filesystem::create_directories(config.out_dir);

    auto oracle = oracle_from_files(files.tensor, files.tensor_sidecar);
    auto assignments = read_assignments(files.assignments);
    if (assignments.size() != oracle->clip_ids().size()) {
        throw invalid_input("eval: assignment count does not match tensor clips");
    }
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i].clip_id != oracle->clip_ids()[i]) {
            throw invalid_input("eval: assignment clip_id '" + assignments[i].clip_id +
                                "' does not match tensor clip '" + oracle->clip_ids()[i] + "'");
        }
    }
    const auto sets = make_sets(oracle->tensor().n_clips(), config.eval_set_size);
    const MetricReport report = evaluate_assignments(oracle->tensor(), assignments, sets);
    write_metric_report(files.report, report);
    std::cout << format_metric_report(report);
}

void cmd_eval_chance(const PipelineConfig& config, const std::vector<Index>& set_sizes,
                     Index trials) {
    const PipelineFiles files = pipeline_files(config);
    std::filesystem::create_directories(config.out_dir);
    const MetricReport report =
        chance_metrics(set_sizes, trials, sub_seed(config.seed, "chance"));
    write_metric_report(files.report, report);
    std::cout << format_metric_report(report);
}

// ── bench ────────────────────────────────────────────────────

SimilarityTensor random_tensor(Index n_clips, Index n_prompts, Index n_advances,
                               std::uint64_t seed) {
    SimilarityTensor tensor(n_clips, n_prompts, n_advances, Provenance::exact);
    Rng rng(sub_seed(seed, "random-tensor"));
    for (auto& v : tensor.values()) {
        v = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    return tensor;
}

std::vector<BenchRun> run_bench(const BenchOptions& options) {
    std::vector<Index> clip_counts =
        options.scaling_clips.empty() ? std::vector<Index>{options.n_clips} : options.scaling_clips;
    std::vector<BenchRun> runs;
    for (Index n : clip_counts) {
        const SimilarityTensor tensor =
            random_tensor(n, options.n_prompts, options.n_advances, options.seed);
        SearchConfig cfg;
        cfg.alpha = options.alpha;
        cfg.lambda = options.lambda;
        cfg.tau_max = options.n_advances - 1;
        cfg.mode = options.mode;
        const SearchResult result = select_prompts(tensor, cfg);
        runs.push_back({n, result.stats.wall_seconds, result.stats.combos_evaluated});
    }
    return runs;
}

void cmd_bench(const BenchOptions& options) {
    const auto runs = run_bench(options);
    for (const auto& run : runs) {
        const double per_clip =
            static_cast<double>(run.combos_evaluated) / static_cast<double>(run.n_clips);
        std::cout << "bench n_clips=" << run.n_clips << " n_prompts=" << options.n_prompts
                  << " alpha=" << options.alpha << " tau_max=" << (options.n_advances - 1)
                  << " wall_ms=" << fmt_fixed(run.wall_seconds * 1000.0, 3)
                  << " combos_evaluated=" << run.combos_evaluated
                  << " combos_per_clip=" << fmt_fixed(per_clip, 1) << "\n";
    }
}

}  // namespace cdp
