#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdp/io.hpp"
#include "cdp/pipeline.hpp"
#include "cdp/synth.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace cdp;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "cdp_io_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

SyntheticInstance small_instance(std::uint64_t seed = 7) {
    SynthConfig cfg;
    cfg.n_clips = 3;
    cfg.n_prompts = 2;
    cfg.n_advances = 2;
    cfg.dim = 16;
    cfg.seed = seed;
    return synth_generate(cfg);
}

}  // namespace

TEST_CASE("CDPT: write -> read -> write is byte-identical") {
    const auto instance = small_instance();
    const std::string a = temp_path("a.cdpt");
    const std::string b = temp_path("b.cdpt");
    io::write_tensor(a, instance.exact_tensor());
    const auto loaded = io::read_tensor(a);
    CHECK(loaded.values() == instance.exact_tensor().values());
    CHECK(loaded.n_clips() == 3);
    CHECK(loaded.n_prompts() == 2);
    CHECK(loaded.n_advances() == 2);
    io::write_tensor(b, loaded);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("CDPE: write -> read -> write is byte-identical") {
    const auto instance = small_instance();
    const std::string a = temp_path("a.cdpe");
    const std::string b = temp_path("b.cdpe");
    const std::string sidecar = temp_path("a.cdpe.json");
    io::write_embeddings(a, instance.clips());
    io::write_embedding_sidecar(sidecar, {instance.clips().clip_ids()});
    const ClipSet loaded = io::read_embeddings(a, sidecar);
    CHECK(loaded.n_clips() == 3);
    CHECK(loaded.dim() == 16);
    for (Index c = 0; c < 3; ++c) {
        for (Index t = 0; t < 2; ++t) {
            CHECK(loaded.embedding(c, t).values() == instance.clips().embedding(c, t).values());
        }
    }
    io::write_embeddings(b, loaded);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("CDPT: header corruption cases") {
    const auto instance = small_instance();
    const std::string path = temp_path("bad.cdpt");
    io::write_tensor(path, instance.exact_tensor());

    auto bytes = slurp(path);
    SUBCASE("wrong magic") {
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(io::read_tensor(path), load_error);
    }
    SUBCASE("wrong version") {
        bytes[4] = 9;
        std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(io::read_tensor(path), load_error);
    }
    SUBCASE("nonzero reserved dim") {
        bytes[17] = 1;
        std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(io::read_tensor(path), load_error);
    }
    SUBCASE("truncated payload") {
        bytes.resize(bytes.size() - 1);
        std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(io::read_tensor(path), load_error);
    }
    SUBCASE("trailing garbage") {
        bytes += '\0';
        std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(io::read_tensor(path), load_error);
    }
}

TEST_CASE("CDPE: non-normalized rows are rejected on load") {
    const auto instance = small_instance();
    const std::string path = temp_path("denorm.cdpe");
    const std::string sidecar = temp_path("denorm.cdpe.json");
    io::write_embeddings(path, instance.clips());
    io::write_embedding_sidecar(sidecar, {instance.clips().clip_ids()});
    auto bytes = slurp(path);
    // Scale one payload float (header is 17 bytes).
    float v;
    std::memcpy(&v, bytes.data() + 17, 4);
    v *= 3.0f;
    std::memcpy(bytes.data() + 17, &v, 4);
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(io::read_embeddings(path, sidecar), load_error);
}

TEST_CASE("tensor sidecar: provenance and captions round trip") {
    const std::string path = temp_path("side.json");
    io::TensorSidecar sidecar;
    sidecar.clip_ids = {"a", "b"};
    sidecar.prompts = {"p0"};
    sidecar.provenance = Provenance::surrogate;
    sidecar.captions = {"a-p0-t0", "b-p0-t0"};
    io::write_tensor_sidecar(path, sidecar);
    const auto loaded = io::read_tensor_sidecar(path);
    CHECK(loaded.clip_ids == sidecar.clip_ids);
    CHECK(loaded.prompts == sidecar.prompts);
    CHECK(loaded.provenance == Provenance::surrogate);
    CHECK(loaded.captions == sidecar.captions);
}

TEST_CASE("tensor sidecar: malformed JSON and missing fields") {
    const std::string path = temp_path("broken.json");
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    CHECK_THROWS_AS(io::read_tensor_sidecar(path), load_error);
    {
        std::ofstream out(path);
        out << R"({"clip_ids": ["a"]})";
    }
    CHECK_THROWS_AS(io::read_tensor_sidecar(path), load_error);
}

TEST_CASE("pipeline config: JSON round trip is value-identical") {
    PipelineConfig config;
    config.seed = 42;
    config.out_dir = "elsewhere";
    config.synth.n_clips = 7;
    config.synth.profile = SeparabilityProfile::requires_advance;
    config.synth.noise_scale = 0.25;
    config.search.alpha = 2;
    config.search.lambda = 0.3;
    config.search.mode = AdvancementMode::uniform;
    config.train.epochs = 50;
    config.train.decay_epochs = {30, 40};
    config.model_dim = 64;
    config.use_surrogate = true;
    config.eval_set_size = 5;
    config.tensor_path = "/tmp/x.cdpt";

    const std::string path = temp_path("config.json");
    {
        std::ofstream out(path);
        out << config_to_json(config);
    }
    const PipelineConfig loaded = config_from_json_file(path);
    CHECK(config_to_json(loaded) == config_to_json(config));
}

TEST_CASE("assignment stream: write -> read round trip") {
    const auto instance = small_instance();
    SearchConfig search;
    search.tau_max = 1;
    auto result = select_prompts(instance.exact_tensor(), search, instance.clips().clip_ids());
    const auto oracle = instance.oracle();
    for (auto& a : result.assignments) {
        a.caption_elements = element_captions(a, *oracle);
    }
    const std::string path = temp_path("assignments.jsonl");
    write_assignments(path, result.assignments, instance.bank().prompts());
    const auto loaded = read_assignments(path);
    REQUIRE(loaded.size() == result.assignments.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].clip_id == result.assignments[i].clip_id);
        CHECK(loaded[i].combination == result.assignments[i].combination);
        CHECK(loaded[i].unique == result.assignments[i].unique);
        CHECK(loaded[i].advance_used == result.assignments[i].advance_used);
        // margins serialize at six decimal places
        CHECK(loaded[i].margin == doctest::Approx(result.assignments[i].margin).epsilon(1e-5));
    }
}

TEST_CASE("metric report formats percentages with one decimal") {
    MetricReport report;
    report.overall.n_clips = 10;
    report.overall.t2v_r1 = 55.0;
    report.overall.t2v_r2 = 71.04;
    report.overall.t2v_r3 = 80.06;
    report.overall.v2t_r1 = 34.0;
    report.overall.v2t_r2 = 50.0;
    report.overall.v2t_r3 = 61.0;
    report.overall.avg_r1 = 44.5;
    report.overall.cycle1 = 26.0;
    const std::string text = format_metric_report(report);
    CHECK(text.find("\"t2v_r1\":55.0") != std::string::npos);
    CHECK(text.find("\"t2v_r2\":71.0") != std::string::npos);
    CHECK(text.find("\"t2v_r3\":80.1") != std::string::npos);
    CHECK(text.find("\"avg_r1\":44.5") != std::string::npos);
    CHECK(text.find("\"cycle1\":26.0") != std::string::npos);
}
