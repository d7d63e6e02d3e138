#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdp/io.hpp"
#include "cdp/oracle.hpp"
#include "cdp/search.hpp"
#include "cdp/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace cdp;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "cdp_oracle_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

double max_margin_over(const SimilarityTensor& tensor, Index clip, Index alpha, Index tau) {
    double best = -1e300;
    for (const auto& c : enumerate_combinations(tensor.n_prompts(), alpha, tau)) {
        best = std::max(best, margin(tensor, clip, c));
    }
    return best;
}

}  // namespace

TEST_CASE("synth: two clips separable by prompt 0 at t=0") {
    SynthConfig cfg;
    cfg.n_clips = 2;
    cfg.n_prompts = 1;
    cfg.n_advances = 1;
    cfg.dim = 8;
    cfg.seed = 7;
    const auto instance = synth_generate(cfg);
    for (Index j = 0; j < 2; ++j) {
        const auto& gt = instance.ground_truth(j);
        REQUIRE(gt.separable);
        CHECK(gt.combination.elements() == std::vector<ComboElement>{{0, 0}});
        CHECK(margin(instance.exact_tensor(), j, gt.combination) > 0.0);
    }
}

TEST_CASE("synth: duplicated pair is inseparable with margins exactly zero") {
    SynthConfig cfg;
    cfg.n_clips = 2;
    cfg.n_prompts = 1;
    cfg.n_advances = 1;
    cfg.dim = 8;
    cfg.seed = 2;
    cfg.profile = SeparabilityProfile::contains_inseparable;
    const auto instance = synth_generate(cfg);
    for (Index j = 0; j < 2; ++j) {
        CHECK_FALSE(instance.ground_truth(j).separable);
        for (const auto& c : enumerate_combinations(1, 1, 0)) {
            CHECK(margin(instance.exact_tensor(), j, c) == 0.0);
        }
    }
}

TEST_CASE("synth: requires_advance gains separability only at t >= 1") {
    SynthConfig cfg;
    cfg.n_clips = 10;
    cfg.n_prompts = 10;
    cfg.n_advances = 3;
    cfg.dim = 96;
    cfg.seed = 3;
    cfg.profile = SeparabilityProfile::requires_advance;
    const auto instance = synth_generate(cfg);
    const auto& tensor = instance.exact_tensor();

    bool some_clip_needs_advance = false;
    for (Index j = 0; j < cfg.n_clips; ++j) {
        const double at_t0 = max_margin_over(tensor, j, 3, 0);
        const double at_full = max_margin_over(tensor, j, 3, 2);
        if (!(at_t0 > 0.0) && at_full > 0.0) some_clip_needs_advance = true;
        CHECK(at_full > 0.0);  // every clip eventually separable in this profile
    }
    CHECK(some_clip_needs_advance);
}

TEST_CASE("synth: bit-exact regeneration from the same seed") {
    SynthConfig cfg;
    cfg.n_clips = 5;
    cfg.n_prompts = 3;
    cfg.n_advances = 2;
    cfg.dim = 32;
    cfg.seed = 40;
    cfg.noise_scale = 0.1;
    const auto a = synth_generate(cfg);
    const auto b = synth_generate(cfg);
    CHECK(a.exact_tensor().values() == b.exact_tensor().values());
    for (Index c = 0; c < cfg.n_clips; ++c) {
        for (Index t = 0; t < cfg.n_advances; ++t) {
            CHECK(a.clips().embedding(c, t).values() == b.clips().embedding(c, t).values());
        }
    }
    cfg.seed = 41;
    const auto other = synth_generate(cfg);
    CHECK(a.exact_tensor().values() != other.exact_tensor().values());
}

TEST_CASE("synth: ground-truth soundness across profiles and seeds") {
    for (auto profile : {SeparabilityProfile::all_separable_at_t0,
                         SeparabilityProfile::requires_advance,
                         SeparabilityProfile::contains_inseparable}) {
        for (std::uint64_t seed : {1ull, 9ull}) {
            SynthConfig cfg;
            cfg.n_clips = 5;
            cfg.n_prompts = 3;
            cfg.n_advances = 2;
            cfg.dim = 32;
            cfg.seed = seed;
            cfg.profile = profile;
            const auto instance = synth_generate(cfg);
            for (Index j = 0; j < cfg.n_clips; ++j) {
                const auto& gt = instance.ground_truth(j);
                if (gt.separable) {
                    CHECK(margin(instance.exact_tensor(), j, gt.combination) > 0.0);
                } else {
                    CHECK(max_margin_over(instance.exact_tensor(), j, 3, 1) <= 0.0);
                }
            }
        }
    }
}

TEST_CASE("synth: noise keeps the declared profile (or generation fails loudly)") {
    SynthConfig cfg;
    cfg.n_clips = 6;
    cfg.n_prompts = 4;
    cfg.n_advances = 2;
    cfg.dim = 48;
    cfg.seed = 5;
    cfg.noise_scale = 0.05;
    const auto instance = synth_generate(cfg);  // must not throw at this noise level
    for (Index j = 0; j < cfg.n_clips; ++j) {
        CHECK(instance.ground_truth(j).separable);
    }
}

TEST_CASE("synth: capacity and profile errors") {
    SynthConfig cfg;
    cfg.n_clips = 2;
    cfg.n_prompts = 1;
    cfg.n_advances = 1;
    cfg.dim = 4;  // needs 1 + 2*1 + 2 = 5 directions for a twin profile
    cfg.profile = SeparabilityProfile::contains_inseparable;
    CHECK_THROWS_AS(synth_generate(cfg), generation_error);

    SynthConfig advance_cfg;
    advance_cfg.n_clips = 3;
    advance_cfg.n_prompts = 2;
    advance_cfg.n_advances = 1;  // cannot require an advance without one
    advance_cfg.dim = 32;
    advance_cfg.profile = SeparabilityProfile::requires_advance;
    CHECK_THROWS_AS(synth_generate(advance_cfg), generation_error);

    SynthConfig bad;
    bad.n_clips = 1;
    CHECK_THROWS_AS(synth_generate(bad), invalid_input);
}

TEST_CASE("synthetic oracle captions use schematic labels") {
    SynthConfig cfg;
    cfg.n_clips = 4;
    cfg.n_prompts = 3;
    cfg.n_advances = 2;
    cfg.dim = 24;
    const auto instance = synth_generate(cfg);
    const auto oracle = instance.oracle();
    CHECK(oracle->caption(3, 2, 1) == std::string("clip3-prompt2-t1"));
}

TEST_CASE("oracle_from_files: bit-exact round trip with captions") {
    SynthConfig cfg;
    cfg.n_clips = 3;
    cfg.n_prompts = 2;
    cfg.n_advances = 2;
    cfg.dim = 16;
    cfg.seed = 12;
    const auto instance = synth_generate(cfg);

    const std::string tensor_path = temp_path("roundtrip.cdpt");
    const std::string sidecar_path = temp_path("roundtrip.cdpt.json");
    io::write_tensor(tensor_path, instance.exact_tensor());
    io::TensorSidecar sidecar;
    sidecar.clip_ids = instance.clips().clip_ids();
    sidecar.prompts = instance.bank().prompts();
    for (Index j = 0; j < 3; ++j) {
        for (Index k = 0; k < 2; ++k) {
            for (Index t = 0; t < 2; ++t) {
                sidecar.captions.push_back(synthetic_caption(j, k, t));
            }
        }
    }
    io::write_tensor_sidecar(sidecar_path, sidecar);

    const auto oracle = oracle_from_files(tensor_path, sidecar_path);
    for (Index i = 0; i < 3; ++i) {
        for (Index j = 0; j < 3; ++j) {
            for (Index k = 0; k < 2; ++k) {
                for (Index t = 0; t < 2; ++t) {
                    CHECK(oracle->query(i, j, k, t) == instance.exact_tensor()(i, j, k, t));
                }
            }
        }
    }
    CHECK(oracle->caption(1, 1, 0) == std::string("clip1-prompt1-t0"));
    CHECK(oracle->clip_ids() == instance.clips().clip_ids());
}

TEST_CASE("oracle_from_files: truncated payload fails without a partial oracle") {
    SynthConfig cfg;
    cfg.n_clips = 2;
    cfg.n_prompts = 1;
    cfg.n_advances = 1;
    cfg.dim = 8;
    const auto instance = synth_generate(cfg);
    const std::string tensor_path = temp_path("truncated.cdpt");
    const std::string sidecar_path = temp_path("truncated.cdpt.json");
    io::write_tensor(tensor_path, instance.exact_tensor());
    io::write_tensor_sidecar(sidecar_path,
                             {instance.clips().clip_ids(), instance.bank().prompts(),
                              Provenance::exact,
                              {}});

    const auto size = std::filesystem::file_size(tensor_path);
    std::filesystem::resize_file(tensor_path, size - 3);
    CHECK_THROWS_AS(oracle_from_files(tensor_path, sidecar_path), load_error);
}

TEST_CASE("oracle_from_files: sidecar prompt count must match the tensor") {
    SynthConfig cfg;
    cfg.n_clips = 2;
    cfg.n_prompts = 2;
    cfg.n_advances = 1;
    cfg.dim = 12;
    const auto instance = synth_generate(cfg);
    const std::string tensor_path = temp_path("mismatch.cdpt");
    const std::string sidecar_path = temp_path("mismatch.cdpt.json");
    io::write_tensor(tensor_path, instance.exact_tensor());
    io::write_tensor_sidecar(sidecar_path, {instance.clips().clip_ids(), {"only-one"},
                                            Provenance::exact, {}});
    CHECK_THROWS_AS(oracle_from_files(tensor_path, sidecar_path), load_error);
}

TEST_CASE("oracle_from_files: magic and version checked") {
    const std::string bad_path = temp_path("bad.cdpt");
    {
        std::ofstream out(bad_path, std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_AS(io::read_tensor(bad_path), load_error);
}

TEST_CASE("oracle determinism: same seed answers identically on every cell") {
    SynthConfig cfg;
    cfg.n_clips = 4;
    cfg.n_prompts = 2;
    cfg.n_advances = 2;
    cfg.dim = 24;
    cfg.seed = 77;
    cfg.noise_scale = 0.2;
    const auto a = synth_generate(cfg);
    const auto b = synth_generate(cfg);
    const auto oa = a.oracle();
    const auto ob = b.oracle();
    for (Index i = 0; i < 4; ++i) {
        for (Index j = 0; j < 4; ++j) {
            for (Index k = 0; k < 2; ++k) {
                for (Index t = 0; t < 2; ++t) {
                    CHECK(oa->query(i, j, k, t) == ob->query(i, j, k, t));
                    CHECK(oa->query(i, j, k, t) == oa->query(i, j, k, t));
                }
            }
        }
    }
}
