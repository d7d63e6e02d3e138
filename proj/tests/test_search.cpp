#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdp/pipeline.hpp"
#include "cdp/search.hpp"
#include "cdp/synth.hpp"
#include "reference_search.hpp"

#include <algorithm>
#include <optional>

using namespace cdp;

namespace {

SimilarityTensor tensor_from_cells(Index n, Index p, Index t,
                                   const std::vector<float>& cells) {
    SimilarityTensor tensor(n, p, t, Provenance::exact);
    REQUIRE(cells.size() == tensor.values().size());
    tensor.values() = cells;
    return tensor;
}

PromptCombination combo(std::vector<ComboElement> elems) {
    return PromptCombination(std::move(elems));
}

}  // namespace

TEST_CASE("enumerate_combinations: counts") {
    CHECK(enumerate_combinations(3, 1, 0).size() == 3);
    CHECK(enumerate_combinations(3, 2, 0).size() == 6);
    CHECK(enumerate_combinations(10, 3, 0).size() == 175);
}

TEST_CASE("enumerate_combinations: deterministic (size, lex) order") {
    const auto combos = enumerate_combinations(2, 2, 1);
    // singletons in (t, k) order first
    CHECK(combos[0].elements() == std::vector<ComboElement>{{0, 0}});
    CHECK(combos[1].elements() == std::vector<ComboElement>{{1, 0}});
    CHECK(combos[2].elements() == std::vector<ComboElement>{{0, 1}});
    CHECK(combos[3].elements() == std::vector<ComboElement>{{1, 1}});
    // then pairs, lexicographic by element sequence
    CHECK(combos[4].elements() == std::vector<ComboElement>{{0, 0}, {1, 0}});
    CHECK(combos[5].elements() == std::vector<ComboElement>{{0, 0}, {0, 1}});
    CHECK(combos[6].elements() == std::vector<ComboElement>{{0, 0}, {1, 1}});
    CHECK(combos.size() == 4 + 6);
}

TEST_CASE("enumerate_combinations: count law over random shapes") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const Index p = 1 + static_cast<Index>(rng.below(4));
        const Index alpha = 1 + static_cast<Index>(rng.below(4));
        const Index tau = static_cast<Index>(rng.below(3));
        const Index grid = p * (tau + 1);
        std::uint64_t expected = 0;
        std::uint64_t c = 1;
        for (Index m = 1; m <= std::min(alpha, grid); ++m) {
            c = c * static_cast<std::uint64_t>(grid - m + 1) / static_cast<std::uint64_t>(m);
            expected += c;
        }
        CHECK(enumerate_combinations(p, alpha, tau).size() == expected);
    }
}

TEST_CASE("PromptCombination: duplicate elements rejected, sorted storage") {
    CHECK_THROWS_AS(combo({{1, 0}, {1, 0}}), invalid_combination);
    const auto c = combo({{0, 1}, {2, 0}, {1, 0}});
    CHECK(c.elements() == std::vector<ComboElement>{{1, 0}, {2, 0}, {0, 1}});
    CHECK(c.max_advance() == 1);
}

TEST_CASE("combo_similarity: singleton and means") {
    // N=1, P=2, T=2 cell layout [i][j][k][t]
    const auto tensor = tensor_from_cells(1, 2, 2, {0.4f, 0.5f, 0.8f, 0.9f});
    CHECK(combo_similarity(tensor, 0, 0, combo({{0, 0}})) == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(combo_similarity(tensor, 0, 0, combo({{0, 0}, {1, 0}})) ==
          doctest::Approx(0.6).epsilon(1e-6));
    // cells 0.5 at (k=0,t=0) and 0.9 at (k=0,t=1)
    const auto across = tensor_from_cells(1, 2, 2, {0.5f, 0.9f, 0.1f, 0.2f});
    CHECK(combo_similarity(across, 0, 0, combo({{0, 0}, {0, 1}})) ==
          doctest::Approx(0.7).epsilon(1e-6));
    CHECK_THROWS_AS(combo_similarity(tensor, 0, 0, combo({{2, 0}})), invalid_combination);
    CHECK_THROWS_AS(combo_similarity(tensor, 0, 0, combo({{0, 2}})), invalid_combination);
}

TEST_CASE("margin: hand-computed two-clip example") {
    // s(0,0)=0.9 s(1,1)=0.9 s(0,1)=0.5 s(1,0)=0.4
    const auto tensor = tensor_from_cells(2, 1, 1, {0.9f, 0.5f, 0.4f, 0.9f});
    const auto c = combo({{0, 0}});
    CHECK(margin(tensor, 0, c) == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(margin(tensor, 1, c) == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("margin: identical clips give exactly zero") {
    const auto tensor = tensor_from_cells(2, 1, 1, {0.7f, 0.7f, 0.7f, 0.7f});
    const auto c = combo({{0, 0}});
    CHECK(margin(tensor, 0, c) == 0.0);
    CHECK(margin(tensor, 1, c) == 0.0);
}

TEST_CASE("margin: strict row-and-column max implies positive margin") {
    Rng rng(7);
    const auto tensor = random_tensor(4, 2, 1, 42);
    SimilarityTensor boosted = tensor;
    for (Index i = 0; i < 4; ++i) {
        for (Index k = 0; k < 2; ++k) {
            boosted.at(i, i, k, 0) = 0.99f;  // strictly dominates row and column
        }
    }
    for (Index i = 0; i < 4; ++i) {
        for (const auto& c : enumerate_combinations(2, 2, 0)) {
            CHECK(margin(boosted, i, c) > 0.0);
        }
    }
}

TEST_CASE("margin: undefined for a single clip") {
    const auto tensor = tensor_from_cells(1, 1, 1, {0.5f});
    CHECK_THROWS_AS(margin(tensor, 0, combo({{0, 0}})), undefined_margin);
}

TEST_CASE("select_prompts: all-separable instance is unique at advance 0") {
    SynthConfig cfg;
    cfg.n_clips = 6;
    cfg.n_prompts = 4;
    cfg.n_advances = 2;
    cfg.dim = 32;
    cfg.seed = 11;
    const auto instance = synth_generate(cfg);
    SearchConfig search;
    search.tau_max = 1;
    const auto result = select_prompts(instance.exact_tensor(), search);
    for (const auto& a : result.assignments) {
        CHECK(a.unique);
        CHECK(a.advance_used == 0);
        CHECK(a.margin > search.lambda);
    }
}

TEST_CASE("select_prompts: requires_advance pushes some clip to t >= 1") {
    SynthConfig cfg;
    cfg.n_clips = 5;
    cfg.n_prompts = 3;
    cfg.n_advances = 3;
    cfg.dim = 32;
    cfg.seed = 3;
    cfg.profile = SeparabilityProfile::requires_advance;
    const auto instance = synth_generate(cfg);
    SearchConfig search;
    search.tau_max = 2;
    const auto result = select_prompts(instance.exact_tensor(), search);
    bool advanced = false;
    for (const auto& a : result.assignments) {
        CHECK(a.unique);
        if (a.advance_used >= 1) advanced = true;
    }
    CHECK(advanced);
}

TEST_CASE("select_prompts: duplicated clips stay non-unique with margin <= 0") {
    SynthConfig cfg;
    cfg.n_clips = 4;
    cfg.n_prompts = 2;
    cfg.n_advances = 2;
    cfg.dim = 24;
    cfg.seed = 5;
    cfg.profile = SeparabilityProfile::contains_inseparable;
    const auto instance = synth_generate(cfg);
    SearchConfig search;
    search.tau_max = 1;
    const auto result = select_prompts(instance.exact_tensor(), search);
    for (Index m = 0; m < 2; ++m) {
        const auto& a = result.assignments[static_cast<std::size_t>(m)];
        CHECK_FALSE(a.unique);
        CHECK(a.margin <= 0.0);
    }
}

TEST_CASE("select_prompts: byte-identical across repeated runs") {
    const auto tensor = random_tensor(6, 3, 2, 123);
    SearchConfig cfg;
    cfg.tau_max = 1;
    cfg.alpha = 2;
    const auto a = select_prompts(tensor, cfg);
    const auto b = select_prompts(tensor, cfg);
    REQUIRE(a.assignments.size() == b.assignments.size());
    for (std::size_t i = 0; i < a.assignments.size(); ++i) {
        CHECK(a.assignments[i].margin == b.assignments[i].margin);
        CHECK(a.assignments[i].combination == b.assignments[i].combination);
        CHECK(a.assignments[i].unique == b.assignments[i].unique);
    }
}

TEST_CASE("select_prompts: matches the naive reference on random tensors") {
    Rng rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.below(4));
        const Index p = 1 + static_cast<Index>(rng.below(3));
        const Index t = 1 + static_cast<Index>(rng.below(3));
        const auto tensor = random_tensor(n, p, t, 1000 + static_cast<std::uint64_t>(trial));
        SearchConfig cfg;
        cfg.alpha = 1 + static_cast<Index>(rng.below(3));
        cfg.tau_max = t - 1;
        cfg.lambda = rng.uniform(-0.2, 0.6);
        cfg.mode = trial % 3 == 0 ? AdvancementMode::uniform : AdvancementMode::per_clip;
        const auto got = select_prompts(tensor, cfg);
        const auto want = ref::reference_select(tensor, cfg);
        for (Index i = 0; i < n; ++i) {
            const auto& g = got.assignments[static_cast<std::size_t>(i)];
            const auto& w = want[static_cast<std::size_t>(i)];
            CHECK(g.margin == w.margin);
            CHECK(g.unique == w.unique);
            CHECK(g.combination.elements() == w.combo);
        }
    }
}

TEST_CASE("select_prompts: lambda screening is monotone") {
    const auto tensor = random_tensor(6, 3, 2, 77);
    SearchConfig cfg;
    cfg.tau_max = 1;
    Index prev = tensor.n_clips() + 1;
    for (double lambda : {-0.5, 0.0, 0.1, 0.3, 0.6, 0.9}) {
        cfg.lambda = lambda;
        const auto result = select_prompts(tensor, cfg);
        Index unique_count = 0;
        for (const auto& a : result.assignments) {
            if (a.unique) {
                ++unique_count;
                CHECK(a.margin > lambda);
            }
        }
        CHECK(unique_count <= prev);
        prev = unique_count;
    }
}

TEST_CASE("best margin is non-decreasing in the advance budget") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto tensor = random_tensor(5, 2, 3, seed);
        for (Index i = 0; i < 5; ++i) {
            double prev = -1e300;
            for (Index tau = 0; tau <= 2; ++tau) {
                const auto best = ref::best_at_budget(tensor, i, 2, tau);
                CHECK(best.margin >= prev);
                prev = best.margin;
            }
        }
    }
}

TEST_CASE("margin > 0 iff the uniqueness condition holds (exhaustive small tensors)") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto tensor = random_tensor(2 + seed % 4, 1 + seed % 3, 1 + seed % 3, 500 + seed);
        for (Index i = 0; i < tensor.n_clips(); ++i) {
            for (const auto& c :
                 enumerate_combinations(tensor.n_prompts(), 3, tensor.n_advances() - 1)) {
                CHECK((margin(tensor, i, c) > 0.0) == is_unique_combination(tensor, i, c));
            }
        }
    }
}

TEST_CASE("verify_uniqueness agrees with assignment margins") {
    const auto tensor = tensor_from_cells(2, 1, 1, {0.9f, 0.5f, 0.4f, 0.9f});
    SearchConfig cfg;
    const auto result = select_prompts(tensor, cfg);
    const auto verdicts = verify_uniqueness(tensor, result.assignments);
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0]);
    CHECK(verdicts[1]);

    const auto dup = tensor_from_cells(2, 1, 1, {0.7f, 0.7f, 0.7f, 0.7f});
    const auto dup_result = select_prompts(dup, cfg);
    const auto dup_verdicts = verify_uniqueness(dup, dup_result.assignments);
    CHECK_FALSE(dup_verdicts[0]);  // margin exactly 0 fails the strict condition
    CHECK_FALSE(dup_verdicts[1]);
}

TEST_CASE("assemble_caption join rules") {
    FunctionOracle oracle(3, 3, 2, [](Index, Index, Index, Index) { return 0.0f; });

    struct CaptionOracle final : SimilarityOracle {
        float query(Index, Index, Index, Index) const override { return 0.0f; }
        std::optional<std::string> caption(Index, Index k, Index t) const override {
            if (t == 0 && k == 0) return "opens the fridge";
            if (t == 1 && k == 0) return "picks up milk";
            if (t == 0 && k == 1) return "holds knife";
            if (t == 0 && k == 2) return "looks at board";
            return std::nullopt;
        }
        Index n_clips() const override { return 3; }
        Index n_prompts() const override { return 3; }
        Index n_advances() const override { return 2; }
    } captions;

    PromptAssignment single;
    single.clip_index = 0;
    single.combination = combo({{0, 0}});
    CHECK(assemble_caption(single, captions) == "opens the fridge");

    PromptAssignment temporal;
    temporal.clip_index = 0;
    temporal.combination = combo({{0, 0}, {0, 1}});
    CHECK(assemble_caption(temporal, captions) == "opens the fridge then picks up milk");

    PromptAssignment pair;
    pair.clip_index = 0;
    pair.combination = combo({{1, 0}, {2, 0}});
    CHECK(assemble_caption(pair, captions) == "holds knife, looks at board");

    PromptAssignment missing;
    missing.clip_index = 0;
    missing.combination = combo({{1, 1}});
    CHECK_THROWS_AS(assemble_caption(missing, captions), caption_unavailable);
}

TEST_CASE("uniform mode advances all clips together") {
    SynthConfig cfg;
    cfg.n_clips = 5;
    cfg.n_prompts = 3;
    cfg.n_advances = 2;
    cfg.dim = 32;
    cfg.seed = 21;
    cfg.profile = SeparabilityProfile::requires_advance;
    const auto instance = synth_generate(cfg);

    SearchConfig search;
    search.tau_max = 1;
    search.mode = AdvancementMode::uniform;
    const auto result = select_prompts(instance.exact_tensor(), search, instance.clips().clip_ids());
    for (const auto& a : result.assignments) {
        CHECK(a.unique);
        CHECK(a.advance_used <= 1);
    }
    // The twins force the shared budget to 1, so the search may use advance-1
    // elements for any clip.
    bool used_advance = false;
    for (const auto& a : result.assignments) {
        if (a.advance_used == 1) used_advance = true;
    }
    CHECK(used_advance);
}

TEST_CASE("mean chosen combination size stays within [1, alpha]") {
    SynthConfig cfg;
    cfg.n_clips = 10;
    cfg.n_prompts = 10;
    cfg.n_advances = 1;
    cfg.dim = 32;
    cfg.seed = 9;
    const auto instance = synth_generate(cfg);
    SearchConfig search;  // alpha = 3
    const auto result = select_prompts(instance.exact_tensor(), search);
    double mean = 0;
    for (const auto& a : result.assignments) mean += static_cast<double>(a.combination.size());
    mean /= static_cast<double>(result.assignments.size());
    CHECK(mean >= 1.0);
    CHECK(mean <= 3.0);
}
