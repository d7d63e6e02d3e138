#pragma once

#include "cdp/oracle.hpp"
#include "cdp/tensor.hpp"
#include "cdp/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cdp {

/// One (prompt, advance) element of a combination.
struct ComboElement {
    Index prompt = 0;
    Index advance = 0;

    friend bool operator==(const ComboElement&, const ComboElement&) = default;
    friend auto operator<=>(const ComboElement& a, const ComboElement& b) {
        if (a.advance != b.advance) return a.advance <=> b.advance;
        return a.prompt <=> b.prompt;
    }
};

/// A set of distinct (prompt, advance) elements, stored sorted by
/// (advance, prompt). Similarities of the elements are averaged when the
/// combination is scored against the tensor.
class PromptCombination {
public:
    PromptCombination() = default;
    explicit PromptCombination(std::vector<ComboElement> elements);

    Index size() const { return static_cast<Index>(elements_.size()); }
    bool empty() const { return elements_.empty(); }
    const std::vector<ComboElement>& elements() const { return elements_; }

    /// Largest advance among the elements (0 for an empty combination).
    Index max_advance() const;

    friend bool operator==(const PromptCombination&, const PromptCombination&) = default;

private:
    std::vector<ComboElement> elements_;
};

enum class AdvancementMode { per_clip, uniform };

struct SearchConfig {
    Index alpha = 3;          ///< max elements per combination
    double lambda = 0.1;      ///< margin of confidence; unique requires margin > lambda
    Index tau_max = 0;        ///< largest advance budget the search may use
    AdvancementMode mode = AdvancementMode::per_clip;
};

/// The chosen combination for one clip together with the search outcome.
struct PromptAssignment {
    std::string clip_id;
    Index clip_index = 0;
    PromptCombination combination;
    double margin = 0.0;
    bool unique = false;
    Index advance_used = 0;  ///< max advance in the combination
    /// Per-element caption text in (advance, prompt) order; empty when the
    /// oracle supplies no captions.
    std::vector<std::string> caption_elements;
};

struct SearchStats {
    std::uint64_t combos_evaluated = 0;
    double wall_seconds = 0.0;
};

struct SearchResult {
    std::vector<PromptAssignment> assignments;
    SearchStats stats;
};

/// Every subset of {(k, t) : 0 <= k < n_prompts, 0 <= t <= tau} of size
/// 1..alpha, ordered by size then lexicographically by the sorted (t, k)
/// element sequence.
std::vector<PromptCombination> enumerate_combinations(Index n_prompts, Index alpha, Index tau);

/// Mean of tensor cells over the combination's elements: the similarity of
/// video clip i to the captions generated from clip j with the combination.
double combo_similarity(const SimilarityTensor& tensor, Index i, Index j,
                        const PromptCombination& combo);

/// Uniqueness margin of clip i under the combination: self-similarity minus
/// the strongest competitor similarity in either direction. Positive iff the
/// combination captions clip i uniquely.
double margin(const SimilarityTensor& tensor, Index i, const PromptCombination& combo);

/// For each clip, searches combinations over increasing advance budgets and
/// emits the max-margin assignment, flagged unique when the margin strictly
/// exceeds config.lambda. Ties between equal margins prefer fewer elements,
/// then a smaller maximum advance, then the lexicographically smaller
/// element sequence. Deterministic for identical inputs.
SearchResult select_prompts(const SimilarityTensor& tensor, const SearchConfig& config,
                            const std::vector<std::string>& clip_ids = {});

/// Caption text of each element of the assignment's combination, ordered by
/// (advance, prompt). Throws caption_unavailable when the oracle has no text
/// for some element.
std::vector<std::string> element_captions(const PromptAssignment& assignment,
                                          const SimilarityOracle& oracle);

/// Joins the per-element captions: elements at the same advance with ", ",
/// across increasing advances with " then ".
std::string assemble_caption(const PromptAssignment& assignment, const SimilarityOracle& oracle);

/// The strict bidirectional nearest-neighbor condition for clip i with its
/// own combination as the caption representation. Agrees with margin > 0.
bool is_unique_combination(const SimilarityTensor& tensor, Index i,
                           const PromptCombination& combo);

/// Re-checks the uniqueness condition for every assignment.
std::vector<bool> verify_uniqueness(const SimilarityTensor& tensor,
                                    const std::vector<PromptAssignment>& assignments);

}  // namespace cdp
