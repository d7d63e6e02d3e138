#pragma once

#include "cdp/embedding.hpp"
#include "cdp/oracle.hpp"
#include "cdp/search.hpp"
#include "cdp/tensor.hpp"
#include "cdp/types.hpp"

#include <memory>
#include <vector>

namespace cdp {

enum class SeparabilityProfile { all_separable_at_t0, requires_advance, contains_inseparable };

struct SynthConfig {
    Index n_clips = 10;
    Index n_prompts = 10;
    Index n_advances = 1;  ///< tau + 1
    Index dim = 64;
    SeparabilityProfile profile = SeparabilityProfile::all_separable_at_t0;
    double noise_scale = 0.0;
    std::uint64_t seed = 1;

    /// Weight of the attribute directions inside clip embeddings relative to
    /// the shared base direction.
    double attr_weight = 1.0;
    /// Combination-size cap used when computing ground truth by brute force.
    Index gt_alpha = 3;
};

/// Per-clip planted answer: the first (size-then-lexicographic) combination
/// with a strictly positive margin on the exact tensor, or inseparable.
struct GroundTruth {
    bool separable = false;
    PromptCombination combination;  ///< meaningful only when separable
};

/// A generated benchmark world with known structure: every clip sits near a
/// shared base direction; each (clip, prompt, advance) slot carries a latent
/// attribute direction, which is what the corresponding caption embedding
/// points at. Prompts thus literally reveal attributes, and separability is
/// controlled by which clips share which attributes.
class SyntheticInstance {
public:
    const ClipSet& clips() const { return clips_; }
    const PromptBank& bank() const { return bank_; }
    const SimilarityTensor& exact_tensor() const { return tensor_; }
    const GroundTruth& ground_truth(Index clip) const {
        return ground_truth_.at(static_cast<std::size_t>(clip));
    }
    const std::vector<GroundTruth>& ground_truths() const { return ground_truth_; }
    const SynthConfig& config() const { return config_; }
    std::uint64_t seed() const { return config_.seed; }

    /// Latent attribute direction of clip j under prompt k at advance t.
    Vecf attribute(Index j, Index k, Index t) const;

    const Embedding& caption_embedding(Index j, Index k, Index t) const;

    /// A standalone oracle over this instance (owns copies of the embedding
    /// data, so it may outlive the instance). Captions are schematic labels
    /// of the form "clip3-prompt2-t1".
    std::unique_ptr<SimilarityOracle> oracle() const;

private:
    friend SyntheticInstance synth_generate(const SynthConfig& config);
    SyntheticInstance(ClipSet clips, PromptBank bank, SimilarityTensor tensor)
        : clips_(std::move(clips)), bank_(std::move(bank)), tensor_(std::move(tensor)) {}

    ClipSet clips_;
    PromptBank bank_;
    SimilarityTensor tensor_;
    std::vector<Embedding> caption_embeddings_;  // flat [j][k][t]
    std::vector<Index> attribute_ids_;           // flat [j][k][t]
    Matf attribute_pool_;                        // one direction per column
    std::vector<GroundTruth> ground_truth_;
    SynthConfig config_;
};

/// Generates a synthetic instance whose separability profile provably holds
/// on the exact tensor (verified by exhaustive search before returning).
/// Throws generation_error when the profile is unachievable under the
/// requested sizes, e.g. when dim is too small to host the required number
/// of orthogonal attribute directions.
SyntheticInstance synth_generate(const SynthConfig& config);

/// Schematic caption label used by synthetic oracles.
std::string synthetic_caption(Index clip, Index prompt, Index advance);

}  // namespace cdp
