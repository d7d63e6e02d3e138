#pragma once

#include "cdp/embedding.hpp"
#include "cdp/types.hpp"

#include <vector>

namespace cdp {

class SimilarityOracle;

enum class Provenance { exact, surrogate };

/// Dense 4-d array of clip/caption similarities, indexed
/// (video clip i, caption source clip j, prompt k, advance t).
/// Cell (i,j,k,t) holds the similarity between the embedding of clip i at
/// advance t and the embedding of the caption generated from clip j with
/// prompt k at advance t. Values are stored row-major in single precision.
class SimilarityTensor {
public:
    SimilarityTensor(Index n_clips, Index n_prompts, Index n_advances, Provenance provenance);

    Index n_clips() const { return n_clips_; }
    Index n_prompts() const { return n_prompts_; }
    Index n_advances() const { return n_advances_; }
    Provenance provenance() const { return provenance_; }

    Index size() const { return static_cast<Index>(values_.size()); }

    float operator()(Index i, Index j, Index k, Index t) const {
        return values_[static_cast<std::size_t>(offset(i, j, k, t))];
    }
    float& at(Index i, Index j, Index k, Index t) {
        return values_[static_cast<std::size_t>(offset(i, j, k, t))];
    }

    const std::vector<float>& values() const { return values_; }
    std::vector<float>& values() { return values_; }

    Index offset(Index i, Index j, Index k, Index t) const {
        return ((i * n_clips_ + j) * n_prompts_ + k) * n_advances_ + t;
    }

    bool in_bounds(Index i, Index j, Index k, Index t) const {
        return i >= 0 && i < n_clips_ && j >= 0 && j < n_clips_ && k >= 0 && k < n_prompts_ &&
               t >= 0 && t < n_advances_;
    }

private:
    Index n_clips_ = 0;
    Index n_prompts_ = 0;
    Index n_advances_ = 0;
    Provenance provenance_ = Provenance::exact;
    std::vector<float> values_;
};

/// Fills a tensor by querying the oracle for every (i, j, k, t) cell.
/// Exact provenance; any oracle failure or out-of-range value becomes a
/// build_error naming the cell.
SimilarityTensor build_similarity_tensor(const ClipSet& clips, const PromptBank& bank,
                                         const SimilarityOracle& oracle);

}  // namespace cdp
