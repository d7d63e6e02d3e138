#include "cdp/tensor.hpp"

#include "cdp/oracle.hpp"

#include <cmath>
#include <string>

namespace cdp {

SimilarityTensor::SimilarityTensor(Index n_clips, Index n_prompts, Index n_advances,
                                   Provenance provenance)
    : n_clips_(n_clips), n_prompts_(n_prompts), n_advances_(n_advances), provenance_(provenance) {
    if (n_clips_ < 1 || n_prompts_ < 1 || n_advances_ < 1) {
        throw invalid_input("SimilarityTensor: all dimensions must be >= 1");
    }
    values_.assign(static_cast<std::size_t>(n_clips_) * static_cast<std::size_t>(n_clips_) *
                       static_cast<std::size_t>(n_prompts_) * static_cast<std::size_t>(n_advances_),
                   0.0f);
}

namespace {
std::string cell_name(Index i, Index j, Index k, Index t) {
    return "(i=" + std::to_string(i) + ", j=" + std::to_string(j) + ", k=" + std::to_string(k) +
           ", t=" + std::to_string(t) + ")";
}
}  // namespace

SimilarityTensor build_similarity_tensor(const ClipSet& clips, const PromptBank& bank,
                                         const SimilarityOracle& oracle) {
    const Index n = clips.n_clips();
    const Index p = bank.size();
    const Index ta = clips.n_advances();
    if (oracle.n_clips() < n || oracle.n_prompts() < p || oracle.n_advances() < ta) {
        throw build_error("oracle does not cover the requested (clips, prompts, advances) range");
    }

    SimilarityTensor tensor(n, p, ta, Provenance::exact);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            for (Index k = 0; k < p; ++k) {
                for (Index t = 0; t < ta; ++t) {
                    float value = 0.0f;
                    try {
                        value = oracle.query(i, j, k, t);
                    } catch (const std::exception& e) {
                        throw build_error("oracle failed at cell " + cell_name(i, j, k, t) + ": " +
                                          e.what());
                    }
                    if (!std::isfinite(value) || value < -1.0f - 1e-5f || value > 1.0f + 1e-5f) {
                        throw build_error("oracle returned out-of-range similarity " +
                                          std::to_string(value) + " at cell " + cell_name(i, j, k, t));
                    }
                    tensor.at(i, j, k, t) = value;
                }
            }
        }
    }
    return tensor;
}

}  // namespace cdp
