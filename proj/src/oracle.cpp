#include "cdp/oracle.hpp"

#include "cdp/io.hpp"

#include <cmath>

namespace cdp {

TensorOracle::TensorOracle(SimilarityTensor tensor, std::vector<std::string> clip_ids,
                           std::vector<std::string> prompts, std::vector<std::string> captions)
    : tensor_(std::move(tensor)),
      clip_ids_(std::move(clip_ids)),
      prompts_(std::move(prompts)),
      captions_(std::move(captions)) {
    if (static_cast<Index>(clip_ids_.size()) != tensor_.n_clips()) {
        throw invalid_input("TensorOracle: clip_ids count does not match tensor n_clips");
    }
    if (static_cast<Index>(prompts_.size()) != tensor_.n_prompts()) {
        throw invalid_input("TensorOracle: prompt count does not match tensor n_prompts");
    }
    if (!captions_.empty() &&
        static_cast<Index>(captions_.size()) !=
            tensor_.n_clips() * tensor_.n_prompts() * tensor_.n_advances()) {
        throw invalid_input("TensorOracle: captions must cover every (clip, prompt, advance)");
    }
}

float TensorOracle::query(Index i, Index j, Index k, Index t) const {
    if (!tensor_.in_bounds(i, j, k, t)) {
        throw invalid_input("TensorOracle::query: index out of range");
    }
    return tensor_(i, j, k, t);
}

std::optional<std::string> TensorOracle::caption(Index j, Index k, Index t) const {
    if (captions_.empty()) {
        return std::nullopt;
    }
    if (!tensor_.in_bounds(0, j, k, t)) {
        throw invalid_input("TensorOracle::caption: index out of range");
    }
    const auto idx = (j * tensor_.n_prompts() + k) * tensor_.n_advances() + t;
    return captions_[static_cast<std::size_t>(idx)];
}

std::unique_ptr<TensorOracle> oracle_from_files(const std::string& tensor_path,
                                                const std::string& sidecar_path) {
    SimilarityTensor tensor = io::read_tensor(tensor_path);
    io::TensorSidecar sidecar = io::read_tensor_sidecar(sidecar_path);
    if (static_cast<Index>(sidecar.clip_ids.size()) != tensor.n_clips()) {
        throw load_error(sidecar_path + ": clip_ids count " + std::to_string(sidecar.clip_ids.size()) +
                         " does not match tensor n_clips " + std::to_string(tensor.n_clips()));
    }
    if (static_cast<Index>(sidecar.prompts.size()) != tensor.n_prompts()) {
        throw load_error(sidecar_path + ": prompts count " + std::to_string(sidecar.prompts.size()) +
                         " does not match tensor n_prompts " + std::to_string(tensor.n_prompts()));
    }
    if (!sidecar.captions.empty() &&
        static_cast<Index>(sidecar.captions.size()) !=
            tensor.n_clips() * tensor.n_prompts() * tensor.n_advances()) {
        throw load_error(sidecar_path + ": captions count does not cover every (clip, prompt, advance)");
    }
    if (sidecar.provenance == Provenance::exact) {
        for (float v : tensor.values()) {
            if (!std::isfinite(v) || v < -1.0f - 1e-5f || v > 1.0f + 1e-5f) {
                throw load_error(tensor_path + ": exact-provenance cell " + std::to_string(v) +
                                 " outside [-1, 1]");
            }
        }
    }
    // The sidecar records the provenance the payload was produced with.
    SimilarityTensor typed(tensor.n_clips(), tensor.n_prompts(), tensor.n_advances(),
                           sidecar.provenance);
    typed.values() = tensor.values();
    return std::make_unique<TensorOracle>(std::move(typed), std::move(sidecar.clip_ids),
                                          std::move(sidecar.prompts), std::move(sidecar.captions));
}

}  // namespace cdp
