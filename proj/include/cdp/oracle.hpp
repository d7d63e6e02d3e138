#pragma once

#include "cdp/tensor.hpp"
#include "cdp/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cdp {

/// The opaque caption-then-embed pipeline: given (video clip i, caption
/// source clip j, prompt k, advance t), reports the similarity between the
/// embedding of clip i and the embedding of clip j's caption under prompt k,
/// both advanced by t. Deterministic and safe for concurrent queries.
class SimilarityOracle {
public:
    virtual ~SimilarityOracle() = default;

    virtual float query(Index i, Index j, Index k, Index t) const = 0;

    /// Caption text for (source clip j, prompt k, advance t), when the
    /// backing store carries it.
    virtual std::optional<std::string> caption(Index j, Index k, Index t) const {
        (void)j;
        (void)k;
        (void)t;
        return std::nullopt;
    }

    virtual Index n_clips() const = 0;
    virtual Index n_prompts() const = 0;
    virtual Index n_advances() const = 0;
};

/// Test/utility oracle backed by a callable.
class FunctionOracle final : public SimilarityOracle {
public:
    using Fn = std::function<float(Index, Index, Index, Index)>;

    FunctionOracle(Index n_clips, Index n_prompts, Index n_advances, Fn fn)
        : n_clips_(n_clips), n_prompts_(n_prompts), n_advances_(n_advances), fn_(std::move(fn)) {}

    float query(Index i, Index j, Index k, Index t) const override { return fn_(i, j, k, t); }
    Index n_clips() const override { return n_clips_; }
    Index n_prompts() const override { return n_prompts_; }
    Index n_advances() const override { return n_advances_; }

private:
    Index n_clips_, n_prompts_, n_advances_;
    Fn fn_;
};

/// Oracle backed by a stored tensor plus sidecar metadata (clip ids, prompt
/// strings, optional caption text).
class TensorOracle final : public SimilarityOracle {
public:
    TensorOracle(SimilarityTensor tensor, std::vector<std::string> clip_ids,
                 std::vector<std::string> prompts,
                 std::vector<std::string> captions = {});  // captions flat [j][k][t], may be empty

    float query(Index i, Index j, Index k, Index t) const override;
    std::optional<std::string> caption(Index j, Index k, Index t) const override;

    Index n_clips() const override { return tensor_.n_clips(); }
    Index n_prompts() const override { return tensor_.n_prompts(); }
    Index n_advances() const override { return tensor_.n_advances(); }

    const SimilarityTensor& tensor() const { return tensor_; }
    const std::vector<std::string>& clip_ids() const { return clip_ids_; }
    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    SimilarityTensor tensor_;
    std::vector<std::string> clip_ids_;
    std::vector<std::string> prompts_;
    std::vector<std::string> captions_;
};

/// Loads a CDPT tensor file and its sidecar into a tensor-backed oracle.
/// Throws load_error naming the offending field on any inconsistency.
std::unique_ptr<TensorOracle> oracle_from_files(const std::string& tensor_path,
                                                const std::string& sidecar_path);

}  // namespace cdp
