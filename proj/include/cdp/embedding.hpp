#pragma once

#include "cdp/types.hpp"

#include <string>
#include <vector>

namespace cdp {

/// A point in the shared visual/text embedding space. Values are stored
/// unit-normalized (single precision), so cosine similarity reduces to a
/// dot product.
class Embedding {
public:
    /// Normalizes `raw` to unit L2 norm. Throws invalid_embedding when the
    /// input norm is too small to normalize reliably.
    static Embedding normalized(Vecf raw);

    /// Accepts an already-normalized vector without touching its bits
    /// (used by file loaders to keep round-trips exact). Throws
    /// invalid_embedding when |norm - 1| exceeds 1e-5.
    static Embedding prenormalized(Vecf values);

    Index dim() const { return values_.size(); }
    const Vecf& values() const { return values_; }

private:
    explicit Embedding(Vecf v) : values_(std::move(v)) {}
    Vecf values_;
};

/// Cosine similarity of two embeddings. Both are stored normalized, so this
/// is their dot product, accumulated in double precision.
double cosine(const Embedding& a, const Embedding& b);

/// Dot product of two unit vectors with double accumulation; the building
/// block behind cosine() and the synthetic oracle.
template <typename DerivedA, typename DerivedB>
double unit_dot(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    return a.template cast<double>().dot(b.template cast<double>());
}

/// An ordered collection of clips, each with embeddings at advances
/// 0..max_advance. Immutable after construction.
class ClipSet {
public:
    /// `embeddings` is laid out clip-major: [clip * n_advances + advance].
    ClipSet(std::vector<std::string> clip_ids, Index n_advances,
            std::vector<Embedding> embeddings);

    Index n_clips() const { return static_cast<Index>(clip_ids_.size()); }
    Index n_advances() const { return n_advances_; }
    Index max_advance() const { return n_advances_ - 1; }
    Index dim() const { return dim_; }

    const std::string& clip_id(Index clip) const { return clip_ids_.at(static_cast<std::size_t>(clip)); }
    const std::vector<std::string>& clip_ids() const { return clip_ids_; }

    const Embedding& embedding(Index clip, Index advance) const;

private:
    std::vector<std::string> clip_ids_;
    Index n_advances_ = 0;
    Index dim_ = 0;
    std::vector<Embedding> embeddings_;
};

/// The fixed bank of prompt strings available to the search.
class PromptBank {
public:
    explicit PromptBank(std::vector<std::string> prompts);

    Index size() const { return static_cast<Index>(prompts_.size()); }
    const std::string& prompt(Index k) const { return prompts_.at(static_cast<std::size_t>(k)); }
    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::vector<std::string> prompts_;
};

}  // namespace cdp
