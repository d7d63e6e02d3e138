#include "cdp/embedding.hpp"

#include <cmath>
#include <unordered_set>

namespace cdp {

namespace {
double l2_norm(const Vecf& v) {
    return std::sqrt(v.cast<double>().squaredNorm());
}
}  // namespace

Embedding Embedding::normalized(Vecf raw) {
    if (raw.size() == 0) {
        throw invalid_embedding("embedding must not be empty");
    }
    const double norm = l2_norm(raw);
    if (!std::isfinite(norm) || norm < 1e-12) {
        throw invalid_embedding("cannot normalize embedding with near-zero or non-finite norm");
    }
    Vecd scaled = raw.cast<double>() / norm;
    return Embedding(scaled.cast<float>());
}

Embedding Embedding::prenormalized(Vecf values) {
    if (values.size() == 0) {
        throw invalid_embedding("embedding must not be empty");
    }
    const double norm = l2_norm(values);
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-5) {
        throw invalid_embedding("embedding is not unit-normalized (norm=" + std::to_string(norm) + ")");
    }
    return Embedding(std::move(values));
}

double cosine(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim()) {
        throw invalid_input("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                            std::to_string(b.dim()) + ")");
    }
    return unit_dot(a.values(), b.values());
}

ClipSet::ClipSet(std::vector<std::string> clip_ids, Index n_advances,
                 std::vector<Embedding> embeddings)
    : clip_ids_(std::move(clip_ids)), n_advances_(n_advances), embeddings_(std::move(embeddings)) {
    if (clip_ids_.empty()) {
        throw invalid_input("ClipSet: at least one clip required");
    }
    if (n_advances_ < 1) {
        throw invalid_input("ClipSet: n_advances must be >= 1 (advance 0 is the base clip)");
    }
    if (embeddings_.size() != clip_ids_.size() * static_cast<std::size_t>(n_advances_)) {
        throw invalid_input("ClipSet: expected exactly n_clips * n_advances embeddings");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : clip_ids_) {
        if (!seen.insert(id).second) {
            throw invalid_input("ClipSet: duplicate clip id '" + id + "'");
        }
    }
    dim_ = embeddings_.front().dim();
    for (const auto& e : embeddings_) {
        if (e.dim() != dim_) {
            throw invalid_input("ClipSet: all embeddings must share one dimension");
        }
    }
}

const Embedding& ClipSet::embedding(Index clip, Index advance) const {
    if (clip < 0 || clip >= n_clips() || advance < 0 || advance >= n_advances_) {
        throw invalid_input("ClipSet::embedding: index out of range");
    }
    return embeddings_[static_cast<std::size_t>(clip * n_advances_ + advance)];
}

PromptBank::PromptBank(std::vector<std::string> prompts) : prompts_(std::move(prompts)) {
    if (prompts_.empty()) {
        throw invalid_input("PromptBank: at least one prompt required");
    }
    std::unordered_set<std::string> seen;
    for (const auto& p : prompts_) {
        if (p.empty()) {
            throw invalid_input("PromptBank: prompt strings must be non-empty");
        }
        if (!seen.insert(p).second) {
            throw invalid_input("PromptBank: duplicate prompt '" + p + "'");
        }
    }
}

}  // namespace cdp
