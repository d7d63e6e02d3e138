#include "cdp/synth.hpp"

#include <Eigen/QR>

#include <optional>

namespace cdp {

std::string synthetic_caption(Index clip, Index prompt, Index advance) {
    return "clip" + std::to_string(clip) + "-prompt" + std::to_string(prompt) + "-t" +
           std::to_string(advance);
}

namespace {

class SyntheticOracle final : public SimilarityOracle {
public:
    SyntheticOracle(std::vector<Embedding> clip_embs, std::vector<Embedding> caption_embs,
                    Index n_clips, Index n_prompts, Index n_advances)
        : clip_embs_(std::move(clip_embs)),
          caption_embs_(std::move(caption_embs)),
          n_clips_(n_clips),
          n_prompts_(n_prompts),
          n_advances_(n_advances) {}

    float query(Index i, Index j, Index k, Index t) const override {
        const Embedding& video = clip_embs_[static_cast<std::size_t>(i * n_advances_ + t)];
        const Embedding& caption =
            caption_embs_[static_cast<std::size_t>((j * n_prompts_ + k) * n_advances_ + t)];
        return static_cast<float>(cosine(video, caption));
    }

    std::optional<std::string> caption(Index j, Index k, Index t) const override {
        return synthetic_caption(j, k, t);
    }

    Index n_clips() const override { return n_clips_; }
    Index n_prompts() const override { return n_prompts_; }
    Index n_advances() const override { return n_advances_; }

private:
    std::vector<Embedding> clip_embs_;     // [clip * n_advances + t]
    std::vector<Embedding> caption_embs_;  // [(clip * n_prompts + k) * n_advances + t]
    Index n_clips_, n_prompts_, n_advances_;
};

Vecd gaussian_vector(Rng& rng, Index dim) {
    Vecd v(dim);
    for (Index i = 0; i < dim; ++i) v(i) = rng.normal();
    return v;
}

/// Random orthogonal matrix with deterministic column signs.
Matd random_orthogonal(Rng& rng, Index dim) {
    Matd g(dim, dim);
    for (Index c = 0; c < dim; ++c) g.col(c) = gaussian_vector(rng, dim);
    Eigen::HouseholderQR<Matd> qr(g);
    Matd q = qr.householderQ();
    const Matd r = qr.matrixQR();
    for (Index c = 0; c < dim; ++c) {
        if (r(c, c) < 0) q.col(c) = -q.col(c);
    }
    return q;
}

std::optional<PromptCombination> first_positive_combination(const SimilarityTensor& tensor,
                                                            Index clip, Index alpha, Index tau) {
    for (const auto& combo : enumerate_combinations(tensor.n_prompts(), alpha, tau)) {
        if (margin(tensor, clip, combo) > 0.0) {
            return combo;
        }
    }
    return std::nullopt;
}

}  // namespace

Vecf SyntheticInstance::attribute(Index j, Index k, Index t) const {
    const auto idx = (j * bank_.size() + k) * clips_.n_advances() + t;
    return attribute_pool_.col(attribute_ids_.at(static_cast<std::size_t>(idx)));
}

const Embedding& SyntheticInstance::caption_embedding(Index j, Index k, Index t) const {
    const auto idx = (j * bank_.size() + k) * clips_.n_advances() + t;
    return caption_embeddings_.at(static_cast<std::size_t>(idx));
}

std::unique_ptr<SimilarityOracle> SyntheticInstance::oracle() const {
    std::vector<Embedding> clip_embs;
    clip_embs.reserve(static_cast<std::size_t>(clips_.n_clips() * clips_.n_advances()));
    for (Index c = 0; c < clips_.n_clips(); ++c) {
        for (Index t = 0; t < clips_.n_advances(); ++t) {
            clip_embs.push_back(clips_.embedding(c, t));
        }
    }
    return std::make_unique<SyntheticOracle>(std::move(clip_embs), caption_embeddings_,
                                             clips_.n_clips(), bank_.size(), clips_.n_advances());
}

SyntheticInstance synth_generate(const SynthConfig& config) {
    const Index n = config.n_clips;
    const Index p = config.n_prompts;
    const Index ta = config.n_advances;
    if (n < 2) throw invalid_input("synth_generate: n_clips must be >= 2");
    if (p < 1) throw invalid_input("synth_generate: n_prompts must be >= 1");
    if (ta < 1) throw invalid_input("synth_generate: n_advances must be >= 1");
    if (config.dim < 4) throw invalid_input("synth_generate: dim must be >= 4");
    if (config.noise_scale < 0) throw invalid_input("synth_generate: noise_scale must be >= 0");
    if (config.gt_alpha < 1) throw invalid_input("synth_generate: gt_alpha must be >= 1");

    const bool twin_profile = config.profile != SeparabilityProfile::all_separable_at_t0;
    if (config.profile == SeparabilityProfile::requires_advance && ta < 2) {
        throw generation_error(
            "profile requires_advance unachievable: needs n_advances >= 2 so clips can differ "
            "at a later advance");
    }

    // Attribute id layout: shared slot attributes [0, p*ta), per-clip
    // distinctive attributes [p*ta, p*ta + n), twin-pair slot attributes
    // [p*ta + n, 2*p*ta + n). All directions must fit orthogonally next to
    // the base direction.
    const Index grid = p * ta;
    const Index n_dirs = grid + n + (twin_profile ? grid : 0);
    if (config.dim < 1 + n_dirs) {
        throw generation_error(
            "profile unachievable under requested sizes: attribute capacity needs dim >= " +
            std::to_string(1 + n_dirs) + ", got dim=" + std::to_string(config.dim));
    }
    const auto sigma_id = [p](Index k, Index t) { return t * p + k; };
    const auto delta_id = [grid](Index clip) { return grid + clip; };
    const auto pi_id = [grid, n, p](Index k, Index t) { return grid + n + t * p + k; };

    Rng rng(sub_seed(config.seed, "synth"));
    const Matd q = random_orthogonal(rng, config.dim);
    const Vecd base = q.col(0);
    const auto dir = [&q](Index id) { return q.col(1 + id); };

    // Attribute assignment.
    std::vector<Index> attr_ids(static_cast<std::size_t>(n * grid));
    const auto slot = [p, ta](Index j, Index k, Index t) { return (j * p + k) * ta + t; };
    for (Index j = 0; j < n; ++j) {
        for (Index k = 0; k < p; ++k) {
            for (Index t = 0; t < ta; ++t) {
                attr_ids[static_cast<std::size_t>(slot(j, k, t))] = sigma_id(k, t);
            }
        }
        attr_ids[static_cast<std::size_t>(slot(j, j % p, 0))] = delta_id(j);
    }
    if (twin_profile) {
        for (Index m = 0; m < 2; ++m) {
            for (Index k = 0; k < p; ++k) {
                for (Index t = 0; t < ta; ++t) {
                    attr_ids[static_cast<std::size_t>(slot(m, k, t))] = pi_id(k, t);
                }
            }
            if (config.profile == SeparabilityProfile::requires_advance) {
                attr_ids[static_cast<std::size_t>(slot(m, m % p, 1))] = delta_id(m);
            }
        }
    }

    // Clip embeddings: base + weighted attribute directions (+ noise).
    std::vector<Embedding> clip_embs;
    clip_embs.reserve(static_cast<std::size_t>(n * ta));
    for (Index j = 0; j < n; ++j) {
        for (Index t = 0; t < ta; ++t) {
            Vecd v = base;
            for (Index k = 0; k < p; ++k) {
                v += config.attr_weight * dir(attr_ids[static_cast<std::size_t>(slot(j, k, t))]);
            }
            if (config.noise_scale > 0) {
                v += config.noise_scale * gaussian_vector(rng, config.dim);
            }
            clip_embs.push_back(Embedding::normalized(v.cast<float>()));
        }
    }

    // Caption embeddings: the attribute direction the prompt reveals (+ noise).
    std::vector<Embedding> caption_embs;
    caption_embs.reserve(static_cast<std::size_t>(n * grid));
    for (Index j = 0; j < n; ++j) {
        for (Index k = 0; k < p; ++k) {
            for (Index t = 0; t < ta; ++t) {
                Vecd v = dir(attr_ids[static_cast<std::size_t>(slot(j, k, t))]);
                if (config.noise_scale > 0) {
                    v += config.noise_scale * gaussian_vector(rng, config.dim);
                }
                caption_embs.push_back(Embedding::normalized(v.cast<float>()));
            }
        }
    }

    // Twin duplication is bitwise so that duplicated clips stay exactly
    // symmetric in the tensor regardless of noise.
    if (twin_profile) {
        const Index dup_advances = config.profile == SeparabilityProfile::contains_inseparable
                                       ? ta
                                       : Index{1};  // requires_advance: duplicate t = 0 only
        for (Index t = 0; t < dup_advances; ++t) {
            clip_embs[static_cast<std::size_t>(1 * ta + t)] =
                clip_embs[static_cast<std::size_t>(0 * ta + t)];
            for (Index k = 0; k < p; ++k) {
                caption_embs[static_cast<std::size_t>(slot(1, k, t))] =
                    caption_embs[static_cast<std::size_t>(slot(0, k, t))];
            }
        }
    }

    std::vector<std::string> clip_ids;
    clip_ids.reserve(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) clip_ids.push_back("clip" + std::to_string(j));
    std::vector<std::string> prompts;
    prompts.reserve(static_cast<std::size_t>(p));
    for (Index k = 0; k < p; ++k) prompts.push_back("prompt" + std::to_string(k));

    ClipSet clips(std::move(clip_ids), ta, clip_embs);
    PromptBank bank(std::move(prompts));
    SyntheticOracle oracle_impl(clip_embs, caption_embs, n, p, ta);
    SimilarityTensor tensor = build_similarity_tensor(clips, bank, oracle_impl);

    SyntheticInstance instance(std::move(clips), std::move(bank), std::move(tensor));
    instance.caption_embeddings_ = std::move(caption_embs);
    instance.attribute_ids_ = std::move(attr_ids);
    instance.attribute_pool_ = q.rightCols(config.dim - 1).cast<float>();
    instance.config_ = config;

    // Ground truth: first (size, then lexicographic) combination with a
    // strictly positive margin, within (gt_alpha, full tau).
    const Index tau = ta - 1;
    instance.ground_truth_.resize(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
        auto combo = first_positive_combination(instance.tensor_, j, config.gt_alpha, tau);
        auto& gt = instance.ground_truth_[static_cast<std::size_t>(j)];
        gt.separable = combo.has_value();
        if (combo) gt.combination = std::move(*combo);
    }

    // Verify the declared profile actually holds on the exact tensor.
    const auto separable_at = [&](Index j, Index budget) {
        return first_positive_combination(instance.tensor_, j, config.gt_alpha, budget).has_value();
    };
    switch (config.profile) {
        case SeparabilityProfile::all_separable_at_t0:
            for (Index j = 0; j < n; ++j) {
                if (!separable_at(j, 0)) {
                    throw generation_error("profile violated: clip " + std::to_string(j) +
                                           " has no positive-margin combination at t=0 "
                                           "(noise_scale may be too large)");
                }
            }
            break;
        case SeparabilityProfile::requires_advance:
            for (Index m = 0; m < 2; ++m) {
                if (separable_at(m, 0)) {
                    throw generation_error("profile violated: twin clip " + std::to_string(m) +
                                           " is already separable at t=0");
                }
                if (!separable_at(m, tau)) {
                    throw generation_error("profile violated: twin clip " + std::to_string(m) +
                                           " gains no positive margin within tau");
                }
            }
            for (Index j = 2; j < n; ++j) {
                if (!separable_at(j, 0)) {
                    throw generation_error("profile violated: clip " + std::to_string(j) +
                                           " has no positive-margin combination at t=0");
                }
            }
            break;
        case SeparabilityProfile::contains_inseparable:
            for (Index m = 0; m < 2; ++m) {
                if (instance.ground_truth_[static_cast<std::size_t>(m)].separable) {
                    throw generation_error("profile violated: twin clip " + std::to_string(m) +
                                           " is unexpectedly separable");
                }
            }
            for (Index j = 2; j < n; ++j) {
                if (!separable_at(j, 0)) {
                    throw generation_error("profile violated: clip " + std::to_string(j) +
                                           " has no positive-margin combination at t=0");
                }
            }
            break;
    }
    // Ground-truth combinations must certify their clips through the search
    // module's own margin.
    for (Index j = 0; j < n; ++j) {
        const auto& gt = instance.ground_truth_[static_cast<std::size_t>(j)];
        if (gt.separable && !(margin(instance.tensor_, j, gt.combination) > 0.0)) {
            throw generation_error("internal: ground-truth combination for clip " +
                                   std::to_string(j) + " does not certify a positive margin");
        }
    }
    return instance;
}

}  // namespace cdp
