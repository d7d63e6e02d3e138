#pragma once

#include "cdp/embedding.hpp"
#include "cdp/tensor.hpp"
#include "cdp/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cdp {

/// Architecture and init settings of the similarity predictor.
struct SurrogateConfig {
    Index embed_dim = 64;   ///< dimension of the clip embeddings fed in
    Index model_dim = 128;  ///< internal token width
    Index n_prompts = 10;
    Index n_layers = 2;
    Index n_heads = 4;
    Index ff_dim = 1024;
    std::uint64_t seed = 1;
};

/// One regression target: the similarity of video clip i to the caption
/// generated from clip j with prompt k.
struct SimilaritySample {
    Embedding embed_i;
    Embedding embed_j;
    Index prompt = 0;
    float target = 0.0f;
};

/// Transformer-encoder similarity predictor. The input sequence is
/// [clip-i token, clip-j token, prompt token k], each token summed with its
/// role encoding; the prediction is a linear read-out of the prompt token's
/// output position. Parameters are double precision internally and snapped
/// to binary32-representable values after init and training so checkpoints
/// round-trip exactly.
class SurrogateModel {
public:
    static SurrogateModel init(const SurrogateConfig& config);

    const SurrogateConfig& config() const { return cfg_; }

    Index parameter_count() const;
    double flat_parameter(Index coord) const;
    void set_flat_parameter(Index coord, double value);
    void snap_to_f32();

    const std::vector<Matd>& parameters() const { return params_; }
    std::vector<Matd>& parameters() { return params_; }

    /// Predicted similarity for one (clip i, clip j, prompt k) triple.
    double forward(const Embedding& embed_i, const Embedding& embed_j, Index k) const;

    /// Batched prediction; Ei/Ej are row-per-sample matrices.
    Vecd forward_batch(const Matd& embeds_i, const Matd& embeds_j,
                       const std::vector<Index>& prompts) const;

    /// Mean squared error of the batch plus parameter gradients (written to
    /// `grads`, which is resized/zeroed here).
    double forward_backward(const Matd& embeds_i, const Matd& embeds_j,
                            const std::vector<Index>& prompts, const Vecd& targets,
                            std::vector<Matd>& grads) const;

    /// Zero-valued gradient buffers shaped like the parameters.
    std::vector<Matd> make_grad_buffers() const;

private:
    SurrogateModel() = default;
    void validate_inputs(const Matd& embeds_i, const Matd& embeds_j,
                         const std::vector<Index>& prompts) const;

    SurrogateConfig cfg_;
    std::vector<Matd> params_;
};

SurrogateModel surrogate_init(Index embed_dim, Index model_dim, Index n_prompts,
                              std::uint64_t seed);

struct TrainConfig {
    Index epochs = 25;
    double learning_rate = 1e-4;
    std::vector<Index> decay_epochs = {15, 20};  ///< 1-based epochs where lr *= decay_factor
    double decay_factor = 0.1;
    Index batch_size = 64;
    std::uint64_t seed = 7;
    bool shuffle = true;
};

struct TrainResult {
    SurrogateModel model;
    std::vector<double> loss_trace;  ///< per-epoch mean squared error
    std::vector<double> lr_trace;    ///< learning rate in effect per epoch
};

/// Adam training, deterministic given (model seed, cfg.seed, sample order).
TrainResult surrogate_train(const SurrogateModel& model,
                            const std::vector<SimilaritySample>& samples,
                            const TrainConfig& cfg);

/// Fills every (i, j, k, t) cell by running the predictor on the clip
/// embeddings at the matching advance. No caption or oracle calls occur.
SimilarityTensor surrogate_predict_tensor(const SurrogateModel& model, const ClipSet& clips,
                                          const PromptBank& bank);

/// Exhaustive training set mirroring the caption-then-embed pipeline:
/// one sample per tensor cell.
std::vector<SimilaritySample> samples_from_tensor(const SimilarityTensor& tensor,
                                                  const ClipSet& clips);

/// Full analytic gradient of the squared error of one sample, flattened in
/// parameter order.
Vecd analytic_gradient(const SurrogateModel& model, const SimilaritySample& sample);

double squared_error(const SurrogateModel& model, const SimilaritySample& sample);

struct GradientCheckResult {
    double max_rel_error = 0.0;
    std::vector<Index> coords;
};

/// Central-difference check of the analytic gradient on a random subset of
/// parameter coordinates. Relative error uses max(|analytic|, |numeric|,
/// 1e-8) as denominator.
GradientCheckResult gradient_check(const SurrogateModel& model, const SimilaritySample& sample,
                                   double epsilon = 1e-4, Index n_coords = 120,
                                   std::uint64_t seed = 0);

/// Numeric central-difference derivative for explicit coordinates.
Vecd numeric_gradient(const SurrogateModel& model, const SimilaritySample& sample,
                      const std::vector<Index>& coords, double epsilon);

/// CDPN checkpoint: magic 'CDPN', u8 version=1, u32 hyperparameters
/// (embed_dim, model_dim, n_prompts, n_layers, n_heads, ff_dim), then every
/// parameter matrix row-major as binary32 little-endian in declaration order.
void save_model(const std::string& path, const SurrogateModel& model);
SurrogateModel load_model(const std::string& path);

}  // namespace cdp
