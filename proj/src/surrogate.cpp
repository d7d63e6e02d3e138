#include "cdp/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace cdp {

namespace {

// Parameter order (also the CDPN serialization order):
//   w_in, b_in, prompt_tokens, role_encodings,
//   per layer: wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b,
//              w_ff1, b_ff1, w_ff2, b_ff2, ln2_g, ln2_b,
//   w_out, b_out.
enum BaseParam : Index { kWIn = 0, kBIn, kPromptTokens, kRoleEnc, kLayerBase };
constexpr Index kPerLayer = 16;
enum LayerParam : Index {
    kWq = 0, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
    kLn1G, kLn1B, kW1, kB1, kW2, kB2, kLn2G, kLn2B,
};

Index layer_param(Index layer, Index which) { return kLayerBase + layer * kPerLayer + which; }
Index w_out_index(Index n_layers) { return kLayerBase + n_layers * kPerLayer; }

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
    return cdf + x * pdf;
}

/// Row-wise layer normalization; writes normalized rows and per-row inverse
/// stddev for the backward pass.
void layer_norm_forward(const Matd& x, const Matd& gamma, const Matd& beta, Matd& xhat, Vecd& invstd,
                        Matd& out) {
    const Index rows = x.rows();
    const Index cols = x.cols();
    xhat.resize(rows, cols);
    out.resize(rows, cols);
    invstd.resize(rows);
    for (Index r = 0; r < rows; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + kLnEps);
        invstd(r) = is;
        xhat.row(r) = (x.row(r).array() - mu) * is;
        out.row(r) = xhat.row(r).array() * gamma.col(0).transpose().array() +
                     beta.col(0).transpose().array();
    }
}

/// dx for y = gamma .* xhat + beta given dy; accumulates dgamma/dbeta.
void layer_norm_backward(const Matd& dy, const Matd& xhat, const Vecd& invstd, const Matd& gamma,
                         Matd& dgamma, Matd& dbeta, Matd& dx) {
    const Index rows = dy.rows();
    dx.resize(rows, dy.cols());
    for (Index r = 0; r < rows; ++r) {
        const Eigen::ArrayXd dyr = dy.row(r).transpose().array();
        const Eigen::ArrayXd xh = xhat.row(r).transpose().array();
        dgamma.col(0).array() += dyr * xh;
        dbeta.col(0).array() += dyr;
        const Eigen::ArrayXd dxh = dyr * gamma.col(0).array();
        const double mean_dxh = dxh.mean();
        const double mean_dxh_xh = (dxh * xh).mean();
        dx.row(r) =
            ((dxh - mean_dxh - xh * mean_dxh_xh) * invstd(r)).matrix().transpose();
    }
}

struct LayerCache {
    Matd x_in;        // layer input
    Matd q, k, v;     // projected tokens
    Matd attn;        // per sample/head 3x3 softmax blocks: (3B x 3*heads)
    Matd concat;      // concatenated head outputs, pre-W_o
    Matd r1;          // residual input to LN1
    Matd xhat1;       // LN1 normalized rows
    Vecd invstd1;
    Matd x1;          // LN1 output (input to FF and residual 2)
    Matd h_pre;       // FF pre-activation
    Matd h;           // FF activation
    Matd r2;          // residual input to LN2
    Matd xhat2;
    Vecd invstd2;
    Matd x2;          // layer output
};

struct ForwardCache {
    Matd x0;  // token matrix fed to layer 0
    std::vector<LayerCache> layers;
    Vecd predictions;
};

}  // namespace

SurrogateModel surrogate_init(Index embed_dim, Index model_dim, Index n_prompts,
                              std::uint64_t seed) {
    SurrogateConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.model_dim = model_dim;
    cfg.n_prompts = n_prompts;
    cfg.seed = seed;
    return SurrogateModel::init(cfg);
}

SurrogateModel SurrogateModel::init(const SurrogateConfig& config) {
    if (config.embed_dim < 1 || config.model_dim < 1 || config.n_prompts < 1 ||
        config.n_layers < 1 || config.n_heads < 1 || config.ff_dim < 1) {
        throw invalid_input("SurrogateConfig: all dimensions must be >= 1");
    }
    if (config.model_dim % config.n_heads != 0) {
        throw invalid_input("SurrogateConfig: model_dim must be divisible by n_heads");
    }

    SurrogateModel model;
    model.cfg_ = config;
    auto& p = model.params_;

    Rng rng(sub_seed(config.seed, "surrogate-init"));
    const auto uniform_fan_in = [&rng](Index rows, Index cols, Index fan_in) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Matd m(rows, cols);
        for (Index r = 0; r < rows; ++r) {
            for (Index c = 0; c < cols; ++c) {
                m(r, c) = rng.uniform(-scale, scale);
            }
        }
        return m;
    };
    const Index md = config.model_dim;
    const Index ff = config.ff_dim;

    p.push_back(uniform_fan_in(md, config.embed_dim, config.embed_dim));  // w_in
    p.push_back(Matd::Zero(md, 1));                                       // b_in
    p.push_back(uniform_fan_in(config.n_prompts, md, md));                // prompt tokens
    p.push_back(uniform_fan_in(3, md, md));                               // role encodings
    for (Index l = 0; l < config.n_layers; ++l) {
        p.push_back(uniform_fan_in(md, md, md));  // wq
        p.push_back(Matd::Zero(md, 1));
        p.push_back(uniform_fan_in(md, md, md));  // wk
        p.push_back(Matd::Zero(md, 1));
        p.push_back(uniform_fan_in(md, md, md));  // wv
        p.push_back(Matd::Zero(md, 1));
        p.push_back(uniform_fan_in(md, md, md));  // wo
        p.push_back(Matd::Zero(md, 1));
        p.push_back(Matd::Ones(md, 1));           // ln1 gamma
        p.push_back(Matd::Zero(md, 1));           // ln1 beta
        p.push_back(uniform_fan_in(ff, md, md));  // w_ff1
        p.push_back(Matd::Zero(ff, 1));
        p.push_back(uniform_fan_in(md, ff, ff));  // w_ff2
        p.push_back(Matd::Zero(md, 1));
        p.push_back(Matd::Ones(md, 1));           // ln2 gamma
        p.push_back(Matd::Zero(md, 1));           // ln2 beta
    }
    p.push_back(uniform_fan_in(1, md, md));  // w_out
    p.push_back(Matd::Zero(1, 1));           // b_out

    model.snap_to_f32();
    return model;
}

Index SurrogateModel::parameter_count() const {
    Index total = 0;
    for (const auto& m : params_) total += m.size();
    return total;
}

double SurrogateModel::flat_parameter(Index coord) const {
    for (const auto& m : params_) {
        if (coord < m.size()) {
            return m(coord / m.cols(), coord % m.cols());
        }
        coord -= m.size();
    }
    throw invalid_input("flat_parameter: coordinate out of range");
}

void SurrogateModel::set_flat_parameter(Index coord, double value) {
    for (auto& m : params_) {
        if (coord < m.size()) {
            m(coord / m.cols(), coord % m.cols()) = value;
            return;
        }
        coord -= m.size();
    }
    throw invalid_input("set_flat_parameter: coordinate out of range");
}

void SurrogateModel::snap_to_f32() {
    for (auto& m : params_) {
        m = m.cast<float>().cast<double>();
    }
}

std::vector<Matd> SurrogateModel::make_grad_buffers() const {
    std::vector<Matd> grads;
    grads.reserve(params_.size());
    for (const auto& m : params_) grads.push_back(Matd::Zero(m.rows(), m.cols()));
    return grads;
}

void SurrogateModel::validate_inputs(const Matd& embeds_i, const Matd& embeds_j,
                                     const std::vector<Index>& prompts) const {
    const Index batch = embeds_i.rows();
    if (embeds_j.rows() != batch || static_cast<Index>(prompts.size()) != batch || batch < 1) {
        throw invalid_input("surrogate: batch sizes of embeds_i/embeds_j/prompts must match");
    }
    if (embeds_i.cols() != cfg_.embed_dim || embeds_j.cols() != cfg_.embed_dim) {
        throw invalid_input("surrogate: embedding dim " + std::to_string(embeds_i.cols()) +
                            " does not match model embed_dim " + std::to_string(cfg_.embed_dim));
    }
    for (Index k : prompts) {
        if (k < 0 || k >= cfg_.n_prompts) {
            throw invalid_input("surrogate: prompt index " + std::to_string(k) +
                                " out of range [0, " + std::to_string(cfg_.n_prompts) + ")");
        }
    }
}

namespace {

void run_forward(const SurrogateConfig& cfg, const std::vector<Matd>& params, const Matd& embeds_i,
                 const Matd& embeds_j, const std::vector<Index>& prompts, ForwardCache& cache) {
    const Index batch = embeds_i.rows();
    const Index md = cfg.model_dim;
    const Index heads = cfg.n_heads;
    const Index dh = md / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const Index rows = 3 * batch;

    const Matd& w_in = params[kWIn];
    const Matd& b_in = params[kBIn];
    const Matd& tokens = params[kPromptTokens];
    const Matd& roles = params[kRoleEnc];

    // Token sequence per sample: [proj(e_i) + role0, proj(e_j) + role1,
    // prompt_token_k + role2].
    const Matd proj_i = embeds_i * w_in.transpose();
    const Matd proj_j = embeds_j * w_in.transpose();
    cache.x0.resize(rows, md);
    for (Index s = 0; s < batch; ++s) {
        cache.x0.row(3 * s + 0) = proj_i.row(s) + b_in.col(0).transpose() + roles.row(0);
        cache.x0.row(3 * s + 1) = proj_j.row(s) + b_in.col(0).transpose() + roles.row(1);
        cache.x0.row(3 * s + 2) = tokens.row(prompts[static_cast<std::size_t>(s)]) + roles.row(2);
    }

    cache.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    const Matd* x = &cache.x0;
    for (Index l = 0; l < cfg.n_layers; ++l) {
        LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
        lc.x_in = *x;
        const Matd& wq = params[layer_param(l, kWq)];
        const Matd& wk = params[layer_param(l, kWk)];
        const Matd& wv = params[layer_param(l, kWv)];
        const Matd& wo = params[layer_param(l, kWo)];

        lc.q = lc.x_in * wq.transpose();
        lc.q.rowwise() += params[layer_param(l, kBq)].col(0).transpose();
        lc.k = lc.x_in * wk.transpose();
        lc.k.rowwise() += params[layer_param(l, kBk)].col(0).transpose();
        lc.v = lc.x_in * wv.transpose();
        lc.v.rowwise() += params[layer_param(l, kBv)].col(0).transpose();

        lc.attn.resize(rows, 3 * heads);
        lc.concat.resize(rows, md);
        for (Index s = 0; s < batch; ++s) {
            for (Index h = 0; h < heads; ++h) {
                const auto qh = lc.q.block(3 * s, h * dh, 3, dh);
                const auto kh = lc.k.block(3 * s, h * dh, 3, dh);
                const auto vh = lc.v.block(3 * s, h * dh, 3, dh);
                Eigen::Matrix3d scores = (qh * kh.transpose()) * inv_sqrt_dh;
                for (Index r = 0; r < 3; ++r) {
                    const double mx = scores.row(r).maxCoeff();
                    Eigen::RowVector3d e = (scores.row(r).array() - mx).exp();
                    scores.row(r) = e / e.sum();
                }
                lc.attn.block(3 * s, 3 * h, 3, 3) = scores;
                lc.concat.block(3 * s, h * dh, 3, dh) = scores * vh;
            }
        }

        Matd attn_out = lc.concat * wo.transpose();
        attn_out.rowwise() += params[layer_param(l, kBo)].col(0).transpose();
        lc.r1 = lc.x_in + attn_out;
        layer_norm_forward(lc.r1, params[layer_param(l, kLn1G)], params[layer_param(l, kLn1B)],
                           lc.xhat1, lc.invstd1, lc.x1);

        lc.h_pre = lc.x1 * params[layer_param(l, kW1)].transpose();
        lc.h_pre.rowwise() += params[layer_param(l, kB1)].col(0).transpose();
        lc.h = lc.h_pre.unaryExpr([](double v) { return gelu(v); });
        Matd ff_out = lc.h * params[layer_param(l, kW2)].transpose();
        ff_out.rowwise() += params[layer_param(l, kB2)].col(0).transpose();
        lc.r2 = lc.x1 + ff_out;
        layer_norm_forward(lc.r2, params[layer_param(l, kLn2G)], params[layer_param(l, kLn2B)],
                           lc.xhat2, lc.invstd2, lc.x2);
        x = &lc.x2;
    }

    const Matd& w_out = params[w_out_index(cfg.n_layers)];
    const double b_out = params[w_out_index(cfg.n_layers) + 1](0, 0);
    cache.predictions.resize(batch);
    for (Index s = 0; s < batch; ++s) {
        cache.predictions(s) = w_out.row(0).dot(x->row(3 * s + 2)) + b_out;
    }
}

/// Backward pass through the cached forward; `dpred` holds dL/dprediction
/// per sample. Parameter gradients are accumulated into `grads`.
void run_backward(const SurrogateConfig& cfg, const std::vector<Matd>& params,
                  const Matd& embeds_i, const Matd& embeds_j, const std::vector<Index>& prompts,
                  const ForwardCache& cache, const Vecd& dpred, std::vector<Matd>& grads) {
    const Index batch = embeds_i.rows();
    const Index md = cfg.model_dim;
    const Index heads = cfg.n_heads;
    const Index dh = md / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const Index rows = 3 * batch;

    const Index out_idx = w_out_index(cfg.n_layers);
    const Matd& w_out = params[out_idx];

    const Matd& x_last = cfg.n_layers > 0 ? cache.layers.back().x2 : cache.x0;
    Matd dx = Matd::Zero(rows, md);
    for (Index s = 0; s < batch; ++s) {
        grads[out_idx].row(0) += dpred(s) * x_last.row(3 * s + 2);
        grads[out_idx + 1](0, 0) += dpred(s);
        dx.row(3 * s + 2) += dpred(s) * w_out.row(0);
    }

    Matd dxhat, dr, dh_act, dh_pre, dx1, dconcat, dq, dk, dv;
    for (Index l = cfg.n_layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];

        // LN2 then feed-forward.
        layer_norm_backward(dx, lc.xhat2, lc.invstd2, params[layer_param(l, kLn2G)],
                            grads[layer_param(l, kLn2G)], grads[layer_param(l, kLn2B)], dr);
        // dr is d(r2) = d(x1 + ff_out)
        dh_act = dr * params[layer_param(l, kW2)];
        grads[layer_param(l, kW2)] += dr.transpose() * lc.h;
        grads[layer_param(l, kB2)].col(0) += dr.colwise().sum().transpose();
        dh_pre = dh_act.cwiseProduct(lc.h_pre.unaryExpr([](double v) { return gelu_grad(v); }));
        grads[layer_param(l, kW1)] += dh_pre.transpose() * lc.x1;
        grads[layer_param(l, kB1)].col(0) += dh_pre.colwise().sum().transpose();
        dx1 = dr + dh_pre * params[layer_param(l, kW1)];

        // LN1 then attention.
        layer_norm_backward(dx1, lc.xhat1, lc.invstd1, params[layer_param(l, kLn1G)],
                            grads[layer_param(l, kLn1G)], grads[layer_param(l, kLn1B)], dr);
        // dr is d(r1) = d(x_in + attn_out)
        dconcat = dr * params[layer_param(l, kWo)];
        grads[layer_param(l, kWo)] += dr.transpose() * lc.concat;
        grads[layer_param(l, kBo)].col(0) += dr.colwise().sum().transpose();

        dq = Matd::Zero(rows, md);
        dk = Matd::Zero(rows, md);
        dv = Matd::Zero(rows, md);
        for (Index s = 0; s < batch; ++s) {
            for (Index h = 0; h < heads; ++h) {
                const auto a = lc.attn.block(3 * s, 3 * h, 3, 3);
                const auto vh = lc.v.block(3 * s, h * dh, 3, dh);
                const auto qh = lc.q.block(3 * s, h * dh, 3, dh);
                const auto kh = lc.k.block(3 * s, h * dh, 3, dh);
                const auto doh = dconcat.block(3 * s, h * dh, 3, dh);

                const Eigen::Matrix3d da = doh * vh.transpose();
                dv.block(3 * s, h * dh, 3, dh) += a.transpose() * doh;

                Eigen::Matrix3d ds;
                for (Index r = 0; r < 3; ++r) {
                    const double dot = da.row(r).dot(a.row(r));
                    ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
                }
                dq.block(3 * s, h * dh, 3, dh) += (ds * kh) * inv_sqrt_dh;
                dk.block(3 * s, h * dh, 3, dh) += (ds.transpose() * qh) * inv_sqrt_dh;
            }
        }

        grads[layer_param(l, kWq)] += dq.transpose() * lc.x_in;
        grads[layer_param(l, kBq)].col(0) += dq.colwise().sum().transpose();
        grads[layer_param(l, kWk)] += dk.transpose() * lc.x_in;
        grads[layer_param(l, kBk)].col(0) += dk.colwise().sum().transpose();
        grads[layer_param(l, kWv)] += dv.transpose() * lc.x_in;
        grads[layer_param(l, kBv)].col(0) += dv.colwise().sum().transpose();

        dx = dr + dq * params[layer_param(l, kWq)] + dk * params[layer_param(l, kWk)] +
             dv * params[layer_param(l, kWv)];
    }

    // Token construction backward.
    Matd d_i(batch, md), d_j(batch, md);
    for (Index s = 0; s < batch; ++s) {
        d_i.row(s) = dx.row(3 * s + 0);
        d_j.row(s) = dx.row(3 * s + 1);
        grads[kPromptTokens].row(prompts[static_cast<std::size_t>(s)]) += dx.row(3 * s + 2);
        grads[kRoleEnc].row(0) += dx.row(3 * s + 0);
        grads[kRoleEnc].row(1) += dx.row(3 * s + 1);
        grads[kRoleEnc].row(2) += dx.row(3 * s + 2);
    }
    grads[kWIn] += d_i.transpose() * embeds_i + d_j.transpose() * embeds_j;
    grads[kBIn].col(0) += (d_i.colwise().sum() + d_j.colwise().sum()).transpose();
}

Matd embedding_rows(const Embedding& e) {
    Matd m(1, e.dim());
    m.row(0) = e.values().cast<double>().transpose();
    return m;
}

}  // namespace

double SurrogateModel::forward(const Embedding& embed_i, const Embedding& embed_j, Index k) const {
    return forward_batch(embedding_rows(embed_i), embedding_rows(embed_j), {k})(0);
}

Vecd SurrogateModel::forward_batch(const Matd& embeds_i, const Matd& embeds_j,
                                   const std::vector<Index>& prompts) const {
    validate_inputs(embeds_i, embeds_j, prompts);
    ForwardCache cache;
    run_forward(cfg_, params_, embeds_i, embeds_j, prompts, cache);
    return cache.predictions;
}

double SurrogateModel::forward_backward(const Matd& embeds_i, const Matd& embeds_j,
                                        const std::vector<Index>& prompts, const Vecd& targets,
                                        std::vector<Matd>& grads) const {
    validate_inputs(embeds_i, embeds_j, prompts);
    const Index batch = embeds_i.rows();
    if (targets.size() != batch) {
        throw invalid_input("surrogate: targets size must match batch");
    }
    if (grads.size() != params_.size()) {
        grads = make_grad_buffers();
    } else {
        for (auto& g : grads) g.setZero();
    }
    ForwardCache cache;
    run_forward(cfg_, params_, embeds_i, embeds_j, prompts, cache);
    const Vecd residual = cache.predictions - targets;
    const double loss = residual.squaredNorm() / static_cast<double>(batch);
    const Vecd dpred = residual * (2.0 / static_cast<double>(batch));
    run_backward(cfg_, params_, embeds_i, embeds_j, prompts, cache, dpred, grads);
    return loss;
}

TrainResult surrogate_train(const SurrogateModel& model,
                            const std::vector<SimilaritySample>& samples, const TrainConfig& cfg) {
    if (samples.empty()) {
        throw invalid_input("surrogate_train: at least one sample required");
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1) {
        throw invalid_input("surrogate_train: epochs and batch_size must be >= 1");
    }
    for (Index e : cfg.decay_epochs) {
        // decay epochs are 1-based and must precede the end of training
        if (e < 1 || e >= cfg.epochs) {
            throw invalid_input("surrogate_train: decay epochs must lie in [1, epochs)");
        }
    }
    const Index dim = model.config().embed_dim;
    for (const auto& s : samples) {
        if (s.embed_i.dim() != dim || s.embed_j.dim() != dim) {
            throw invalid_input("surrogate_train: sample embedding dim mismatch");
        }
        if (s.prompt < 0 || s.prompt >= model.config().n_prompts) {
            throw invalid_input("surrogate_train: sample prompt index out of range");
        }
        if (!(s.target >= -1.0f && s.target <= 1.0f)) {
            throw invalid_input("surrogate_train: sample target outside [-1, 1]");
        }
    }

    TrainResult result{model, {}, {}};
    auto& params = result.model.parameters();

    std::vector<Matd> grads = result.model.make_grad_buffers();
    std::vector<Matd> adam_m = result.model.make_grad_buffers();
    std::vector<Matd> adam_v = result.model.make_grad_buffers();
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
    std::int64_t step = 0;

    Rng batch_rng(sub_seed(cfg.seed, "batch"));
    const Index n = static_cast<Index>(samples.size());
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    double lr = cfg.learning_rate;
    Matd ei, ej;
    Vecd targets;
    std::vector<Index> prompts;

    for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (std::find(cfg.decay_epochs.begin(), cfg.decay_epochs.end(), epoch) !=
            cfg.decay_epochs.end()) {
            lr *= cfg.decay_factor;
        }
        if (cfg.shuffle) {
            batch_rng.shuffle(order);
        }
        double epoch_sse = 0.0;
        Index batch_index = 0;
        for (Index begin = 0; begin < n; begin += cfg.batch_size, ++batch_index) {
            const Index size = std::min(cfg.batch_size, n - begin);
            ei.resize(size, dim);
            ej.resize(size, dim);
            targets.resize(size);
            prompts.assign(static_cast<std::size_t>(size), 0);
            for (Index b = 0; b < size; ++b) {
                const auto& s = samples[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + b)])];
                ei.row(b) = s.embed_i.values().cast<double>().transpose();
                ej.row(b) = s.embed_j.values().cast<double>().transpose();
                targets(b) = static_cast<double>(s.target);
                prompts[static_cast<std::size_t>(b)] = s.prompt;
            }
            const double batch_mse =
                result.model.forward_backward(ei, ej, prompts, targets, grads);
            if (!std::isfinite(batch_mse)) {
                throw train_error("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                  std::to_string(batch_index));
            }
            epoch_sse += batch_mse * static_cast<double>(size);

            ++step;
            const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                adam_m[pi] = kBeta1 * adam_m[pi] + (1.0 - kBeta1) * grads[pi];
                adam_v[pi].array() =
                    kBeta2 * adam_v[pi].array() + (1.0 - kBeta2) * grads[pi].array().square();
                params[pi].array() -= lr * (adam_m[pi].array() / bc1) /
                                      ((adam_v[pi].array() / bc2).sqrt() + kAdamEps);
            }
        }
        result.loss_trace.push_back(epoch_sse / static_cast<double>(n));
        result.lr_trace.push_back(lr);
    }
    result.model.snap_to_f32();
    return result;
}

SimilarityTensor surrogate_predict_tensor(const SurrogateModel& model, const ClipSet& clips,
                                          const PromptBank& bank) {
    if (bank.size() != model.config().n_prompts) {
        throw invalid_input("surrogate_predict_tensor: bank size does not match model n_prompts");
    }
    if (clips.dim() != model.config().embed_dim) {
        throw invalid_input("surrogate_predict_tensor: clip embedding dim does not match model");
    }
    const Index n = clips.n_clips();
    const Index p = bank.size();
    const Index ta = clips.n_advances();
    SimilarityTensor tensor(n, p, ta, Provenance::surrogate);

    constexpr Index kChunk = 64;
    Matd ei(kChunk, clips.dim()), ej(kChunk, clips.dim());
    std::vector<Index> prompts;
    std::vector<Index> cell_offsets;
    Index filled = 0;
    const auto flush = [&]() {
        if (filled == 0) return;
        const Vecd pred = model.forward_batch(ei.topRows(filled), ej.topRows(filled), prompts);
        for (Index b = 0; b < filled; ++b) {
            tensor.values()[static_cast<std::size_t>(cell_offsets[static_cast<std::size_t>(b)])] =
                static_cast<float>(pred(b));
        }
        filled = 0;
        prompts.clear();
        cell_offsets.clear();
    };
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            for (Index k = 0; k < p; ++k) {
                for (Index t = 0; t < ta; ++t) {
                    ei.row(filled) = clips.embedding(i, t).values().cast<double>().transpose();
                    ej.row(filled) = clips.embedding(j, t).values().cast<double>().transpose();
                    prompts.push_back(k);
                    cell_offsets.push_back(tensor.offset(i, j, k, t));
                    if (++filled == kChunk) flush();
                }
            }
        }
    }
    flush();
    return tensor;
}

std::vector<SimilaritySample> samples_from_tensor(const SimilarityTensor& tensor,
                                                  const ClipSet& clips) {
    if (tensor.n_clips() != clips.n_clips() || tensor.n_advances() != clips.n_advances()) {
        throw invalid_input("samples_from_tensor: tensor and clip set shapes disagree");
    }
    std::vector<SimilaritySample> samples;
    samples.reserve(static_cast<std::size_t>(tensor.size()));
    for (Index i = 0; i < tensor.n_clips(); ++i) {
        for (Index j = 0; j < tensor.n_clips(); ++j) {
            for (Index k = 0; k < tensor.n_prompts(); ++k) {
                for (Index t = 0; t < tensor.n_advances(); ++t) {
                    samples.push_back(SimilaritySample{clips.embedding(i, t),
                                                       clips.embedding(j, t), k,
                                                       tensor(i, j, k, t)});
                }
            }
        }
    }
    return samples;
}

double squared_error(const SurrogateModel& model, const SimilaritySample& sample) {
    const double pred = model.forward(sample.embed_i, sample.embed_j, sample.prompt);
    const double r = pred - static_cast<double>(sample.target);
    return r * r;
}

Vecd analytic_gradient(const SurrogateModel& model, const SimilaritySample& sample) {
    std::vector<Matd> grads = model.make_grad_buffers();
    Vecd targets(1);
    targets(0) = static_cast<double>(sample.target);
    model.forward_backward(embedding_rows(sample.embed_i), embedding_rows(sample.embed_j),
                           {sample.prompt}, targets, grads);
    Vecd flat(model.parameter_count());
    Index pos = 0;
    for (const auto& g : grads) {
        for (Index r = 0; r < g.rows(); ++r) {
            for (Index c = 0; c < g.cols(); ++c) {
                flat(pos++) = g(r, c);
            }
        }
    }
    return flat;
}

Vecd numeric_gradient(const SurrogateModel& model, const SimilaritySample& sample,
                      const std::vector<Index>& coords, double epsilon) {
    SurrogateModel probe = model;
    Vecd out(static_cast<Index>(coords.size()));
    for (std::size_t c = 0; c < coords.size(); ++c) {
        const Index coord = coords[c];
        const double original = probe.flat_parameter(coord);
        probe.set_flat_parameter(coord, original + epsilon);
        const double plus = squared_error(probe, sample);
        probe.set_flat_parameter(coord, original - epsilon);
        const double minus = squared_error(probe, sample);
        probe.set_flat_parameter(coord, original);
        out(static_cast<Index>(c)) = (plus - minus) / (2.0 * epsilon);
    }
    return out;
}

GradientCheckResult gradient_check(const SurrogateModel& model, const SimilaritySample& sample,
                                   double epsilon, Index n_coords, std::uint64_t seed) {
    const Index total = model.parameter_count();
    GradientCheckResult result;
    if (total <= n_coords) {
        result.coords.resize(static_cast<std::size_t>(total));
        std::iota(result.coords.begin(), result.coords.end(), 0);
    } else {
        Rng rng(sub_seed(seed, "grad-check"));
        std::vector<Index> all(static_cast<std::size_t>(total));
        std::iota(all.begin(), all.end(), 0);
        for (Index c = 0; c < n_coords; ++c) {
            const Index pick = c + static_cast<Index>(rng.below(static_cast<std::uint64_t>(total - c)));
            std::swap(all[static_cast<std::size_t>(c)], all[static_cast<std::size_t>(pick)]);
        }
        result.coords.assign(all.begin(), all.begin() + n_coords);
        std::sort(result.coords.begin(), result.coords.end());
    }

    const Vecd analytic = analytic_gradient(model, sample);
    const Vecd numeric = numeric_gradient(model, sample, result.coords, epsilon);
    for (std::size_t c = 0; c < result.coords.size(); ++c) {
        const double a = analytic(result.coords[c]);
        const double nu = numeric(static_cast<Index>(c));
        const double denom = std::max({std::abs(a), std::abs(nu), 1e-8});
        result.max_rel_error = std::max(result.max_rel_error, std::abs(a - nu) / denom);
    }
    return result;
}

// ── CDPN checkpoint ──────────────────────────────────────────

namespace {

void put_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::istream& in, const std::string& path, const char* field) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw load_error(path + ": truncated header while reading " + field);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_model(const std::string& path, const SurrogateModel& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw load_error(path + ": cannot open for writing");
    }
    out.write("CDPN", 4);
    out.put(1);
    const auto& cfg = model.config();
    put_u32_le(out, static_cast<std::uint32_t>(cfg.embed_dim));
    put_u32_le(out, static_cast<std::uint32_t>(cfg.model_dim));
    put_u32_le(out, static_cast<std::uint32_t>(cfg.n_prompts));
    put_u32_le(out, static_cast<std::uint32_t>(cfg.n_layers));
    put_u32_le(out, static_cast<std::uint32_t>(cfg.n_heads));
    put_u32_le(out, static_cast<std::uint32_t>(cfg.ff_dim));
    for (const auto& m : model.parameters()) {
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) {
                const float v = static_cast<float>(m(r, c));
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                put_u32_le(out, bits);
            }
        }
    }
    if (!out) {
        throw load_error(path + ": write failed");
    }
}

SurrogateModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw load_error(path + ": cannot open for reading");
    }
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CDPN", 4) != 0) {
        throw load_error(path + ": magic mismatch, expected CDPN");
    }
    char version = 0;
    if (!in.get(version) || version != 1) {
        throw load_error(path + ": unsupported version " + std::to_string(int(version)));
    }
    SurrogateConfig cfg;
    cfg.embed_dim = static_cast<Index>(get_u32_le(in, path, "embed_dim"));
    cfg.model_dim = static_cast<Index>(get_u32_le(in, path, "model_dim"));
    cfg.n_prompts = static_cast<Index>(get_u32_le(in, path, "n_prompts"));
    cfg.n_layers = static_cast<Index>(get_u32_le(in, path, "n_layers"));
    cfg.n_heads = static_cast<Index>(get_u32_le(in, path, "n_heads"));
    cfg.ff_dim = static_cast<Index>(get_u32_le(in, path, "ff_dim"));

    SurrogateModel model = SurrogateModel::init(cfg);
    for (auto& m : model.parameters()) {
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) {
                const std::uint32_t bits = get_u32_le(in, path, "parameters");
                float v;
                std::memcpy(&v, &bits, 4);
                if (!std::isfinite(v)) {
                    throw load_error(path + ": non-finite parameter value");
                }
                m(r, c) = static_cast<double>(v);
            }
        }
    }
    char extra;
    if (in.get(extra)) {
        throw load_error(path + ": payload longer than hyperparameters imply");
    }
    return model;
}

}  // namespace cdp
