/*
 * Copyright 2026 The WDformer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wdformer/autodiff.hpp"
#include "wdformer/errors.hpp"
#include "wdformer/model_config.hpp"
#include "wdformer/padding.hpp"
#include "wdformer/random.hpp"
#include "wdformer/tensor.hpp"
#include "wdformer/wavelet.hpp"

namespace wdformer {

inline constexpr double kHeadNormEps = 1e-5;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInstanceNormEps = 1e-5;

struct LinearParams {
    Tensor weight;  // in x out
    Tensor bias;    // out
};

struct NormParams {
    Tensor gain;
    Tensor bias;
};

/// Per-head pieces of differential attention: the four lambda
/// reparameterization vectors and the RMSNorm gain over the head output.
struct HeadParams {
    Tensor lambda_q1;
    Tensor lambda_k1;
    Tensor lambda_q2;
    Tensor lambda_k2;
    Tensor norm_gain;  // 2 * head_dim
};

/// Wq and Wk produce [Q1 | Q2] blocks per head (h heads x 2 branches x d_h
/// columns); Wv produces 2 * d_h columns per head. `out` maps the 2d-wide
/// concatenation of heads back to d.
struct DiffAttentionParams {
    Tensor wq;
    Tensor wk;
    Tensor wv;
    LinearParams out;
    std::vector<HeadParams> heads;
    double lambda_init = 0.2;  // scheduled constant, not trained
};

struct EncoderLayer {
    std::size_t index = 1;  // 1-based depth in the stack
    DiffAttentionParams attention;
    LinearParams ffn_in;
    LinearParams ffn_out;
    NormParams norm1;
    NormParams norm2;
};

/// One map per coefficient set for wavelet variants, or a single K -> d map
/// over the raw window for the no_wave variants.
struct WaveletEmbeddingParams {
    std::vector<LinearParams> maps;
};

struct WDformerParameters {
    WaveletEmbeddingParams embedding;
    std::vector<EncoderLayer> layers;
    LinearParams head;
};

/// Visits every learnable tensor with its stable dotted name, in a fixed order.
template <class Params, class Fn>
void for_each_parameter(Params& p, Fn&& fn) {
    auto lin = [&](const std::string& prefix, auto& l) {
        fn(prefix + ".weight", l.weight);
        fn(prefix + ".bias", l.bias);
    };
    for (std::size_t i = 0; i < p.embedding.maps.size(); ++i) lin("embedding." + std::to_string(i), p.embedding.maps[i]);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const std::string base = "layers." + std::to_string(l);
        fn(base + ".attention.Wq", layer.attention.wq);
        fn(base + ".attention.Wk", layer.attention.wk);
        fn(base + ".attention.Wv", layer.attention.wv);
        lin(base + ".attention.Wo", layer.attention.out);
        for (std::size_t h = 0; h < layer.attention.heads.size(); ++h) {
            auto& hp = layer.attention.heads[h];
            const std::string hb = base + ".attention.heads." + std::to_string(h);
            fn(hb + ".lambda_q1", hp.lambda_q1);
            fn(hb + ".lambda_k1", hp.lambda_k1);
            fn(hb + ".lambda_q2", hp.lambda_q2);
            fn(hb + ".lambda_k2", hp.lambda_k2);
            fn(hb + ".norm_gain", hp.norm_gain);
        }
        lin(base + ".ffn.0", layer.ffn_in);
        lin(base + ".ffn.1", layer.ffn_out);
        fn(base + ".norm1.gain", layer.norm1.gain);
        fn(base + ".norm1.bias", layer.norm1.bias);
        fn(base + ".norm2.gain", layer.norm2.gain);
        fn(base + ".norm2.bias", layer.norm2.bias);
    }
    lin("head", p.head);
}

inline std::vector<std::pair<std::string, Tensor*>> named_parameters(WDformerParameters& p) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for_each_parameter(p, [&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

inline std::vector<std::pair<std::string, const Tensor*>> named_parameters(const WDformerParameters& p) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for_each_parameter(p, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

inline std::size_t parameter_count(const WDformerParameters& p) {
    std::size_t n = 0;
    for_each_parameter(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

inline std::vector<double> flatten(const WDformerParameters& p) {
    std::vector<double> out;
    out.reserve(parameter_count(p));
    for_each_parameter(p, [&](const std::string&, const Tensor& t) { out.insert(out.end(), t.data().begin(), t.data().end()); });
    return out;
}

inline void unflatten(std::span<const double> flat, WDformerParameters& p) {
    if (flat.size() != parameter_count(p)) throw DimensionError("unflatten: parameter vector has the wrong length");
    std::size_t off = 0;
    for_each_parameter(p, [&](const std::string&, Tensor& t) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t.size()), t.data().begin());
        off += t.size();
    });
}

inline WDformerParameters zeros_like(const WDformerParameters& p) {
    WDformerParameters z = p;
    for_each_parameter(z, [](const std::string&, Tensor& t) { t.set_zero(); });
    return z;
}

/// lambda_init(l) = 0.7 - 0.5 exp(-0.3 (l - 1)) for 1-based layer index l.
inline double lambda_init_schedule(std::size_t layer) {
    if (layer < 1) throw PreconditionError("lambda_init_schedule: layer index must be >= 1");
    return 0.7 - 0.5 * std::exp(-0.3 * static_cast<double>(layer - 1));
}

/// Widths of the per-set embeddings: floor(d/(L+1)) for the first L sets,
/// the remainder for the last.
inline std::vector<std::size_t> embedding_widths(std::size_t d_model, std::size_t levels) {
    const std::size_t base = d_model / (levels + 1);
    std::vector<std::size_t> w(levels, base);
    w.push_back(d_model - levels * base);
    return w;
}

namespace detail {

inline LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearParams l;
    l.weight = uniform_tensor({in, out}, -bound, bound, rng);
    l.bias = uniform_tensor({out}, -bound, bound, rng);
    return l;
}

}  // namespace detail

/// Fresh parameters for `cfg.variant`, drawn from a generator seeded with `cfg.seed`.
inline WDformerParameters init_parameters(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    WDformerParameters p;
    const std::size_t d = cfg.d_model;
    const std::size_t dh = cfg.head_dim();
    const bool wave = uses_wavelets(cfg.variant);
    if (wave) {
        const auto lengths = wavelet::set_lengths(cfg.lookback_padding().padded_length, cfg.levels);
        const auto widths = embedding_widths(d, cfg.levels);
        for (std::size_t i = 0; i < lengths.size(); ++i) p.embedding.maps.push_back(detail::init_linear(lengths[i], widths[i], rng));
    } else {
        p.embedding.maps.push_back(detail::init_linear(cfg.lookback, d, rng));
    }
    const double qkv_bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t l = 1; l <= cfg.e_layers; ++l) {
        EncoderLayer layer;
        layer.index = l;
        layer.attention.lambda_init = lambda_init_schedule(l);
        layer.attention.wq = uniform_tensor({d, 2 * d}, -qkv_bound, qkv_bound, rng);
        layer.attention.wk = uniform_tensor({d, 2 * d}, -qkv_bound, qkv_bound, rng);
        layer.attention.wv = uniform_tensor({d, 2 * d}, -qkv_bound, qkv_bound, rng);
        layer.attention.out = detail::init_linear(2 * d, d, rng);
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            HeadParams hp;
            hp.lambda_q1 = normal_tensor({dh}, 0.0, 0.1, rng);
            hp.lambda_k1 = normal_tensor({dh}, 0.0, 0.1, rng);
            hp.lambda_q2 = normal_tensor({dh}, 0.0, 0.1, rng);
            hp.lambda_k2 = normal_tensor({dh}, 0.0, 0.1, rng);
            hp.norm_gain = Tensor({2 * dh}, 1.0);
            layer.attention.heads.push_back(std::move(hp));
        }
        layer.ffn_in = detail::init_linear(d, cfg.d_ff, rng);
        layer.ffn_out = detail::init_linear(cfg.d_ff, d, rng);
        layer.norm1 = NormParams{Tensor({d}, 1.0), Tensor({d}, 0.0)};
        layer.norm2 = NormParams{Tensor({d}, 1.0), Tensor({d}, 0.0)};
        p.layers.push_back(std::move(layer));
    }
    const std::size_t out_width = wave ? cfg.horizon_padding().padded_length : cfg.horizon;
    p.head = detail::init_linear(d, out_width, rng);
    return p;
}

/// Puts parameter tensors on a tape on first use. Tensors never requested
/// by a forward pass keep a zero gradient.
class ParameterBinder {
public:
    explicit ParameterBinder(Tape& tape, bool trainable = true) : tape_(tape), trainable_(trainable) {}

    Var operator()(const Tensor& param) {
        auto it = bound_.find(&param);
        if (it != bound_.end()) return it->second;
        Var v = tape_.leaf(param, trainable_);
        bound_.emplace(&param, v);
        return v;
    }

    bool is_bound(const Tensor& param) const { return bound_.contains(&param); }
    Tape& tape() noexcept { return tape_; }

    /// Gradients for every parameter after `tape().backward(...)`.
    WDformerParameters gradients(const WDformerParameters& params) const {
        WDformerParameters g = zeros_like(params);
        auto src = named_parameters(params);
        auto dst = named_parameters(g);
        for (std::size_t i = 0; i < src.size(); ++i) {
            auto it = bound_.find(src[i].second);
            if (it != bound_.end() && tape_.requires_grad(it->second)) *dst[i].second = tape_.grad(it->second);
        }
        return g;
    }

private:
    Tape& tape_;
    bool trainable_;
    std::unordered_map<const Tensor*, Var> bound_;
};

struct ForwardStats {
    std::size_t attention_score_mults = 0;  // multiplications spent forming Q K^T score matrices
};

struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout > 0
    ForwardStats* stats = nullptr;
};

inline double compute_lambda(const HeadParams& hp, double lambda_init) {
    auto dotv = [](const Tensor& a, const Tensor& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    return std::exp(dotv(hp.lambda_q1, hp.lambda_k1)) - std::exp(dotv(hp.lambda_q2, hp.lambda_k2)) + lambda_init;
}

/// lambda = exp(q1 . k1) - exp(q2 . k2) + lambda_init, as a scalar node.
inline Var lambda_node(ParameterBinder& bind, const HeadParams& hp, double lambda_init) {
    Var a = exp(dot(bind(hp.lambda_q1), bind(hp.lambda_k1)));
    Var b = exp(dot(bind(hp.lambda_q2), bind(hp.lambda_k2)));
    return add_scalar(sub(a, b), lambda_init);
}

namespace detail {

inline Var attention_scores(Var q, Var k, std::size_t head_dim, ForwardStats* stats) {
    Tape& t = *q.tape;
    const std::size_t n_q = t.value(q).rows();
    const std::size_t n_k = t.value(k).rows();
    if (stats) stats->attention_score_mults += n_q * n_k * head_dim;
    return scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
}

}  // namespace detail

struct DiffHeadOutput {
    Var output;    // (A1 - lambda A2) V
    Var combined;  // A1 - lambda A2
};

/// One differential head on already-projected blocks: q1, k1, q2, k2 are
/// N x d_h, v is N x 2 d_h, lambda is a scalar node.
inline DiffHeadOutput diff_attention_head(Var q1, Var k1, Var q2, Var k2, Var v, Var lambda, std::size_t head_dim,
                                          ForwardStats* stats = nullptr) {
    Var a1 = softmax_rows(detail::attention_scores(q1, k1, head_dim, stats));
    Var a2 = softmax_rows(detail::attention_scores(q2, k2, head_dim, stats));
    Var combined = sub(a1, scale_by(a2, lambda));
    return DiffHeadOutput{matmul(combined, v), combined};
}

inline Var standard_attention_head(Var q, Var k, Var v, std::size_t head_dim, ForwardStats* stats = nullptr) {
    return matmul(softmax_rows(detail::attention_scores(q, k, head_dim, stats)), v);
}

namespace detail {

inline void check_attention_input(const Tape& t, Var x, const DiffAttentionParams& p, const ModelConfig& cfg,
                                  std::size_t batch) {
    const Tensor& xv = t.value(x);
    const std::size_t d = cfg.d_model;
    if (xv.rank() != 2 || xv.cols() != d || batch == 0 || xv.rows() % batch != 0) {
        throw DimensionError("attention: input " + shape_string(xv.shape()) + " does not split into " +
                             std::to_string(batch) + " samples of width " + std::to_string(d));
    }
    if (p.wq.shape() != Shape{d, 2 * d} || p.wk.shape() != Shape{d, 2 * d} || p.wv.shape() != Shape{d, 2 * d} ||
        p.heads.size() != cfg.heads) {
        throw DimensionError("attention: parameters do not match d=" + std::to_string(d) + ", h=" +
                             std::to_string(cfg.heads));
    }
}

}  // namespace detail

/// Multi-head differential attention over variate tokens. `x` stacks
/// `batch` samples of N rows each; attention never mixes samples. Each head
/// output is RMS-normalized, scaled by (1 - lambda_init), concatenated to
/// width 2d and mapped back to d.
inline Var multi_head_diff_attention(ParameterBinder& bind, Var x, const DiffAttentionParams& p,
                                     const ModelConfig& cfg, std::size_t batch = 1, ForwardStats* stats = nullptr) {
    Tape& t = bind.tape();
    detail::check_attention_input(t, x, p, cfg, batch);
    const std::size_t dh = cfg.head_dim();
    const std::size_t rows = t.value(x).rows() / batch;
    Var q = matmul(x, bind(p.wq));
    Var k = matmul(x, bind(p.wk));
    Var v = matmul(x, bind(p.wv));
    std::vector<Var> lambdas;
    for (const HeadParams& hp : p.heads) lambdas.push_back(lambda_node(bind, hp, p.lambda_init));

    std::vector<Var> samples;
    for (std::size_t b = 0; b < batch; ++b) {
        Var qb = batch == 1 ? q : slice_rows(q, b * rows, rows);
        Var kb = batch == 1 ? k : slice_rows(k, b * rows, rows);
        Var vb = batch == 1 ? v : slice_rows(v, b * rows, rows);
        std::vector<Var> heads;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const std::size_t off = 2 * h * dh;
            auto out = diff_attention_head(slice_cols(qb, off, dh), slice_cols(kb, off, dh),
                                           slice_cols(qb, off + dh, dh), slice_cols(kb, off + dh, dh),
                                           slice_cols(vb, off, 2 * dh), lambdas[h], dh, stats);
            Var normed = rms_norm(out.output, bind(p.heads[h].norm_gain), kHeadNormEps);
            heads.push_back(scale(normed, 1.0 - p.lambda_init));
        }
        samples.push_back(concat_cols(heads));
    }
    Var merged = batch == 1 ? samples.front() : concat_rows(samples);
    return linear(merged, bind(p.out.weight), bind(p.out.bias));
}

/// Single-branch multi-head softmax attention built from the same
/// projections: each head uses its Q1/K1 block and its full value block.
/// Lambda vectors and head norms are left untouched.
inline Var multi_head_standard_attention(ParameterBinder& bind, Var x, const DiffAttentionParams& p,
                                         const ModelConfig& cfg, std::size_t batch = 1,
                                         ForwardStats* stats = nullptr) {
    Tape& t = bind.tape();
    detail::check_attention_input(t, x, p, cfg, batch);
    const std::size_t dh = cfg.head_dim();
    const std::size_t rows = t.value(x).rows() / batch;
    Var q = matmul(x, bind(p.wq));
    Var k = matmul(x, bind(p.wk));
    Var v = matmul(x, bind(p.wv));
    std::vector<Var> samples;
    for (std::size_t b = 0; b < batch; ++b) {
        Var qb = batch == 1 ? q : slice_rows(q, b * rows, rows);
        Var kb = batch == 1 ? k : slice_rows(k, b * rows, rows);
        Var vb = batch == 1 ? v : slice_rows(v, b * rows, rows);
        std::vector<Var> heads;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const std::size_t off = 2 * h * dh;
            heads.push_back(standard_attention_head(slice_cols(qb, off, dh), slice_cols(kb, off, dh),
                                                    slice_cols(vb, off, 2 * dh), dh, stats));
        }
        samples.push_back(concat_cols(heads));
    }
    Var merged = batch == 1 ? samples.front() : concat_rows(samples);
    return linear(merged, bind(p.out.weight), bind(p.out.bias));
}

namespace detail {

inline Var dropout(Var x, double rate, const ForwardOptions& opts) {
    if (!opts.training || rate <= 0.0) return x;
    if (!opts.rng) throw PreconditionError("dropout: training mode needs a random generator");
    Tape& t = *x.tape;
    Tensor mask(t.value(x).shape());
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale_kept = 1.0 / (1.0 - rate);
    for (double& m : mask.data()) m = keep(*opts.rng) ? scale_kept : 0.0;
    return mul(x, t.constant(std::move(mask)));
}

inline Var row_dwt(Var x, std::size_t levels, const wavelet::Filter& f) {
    const std::size_t n = x.tape->value(x).cols();
    return map_rows(
        x, n, [levels, f](std::span<const double> in, std::span<double> out) { wavelet::dwt_flat(in, levels, f, out); },
        [levels, f](std::span<const double> in, std::span<double> out) { wavelet::idwt_flat(in, levels, f, out); });
}

inline Var row_idwt(Var x, std::size_t levels, const wavelet::Filter& f) {
    const std::size_t n = x.tape->value(x).cols();
    return map_rows(
        x, n, [levels, f](std::span<const double> in, std::span<double> out) { wavelet::idwt_flat(in, levels, f, out); },
        [levels, f](std::span<const double> in, std::span<double> out) { wavelet::dwt_flat(in, levels, f, out); });
}

inline void check_variant_shapes(const WDformerParameters& p, const ModelConfig& cfg, Variant variant) {
    const bool wave = uses_wavelets(variant);
    const std::size_t expected_maps = wave ? cfg.levels + 1 : 1;
    const std::size_t head_width = wave ? cfg.horizon_padding().padded_length : cfg.horizon;
    const bool ok = p.embedding.maps.size() == expected_maps && p.head.weight.rank() == 2 &&
                    p.head.weight.cols() == head_width && p.layers.size() == cfg.e_layers &&
                    (wave || p.embedding.maps[0].weight.rows() == cfg.lookback);
    if (!ok) {
        throw DimensionError("forward: parameters were not built for variant '" + std::string(variant_name(variant)) +
                             "' under this config");
    }
}

}  // namespace detail

/// Embeds each variate row of an (rows x K') window, K' a multiple of 2^L:
/// multi-level DWT, one linear map per coefficient set, concatenation to width d.
inline Var wavelet_embed(ParameterBinder& bind, Var window, const WaveletEmbeddingParams& p, const ModelConfig& cfg) {
    const Tensor& xv = bind.tape().value(window);
    const auto lengths = wavelet::set_lengths(xv.cols(), cfg.levels);
    if (p.maps.size() != lengths.size()) {
        throw DimensionError("wavelet_embed: expected " + std::to_string(lengths.size()) + " embedding maps, got " +
                             std::to_string(p.maps.size()));
    }
    Var coeffs = detail::row_dwt(window, cfg.levels, wavelet::make_filter(cfg.wavelet));
    std::vector<Var> parts;
    std::size_t off = 0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        Var set = slice_cols(coeffs, off, lengths[i]);
        parts.push_back(linear(set, bind(p.maps[i].weight), bind(p.maps[i].bias)));
        off += lengths[i];
    }
    return concat_cols(parts);
}

/// Post-norm block: y = LN(x + Drop(Attn(x))); out = LN(y + Drop(FFN(y))).
inline Var encoder_layer_forward(ParameterBinder& bind, Var x, const EncoderLayer& layer, const ModelConfig& cfg,
                                 std::size_t batch, Variant variant, const ForwardOptions& opts = {}) {
    Var attn = uses_diff_attention(variant)
                   ? multi_head_diff_attention(bind, x, layer.attention, cfg, batch, opts.stats)
                   : multi_head_standard_attention(bind, x, layer.attention, cfg, batch, opts.stats);
    Var y = layer_norm(add(x, detail::dropout(attn, cfg.dropout, opts)), bind(layer.norm1.gain),
                       bind(layer.norm1.bias), kLayerNormEps);
    Var hidden = gelu(linear(y, bind(layer.ffn_in.weight), bind(layer.ffn_in.bias)));
    Var ffn = linear(hidden, bind(layer.ffn_out.weight), bind(layer.ffn_out.bias));
    return layer_norm(add(y, detail::dropout(ffn, cfg.dropout, opts)), bind(layer.norm2.gain), bind(layer.norm2.bias),
                      kLayerNormEps);
}

/// Full pipeline on a stack of `batch` windows, each N x K, giving
/// (batch * N) x F in the input's units.
inline Var forward_tape(ParameterBinder& bind, const Tensor& windows, std::size_t batch,
                        const WDformerParameters& params, const ModelConfig& cfg, Variant variant,
                        const ForwardOptions& opts = {}) {
    Tape& t = bind.tape();
    if (windows.rank() != 2 || windows.cols() != cfg.lookback || windows.rows() != batch * cfg.variates) {
        throw DimensionError("forward: input " + shape_string(windows.shape()) + " is not " + std::to_string(batch) +
                             " windows of " + std::to_string(cfg.variates) + "x" + std::to_string(cfg.lookback));
    }
    detail::check_variant_shapes(params, cfg, variant);
    const std::size_t rows = windows.rows();

    Tensor x = windows;
    std::vector<double> mu(rows, 0.0), sigma(rows, 1.0);
    if (cfg.instance_norm) {
        const auto k = static_cast<double>(cfg.lookback);
        for (std::size_t r = 0; r < rows; ++r) {
            double m = 0.0;
            for (double v : x.row(r)) m += v;
            m /= k;
            double var = 0.0;
            for (double v : x.row(r)) var += (v - m) * (v - m);
            mu[r] = m;
            sigma[r] = std::sqrt(var / k + kInstanceNormEps);
            for (double& v : x.row(r)) v = (v - m) / sigma[r];
        }
    }

    const bool wave = uses_wavelets(variant);
    Var tokens;
    if (wave) {
        tokens = wavelet_embed(bind, t.constant(data::pad_rows(x, cfg.lookback_padding())), params.embedding, cfg);
    } else {
        const auto& m = params.embedding.maps[0];
        tokens = linear(t.constant(std::move(x)), bind(m.weight), bind(m.bias));
    }
    for (const EncoderLayer& layer : params.layers) tokens = encoder_layer_forward(bind, tokens, layer, cfg, batch, variant, opts);

    Var out = linear(tokens, bind(params.head.weight), bind(params.head.bias));
    if (wave) {
        const auto pad = cfg.horizon_padding();
        out = detail::row_idwt(out, cfg.levels, wavelet::make_filter(cfg.wavelet));
        if (pad.padded()) out = slice_cols(out, 0, pad.original_length);
    }
    if (cfg.instance_norm) {
        Tensor s = Tensor::matrix(rows, cfg.horizon);
        Tensor m = Tensor::matrix(rows, cfg.horizon);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cfg.horizon; ++c) {
                s(r, c) = sigma[r];
                m(r, c) = mu[r];
            }
        }
        out = add(mul(out, t.constant(std::move(s))), t.constant(std::move(m)));
    }
    return out;
}

/// Evaluation-mode forecast for one N x K window under `variant`.
inline Tensor forward_ablated(const Tensor& window, const WDformerParameters& params, const ModelConfig& cfg,
                              Variant variant, ForwardStats* stats = nullptr) {
    Tape tape;
    tape.set_grad_enabled(false);
    ParameterBinder bind(tape, false);
    ForwardOptions opts;
    opts.stats = stats;
    return tape.value(forward_tape(bind, window, 1, params, cfg, variant, opts));
}

/// Evaluation-mode forecast of the full architecture for one N x K window.
inline Tensor forward(const Tensor& window, const WDformerParameters& params, const ModelConfig& cfg,
                      ForwardStats* stats = nullptr) {
    return forward_ablated(window, params, cfg, Variant::full, stats);
}

}  // namespace wdformer
