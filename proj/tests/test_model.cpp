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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "wdformer/gradcheck.hpp"
#include "wdformer/model.hpp"

using namespace wdformer;

namespace {

using Mat = std::vector<std::vector<double>>;

// ---- brute-force reference implementations (plain loops, no tape) ----

Mat to_mat(const Tensor& t) {
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
    return m;
}

Mat mat_mul(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Mat cols(const Mat& a, std::size_t start, std::size_t count) {
    Mat out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i].assign(a[i].begin() + start, a[i].begin() + start + count);
    return out;
}

Mat softmax_scores(const Mat& q, const Mat& k, double scale) {
    Mat s(q.size(), std::vector<double>(k.size()));
    for (std::size_t i = 0; i < q.size(); ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < k.size(); ++j) {
            double dotv = 0.0;
            for (std::size_t c = 0; c < q[i].size(); ++c) dotv += q[i][c] * k[j][c];
            s[i][j] = std::exp(dotv * scale);
            z += s[i][j];
        }
        for (double& v : s[i]) v /= z;
    }
    return s;
}

Mat brute_diff_head(const Mat& q1, const Mat& k1, const Mat& q2, const Mat& k2, const Mat& v, double lambda) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(q1[0].size()));
    const Mat a1 = softmax_scores(q1, k1, scale);
    const Mat a2 = softmax_scores(q2, k2, scale);
    Mat comb = a1;
    for (std::size_t i = 0; i < comb.size(); ++i)
        for (std::size_t j = 0; j < comb[i].size(); ++j) comb[i][j] = a1[i][j] - lambda * a2[i][j];
    return mat_mul(comb, v);
}

double vdot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Mat brute_multi_head(const Mat& x, const DiffAttentionParams& p, std::size_t heads) {
    const std::size_t d = x[0].size(), dh = d / heads;
    const Mat q = mat_mul(x, to_mat(p.wq)), k = mat_mul(x, to_mat(p.wk)), v = mat_mul(x, to_mat(p.wv));
    Mat concat(x.size());
    for (std::size_t h = 0; h < heads; ++h) {
        const auto& hp = p.heads[h];
        const double lambda = std::exp(vdot(hp.lambda_q1, hp.lambda_k1)) - std::exp(vdot(hp.lambda_q2, hp.lambda_k2)) +
                              p.lambda_init;
        const std::size_t off = 2 * h * dh;
        Mat out = brute_diff_head(cols(q, off, dh), cols(k, off, dh), cols(q, off + dh, dh), cols(k, off + dh, dh),
                                  cols(v, off, 2 * dh), lambda);
        for (std::size_t i = 0; i < out.size(); ++i) {
            double ms = 0.0;
            for (double val : out[i]) ms += val * val;
            const double inv = 1.0 / std::sqrt(ms / static_cast<double>(out[i].size()) + kHeadNormEps);
            for (std::size_t c = 0; c < out[i].size(); ++c)
                concat[i].push_back((1.0 - p.lambda_init) * out[i][c] * inv * hp.norm_gain[c]);
        }
    }
    Mat y = mat_mul(concat, to_mat(p.out.weight));
    for (auto& row : y)
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += p.out.bias[c];
    return y;
}

double max_abs(const Mat& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b(i, j)));
    return m;
}

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.variates = 3;
    cfg.lookback = 8;
    cfg.horizon = 8;
    cfg.levels = 1;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.e_layers = 1;
    cfg.d_ff = 16;
    cfg.dropout = 0.0;
    return cfg;
}

Tensor randn(Shape s, Rng& rng) { return normal_tensor(std::move(s), 0.0, 1.0, rng); }

// Loss of the model on one window; fills `grad` in parameter visit order.
double model_loss(const WDformerParameters& params, const ModelConfig& cfg, Variant variant, const Tensor& x,
                  const Tensor& y, std::vector<double>* grad) {
    Tape tape;
    ParameterBinder bind(tape);
    Var loss = mse_loss(forward_tape(bind, x, 1, params, cfg, variant), y);
    if (grad) {
        tape.backward(loss);
        *grad = flatten(bind.gradients(params));
    }
    return tape.value(loss)[0];
}

double model_grad_error(const ModelConfig& cfg, Variant variant, std::uint64_t seed) {
    ModelConfig c = cfg;
    c.seed = seed;
    c.variant = variant;
    const WDformerParameters params = init_parameters(c);
    Rng rng(seed + 99);
    const Tensor x = randn({c.variates, c.lookback}, rng);
    const Tensor y = randn({c.variates, c.horizon}, rng);
    std::vector<double> g;
    model_loss(params, c, variant, x, y, &g);
    const std::vector<double> point = flatten(params);
    WDformerParameters work = params;
    return grad_check(
        [&](std::span<const double> p) {
            unflatten(p, work);
            return model_loss(work, c, variant, x, y, nullptr);
        },
        g, point);
}

}  // namespace

TEST(LambdaSchedule, Values) {
    EXPECT_NEAR(lambda_init_schedule(1), 0.2, 1e-15);
    EXPECT_NEAR(lambda_init_schedule(2), 0.7 - 0.5 * std::exp(-0.3), 1e-15);
    EXPECT_NEAR(lambda_init_schedule(2), 0.329590, 1e-6);
    EXPECT_NEAR(lambda_init_schedule(1000), 0.7, 1e-12);
    EXPECT_THROW(lambda_init_schedule(0), PreconditionError);
}

TEST(LambdaSchedule, StrictlyIncreasingAndBounded) {
    for (std::size_t l = 1; l < 60; ++l) {
        EXPECT_LT(lambda_init_schedule(l), lambda_init_schedule(l + 1));
        EXPECT_GE(lambda_init_schedule(l), 0.2 - 1e-15);
        EXPECT_LT(lambda_init_schedule(l), 0.7);
    }
}

TEST(ComputeLambda, Examples) {
    HeadParams hp{Tensor({3}, 0.0), Tensor({3}, 0.0), Tensor({3}, 0.0), Tensor({3}, 0.0), Tensor({6}, 1.0)};
    EXPECT_DOUBLE_EQ(compute_lambda(hp, 0.2), 0.2);

    hp.lambda_q1 = Tensor::vector({std::log(2.0), 0, 0});
    hp.lambda_k1 = Tensor::vector({1, 0, 0});
    EXPECT_NEAR(compute_lambda(hp, 0.2), 1.2, 1e-15);

    Rng rng(1);
    hp.lambda_q1 = randn({3}, rng);
    hp.lambda_k1 = randn({3}, rng);
    hp.lambda_q2 = hp.lambda_q1;
    hp.lambda_k2 = hp.lambda_k1;
    EXPECT_DOUBLE_EQ(compute_lambda(hp, 0.33), 0.33);

    Tape t;
    ParameterBinder bind(t);
    EXPECT_DOUBLE_EQ(t.value(lambda_node(bind, hp, 0.33))[0], compute_lambda(hp, 0.33));
}

TEST(EmbeddingWidths, Partition) {
    EXPECT_EQ(embedding_widths(4, 1), (std::vector<std::size_t>{2, 2}));
    EXPECT_EQ(embedding_widths(130, 3), (std::vector<std::size_t>{32, 32, 32, 34}));
    for (std::size_t levels = 1; levels <= 5; ++levels) {
        for (std::size_t d = levels + 1; d < 200; ++d) {
            const auto w = embedding_widths(d, levels);
            ASSERT_EQ(w.size(), levels + 1);
            std::size_t total = 0;
            for (std::size_t v : w) {
                EXPECT_GE(v, 1u);
                total += v;
            }
            EXPECT_EQ(total, d);
        }
    }
}

TEST(WaveletEmbed, ShapesAndLinearity) {
    ModelConfig cfg = toy_config();
    cfg.d_model = 4;
    cfg.heads = 2;
    const WDformerParameters p = init_parameters(cfg);
    ASSERT_EQ(p.embedding.maps.size(), 2u);
    EXPECT_EQ(p.embedding.maps[0].weight.shape(), (Shape{4, 2}));
    EXPECT_EQ(p.embedding.maps[1].weight.shape(), (Shape{4, 2}));

    WaveletEmbeddingParams zero_bias = p.embedding;
    for (auto& m : zero_bias.maps) m.bias.set_zero();
    Tape t;
    ParameterBinder bind(t);
    Var out = wavelet_embed(bind, t.constant(Tensor::matrix(3, 8)), zero_bias, cfg);
    EXPECT_EQ(t.value(out), Tensor::matrix(3, 4));

    cfg.levels = 3;
    cfg.d_model = 130;
    cfg.heads = 2;
    cfg.lookback = 96;
    cfg.horizon = 96;
    const WDformerParameters p3 = init_parameters(cfg);
    std::vector<std::size_t> widths;
    for (const auto& m : p3.embedding.maps) widths.push_back(m.weight.cols());
    EXPECT_EQ(widths, (std::vector<std::size_t>{32, 32, 32, 34}));
}

TEST(DiffAttentionHead, LambdaZeroIsStandardAttention) {
    Rng rng(3);
    Tape t;
    Var q1 = t.constant(randn({4, 3}, rng)), k1 = t.constant(randn({4, 3}, rng));
    Var q2 = t.constant(randn({4, 3}, rng)), k2 = t.constant(randn({4, 3}, rng));
    Var v = t.constant(randn({4, 6}, rng));
    auto diff = diff_attention_head(q1, k1, q2, k2, v, t.constant(Tensor::scalar(0.0)), 3);
    Var standard = standard_attention_head(q1, k1, v, 3);
    EXPECT_LT(max_abs_diff(t.value(diff.output), t.value(standard)), 1e-12);
}

TEST(DiffAttentionHead, SharedBranchesScaleByOneMinusLambda) {
    Rng rng(4);
    Tape t;
    Var q = t.constant(randn({5, 2}, rng)), k = t.constant(randn({5, 2}, rng));
    Var v = t.constant(randn({5, 4}, rng));
    const double lambda = 0.37;
    auto diff = diff_attention_head(q, k, q, k, v, t.constant(Tensor::scalar(lambda)), 2);
    Tensor expected = t.value(standard_attention_head(q, k, v, 2));
    for (double& e : expected.data()) e *= 1.0 - lambda;
    EXPECT_LT(max_abs_diff(t.value(diff.output), expected), 1e-10);
}

TEST(DiffAttentionHead, CombinedRowsSumToOneMinusLambda) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t;
        const double lambda = std::uniform_real_distribution<double>(-1, 2)(rng);
        auto diff = diff_attention_head(t.constant(randn({6, 4}, rng)), t.constant(randn({6, 4}, rng)),
                                        t.constant(randn({6, 4}, rng)), t.constant(randn({6, 4}, rng)),
                                        t.constant(randn({6, 8}, rng)), t.constant(Tensor::scalar(lambda)), 4);
        const Tensor& comb = t.value(diff.combined);
        for (std::size_t r = 0; r < comb.rows(); ++r) {
            double s = 0.0;
            for (double v : comb.row(r)) s += v;
            EXPECT_NEAR(s, 1.0 - lambda, 1e-8);
        }
    }
}

TEST(DiffAttentionHead, MatchesBruteForceOnSmallIntegers) {
    const Tensor q1 = Tensor::from_rows({{1, 0}, {0, 1}}), k1 = Tensor::from_rows({{1, 2}, {0, 1}});
    const Tensor q2 = Tensor::from_rows({{0, 1}, {1, 1}}), k2 = Tensor::from_rows({{2, 0}, {1, -1}});
    const Tensor v = Tensor::from_rows({{1, 2, 0, -1}, {3, 0, 1, 2}});
    Tape t;
    auto diff = diff_attention_head(t.constant(q1), t.constant(k1), t.constant(q2), t.constant(k2), t.constant(v),
                                    t.constant(Tensor::scalar(0.5)), 2);
    const Mat expected = brute_diff_head(to_mat(q1), to_mat(k1), to_mat(q2), to_mat(k2), to_mat(v), 0.5);
    EXPECT_LT(max_abs(expected, t.value(diff.output)), 1e-10);
}

TEST(MultiHeadDiffAttention, MatchesBruteForceToy) {
    ModelConfig cfg = toy_config();
    cfg.variates = 2;
    cfg.d_model = 4;
    cfg.heads = 2;
    cfg.seed = 77;
    WDformerParameters p = init_parameters(cfg);
    Rng rng(8);
    for (auto& hp : p.layers[0].attention.heads) {
        hp.norm_gain = uniform_tensor({4}, 0.5, 1.5, rng);
    }
    const Tensor x = randn({2, 4}, rng);
    Tape t;
    ParameterBinder bind(t);
    Var out = multi_head_diff_attention(bind, t.constant(x), p.layers[0].attention, cfg);
    EXPECT_LT(max_abs(brute_multi_head(to_mat(x), p.layers[0].attention, 2), t.value(out)), 1e-10);
}

TEST(MultiHeadDiffAttention, SingleHeadAndLambdaInitOne) {
    ModelConfig cfg = toy_config();
    cfg.heads = 1;
    const WDformerParameters p = init_parameters(cfg);
    Rng rng(9);
    const Tensor x = randn({3, 8}, rng);
    {
        Tape t;
        ParameterBinder bind(t);
        Var out = multi_head_diff_attention(bind, t.constant(x), p.layers[0].attention, cfg);
        EXPECT_LT(max_abs(brute_multi_head(to_mat(x), p.layers[0].attention, 1), t.value(out)), 1e-10);
    }
    DiffAttentionParams a = p.layers[0].attention;
    a.lambda_init = 1.0;
    Tape t;
    ParameterBinder bind(t);
    const Tensor out = t.value(multi_head_diff_attention(bind, t.constant(x), a, cfg));
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) EXPECT_DOUBLE_EQ(out(r, c), a.out.bias[c]);
}

TEST(MultiHeadDiffAttention, BatchedEqualsPerSample) {
    ModelConfig cfg = toy_config();
    const WDformerParameters p = init_parameters(cfg);
    Rng rng(10);
    const Tensor a = randn({3, 8}, rng), b = randn({3, 8}, rng);
    Tensor stacked = Tensor::matrix(6, 8);
    for (std::size_t i = 0; i < 24; ++i) stacked[i] = a[i], stacked[24 + i] = b[i];
    Tape t;
    ParameterBinder bind(t);
    const Tensor both = t.value(multi_head_diff_attention(bind, t.constant(stacked), p.layers[0].attention, cfg, 2));
    const Tensor first = t.value(multi_head_diff_attention(bind, t.constant(a), p.layers[0].attention, cfg));
    const Tensor second = t.value(multi_head_diff_attention(bind, t.constant(b), p.layers[0].attention, cfg));
    for (std::size_t i = 0; i < 24; ++i) {
        EXPECT_DOUBLE_EQ(both[i], first[i]);
        EXPECT_DOUBLE_EQ(both[24 + i], second[i]);
    }
}

TEST(EncoderLayer, ZeroSublayersGiveDoubleNorm) {
    ModelConfig cfg = toy_config();
    WDformerParameters p = init_parameters(cfg);
    EncoderLayer layer = p.layers[0];
    for_each_parameter(p, [](const std::string&, Tensor&) {});
    auto zero = [](Tensor& t) { t.set_zero(); };
    zero(layer.attention.wq), zero(layer.attention.wk), zero(layer.attention.wv);
    zero(layer.attention.out.weight), zero(layer.attention.out.bias);
    zero(layer.ffn_in.weight), zero(layer.ffn_in.bias), zero(layer.ffn_out.weight), zero(layer.ffn_out.bias);
    Rng rng(11);
    const Tensor x = randn({3, 8}, rng);
    Tape t;
    ParameterBinder bind(t);
    Var out = encoder_layer_forward(bind, t.constant(x), layer, cfg, 1, Variant::full);
    Var ones = t.constant(Tensor({8}, 1.0)), zeros = t.constant(Tensor({8}, 0.0));
    Var expected = layer_norm(layer_norm(t.constant(x), ones, zeros, kLayerNormEps), ones, zeros, kLayerNormEps);
    EXPECT_LT(max_abs_diff(t.value(out), t.value(expected)), 1e-12);
}

TEST(EncoderLayer, EvalModeIsBitwiseDeterministic) {
    ModelConfig cfg = toy_config();
    cfg.dropout = 0.3;
    const WDformerParameters p = init_parameters(cfg);
    Rng rng(12);
    const Tensor x = randn({3, 8}, rng);
    auto run = [&] {
        Tape t;
        ParameterBinder bind(t);
        return t.value(encoder_layer_forward(bind, t.constant(x), p.layers[0], cfg, 1, Variant::full));
    };
    EXPECT_EQ(run(), run());
}

TEST(EncoderLayer, GradientCheck) {
    ModelConfig cfg = toy_config();
    WDformerParameters p = init_parameters(cfg);
    Rng rng(13);
    const Tensor x = randn({3, 8}, rng);
    const Tensor probe = randn({3, 8}, rng);
    // Gradient with respect to the layer parameters only.
    WDformerParameters work = p;
    auto loss = [&](const WDformerParameters& params, std::vector<double>* grad) {
        Tape t;
        ParameterBinder bind(t);
        Var out = encoder_layer_forward(bind, t.constant(x), params.layers[0], cfg, 1, Variant::full);
        Var l = sum(mul(out, t.constant(probe)));
        if (grad) {
            t.backward(l);
            *grad = flatten(bind.gradients(params));
        }
        return t.value(l)[0];
    };
    std::vector<double> g;
    loss(p, &g);
    const double err = grad_check(
        [&](std::span<const double> v) {
            unflatten(v, work);
            return loss(work, nullptr);
        },
        g, flatten(p));
    EXPECT_LT(err, 1e-5);
}

TEST(Forward, OutputShape) {
    for (std::size_t levels : {1u, 2u, 3u}) {
        ModelConfig cfg = toy_config();
        cfg.lookback = 24;
        cfg.horizon = 16;
        cfg.levels = levels;
        const WDformerParameters p = init_parameters(cfg);
        Rng rng(14);
        EXPECT_EQ(forward(randn({3, 24}, rng), p, cfg).shape(), (Shape{3, 16}));
    }
}

TEST(Forward, PaddedLookbackAndHorizon) {
    ModelConfig cfg = toy_config();
    cfg.lookback = 100;
    cfg.horizon = 20;
    cfg.levels = 3;
    const WDformerParameters p = init_parameters(cfg);
    EXPECT_EQ(p.embedding.maps[0].weight.rows(), 104u / 8);
    EXPECT_EQ(p.head.weight.cols(), 24u);
    Rng rng(15);
    EXPECT_EQ(forward(randn({3, 100}, rng), p, cfg).shape(), (Shape{3, 20}));

    cfg.pad = false;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Forward, HeadEmittingTrueCoefficientsReconstructsFuture) {
    for (auto fam : {wavelet::Family::haar, wavelet::Family::db2}) {
        ModelConfig cfg = toy_config();
        cfg.variates = 1;
        cfg.lookback = 32;
        cfg.horizon = 32;
        cfg.levels = 2;
        cfg.wavelet = fam;
        cfg.instance_norm = false;
        WDformerParameters p = init_parameters(cfg);
        Rng rng(16);
        std::vector<double> future(32);
        for (double& v : future) v = std::normal_distribution<double>(0, 1)(rng);
        const auto coeffs = wavelet::concat(wavelet::dwt_multilevel(future, 2, wavelet::make_filter(fam)));
        p.head.weight.set_zero();
        p.head.bias = Tensor::vector(coeffs);
        const Tensor y = forward(randn({1, 32}, rng), p, cfg);
        for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(y[i], future[i], 1e-9);
    }
}

TEST(Forward, FullModelGradientCheck) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        EXPECT_LT(model_grad_error(toy_config(), Variant::full, seed), 1e-4) << "seed " << seed;
    }
}

TEST(Forward, AblatedVariantsGradientCheck) {
    for (Variant v : {Variant::no_wave, Variant::no_diff, Variant::neither}) {
        EXPECT_LT(model_grad_error(toy_config(), v, 3), 1e-4) << variant_name(v);
    }
    ModelConfig db2 = toy_config();
    db2.wavelet = wavelet::Family::db2;
    EXPECT_LT(model_grad_error(db2, Variant::full, 4), 1e-4);
}

TEST(ForwardAblated, FullMatchesForward) {
    const ModelConfig cfg = toy_config();
    const WDformerParameters p = init_parameters(cfg);
    Rng rng(17);
    const Tensor x = randn({3, 8}, rng);
    EXPECT_EQ(forward_ablated(x, p, cfg, Variant::full), forward(x, p, cfg));
}

TEST(ForwardAblated, NeitherShapeAndMismatchedParams) {
    ModelConfig cfg = toy_config();
    cfg.variant = Variant::neither;
    const WDformerParameters p = init_parameters(cfg);
    Rng rng(18);
    const Tensor x = randn({3, 8}, rng);
    EXPECT_EQ(forward_ablated(x, p, cfg, Variant::neither).shape(), (Shape{3, 8}));
    EXPECT_THROW(forward_ablated(x, p, cfg, Variant::full), DimensionError);
}

TEST(ForwardAblated, NoDiffLeavesLambdaGradientsZero) {
    ModelConfig cfg = toy_config();
    const WDformerParameters p = init_parameters(cfg);
    Rng rng(19);
    const Tensor x = randn({3, 8}, rng), y = randn({3, 8}, rng);
    Tape t;
    ParameterBinder bind(t);
    t.backward(mse_loss(forward_tape(bind, x, 1, p, cfg, Variant::no_diff), y));
    const WDformerParameters g = bind.gradients(p);
    for (const auto& hp : g.layers[0].attention.heads) {
        for (const Tensor* lt : {&hp.lambda_q1, &hp.lambda_k1, &hp.lambda_q2, &hp.lambda_k2, &hp.norm_gain}) {
            for (double v : lt->data()) EXPECT_EQ(v, 0.0);
        }
    }
    double wq_norm = 0.0;
    for (double v : g.layers[0].attention.wq.data()) wq_norm += v * v;
    EXPECT_GT(wq_norm, 0.0);
}

TEST(Complexity, AttentionCostIndependentOfLookback) {
    auto count = [](std::size_t k) {
        ModelConfig cfg;
        cfg.variates = 5;
        cfg.lookback = k;
        cfg.horizon = 96;
        cfg.levels = 3;
        cfg.d_model = 16;
        cfg.heads = 2;
        cfg.e_layers = 2;
        cfg.d_ff = 16;
        const WDformerParameters p = init_parameters(cfg);
        Rng rng(20);
        ForwardStats stats;
        forward(randn({5, k}, rng), p, cfg, &stats);
        return stats.attention_score_mults;
    };
    const std::size_t at96 = count(96);
    EXPECT_EQ(at96, count(384));
    // 2 layers x 2 heads x 2 branches x N^2 x d_h
    EXPECT_EQ(at96, 2u * 2u * 2u * 25u * 8u);
}

TEST(Init, DeterministicForFixedSeed) {
    const ModelConfig cfg = toy_config();
    EXPECT_EQ(flatten(init_parameters(cfg)), flatten(init_parameters(cfg)));
    ModelConfig other = cfg;
    other.seed = cfg.seed + 1;
    EXPECT_NE(flatten(init_parameters(cfg)), flatten(init_parameters(other)));
    const auto p = init_parameters(cfg);
    EXPECT_NEAR(p.layers[0].attention.lambda_init, 0.2, 1e-15);
    const auto names = named_parameters(p);
    EXPECT_EQ(names[4].first, "layers.0.attention.Wq");
    EXPECT_EQ(names.back().first, "head.bias");
}

TEST(ModelConfig, Violations) {
    ModelConfig cfg = toy_config();
    EXPECT_TRUE(cfg.violations().empty());
    cfg.d_model = 9;
    cfg.e_layers = 0;
    cfg.dropout = 1.0;
    EXPECT_EQ(cfg.violations().size(), 3u);
    ModelConfig narrow = toy_config();
    narrow.d_model = 2;
    narrow.heads = 2;
    EXPECT_FALSE(narrow.violations().empty());
}
