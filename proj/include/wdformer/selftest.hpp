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
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wdformer/autodiff.hpp"
#include "wdformer/gradcheck.hpp"
#include "wdformer/io.hpp"
#include "wdformer/model.hpp"
#include "wdformer/random.hpp"
#include "wdformer/wavelet.hpp"

namespace wdformer::selftest {

struct Options {
    bool perturb_filter = false;  // test hook: corrupt the analysis lowpass filter
};

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

inline std::string pass_fail_detail(double worst, double tol) {
    return "max error " + io::format_double(worst) + " (tolerance " + io::format_double(tol) + ")";
}

inline SuiteResult reconstruction(const Options& opts) {
    double worst = 0.0;
    Rng rng(11);
    for (auto family : {wavelet::Family::haar, wavelet::Family::db2}) {
        const wavelet::Filter synth = wavelet::make_filter(family);
        wavelet::Filter analysis = synth;
        if (opts.perturb_filter) analysis.lowpass[0] += 1e-3;
        for (std::size_t levels = 1; levels <= 3; ++levels) {
            for (int trial = 0; trial < 100; ++trial) {
                const Tensor x = normal_tensor({96}, 0.0, 1.0, rng);
                std::vector<double> flat(96), back(96);
                wavelet::dwt_flat(x.data(), levels, analysis, flat);
                wavelet::idwt_flat(flat, levels, synth, back);
                for (std::size_t i = 0; i < 96; ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
            }
        }
    }
    return {"reconstruction", worst < 1e-9, pass_fail_detail(worst, 1e-9)};
}

inline SuiteResult split_wave_lengths() {
    const bool ok = wavelet::set_lengths(96, 2) == std::vector<std::size_t>{24, 24, 48} &&
                    wavelet::set_lengths(96, 3) == std::vector<std::size_t>{12, 12, 24, 48};
    std::vector<double> flat(96);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = static_cast<double>(i);
    const bool identity = wavelet::concat(wavelet::split_wave(flat, 96, 3)) == flat;
    return {"split_wave", ok && identity, ok && identity ? "lengths and partition exact" : "lengths or partition differ"};
}

inline SuiteResult lambda_schedule() {
    bool ok = std::abs(lambda_init_schedule(1) - 0.2) <= 1e-12 && std::abs(lambda_init_schedule(2) - 0.32959) <= 1e-6;
    for (std::size_t l = 1; l < 10; ++l) ok = ok && lambda_init_schedule(l) < lambda_init_schedule(l + 1);
    ok = ok && lambda_init_schedule(10) < 0.7;
    return {"lambda_schedule", ok, ok ? "values, monotonicity and bound hold" : "schedule mismatch"};
}

inline SuiteResult attention_identities() {
    Rng rng(12);
    const std::size_t n = 5, dh = 4;
    Tape t;
    t.set_grad_enabled(false);
    auto rnd = [&](std::size_t c) { return t.constant(normal_tensor({n, c}, 0.0, 1.0, rng)); };
    const Var q1 = rnd(dh), k1 = rnd(dh), q2 = rnd(dh), k2 = rnd(dh), v = rnd(2 * dh);
    const Var standard = standard_attention_head(q1, k1, v, dh);
    const auto zero = diff_attention_head(q1, k1, q2, k2, v, t.constant(Tensor::scalar(0.0)), dh);
    const double lambda = 0.37;
    const auto shared = diff_attention_head(q1, k1, q1, k1, v, t.constant(Tensor::scalar(lambda)), dh);
    const auto general = diff_attention_head(q1, k1, q2, k2, v, t.constant(Tensor::scalar(lambda)), dh);

    const double e0 = max_abs_diff(t.value(zero.output), t.value(standard));
    Tensor scaled = t.value(standard);
    for (double& x : scaled.data()) x *= 1.0 - lambda;
    const double e1 = max_abs_diff(t.value(shared.output), scaled);
    double e2 = 0.0;
    const Tensor& c = t.value(general.combined);
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (double x : c.row(r)) s += x;
        e2 = std::max(e2, std::abs(s - (1.0 - lambda)));
    }
    const bool ok = e0 < 1e-12 && e1 < 1e-10 && e2 < 1e-8;
    return {"attention_identities", ok,
            "lambda=0 " + io::format_double(e0) + ", shared " + io::format_double(e1) + ", row sums " + io::format_double(e2)};
}

inline SuiteResult gradients() {
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
    cfg.seed = 3;
    const WDformerParameters params = init_parameters(cfg);
    Rng rng(4);
    const Tensor x = normal_tensor({3, 8}, 0.0, 1.0, rng);
    const Tensor y = normal_tensor({3, 8}, 0.0, 1.0, rng);
    auto loss = [&](const WDformerParameters& p, std::vector<double>* grad) {
        Tape tape;
        ParameterBinder bind(tape);
        const Var l = mse_loss(forward_tape(bind, x, 1, p, cfg, cfg.variant), y);
        if (grad) {
            tape.backward(l);
            *grad = flatten(bind.gradients(p));
        }
        return tape.value(l)[0];
    };
    std::vector<double> g;
    loss(params, &g);
    WDformerParameters work = params;
    const double err = grad_check(
        [&](std::span<const double> p) {
            unflatten(p, work);
            return loss(work, nullptr);
        },
        g, flatten(params));
    return {"gradients", err < 1e-4, pass_fail_detail(err, 1e-4)};
}

}  // namespace detail

/// Runs every property suite in a fixed order.
inline std::vector<SuiteResult> run_all(const Options& opts = {}) {
    const std::vector<std::pair<std::string, std::function<SuiteResult()>>> suites = {
        {"reconstruction", [&] { return detail::reconstruction(opts); }},
        {"split_wave", detail::split_wave_lengths},
        {"lambda_schedule", detail::lambda_schedule},
        {"attention_identities", detail::attention_identities},
        {"gradients", detail::gradients},
    };
    std::vector<SuiteResult> out;
    for (const auto& [name, run] : suites) {
        try {
            out.push_back(run());
        } catch (const std::exception& e) {
            out.push_back({name, false, e.what()});
        }
    }
    return out;
}

}  // namespace wdformer::selftest
