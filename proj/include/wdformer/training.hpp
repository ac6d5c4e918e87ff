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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "wdformer/autodiff.hpp"
#include "wdformer/data.hpp"
#include "wdformer/errors.hpp"
#include "wdformer/io.hpp"
#include "wdformer/model.hpp"
#include "wdformer/model_config.hpp"
#include "wdformer/random.hpp"

namespace wdformer {

enum class MetricSpace { scaled, original };

inline std::string_view metric_space_name(MetricSpace s) { return s == MetricSpace::scaled ? "scaled" : "original"; }

inline MetricSpace parse_metric_space(std::string_view s) {
    if (s == "scaled") return MetricSpace::scaled;
    if (s == "original") return MetricSpace::original;
    throw ConfigError("train.metric_space: expected scaled or original, got '" + std::string(s) + "'");
}

inline constexpr double kDivergenceLoss = 1e6;

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t patience = 3;
    std::optional<double> clip_norm;  // global gradient norm cap, off when empty
    std::uint64_t seed = 2024;        // batch order and dropout
    MetricSpace metric_space = MetricSpace::scaled;
    std::size_t stride = 1;  // training window stride; evaluation always uses every window

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (epochs == 0) v.emplace_back("train.epochs must be >= 1");
        if (batch_size == 0) v.emplace_back("train.batch_size must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) v.emplace_back("train.lr must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) v.emplace_back("train.beta1 must lie in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) v.emplace_back("train.beta2 must lie in [0, 1)");
        if (!(eps > 0.0)) v.emplace_back("train.eps must be > 0");
        if (clip_norm && !(*clip_norm > 0.0)) v.emplace_back("train.clip must be > 0 (or none)");
        if (stride == 0) v.emplace_back("train.stride must be >= 1");
        return v;
    }

    void validate() const {
        const auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid train config:";
        for (const auto& s : v) msg += " " + s + ";";
        throw ConfigError(msg);
    }

    std::vector<std::pair<std::string, std::string>> to_key_values() const {
        return {
            {"train.epochs", std::to_string(epochs)},
            {"train.batch_size", std::to_string(batch_size)},
            {"train.lr", io::format_double(learning_rate)},
            {"train.beta1", io::format_double(beta1)},
            {"train.beta2", io::format_double(beta2)},
            {"train.eps", io::format_double(eps)},
            {"train.patience", std::to_string(patience)},
            {"train.clip", clip_norm ? io::format_double(*clip_norm) : "none"},
            {"train.seed", std::to_string(seed)},
            {"train.metric_space", std::string(metric_space_name(metric_space))},
            {"train.stride", std::to_string(stride)},
        };
    }

    /// Applies one `train.*` key. Returns false for keys it does not own.
    bool set(std::string_view key, std::string_view value, std::vector<std::string>& errors) {
        auto size_field = [&](std::size_t& field) {
            const auto n = io::parse_int(value);
            if (!n || *n < 0) {
                errors.push_back(std::string(key) + ": expected a non-negative integer, got '" + std::string(value) + "'");
            } else {
                field = static_cast<std::size_t>(*n);
            }
        };
        auto real_field = [&](double& field) {
            const auto d = io::parse_double(value);
            if (!d) errors.push_back(std::string(key) + ": expected a number, got '" + std::string(value) + "'");
            else field = *d;
        };
        if (key == "train.epochs") size_field(epochs);
        else if (key == "train.batch_size") size_field(batch_size);
        else if (key == "train.lr") real_field(learning_rate);
        else if (key == "train.beta1") real_field(beta1);
        else if (key == "train.beta2") real_field(beta2);
        else if (key == "train.eps") real_field(eps);
        else if (key == "train.patience") size_field(patience);
        else if (key == "train.clip") {
            if (value == "none" || value == "off") {
                clip_norm.reset();
            } else {
                double c = 0.0;
                real_field(c);
                clip_norm = c;
            }
        } else if (key == "train.seed") {
            const auto n = io::parse_int(value);
            if (!n || *n < 0) errors.push_back("train.seed: expected a non-negative integer, got '" + std::string(value) + "'");
            else seed = static_cast<std::uint64_t>(*n);
        } else if (key == "train.metric_space") {
            try {
                metric_space = parse_metric_space(value);
            } catch (const ConfigError& e) {
                errors.emplace_back(e.what());
            }
        } else if (key == "train.stride") size_field(stride);
        else return false;
        return true;
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---------------------------------------------------------------- Adam

/// One bias-corrected Adam update over flat buffers; t is the 1-based step.
inline void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                        std::size_t t, const TrainConfig& cfg) {
    if (t < 1) throw PreconditionError("adam: step index must be >= 1");
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
        throw DimensionError("adam: parameter, gradient and moment sizes differ");
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

struct AdamState {
    std::size_t step = 0;
    WDformerParameters m;
    WDformerParameters v;

    static AdamState for_parameters(const WDformerParameters& p) { return {0, zeros_like(p), zeros_like(p)}; }
};

inline double global_norm(const WDformerParameters& g) {
    double s = 0.0;
    for_each_parameter(g, [&](const std::string&, const Tensor& t) {
        for (double x : t.data()) s += x * x;
    });
    return std::sqrt(s);
}

/// Applies one Adam step to every parameter. A non-finite gradient aborts
/// before anything is modified.
inline void adam_step(WDformerParameters& params, WDformerParameters grads, AdamState& state, const TrainConfig& cfg) {
    for_each_parameter(std::as_const(grads), [](const std::string& name, const Tensor& t) {
        if (!t.all_finite()) throw NumericalError("adam: non-finite gradient in " + name);
    });
    if (cfg.clip_norm) {
        const double norm = global_norm(grads);
        if (norm > *cfg.clip_norm) {
            const double s = *cfg.clip_norm / norm;
            for_each_parameter(grads, [&](const std::string&, Tensor& t) {
                for (double& x : t.data()) x *= s;
            });
        }
    }
    if (parameter_count(state.m) != parameter_count(params)) state = AdamState::for_parameters(params);
    ++state.step;
    auto p = named_parameters(params);
    auto g = named_parameters(std::as_const(grads));
    auto m = named_parameters(state.m);
    auto v = named_parameters(state.v);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].second->shape() != g[i].second->shape()) throw DimensionError("adam: gradient shape mismatch for " + p[i].first);
        adam_update(p[i].second->data(), g[i].second->data(), m[i].second->data(), v[i].second->data(), state.step, cfg);
    }
}

// ---------------------------------------------------------------- early stopping

/// Tracks the best validation loss. Stops once `max(patience, 1)`
/// consecutive epochs fail to improve on it.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Returns true when `val_loss` is a new best.
    bool update(double val_loss) {
        ++epoch_;
        if (val_loss < best_) {
            best_ = val_loss;
            best_epoch_ = epoch_;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }

    bool should_stop() const noexcept { return stale_ >= std::max<std::size_t>(patience_, 1); }
    double best() const noexcept { return best_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t stale_ = 0;
    std::size_t best_epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------- prediction

/// Stacks windows [begin, begin + count) of `idx` into (count * N) x K and x F blocks.
inline std::pair<Tensor, Tensor> stack_windows(const data::WindowIndex& idx, std::span<const std::size_t> order,
                                               std::size_t n) {
    Tensor xs = Tensor::matrix(order.size() * n, idx.lookback());
    Tensor ys = Tensor::matrix(order.size() * n, idx.horizon());
    for (std::size_t i = 0; i < order.size(); ++i) idx.stack_into(order[i], xs, ys, i);
    return {std::move(xs), std::move(ys)};
}

/// Evaluation-mode forecast for a stack of `batch` windows.
inline Tensor predict_batch(const WDformerParameters& params, const ModelConfig& cfg, const Tensor& xs,
                            std::size_t batch) {
    Tape tape;
    tape.set_grad_enabled(false);
    ParameterBinder bind(tape, false);
    return tape.value(forward_tape(bind, xs, batch, params, cfg, cfg.variant));
}

/// Forecasts for stacked N x K lookbacks (rows = windows * N), processed in
/// chunks of `batch_size` windows. Row results do not depend on chunking.
inline Tensor predict_stack(const WDformerParameters& params, const ModelConfig& cfg, const Tensor& xs,
                            std::size_t batch_size) {
    const std::size_t n = cfg.variates;
    const std::size_t windows = xs.rows() / n;
    Tensor out = Tensor::matrix(xs.rows(), cfg.horizon);
    for (std::size_t b = 0; b < windows; b += batch_size) {
        const std::size_t count = std::min(batch_size, windows - b);
        Tensor chunk = Tensor::matrix(count * n, cfg.lookback);
        std::copy_n(xs.data().begin() + static_cast<std::ptrdiff_t>(b * n * cfg.lookback), chunk.size(),
                    chunk.data().begin());
        const Tensor pred = predict_batch(params, cfg, chunk, count);
        std::copy(pred.data().begin(), pred.data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(b * n * cfg.horizon));
    }
    return out;
}

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t windows = 0;
};

struct EvalResult {
    Metrics metrics;
    MetricSpace space = MetricSpace::scaled;
    std::vector<Tensor> predictions;  // N x F per window, original units
    std::vector<Tensor> truths;       // N x F per window, original units
    std::vector<std::size_t> starts;  // dataset row of each window's first lookback step
};

/// Forecasts every window of a raw (unscaled) segment and scores it in `space`.
inline EvalResult evaluate(const WDformerParameters& params, const ModelConfig& cfg, const data::TimeSeriesDataset& raw,
                           const data::Scaler& scaler, MetricSpace space, std::size_t batch_size = 32) {
    if (raw.variates() != cfg.variates) {
        throw DimensionError("evaluate: model expects N=" + std::to_string(cfg.variates) + " variates, data has " +
                             std::to_string(raw.variates()));
    }
    const data::TimeSeriesDataset scaled = scaler.transform(raw);
    const data::WindowIndex idx(scaled, cfg.lookback, cfg.horizon);
    const data::WindowIndex raw_idx(raw, cfg.lookback, cfg.horizon);
    EvalResult r;
    r.space = space;
    data::MetricAccumulator acc;
    const std::size_t n = cfg.variates;
    for (std::size_t b = 0; b < idx.size(); b += batch_size) {
        const std::size_t count = std::min(batch_size, idx.size() - b);
        std::vector<std::size_t> order(count);
        std::iota(order.begin(), order.end(), b);
        const auto [xs, ys] = stack_windows(idx, order, n);
        const auto [raw_xs, raw_ys] = stack_windows(raw_idx, order, n);
        const Tensor pred = predict_batch(params, cfg, xs, count);
        const Tensor pred_original = scaler.inverse_rows(pred);
        if (space == MetricSpace::scaled) acc.add(pred, ys);
        else acc.add(pred_original, raw_ys);
        for (std::size_t i = 0; i < count; ++i) {
            Tensor p = Tensor::matrix(n, cfg.horizon), t = Tensor::matrix(n, cfg.horizon);
            for (std::size_t var = 0; var < n; ++var) {
                std::copy_n(pred_original.row(i * n + var).begin(), cfg.horizon, p.row(var).begin());
                std::copy_n(raw_ys.row(i * n + var).begin(), cfg.horizon, t.row(var).begin());
            }
            r.predictions.push_back(std::move(p));
            r.truths.push_back(std::move(t));
            r.starts.push_back(raw.origin + idx.local_start(b + i));
        }
    }
    r.metrics = {acc.mse(), acc.mae(), idx.size()};
    return r;
}

/// Repeat-last-value forecast over every window of `segment`, in the segment's units.
inline Metrics naive_baseline(const data::TimeSeriesDataset& segment, std::size_t lookback, std::size_t horizon) {
    const data::WindowIndex idx(segment, lookback, horizon);
    data::MetricAccumulator acc;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto w = idx[i];
        Tensor pred = Tensor::matrix(w.y.rows(), horizon);
        for (std::size_t var = 0; var < w.y.rows(); ++var) {
            for (std::size_t f = 0; f < horizon; ++f) pred(var, f) = w.x(var, lookback - 1);
        }
        acc.add(pred, w.y);
    }
    return {acc.mse(), acc.mae(), idx.size()};
}

// ---------------------------------------------------------------- trainer

/// One optimization state: parameters, Adam moments and the PRNG driving
/// batch order and dropout.
class Trainer {
public:
    Trainer(ModelConfig model, TrainConfig train, WDformerParameters params)
        : model_(std::move(model)), train_(std::move(train)), params_(std::move(params)), rng_(train_.seed),
          adam_(AdamState::for_parameters(params_)) {}

    /// One gradient step on a stack of `batch` windows; returns the loss.
    double step(const Tensor& xs, const Tensor& ys, std::size_t batch) {
        Tape tape;
        ParameterBinder bind(tape);
        ForwardOptions opts;
        opts.training = true;
        opts.rng = &rng_;
        const Var pred = forward_tape(bind, xs, batch, params_, model_, model_.variant, opts);
        const Var loss = mse_loss(pred, ys);
        const double value = tape.value(loss)[0];
        if (!std::isfinite(value) || value > kDivergenceLoss) {
            throw NumericalError("train: diverged at step " + std::to_string(adam_.step + 1) + " with loss " +
                                 io::format_double(value) + " (limit " + io::format_double(kDivergenceLoss) + ")");
        }
        tape.backward(loss);
        adam_step(params_, bind.gradients(params_), adam_, train_);
        return value;
    }

    /// Mean training loss over one shuffled pass.
    double epoch(const data::WindowIndex& idx) {
        std::vector<std::size_t> order(idx.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng_);
        double total = 0.0;
        for (std::size_t b = 0; b < order.size(); b += train_.batch_size) {
            const std::size_t count = std::min(train_.batch_size, order.size() - b);
            const auto [xs, ys] = stack_windows(idx, std::span(order).subspan(b, count), model_.variates);
            total += step(xs, ys, count) * static_cast<double>(count);
        }
        return total / static_cast<double>(order.size());
    }

    /// Evaluation-mode MSE over every window of a scaled segment.
    double loss(const data::WindowIndex& idx) const {
        data::MetricAccumulator acc;
        for (std::size_t b = 0; b < idx.size(); b += train_.batch_size) {
            const std::size_t count = std::min(train_.batch_size, idx.size() - b);
            std::vector<std::size_t> order(count);
            std::iota(order.begin(), order.end(), b);
            const auto [xs, ys] = stack_windows(idx, order, model_.variates);
            acc.add(predict_batch(params_, model_, xs, count), ys);
        }
        return acc.mse();
    }

    const WDformerParameters& parameters() const noexcept { return params_; }
    WDformerParameters& parameters() noexcept { return params_; }
    const AdamState& adam() const noexcept { return adam_; }
    std::size_t steps() const noexcept { return adam_.step; }

private:
    ModelConfig model_;
    TrainConfig train_;
    WDformerParameters params_;
    Rng rng_;
    AdamState adam_;
};

// ---------------------------------------------------------------- reports

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;  // wall clock; not serialized, ignored by ==

    friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
        return a.epoch == b.epoch && a.train_loss == b.train_loss && a.val_loss == b.val_loss;
    }
};

struct RunReport {
    std::string variant = "full";
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
    std::size_t steps = 0;
    MetricSpace space = MetricSpace::scaled;
    std::size_t horizon = 0;
    std::size_t test_windows = 0;
    double test_mse = 0.0;
    double test_mae = 0.0;
    double naive_mse = 0.0;
    double naive_mae = 0.0;

    friend bool operator==(const RunReport&, const RunReport&) = default;
};

inline std::string serialize_run_report(const RunReport& r) {
    std::ostringstream o;
    o << "# wdformer run report\n";
    o << "format = 1\n";
    o << "variant = " << r.variant << "\n";
    for (const auto& [k, v] : r.config) o << "config." << k << " = " << v << "\n";
    o << "best_epoch = " << r.best_epoch << "\n";
    o << "best_val_loss = " << io::format_double(r.best_val_loss) << "\n";
    o << "early_stopped = " << (r.early_stopped ? "true" : "false") << "\n";
    o << "steps = " << r.steps << "\n";
    o << "metric_space = " << metric_space_name(r.space) << "\n";
    o << "horizon = " << r.horizon << "\n";
    o << "test_windows = " << r.test_windows << "\n";
    const std::string h = "F" + std::to_string(r.horizon);
    o << "test." << h << ".mse = " << io::format_double(r.test_mse) << "\n";
    o << "test." << h << ".mae = " << io::format_double(r.test_mae) << "\n";
    o << "naive." << h << ".mse = " << io::format_double(r.naive_mse) << "\n";
    o << "naive." << h << ".mae = " << io::format_double(r.naive_mae) << "\n";
    o << "epochs = " << r.epochs.size() << "\n";
    o << "epoch train_loss val_loss\n";
    for (const auto& e : r.epochs) {
        o << e.epoch << ' ' << io::format_double(e.train_loss) << ' ' << io::format_double(e.val_loss) << "\n";
    }
    return o.str();
}

namespace detail {

/// Splits "key = value"; returns false for lines without '='.
inline bool split_key_value(std::string_view line, std::string_view& key, std::string_view& value) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) return false;
    key = io::trim(line.substr(0, eq));
    value = io::trim(line.substr(eq + 1));
    return !key.empty();
}

template <class T>
T require_number(std::optional<T> v, std::string_view what) {
    if (!v) throw DataError("report: malformed value for " + std::string(what));
    return *v;
}

}  // namespace detail

inline RunReport parse_run_report(const std::string& text) {
    RunReport r;
    std::istringstream in(text);
    std::string line;
    std::size_t expected_epochs = 0;
    bool in_table = false;
    while (std::getline(in, line)) {
        const std::string_view l = io::trim(line);
        if (l.empty() || l.front() == '#') continue;
        if (in_table) {
            const auto cells = io::split(l, ' ');
            if (cells.size() != 3) throw DataError("report: malformed epoch row '" + std::string(l) + "'");
            EpochRecord e;
            e.epoch = static_cast<std::size_t>(detail::require_number(io::parse_int(cells[0]), "epoch"));
            e.train_loss = detail::require_number(io::parse_double(cells[1]), "train_loss");
            e.val_loss = detail::require_number(io::parse_double(cells[2]), "val_loss");
            r.epochs.push_back(e);
            continue;
        }
        if (l == "epoch train_loss val_loss") {
            in_table = true;
            continue;
        }
        std::string_view key, value;
        if (!detail::split_key_value(l, key, value)) throw DataError("report: malformed line '" + std::string(l) + "'");
        auto as_size = [&] { return static_cast<std::size_t>(detail::require_number(io::parse_int(value), key)); };
        auto as_real = [&] { return detail::require_number(io::parse_double(value), key); };
        if (key == "format") {
            if (value != "1") throw DataError("report: unsupported format " + std::string(value));
        } else if (key == "variant") r.variant = std::string(value);
        else if (key.starts_with("config.")) r.config.emplace_back(std::string(key.substr(7)), std::string(value));
        else if (key == "best_epoch") r.best_epoch = as_size();
        else if (key == "best_val_loss") r.best_val_loss = as_real();
        else if (key == "early_stopped") r.early_stopped = detail::require_number(io::parse_bool(value), key);
        else if (key == "steps") r.steps = as_size();
        else if (key == "metric_space") r.space = parse_metric_space(value);
        else if (key == "horizon") r.horizon = as_size();
        else if (key == "test_windows") r.test_windows = as_size();
        else if (key == "epochs") expected_epochs = as_size();
        else if (key.starts_with("test.") && key.ends_with(".mse")) r.test_mse = as_real();
        else if (key.starts_with("test.") && key.ends_with(".mae")) r.test_mae = as_real();
        else if (key.starts_with("naive.") && key.ends_with(".mse")) r.naive_mse = as_real();
        else if (key.starts_with("naive.") && key.ends_with(".mae")) r.naive_mae = as_real();
        else throw DataError("report: unknown key '" + std::string(key) + "'");
    }
    if (r.epochs.size() != expected_epochs) throw DataError("report: epoch table has the wrong number of rows");
    return r;
}

// ---------------------------------------------------------------- training

struct TrainResult {
    ModelConfig model;  // with N taken from the data
    WDformerParameters params;
    data::Scaler scaler;
    RunReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Splits 7:1:2, standardizes with train statistics, trains with Adam and
/// early stopping, restores the best-validation parameters and scores the
/// test segment.
inline TrainResult train(ModelConfig model, const TrainConfig& cfg, const data::TimeSeriesDataset& dataset,
                         const EpochCallback& on_epoch = {}) {
    model.variates = dataset.variates();
    model.validate();
    cfg.validate();
    const data::Split split = data::chronological_split(dataset, model.lookback + model.horizon);
    const data::Scaler scaler = data::fit_scaler(split.train);
    const data::TimeSeriesDataset train_scaled = scaler.transform(split.train);
    const data::TimeSeriesDataset val_scaled = scaler.transform(split.val);
    const data::WindowIndex train_idx(train_scaled, model.lookback, model.horizon, cfg.stride);
    const data::WindowIndex val_idx(val_scaled, model.lookback, model.horizon);

    Trainer trainer(model, cfg, init_parameters(model));
    EarlyStopping stopper(cfg.patience);
    WDformerParameters best = trainer.parameters();
    RunReport report;
    report.variant = std::string(variant_name(model.variant));
    report.config = model.to_key_values();
    for (auto& kv : cfg.to_key_values()) report.config.push_back(std::move(kv));

    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = e;
        rec.train_loss = trainer.epoch(train_idx);
        rec.val_loss = trainer.loss(val_idx);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(rec.val_loss)) throw NumericalError("train: validation loss is not finite at epoch " + std::to_string(e));
        report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (stopper.update(rec.val_loss)) best = trainer.parameters();
        if (stopper.should_stop() && e < cfg.epochs) {
            report.early_stopped = true;
            break;
        }
    }
    report.best_epoch = stopper.best_epoch();
    report.best_val_loss = stopper.best();
    report.steps = trainer.steps();

    const EvalResult test = evaluate(best, model, split.test, scaler, cfg.metric_space, cfg.batch_size);
    const Metrics naive = naive_baseline(cfg.metric_space == MetricSpace::scaled ? scaler.transform(split.test) : split.test,
                                         model.lookback, model.horizon);
    report.space = cfg.metric_space;
    report.horizon = model.horizon;
    report.test_windows = test.metrics.windows;
    report.test_mse = test.metrics.mse;
    report.test_mae = test.metrics.mae;
    report.naive_mse = naive.mse;
    report.naive_mae = naive.mae;
    return {std::move(model), std::move(best), scaler, std::move(report)};
}

// ---------------------------------------------------------------- ablation

/// Worker cap from WDF_THREADS, else the hardware concurrency.
inline std::size_t ablation_threads() {
    if (const char* env = std::getenv("WDF_THREADS"); env && *env) {
        const auto n = io::parse_int(env);
        if (!n || *n < 1) throw ConfigError("WDF_THREADS: expected a positive integer, got '" + std::string(env) + "'");
        return static_cast<std::size_t>(*n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct AblationReport {
    std::uint64_t seed = 0;
    MetricSpace space = MetricSpace::scaled;
    std::vector<std::size_t> horizons;
    std::vector<Variant> variants;
    std::vector<RunReport> runs;  // variant-major, one per (variant, horizon)

    const RunReport& run(Variant v, std::size_t horizon) const {
        for (std::size_t i = 0; i < variants.size(); ++i) {
            if (variants[i] != v) continue;
            for (std::size_t j = 0; j < horizons.size(); ++j) {
                if (horizons[j] == horizon) return runs[i * horizons.size() + j];
            }
        }
        throw PreconditionError("ablation: no run for " + std::string(variant_name(v)) + " at F=" + std::to_string(horizon));
    }
};

/// Trains every variant at every horizon under one protocol. Variant i uses
/// seeds base + i for both initialization and batch order.
inline AblationReport run_ablation(const data::TimeSeriesDataset& dataset, const ModelConfig& model,
                                   const TrainConfig& cfg, std::vector<std::size_t> horizons = {},
                                   std::size_t threads = 0) {
    if (horizons.empty()) horizons.push_back(model.horizon);
    AblationReport rep;
    rep.seed = model.seed;
    rep.space = cfg.metric_space;
    rep.horizons = horizons;
    rep.variants.assign(std::begin(kAllVariants), std::end(kAllVariants));

    struct Job {
        ModelConfig model;
        TrainConfig train;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < rep.variants.size(); ++i) {
        for (std::size_t f : horizons) {
            Job j{model, cfg};
            j.model.variant = rep.variants[i];
            j.model.horizon = f;
            j.model.seed = model.seed + i;
            j.train.seed = cfg.seed + i;
            j.model.variates = dataset.variates();
            j.model.validate();
            jobs.push_back(std::move(j));
        }
    }
    cfg.validate();
    rep.runs.resize(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    auto run_job = [&](std::size_t i) {
        try {
            rep.runs[i] = train(jobs[i].model, jobs[i].train, dataset).report;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t workers = std::min(threads ? threads : ablation_threads(), jobs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < jobs.size(); i = next++) run_job(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return rep;
}

inline std::string serialize_ablation(const AblationReport& r) {
    std::ostringstream o;
    o << "# wdformer ablation\n";
    o << "seed = " << r.seed << "\n";
    o << "metric_space = " << metric_space_name(r.space) << "\n";
    o << "horizons =";
    for (std::size_t f : r.horizons) o << ' ' << f;
    o << "\nvariant";
    for (std::size_t f : r.horizons) o << " mse@" << f << " mae@" << f;
    o << "\n";
    for (std::size_t i = 0; i < r.variants.size(); ++i) {
        o << variant_name(r.variants[i]);
        for (std::size_t j = 0; j < r.horizons.size(); ++j) {
            const RunReport& run = r.runs[i * r.horizons.size() + j];
            o << ' ' << io::format_double(run.test_mse) << ' ' << io::format_double(run.test_mae);
        }
        o << "\n";
    }
    return o.str();
}

/// Reads the comparison table back; runs carry only variant, horizon and metrics.
inline AblationReport parse_ablation(const std::string& text) {
    AblationReport r;
    std::istringstream in(text);
    std::string line;
    bool in_table = false;
    while (std::getline(in, line)) {
        const std::string_view l = io::trim(line);
        if (l.empty() || l.front() == '#') continue;
        if (in_table) {
            std::vector<std::string_view> cells;
            for (auto c : io::split(l, ' ')) {
                if (!c.empty()) cells.push_back(c);
            }
            if (cells.size() != 1 + 2 * r.horizons.size()) throw DataError("ablation: malformed row '" + std::string(l) + "'");
            const Variant v = parse_variant(cells[0]);
            r.variants.push_back(v);
            for (std::size_t j = 0; j < r.horizons.size(); ++j) {
                RunReport run;
                run.variant = std::string(variant_name(v));
                run.horizon = r.horizons[j];
                run.space = r.space;
                run.test_mse = detail::require_number(io::parse_double(cells[1 + 2 * j]), "mse");
                run.test_mae = detail::require_number(io::parse_double(cells[2 + 2 * j]), "mae");
                r.runs.push_back(std::move(run));
            }
            continue;
        }
        if (l.starts_with("variant ")) {
            in_table = true;
            continue;
        }
        std::string_view key, value;
        if (!detail::split_key_value(l, key, value)) throw DataError("ablation: malformed line '" + std::string(l) + "'");
        if (key == "seed") r.seed = static_cast<std::uint64_t>(detail::require_number(io::parse_int(value), key));
        else if (key == "metric_space") r.space = parse_metric_space(value);
        else if (key == "horizons") {
            for (auto c : io::split(value, ' ')) {
                if (!c.empty()) r.horizons.push_back(static_cast<std::size_t>(detail::require_number(io::parse_int(c), key)));
            }
        } else throw DataError("ablation: unknown key '" + std::string(key) + "'");
    }
    return r;
}

}  // namespace wdformer
