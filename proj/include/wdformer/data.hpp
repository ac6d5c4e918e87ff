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
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wdformer/errors.hpp"
#include "wdformer/io.hpp"
#include "wdformer/padding.hpp"
#include "wdformer/tensor.hpp"

namespace wdformer::data {

enum class Detect { automatic, yes, no };
enum class NanPolicy { drop, fail };

struct CsvOptions {
    char delimiter = ',';
    Detect header = Detect::automatic;
    Detect timestamp = Detect::automatic;  // leading non-numeric column
    NanPolicy nan_policy = NanPolicy::drop;
};

/// T x N matrix of observations plus labels. `origin` is the row offset of
/// this segment inside the dataset it was cut from.
struct TimeSeriesDataset {
    std::string name;
    std::vector<std::string> timestamps;  // empty when the source had none
    Tensor values;                        // T x N
    std::vector<std::string> variate_names;
    std::vector<std::string> warnings;
    std::size_t origin = 0;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t variates() const noexcept { return values.cols(); }

    TimeSeriesDataset segment(std::size_t begin, std::size_t count) const {
        if (count == 0 || begin + count > length()) throw PreconditionError("segment: range out of bounds");
        TimeSeriesDataset out;
        out.name = name;
        out.variate_names = variate_names;
        out.origin = origin + begin;
        const std::size_t n = variates();
        std::vector<double> v(values.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                              values.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
        out.values = Tensor({count, n}, std::move(v));
        if (!timestamps.empty()) {
            out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                                  timestamps.begin() + static_cast<std::ptrdiff_t>(begin + count));
        }
        return out;
    }
};

namespace detail {

inline bool is_nan_token(std::string_view s) {
    return s.empty() || s == "nan" || s == "NaN" || s == "NAN" || s == "NA" || s == "null";
}

inline bool is_numeric(std::string_view s) { return io::parse_double(s).has_value(); }

}  // namespace detail

/// Parses delimited text. `source` names the input in error messages.
inline TimeSeriesDataset parse_csv(std::istream& in, const std::string& source, const CsvOptions& opts = {}) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> lines;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (io::trim(line).empty()) continue;
        std::vector<std::string> cells;
        for (auto c : io::split(line, opts.delimiter)) cells.emplace_back(io::trim(c));
        lines.emplace_back(lineno, std::move(cells));
    }
    if (lines.empty()) throw DataError(source + ": file is empty");

    const auto& first = lines.front().second;
    bool header = opts.header == Detect::yes;
    if (opts.header == Detect::automatic) {
        for (std::size_t c = 1; c < first.size(); ++c) {
            if (!detail::is_numeric(first[c]) && !detail::is_nan_token(first[c])) header = true;
        }
        if (first.size() == 1 && !detail::is_numeric(first[0])) header = true;
    }
    const std::size_t data_begin = header ? 1 : 0;
    if (data_begin >= lines.size()) throw DataError(source + ": no data rows");

    bool timestamp = opts.timestamp == Detect::yes;
    if (opts.timestamp == Detect::automatic) {
        const auto& cell = lines[data_begin].second.front();
        timestamp = !detail::is_numeric(cell) && !detail::is_nan_token(cell);
    }
    const std::size_t width = lines[data_begin].second.size();
    const std::size_t first_col = timestamp ? 1 : 0;
    if (width <= first_col) throw DataError(source + ": no numeric columns");
    const std::size_t n = width - first_col;

    TimeSeriesDataset ds;
    ds.name = source;
    if (header) {
        if (first.size() != width) {
            throw DataError(source + ":" + std::to_string(lines.front().first) + ": header has " +
                            std::to_string(first.size()) + " cells, data rows have " + std::to_string(width));
        }
        ds.variate_names.assign(first.begin() + static_cast<std::ptrdiff_t>(first_col), first.end());
    } else {
        for (std::size_t c = 0; c < n; ++c) ds.variate_names.push_back("v" + std::to_string(c));
    }

    std::vector<double> values;
    std::size_t dropped = 0, first_dropped_line = 0;
    for (std::size_t i = data_begin; i < lines.size(); ++i) {
        const auto& [ln, cells] = lines[i];
        const std::string where = source + ":" + std::to_string(ln);
        if (cells.size() != width) {
            throw DataError(where + ": expected " + std::to_string(width) + " cells, got " + std::to_string(cells.size()));
        }
        std::vector<double> row(n);
        bool has_nan = false;
        for (std::size_t c = 0; c < n; ++c) {
            const std::string& cell = cells[first_col + c];
            if (auto v = io::parse_double(cell); v && std::isfinite(*v)) {
                row[c] = *v;
            } else if (detail::is_nan_token(cell) || (v && std::isnan(*v))) {
                has_nan = true;
            } else {
                throw DataError(where + ": non-numeric cell '" + cell + "' in column '" + ds.variate_names[c] + "'");
            }
        }
        if (has_nan) {
            if (opts.nan_policy == NanPolicy::fail) throw DataError(where + ": row contains a missing value");
            if (dropped++ == 0) first_dropped_line = ln;
            continue;
        }
        values.insert(values.end(), row.begin(), row.end());
        if (timestamp) ds.timestamps.push_back(cells.front());
    }
    if (dropped) {
        ds.warnings.push_back(source + ": dropped " + std::to_string(dropped) +
                              " row(s) with missing values (first at line " + std::to_string(first_dropped_line) + ")");
    }
    if (values.empty()) throw DataError(source + ": no usable rows after dropping missing values");
    const std::size_t rows = values.size() / n;
    ds.values = Tensor({rows, n}, std::move(values));
    return ds;
}

inline TimeSeriesDataset load_csv(const std::string& path, const CsvOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    return parse_csv(in, path, opts);
}

struct Split {
    TimeSeriesDataset train;
    TimeSeriesDataset val;
    TimeSeriesDataset test;
};

/// Contiguous train/val/test segments. Boundaries are floored; the
/// remainder goes to test. Each segment must hold at least `min_length` rows.
inline Split chronological_split(const TimeSeriesDataset& ds, std::size_t min_length = 0,
                                 std::array<std::size_t, 3> weights = {7, 1, 2}) {
    const std::size_t total_weight = weights[0] + weights[1] + weights[2];
    if (total_weight == 0) throw ConfigError("split: ratios must not all be zero");
    const std::size_t t = ds.length();
    const std::size_t n_train = t * weights[0] / total_weight;
    const std::size_t n_val = t * weights[1] / total_weight;
    const std::size_t n_test = t - n_train - n_val;
    for (auto [label, len] : {std::pair{"train", n_train}, std::pair{"val", n_val}, std::pair{"test", n_test}}) {
        if (len == 0 || len < min_length) {
            throw ConfigError(std::string("split: ") + label + " segment has " + std::to_string(len) +
                              " rows, needs at least " + std::to_string(std::max<std::size_t>(min_length, 1)) +
                              " for one window");
        }
    }
    return Split{ds.segment(0, n_train), ds.segment(n_train, n_val), ds.segment(n_train + n_val, n_test)};
}

/// A lookback/target pair laid out variate-major: x is N x K, y is N x F.
struct WindowSample {
    Tensor x;
    Tensor y;
    std::size_t start = 0;  // source row of x's first column
};

/// Lazily materialized sliding windows over one segment. Windows never
/// reach outside the segment.
class WindowIndex {
public:
    WindowIndex(const TimeSeriesDataset& segment, std::size_t lookback, std::size_t horizon, std::size_t stride = 1)
        : segment_(&segment), lookback_(lookback), horizon_(horizon), stride_(stride) {
        if (stride == 0) throw ConfigError("windows: stride must be >= 1");
        const std::size_t span = lookback + horizon;
        count_ = segment.length() >= span ? (segment.length() - span) / stride + 1 : 0;
    }

    std::size_t size() const noexcept { return count_; }
    std::size_t lookback() const noexcept { return lookback_; }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t local_start(std::size_t i) const noexcept { return i * stride_; }

    WindowSample operator[](std::size_t i) const {
        WindowSample w;
        fill(i, w);
        return w;
    }

    /// Writes window i's lookback and target into row blocks of two stacks.
    void stack_into(std::size_t i, Tensor& xs, Tensor& ys, std::size_t slot) const {
        const Tensor& v = segment_->values;
        const std::size_t n = v.cols(), s = local_start(i);
        for (std::size_t var = 0; var < n; ++var) {
            for (std::size_t k = 0; k < lookback_; ++k) xs(slot * n + var, k) = v(s + k, var);
            for (std::size_t f = 0; f < horizon_; ++f) ys(slot * n + var, f) = v(s + lookback_ + f, var);
        }
    }

private:
    void fill(std::size_t i, WindowSample& w) const {
        const std::size_t n = segment_->variates();
        w.x = Tensor::matrix(n, lookback_);
        w.y = Tensor::matrix(n, horizon_);
        stack_into(i, w.x, w.y, 0);
        w.start = segment_->origin + local_start(i);
    }

    const TimeSeriesDataset* segment_;
    std::size_t lookback_, horizon_, stride_;
    std::size_t count_ = 0;
};

/// All windows of a segment. An infeasible segment yields none and a warning.
inline std::vector<WindowSample> make_windows(const TimeSeriesDataset& segment, std::size_t lookback,
                                              std::size_t horizon, std::size_t stride = 1,
                                              std::vector<std::string>* warnings = nullptr) {
    WindowIndex idx(segment, lookback, horizon, stride);
    if (idx.size() == 0 && warnings) {
        warnings->push_back("windows: segment of " + std::to_string(segment.length()) + " rows is shorter than K+F=" +
                            std::to_string(lookback + horizon));
    }
    std::vector<WindowSample> out;
    out.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(idx[i]);
    return out;
}

/// Per-variate standardization with population (1/n) statistics.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t variates() const noexcept { return mean.size(); }

    /// T x N observations.
    Tensor transform(const Tensor& values) const { return apply(values, false, false); }
    Tensor inverse(const Tensor& values) const { return apply(values, true, false); }
    /// N x L variate-major blocks (windows and forecasts), possibly stacked.
    Tensor transform_rows(const Tensor& rows) const { return apply(rows, false, true); }
    Tensor inverse_rows(const Tensor& rows) const { return apply(rows, true, true); }

    TimeSeriesDataset transform(const TimeSeriesDataset& ds) const {
        TimeSeriesDataset out = ds;
        out.values = transform(ds.values);
        return out;
    }

private:
    Tensor apply(const Tensor& t, bool invert, bool variate_major) const {
        const std::size_t n = variates();
        if (variate_major ? (t.rows() % n != 0) : (t.cols() != n)) {
            throw DimensionError("scaler: fitted on " + std::to_string(n) + " variates, got " + shape_string(t.shape()));
        }
        Tensor out = t;
        for (std::size_t r = 0; r < t.rows(); ++r) {
            for (std::size_t c = 0; c < t.cols(); ++c) {
                const std::size_t var = variate_major ? r % n : c;
                double& v = out(r, c);
                v = invert ? v * stddev[var] + mean[var] : (v - mean[var]) / stddev[var];
            }
        }
        return out;
    }
};

inline Scaler fit_scaler(const TimeSeriesDataset& train) {
    if (train.length() == 0) throw DataError("scaler: training segment is empty");
    const std::size_t t = train.length(), n = train.variates();
    Scaler s{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (std::size_t var = 0; var < n; ++var) {
        double m = 0.0;
        for (std::size_t r = 0; r < t; ++r) m += train.values(r, var);
        m /= static_cast<double>(t);
        double v = 0.0;
        for (std::size_t r = 0; r < t; ++r) v += (train.values(r, var) - m) * (train.values(r, var) - m);
        const double sd = std::sqrt(v / static_cast<double>(t));
        if (!(sd > 0.0)) {
            const std::string label = var < train.variate_names.size() ? train.variate_names[var] : std::to_string(var);
            throw DataError("scaler: variate '" + label + "' is constant on the training segment");
        }
        s.mean[var] = m;
        s.stddev[var] = sd;
    }
    return s;
}

inline double mse(const Tensor& pred, const Tensor& truth) {
    if (pred.shape() != truth.shape()) {
        throw DimensionError("mse: shape mismatch " + shape_string(pred.shape()) + " vs " + shape_string(truth.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

inline double mae(const Tensor& pred, const Tensor& truth) {
    if (pred.shape() != truth.shape()) {
        throw DimensionError("mae: shape mismatch " + shape_string(pred.shape()) + " vs " + shape_string(truth.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

/// Running sums for metrics over many windows.
struct MetricAccumulator {
    double squared = 0.0;
    double absolute = 0.0;
    std::size_t count = 0;

    void add(const Tensor& pred, const Tensor& truth) {
        if (pred.shape() != truth.shape()) throw DimensionError("metrics: shape mismatch");
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double e = pred[i] - truth[i];
            squared += e * e;
            absolute += std::abs(e);
        }
        count += pred.size();
    }
    double mse() const { return count ? squared / static_cast<double>(count) : 0.0; }
    double mae() const { return count ? absolute / static_cast<double>(count) : 0.0; }
};

/// Long-format forecast export: window_id, variate, step (1..F), prediction, truth.
/// `truths` may be empty, in which case the truth column is left blank.
inline void write_forecast_csv(std::ostream& out, const std::vector<Tensor>& predictions,
                               const std::vector<Tensor>& truths, const std::vector<std::string>& variate_names,
                               bool with_truth = true) {
    out << "window_id,variate,step,prediction" << (with_truth ? ",truth" : "") << "\n";
    for (std::size_t w = 0; w < predictions.size(); ++w) {
        const Tensor& p = predictions[w];
        for (std::size_t var = 0; var < p.rows(); ++var) {
            const std::string& name = var < variate_names.size() ? variate_names[var] : std::to_string(var);
            for (std::size_t s = 0; s < p.cols(); ++s) {
                out << w << ',' << name << ',' << (s + 1) << ',' << io::format_double(p(var, s));
                if (with_truth) {
                    out << ',';
                    if (w < truths.size()) out << io::format_double(truths[w](var, s));
                }
                out << '\n';
            }
        }
    }
}

}  // namespace wdformer::data
