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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wdformer/data.hpp"
#include "wdformer/random.hpp"

using namespace wdformer;
using namespace wdformer::data;

namespace {

TimeSeriesDataset parse(const std::string& text, CsvOptions opts = {}) {
    std::istringstream in(text);
    return parse_csv(in, "fixture.csv", opts);
}

TimeSeriesDataset ramp(std::size_t t, std::size_t n = 2) {
    TimeSeriesDataset ds;
    ds.values = Tensor::matrix(t, n);
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < n; ++c) ds.values(r, c) = static_cast<double>(r) * (c + 1) + 0.5 * c;
    for (std::size_t c = 0; c < n; ++c) ds.variate_names.push_back("v" + std::to_string(c));
    return ds;
}

}  // namespace

TEST(LoadCsv, ThreeRowsTwoVariates) {
    const auto ds = parse("a,b\n1,2\n3,4\n5,6\n");
    EXPECT_EQ(ds.length(), 3u);
    EXPECT_EQ(ds.variates(), 2u);
    EXPECT_EQ(ds.variate_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.values, Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
    EXPECT_TRUE(ds.timestamps.empty());
}

TEST(LoadCsv, HeaderlessNumericFile) {
    const auto ds = parse("1,2\n3,4\n");
    EXPECT_EQ(ds.length(), 2u);
    EXPECT_EQ(ds.variate_names, (std::vector<std::string>{"v0", "v1"}));
}

TEST(LoadCsv, NanRowDroppedWithWarning) {
    const auto ds = parse("a,b\n1,2\n3,nan\n5,6\n");
    EXPECT_EQ(ds.length(), 2u);
    ASSERT_EQ(ds.warnings.size(), 1u);
    EXPECT_NE(ds.warnings[0].find("line 3"), std::string::npos);
    CsvOptions strict;
    strict.nan_policy = NanPolicy::fail;
    EXPECT_THROW(parse("a,b\n1,2\n3,\n", strict), DataError);
}

TEST(LoadCsv, EclStyleTimestampColumn) {
    const std::string text =
        "date,MT_001,MT_002,MT_003\n"
        "2012-01-01 00:00:00,14.0,69.0,234.0\n"
        "2012-01-01 01:00:00,18.0,92.0,312.0\n"
        "2012-01-01 02:00:00,21.0,96.0,312.0\n"
        "2012-01-01 03:00:00,20.0,92.0,300.5\n";
    const auto ds = parse(text);
    EXPECT_EQ(ds.variates(), 3u);
    EXPECT_EQ(ds.length(), 4u);
    EXPECT_EQ(ds.variate_names, (std::vector<std::string>{"MT_001", "MT_002", "MT_003"}));
    EXPECT_EQ(ds.timestamps.front(), "2012-01-01 00:00:00");
    EXPECT_DOUBLE_EQ(ds.values(3, 2), 300.5);

    // same file read from disk
    const auto path = std::filesystem::temp_directory_path() / "wdformer_ecl_fixture.csv";
    {
        std::ofstream out(path);
        out << text;
    }
    EXPECT_EQ(load_csv(path.string()).values, ds.values);
    std::filesystem::remove(path);
}

TEST(LoadCsv, TimestampOverride) {
    CsvOptions opts;
    opts.timestamp = Detect::yes;
    const auto ds = parse("t,x\n1,5\n2,6\n", opts);
    EXPECT_EQ(ds.variates(), 1u);
    EXPECT_EQ(ds.timestamps, (std::vector<std::string>{"1", "2"}));
}

TEST(LoadCsv, Errors) {
    EXPECT_THROW(load_csv("/nonexistent/data.csv"), DataError);
    try {
        parse("a,b\n1,2\n3,oops\n");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("fixture.csv:3"), std::string::npos) << e.what();
    }
    try {
        parse("a,b\n1,2\n3\n");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("fixture.csv:3: expected 2 cells, got 1"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse(""), DataError);
}

TEST(ChronologicalSplit, Ratios) {
    auto sizes = [](std::size_t t) {
        const auto s = chronological_split(ramp(t));
        return std::vector<std::size_t>{s.train.length(), s.val.length(), s.test.length()};
    };
    EXPECT_EQ(sizes(100), (std::vector<std::size_t>{70, 10, 20}));
    EXPECT_EQ(sizes(25635), (std::vector<std::size_t>{17944, 2563, 5128}));
    const auto s = chronological_split(ramp(100));
    EXPECT_EQ(s.val.origin, 70u);
    EXPECT_EQ(s.test.origin, 80u);
    EXPECT_DOUBLE_EQ(s.test.values(0, 0), 80.0);
}

TEST(ChronologicalSplit, InfeasibleIsConfigError) { EXPECT_THROW(chronological_split(ramp(10), 16), ConfigError); }

TEST(MakeWindows, Counts) {
    EXPECT_EQ(make_windows(ramp(200), 96, 96).size(), 9u);
    EXPECT_EQ(make_windows(ramp(192), 96, 96).size(), 1u);
    std::vector<std::string> warnings;
    EXPECT_TRUE(make_windows(ramp(100), 96, 96, 1, &warnings).empty());
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(MakeWindows, NonOverlappingStride) {
    const auto w = make_windows(ramp(50), 4, 6, 10);
    ASSERT_EQ(w.size(), 5u);
    for (std::size_t i = 1; i < w.size(); ++i) EXPECT_EQ(w[i].start, w[i - 1].start + 10);
}

TEST(MakeWindows, LayoutIsVariateMajorAndContiguous) {
    const auto w = make_windows(ramp(20), 3, 2);
    const auto& s = w[4];
    EXPECT_EQ(s.x.shape(), (Shape{2, 3}));
    EXPECT_EQ(s.y.shape(), (Shape{2, 2}));
    EXPECT_DOUBLE_EQ(s.x(0, 0), 4.0);
    EXPECT_DOUBLE_EQ(s.x(0, 2), 6.0);
    EXPECT_DOUBLE_EQ(s.y(0, 0), 7.0);  // y starts right after x
    EXPECT_DOUBLE_EQ(s.y(1, 1), 8.0 * 2 + 0.5);
}

TEST(MakeWindows, CountFormulaSweep) {
    for (std::size_t t = 1; t < 60; t += 3)
        for (std::size_t k = 1; k < 12; k += 2)
            for (std::size_t f = 1; f < 12; f += 3)
                for (std::size_t stride = 1; stride < 6; ++stride) {
                    const std::size_t expected = t >= k + f ? (t - k - f) / stride + 1 : 0;
                    EXPECT_EQ(WindowIndex(ramp(t, 1), k, f, stride).size(), expected);
                }
}

TEST(MakeWindows, NoLeakageAcrossSplits) {
    const auto ds = ramp(400);
    const auto s = chronological_split(ds, 24);
    const auto train_end = s.train.origin + s.train.length();
    for (const auto& seg : {&s.val, &s.test}) {
        for (const auto& w : make_windows(*seg, 16, 8)) {
            EXPECT_GE(w.start, train_end);
            EXPECT_LE(w.start + 24, seg->origin + seg->length());
        }
    }
    for (const auto& w : make_windows(s.train, 16, 8)) EXPECT_LE(w.start + 24, train_end);
}

TEST(Scaler, PopulationStatistics) {
    TimeSeriesDataset train;
    train.values = Tensor::from_rows({{1}, {3}});
    const Scaler s = fit_scaler(train);
    EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(s.stddev[0], 1.0);
}

TEST(Scaler, RoundTrip) {
    Rng rng(1);
    auto ds = ramp(30, 3);
    const Scaler s = fit_scaler(ds);
    const Tensor m = uniform_tensor({12, 3}, -100, 100, rng);
    EXPECT_LT(max_abs_diff(s.inverse(s.transform(m)), m), 1e-12);
    const Tensor rows = uniform_tensor({6, 5}, -100, 100, rng);
    EXPECT_LT(max_abs_diff(s.inverse_rows(s.transform_rows(rows)), rows), 1e-12);
}

TEST(Scaler, UsesTrainStatisticsOnly) {
    const auto ds = ramp(100);
    const auto split = chronological_split(ds);
    const Scaler s = fit_scaler(split.train);
    const auto test_scaled = s.transform(split.test);
    // test mean is far above train mean, so scaled values stay large and positive
    EXPECT_GT(test_scaled.values(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(test_scaled.values(0, 0), (split.test.values(0, 0) - s.mean[0]) / s.stddev[0]);
    // refitting on train + val gives different statistics
    const Scaler wider = fit_scaler(ds.segment(0, split.train.length() + split.val.length()));
    EXPECT_NE(wider.mean[0], s.mean[0]);
}

TEST(Scaler, ConstantVariateIsDataError) {
    TimeSeriesDataset ds;
    ds.values = Tensor::from_rows({{1, 5}, {2, 5}, {3, 5}});
    ds.variate_names = {"ok", "flat"};
    try {
        fit_scaler(ds);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'flat'"), std::string::npos);
    }
}

TEST(Metrics, Examples) {
    const Tensor a = Tensor::vector({1, 3}), b = Tensor::vector({1, 2});
    EXPECT_EQ(mse(a, a), 0.0);
    EXPECT_EQ(mae(a, a), 0.0);
    EXPECT_DOUBLE_EQ(mse(a, b), 0.5);
    EXPECT_DOUBLE_EQ(mae(a, b), 0.5);
    Tensor shifted = a;
    for (double& v : shifted.data()) v -= 0.75;
    EXPECT_DOUBLE_EQ(mse(a, shifted), 0.5625);
    EXPECT_DOUBLE_EQ(mae(a, shifted), 0.75);
    EXPECT_THROW(mse(a, Tensor::vector({1, 2, 3})), DimensionError);
}

TEST(Metrics, PermutationInvariantAndNonnegative) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor p = uniform_tensor({12}, -3, 3, rng), t = uniform_tensor({12}, -3, 3, rng);
        std::vector<std::size_t> perm(12);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor pp = p, tp = t;
        for (std::size_t i = 0; i < 12; ++i) pp[i] = p[perm[i]], tp[i] = t[perm[i]];
        EXPECT_NEAR(mse(p, t), mse(pp, tp), 1e-12);
        EXPECT_NEAR(mae(p, t), mae(pp, tp), 1e-12);
        EXPECT_GT(mse(p, t), 0.0);
        EXPECT_GE(mae(p, t), 0.0);
    }
}

TEST(Padding, Examples) {
    EXPECT_FALSE(pad_to_divisible(96, 3).padded());
    const auto info = pad_to_divisible(100, 3);
    EXPECT_EQ(info.padded_length, 104u);
    const Tensor x = Tensor::from_rows({{1, 2, 3}});
    const auto p3 = pad_to_divisible(3, 2);
    const Tensor padded = pad_rows(x, p3);
    EXPECT_EQ(padded, Tensor::from_rows({{1, 2, 3, 3}}));
    EXPECT_EQ(truncate_rows(padded, p3), x);
}

TEST(ForecastCsv, RowCountAndColumns) {
    std::ostringstream out;
    const std::vector<Tensor> preds = {Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{5, 6}, {7, 8}})};
    write_forecast_csv(out, preds, preds, {"a", "b"});
    const std::string s = out.str();
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 2 * 2 * 2);
    EXPECT_NE(s.find("window_id,variate,step,prediction,truth\n0,a,1,1,1\n"), std::string::npos);
}
