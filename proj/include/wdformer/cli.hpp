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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wdformer/checkpoint.hpp"
#include "wdformer/config.hpp"
#include "wdformer/data.hpp"
#include "wdformer/errors.hpp"
#include "wdformer/selftest.hpp"
#include "wdformer/training.hpp"

namespace wdformer::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kNumericalError = 3, kSelftestFailure = 4 };

struct Flags {
    std::optional<std::string> config, data, out, seed, horizon, levels, wavelet, variant;
    std::vector<std::string> sets;
    std::optional<std::string> checkpoint, split, horizons;
    std::size_t stride = 1;
    bool inject_filter_fault = false;
};

namespace detail {

inline std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

/// Config layers for `flags`; `base` is applied first (checkpoint settings).
inline RunConfig resolve(const Flags& f, bool horizon_is_model, const std::vector<KeyValue>& base = {}) {
    std::vector<std::string> errors;
    std::vector<std::vector<KeyValue>> layers{base};
    if (f.config) layers.push_back(read_config_file(*f.config, errors));
    std::vector<KeyValue> flags;
    for (const auto& s : f.sets) {
        if (auto kv = parse_override(s, errors); !kv.key.empty()) flags.push_back(std::move(kv));
    }
    auto flag = [&](const std::optional<std::string>& v, const char* key, const char* name) {
        if (v) flags.push_back({key, *v, std::string("flag --") + name});
    };
    flag(f.data, "data.path", "data");
    flag(f.out, "out.dir", "out");
    flag(f.seed, "model.seed", "seed");
    flag(f.seed, "train.seed", "seed");
    if (horizon_is_model) flag(f.horizon, "model.F", "horizon");
    flag(f.levels, "model.L", "levels");
    flag(f.wavelet, "model.wavelet", "wavelet");
    flag(f.variant, "model.variant", "variant");
    flag(f.horizons, "ablate.horizons", "horizons");
    layers.push_back(std::move(flags));
    return assemble_config(layers, std::move(errors));
}

inline data::TimeSeriesDataset load_data(const RunConfig& cfg, std::ostream& err) {
    if (cfg.data_path.empty()) throw ConfigError("data.path is required (use --data or a config file)");
    auto ds = data::load_csv(cfg.data_path, cfg.csv);
    for (const auto& w : ds.warnings) err << "warning: " << w << "\n";
    return ds;
}

inline std::filesystem::path prepare_out(const RunConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError("cannot write '" + path.string() + "'");
}

inline std::vector<KeyValue> checkpoint_layer(const Checkpoint& ck) {
    std::vector<KeyValue> kv;
    for (const auto& [k, v] : ck.model.to_key_values()) kv.push_back({k, v, "checkpoint"});
    for (const auto& [k, v] : ck.train.to_key_values()) kv.push_back({k, v, "checkpoint"});
    return kv;
}

/// Loads the checkpoint and the run config layered on top of it. Model
/// settings must agree with the checkpoint.
inline std::pair<Checkpoint, RunConfig> load_trained(const Flags& f) {
    // the checkpoint path may itself depend on out.dir from the config
    const RunConfig pre = resolve(f, false);
    const std::string path = f.checkpoint ? *f.checkpoint : (std::filesystem::path(pre.out_dir) / "checkpoint.txt").string();
    Checkpoint ck = load_checkpoint(path);
    RunConfig cfg = resolve(f, false, checkpoint_layer(ck));
    const auto want = ck.model.to_key_values(), got = cfg.model.to_key_values();
    std::vector<std::string> diffs;
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (want[i].second != got[i].second) {
            diffs.push_back(want[i].first + "=" + got[i].second + " conflicts with checkpoint value " + want[i].second);
        }
    }
    if (!diffs.empty()) {
        std::string msg = "configuration does not match checkpoint '" + path + "':";
        for (const auto& d : diffs) msg += " " + d + ";";
        throw ConfigError(msg);
    }
    return {std::move(ck), std::move(cfg)};
}

inline void check_variates(const Checkpoint& ck, const data::TimeSeriesDataset& ds) {
    if (ds.variates() != ck.model.variates) {
        throw ConfigError("variate count mismatch: checkpoint expects N=" + std::to_string(ck.model.variates) +
                          ", input has N=" + std::to_string(ds.variates()));
    }
}

inline Tensor first_columns(const Tensor& t, std::size_t count) {
    Tensor out = Tensor::matrix(t.rows(), count);
    for (std::size_t r = 0; r < t.rows(); ++r) std::copy_n(t.row(r).begin(), count, out.row(r).begin());
    return out;
}

inline const data::TimeSeriesDataset& pick_split(const data::Split& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "val") return s.val;
    if (name == "test") return s.test;
    throw ConfigError("--split: expected train, val, test or all, got '" + name + "'");
}

}  // namespace detail

inline int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = detail::resolve(f, true);
    const auto ds = detail::load_data(cfg, err);
    const auto result = train(cfg.model, cfg.train, ds, [&](const EpochRecord& e) {
        err << "epoch " << e.epoch << " train_loss=" << io::format_double(e.train_loss)
            << " val_loss=" << io::format_double(e.val_loss) << " seconds=" << e.seconds << "\n";
    });
    const auto dir = detail::prepare_out(cfg);
    Checkpoint ck{result.model, cfg.train, result.params, result.scaler, ds.variate_names};
    save_checkpoint((dir / "checkpoint.txt").string(), ck);
    detail::write_file(dir / "report.txt", serialize_run_report(result.report));
    std::ostringstream log;
    log << "epoch\ttrain_loss\tval_loss\n";
    for (const auto& e : result.report.epochs) {
        log << e.epoch << '\t' << io::format_double(e.train_loss) << '\t' << io::format_double(e.val_loss) << '\n';
    }
    detail::write_file(dir / "epochs.tsv", log.str());
    const auto& r = result.report;
    out << "train ok variant=" << r.variant << " epochs=" << r.epochs.size() << " best_epoch=" << r.best_epoch
        << " test_mse=" << io::format_double(r.test_mse) << " test_mae=" << io::format_double(r.test_mae)
        << " naive_mse=" << io::format_double(r.naive_mse) << " out=" << dir.string() << "\n";
    return kOk;
}

inline int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto [ck, cfg] = detail::load_trained(f);
    if (f.horizon && *f.horizon != std::to_string(ck.model.horizon)) {
        throw ConfigError("eval: --horizon " + *f.horizon + " differs from the trained horizon F=" +
                          std::to_string(ck.model.horizon));
    }
    const auto ds = detail::load_data(cfg, err);
    detail::check_variates(ck, ds);
    const std::string split_name = f.split.value_or("test");
    const auto split = data::chronological_split(ds, ck.model.lookback + ck.model.horizon);
    const auto& segment = detail::pick_split(split, split_name);
    const EvalResult r = evaluate(ck.params, ck.model, segment, ck.scaler, cfg.train.metric_space, cfg.train.batch_size);
    const auto dir = detail::prepare_out(cfg);
    std::ostringstream rep;
    rep << "# wdformer evaluation\nsplit = " << split_name << "\nmetric_space = " << metric_space_name(r.space)
        << "\nhorizon = " << ck.model.horizon << "\nwindows = " << r.metrics.windows
        << "\nmse = " << io::format_double(r.metrics.mse) << "\nmae = " << io::format_double(r.metrics.mae) << "\n";
    detail::write_file(dir / "eval_report.txt", rep.str());
    std::ostringstream csv;
    data::write_forecast_csv(csv, r.predictions, r.truths, ck.variate_names);
    detail::write_file(dir / "predictions.csv", csv.str());
    out << "eval ok split=" << split_name << " windows=" << r.metrics.windows
        << " mse=" << io::format_double(r.metrics.mse) << " mae=" << io::format_double(r.metrics.mae)
        << " metric_space=" << metric_space_name(r.space) << "\n";
    return kOk;
}

inline int cmd_forecast(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto [ck, cfg] = detail::load_trained(f);
    const std::size_t k = ck.model.lookback, trained_f = ck.model.horizon;
    std::size_t h = trained_f;
    if (f.horizon) {
        const auto v = io::parse_int(*f.horizon);
        if (!v || *v < 1) throw ConfigError("--horizon: expected a positive integer, got '" + *f.horizon + "'");
        if (static_cast<std::size_t>(*v) > trained_f) {
            throw ConfigError("--horizon " + *f.horizon + " exceeds the trained horizon F=" + std::to_string(trained_f));
        }
        h = static_cast<std::size_t>(*v);
    }
    if (f.stride == 0) throw ConfigError("--stride must be >= 1");
    const auto ds = detail::load_data(cfg, err);
    detail::check_variates(ck, ds);
    const std::string split_name = f.split.value_or("all");

    std::vector<Tensor> preds, truths;
    if (split_name == "all") {
        if (ds.length() < k) {
            throw ConfigError("forecast: input has " + std::to_string(ds.length()) + " rows, lookback K=" +
                              std::to_string(k) + " needs at least that many");
        }
        const std::size_t n = ds.variates();
        const Tensor scaled = ck.scaler.transform(ds.values);
        std::vector<std::size_t> starts;
        for (std::size_t s = 0; s + k <= ds.length(); s += f.stride) starts.push_back(s);
        Tensor xs = Tensor::matrix(starts.size() * n, k);
        for (std::size_t w = 0; w < starts.size(); ++w) {
            for (std::size_t var = 0; var < n; ++var) {
                for (std::size_t i = 0; i < k; ++i) xs(w * n + var, i) = scaled(starts[w] + i, var);
            }
        }
        const Tensor pred = ck.scaler.inverse_rows(predict_stack(ck.params, ck.model, xs, cfg.train.batch_size));
        for (std::size_t w = 0; w < starts.size(); ++w) {
            Tensor p = Tensor::matrix(n, trained_f);
            for (std::size_t var = 0; var < n; ++var) {
                std::copy_n(pred.row(w * n + var).begin(), trained_f, p.row(var).begin());
            }
            preds.push_back(std::move(p));
            if (starts[w] + k + trained_f <= ds.length()) {
                Tensor t = Tensor::matrix(n, trained_f);
                for (std::size_t var = 0; var < n; ++var) {
                    for (std::size_t i = 0; i < trained_f; ++i) t(var, i) = ds.values(starts[w] + k + i, var);
                }
                truths.push_back(std::move(t));
            }
        }
    } else {
        const auto split = data::chronological_split(ds, k + trained_f);
        const auto r = evaluate(ck.params, ck.model, detail::pick_split(split, split_name), ck.scaler,
                                cfg.train.metric_space, cfg.train.batch_size);
        for (std::size_t w = 0; w < r.predictions.size(); w += f.stride) {
            preds.push_back(r.predictions[w]);
            truths.push_back(r.truths[w]);
        }
    }
    if (h < trained_f) {
        auto cut = [h](std::vector<Tensor>& v) {
            for (auto& t : v) t = detail::first_columns(t, h);
        };
        cut(preds);
        cut(truths);
    }
    const auto dir = detail::prepare_out(cfg);
    std::ostringstream csv;
    data::write_forecast_csv(csv, preds, truths, ck.variate_names);
    detail::write_file(dir / "forecast.csv", csv.str());
    out << "forecast ok split=" << split_name << " windows=" << preds.size() << " horizon=" << h
        << " rows=" << preds.size() * ck.model.variates * h << " out=" << (dir / "forecast.csv").string() << "\n";
    return kOk;
}

inline int cmd_ablate(const Flags& f, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = detail::resolve(f, true);
    const auto ds = detail::load_data(cfg, err);
    const auto rep = run_ablation(ds, cfg.model, cfg.train, cfg.ablate_horizons, ablation_threads());
    const auto dir = detail::prepare_out(cfg);
    const std::string table = serialize_ablation(rep);
    detail::write_file(dir / "ablation.txt", table);
    for (const auto& run : rep.runs) {
        detail::write_file(dir / ("report_" + run.variant + "_F" + std::to_string(run.horizon) + ".txt"),
                           serialize_run_report(run));
    }
    out << table;
    return kOk;
}

inline int cmd_selftest(const Flags& f, std::ostream& out, std::ostream& err) {
    selftest::Options opts;
    opts.perturb_filter = f.inject_filter_fault;
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = selftest::run_all(opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const selftest::SuiteResult* failed = nullptr;
    for (const auto& r : results) {
        out << "selftest " << r.name << ": " << (r.passed ? "PASS" : "FAIL") << " (" << r.detail << ")\n";
        if (!r.passed && !failed) failed = &r;
    }
    err << "selftest finished in " << secs << " s\n";
    if (failed) {
        err << "wdformer: error[selftest]: suite=" << failed->name << " failed\n";
        return kSelftestFailure;
    }
    return kOk;
}

/// Entry point: parses arguments, dispatches, and maps errors to exit codes
/// with a one-line `wdformer: error[kind]: reason` message.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"WDformer: wavelet differential-attention forecasting", "wdformer"};
    app.require_subcommand(1);
    Flags f;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "key = value config file");
        sub->add_option("--data", f.data, "input CSV");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--seed", f.seed, "seed for initialization and batch order");
        sub->add_option("--horizon", f.horizon, "forecast length F");
        sub->add_option("--levels", f.levels, "wavelet levels L");
        sub->add_option("--wavelet", f.wavelet, "haar or db2");
        sub->add_option("--variant", f.variant, "full, no_wave, no_diff or neither");
        sub->add_option("--set", f.sets, "extra key=value override (repeatable)");
    };
    auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint and report");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
    auto* forecast_cmd = app.add_subcommand("forecast", "write forecasts for an input CSV");
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare the four variants");
    auto* selftest_cmd = app.add_subcommand("selftest", "run the built-in property suites");
    for (auto* sub : {train_cmd, eval_cmd, forecast_cmd, ablate_cmd}) common(sub);
    for (auto* sub : {eval_cmd, forecast_cmd}) {
        sub->add_option("--checkpoint", f.checkpoint, "checkpoint file (default OUT/checkpoint.txt)");
        sub->add_option("--split", f.split, "train, val, test or all");
    }
    forecast_cmd->add_option("--stride", f.stride, "window stride");
    ablate_cmd->add_option("--horizons", f.horizons, "comma-separated horizons");
    selftest_cmd->add_flag("--inject-filter-fault", f.inject_filter_fault, "corrupt the analysis filter")->group("");

    auto fail = [&](const char* kind, int code, const std::string& msg) {
        err << "wdformer: error[" << kind << "]: " << detail::one_line(msg) << "\n";
        return code;
    };
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (train_cmd->parsed()) return cmd_train(f, out, err);
        if (eval_cmd->parsed()) return cmd_eval(f, out, err);
        if (forecast_cmd->parsed()) return cmd_forecast(f, out, err);
        if (ablate_cmd->parsed()) return cmd_ablate(f, out, err);
        return cmd_selftest(f, out, err);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        return fail("config", kConfigError, e.what());
    } catch (const ConfigError& e) {
        return fail("config", kConfigError, e.what());
    } catch (const DataError& e) {
        return fail("data", kDataError, e.what());
    } catch (const NumericalError& e) {
        return fail("numerical", kNumericalError, e.what());
    } catch (const std::exception& e) {
        return fail("internal", kNumericalError, e.what());
    }
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, out, err);
}

}  // namespace wdformer::cli
