// srt: train / predict / cross-validate / benchmark soft regression trees.
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "srt/data.hpp"
#include "srt/init.hpp"
#include "srt/model.hpp"
#include "srt/optimizer.hpp"
#include "srt/report.hpp"

namespace {

using nlohmann::json;

struct CommonOpts {
    std::string config_path;
    std::optional<int> depth;
    std::optional<std::uint64_t> seed;
    bool no_reassign = false;
    bool plain = false;
    bool timings = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_plain = true) {
    cmd->add_option("--config", o.config_path, "flat key=value config file");
    cmd->add_option("--depth", o.depth, "tree depth (overrides config)");
    cmd->add_option("--seed", o.seed, "RNG seed (overrides config)");
    cmd->add_flag("--no-reassign", o.no_reassign,
                  "disable the imbalance heuristic (forces eps1 = 0)");
    if (with_plain)
        cmd->add_flag("--plain", o.plain, "joint gradient descent instead of decomposition");
    cmd->add_flag("--timings", o.timings, "include wall times in the report JSON");
}

srt::ResolvedConfig settle_config(const CommonOpts& o) {
    srt::ConfigMap map;
    if (!o.config_path.empty()) map = srt::load_config_file(o.config_path);
    srt::ResolvedConfig rc = srt::apply_config(map);
    if (o.depth) rc.train.depth = *o.depth;
    if (o.seed) rc.train.seed = *o.seed;
    if (o.no_reassign) rc.train.eps1 = 0.0;
    return rc;
}

void report_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

std::uint64_t derived_seed(std::uint64_t base, std::uint64_t idx) {
    srt::Rng r = srt::Rng(base).child(idx);
    return r.next_u64();
}

std::string trace_path_for(const std::string& model_path) {
    const std::string suffix = ".json";
    if (model_path.size() > suffix.size() &&
        model_path.compare(model_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return model_path.substr(0, model_path.size() - suffix.size()) + ".trace";
    return model_path + ".trace";
}

// Run `total` tasks on `jobs` threads (0 = hardware concurrency); tasks fill
// preallocated slots, so the aggregate never depends on completion order.
void run_pool(int jobs, int total, const std::function<void(int)>& work) {
    if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    jobs = std::min(jobs, total);
    if (jobs <= 1) {
        for (int i = 0; i < total; ++i) work(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t)
        threads.emplace_back([&] {
            for (int i; (i = next.fetch_add(1)) < total;) {
                try {
                    work(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Test-fold predictions in original target units.
std::vector<double> predict_rows(const srt::SrtModel& m, const srt::Dataset& norm,
                                 const srt::PreprocessParams& pp) {
    std::vector<double> out(norm.n());
    for (std::size_t i = 0; i < norm.n(); ++i)
        out[i] = srt::destandardize(srt::predict(m, norm.X.row(i)), pp);
    return out;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& data_path, const std::string& out_path, const CommonOpts& o) {
    srt::ResolvedConfig rc = settle_config(o);
    const srt::Dataset raw = srt::load_csv(data_path);
    const srt::PreprocessParams pp = srt::fit_preprocess(raw);
    const srt::Dataset norm = srt::apply_preprocess(raw, pp);
    srt::resolve_auto_lambdas(rc, norm.p());
    report_warnings(rc.train.validate());

    srt::FitReport report;
    srt::SrtModel model;
    if (o.plain) {
        const auto init = srt::initialize(norm, rc.train.depth, rc.train.init_repetitions,
                                          rc.train.seed, rc.train.mu);
        model = srt::plain_train(init.model, norm, rc.train, &report);
        report.init_db = init.db_score;
    } else {
        auto outcome = srt::run_training(norm, rc.train);
        model = std::move(outcome.model);
        report = std::move(outcome.report);
    }

    srt::save_model(out_path, {model, raw.feature_names, pp});
    const std::string trace_path = trace_path_for(out_path);
    srt::save_trace(trace_path, report);

    const auto preds = predict_rows(model, norm, pp);
    const double r2 = srt::r_squared(raw.y, preds);
    std::cout << "trained depth " << rc.train.depth << " tree on " << norm.n() << " rows, "
              << norm.p() << " features\n";
    std::cout << "training error " << srt::format_double(report.best_error) << " (from "
              << srt::format_double(report.initial_error) << "), training R^2 "
              << srt::format_double(r2) << '\n';
    std::cout << "iterations " << report.iterations << ", wall " << std::fixed
              << std::setprecision(2) << report.wall_seconds << " s\n";
    std::cout << "model: " << out_path << "\ntrace: " << trace_path << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
    const srt::ModelFile mf = srt::load_model(model_path);
    const srt::Dataset raw = srt::load_csv(data_path);
    const int p = mf.model.num_features;

    srt::Dataset feats;
    if (raw.p() == p) {
        feats = raw; // trailing response column present; ignored
    } else if (raw.p() == p - 1) {
        // No response column: the value load_csv took for the response is
        // really the last feature, so fold it back in.
        feats.X = srt::Mat(raw.n(), static_cast<std::size_t>(p));
        for (std::size_t i = 0; i < raw.n(); ++i) {
            auto src = raw.X.row(i);
            auto dst = feats.X.row(i);
            std::copy(src.begin(), src.end(), dst.begin());
            dst[static_cast<std::size_t>(p) - 1] = raw.y[i];
        }
        feats.y.assign(raw.n(), 0.0);
    } else {
        throw srt::InvalidInputError(
            "predict: model expects " + std::to_string(p) + " features but '" + data_path +
            "' provides " + std::to_string(raw.p()) + " (+1 response column)");
    }

    const srt::Dataset norm = srt::apply_preprocess(feats, mf.normalization);
    std::ofstream out(out_path);
    if (!out) throw srt::InvalidInputError("cannot write predictions file '" + out_path + "'");
    out << "prediction\n";
    for (std::size_t i = 0; i < norm.n(); ++i)
        out << srt::format_double(
                   srt::destandardize(srt::predict(mf.model, norm.X.row(i)), mf.normalization))
            << '\n';
    std::cout << "wrote " << norm.n() << " predictions to " << out_path << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// crossval
// ---------------------------------------------------------------------------

struct CvRun {
    int fold = 0;
    int seed_index = 0;
    std::uint64_t seed = 0;
    double r2 = 0.0;
    double train_error = 0.0;
    double wall_seconds = 0.0;
};

int cmd_crossval(const std::string& data_path, const std::string& out_path, int folds,
                 int seeds, int jobs, const CommonOpts& o) {
    srt::ResolvedConfig rc = settle_config(o);
    const srt::Dataset raw = srt::load_csv(data_path);
    if (folds < 2) throw srt::InvalidInputError("crossval needs --folds >= 2");
    if (seeds < 1) throw srt::InvalidInputError("crossval needs --seeds >= 1");
    srt::resolve_auto_lambdas(rc, raw.p());
    report_warnings(rc.train.validate());

    const auto fold_sets = srt::kfold(raw.n(), folds, rc.train.seed);
    const int total = folds * seeds;
    std::vector<CvRun> runs(static_cast<std::size_t>(total));

    run_pool(jobs, total, [&](int idx) {
        const int f = idx / seeds, s = idx % seeds;
        const auto t0 = std::chrono::steady_clock::now();
        const srt::Dataset test_raw = srt::take_rows(raw, fold_sets[static_cast<std::size_t>(f)]);
        const srt::Dataset train_raw = srt::drop_rows(raw, fold_sets[static_cast<std::size_t>(f)]);
        const srt::PreprocessParams pp = srt::fit_preprocess(train_raw);
        const srt::Dataset train_norm = srt::apply_preprocess(train_raw, pp);
        const srt::Dataset test_norm = srt::apply_preprocess(test_raw, pp);

        srt::TrainConfig cfg = rc.train;
        cfg.seed = derived_seed(rc.train.seed, static_cast<std::uint64_t>(idx));

        srt::FitReport report;
        srt::SrtModel model;
        if (o.plain) {
            const auto init = srt::initialize(train_norm, cfg.depth, cfg.init_repetitions,
                                              cfg.seed, cfg.mu);
            model = srt::plain_train(init.model, train_norm, cfg, &report);
        } else {
            auto outcome = srt::run_training(train_norm, cfg);
            model = std::move(outcome.model);
            report = std::move(outcome.report);
        }

        CvRun& r = runs[static_cast<std::size_t>(idx)];
        r.fold = f;
        r.seed_index = s;
        r.seed = cfg.seed;
        r.train_error = report.best_error;
        r.r2 = srt::r_squared(test_raw.y, predict_rows(model, test_norm, pp));
        r.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    std::vector<double> r2s;
    int negative = 0;
    double total_wall = 0.0;
    for (const auto& r : runs) {
        r2s.push_back(r.r2);
        if (r.r2 < 0.0) ++negative;
        total_wall += r.wall_seconds;
    }

    std::cout << "fold  seed        test R^2   train error   time (s)\n";
    for (const auto& r : runs)
        std::cout << std::setw(4) << r.fold << "  " << std::setw(4) << r.seed_index << "  "
                  << std::setw(14) << std::fixed << std::setprecision(6) << r.r2 << "  "
                  << std::setw(12) << r.train_error << "  " << std::setw(9)
                  << std::setprecision(2) << r.wall_seconds << '\n';
    std::cout << "mean R^2 " << std::setprecision(6) << mean_of(r2s) << ", std "
              << sample_std(r2s) << ", negative " << negative << "/" << total << ", total "
              << std::setprecision(2) << total_wall << " s\n";

    json j;
    j["command"] = "crossval";
    j["data"] = data_path;
    j["folds"] = folds;
    j["seeds"] = seeds;
    j["config"] = srt::render_config(srt::describe_config(rc));
    j["runs"] = json::array();
    for (const auto& r : runs) {
        json jr;
        jr["fold"] = r.fold;
        jr["seed_index"] = r.seed_index;
        jr["seed"] = r.seed;
        jr["r2"] = r.r2;
        jr["train_error"] = r.train_error;
        if (o.timings) jr["wall_seconds"] = r.wall_seconds;
        j["runs"].push_back(jr);
    }
    j["mean_r2"] = mean_of(r2s);
    j["std_r2"] = sample_std(r2s);
    j["negative_r2"] = negative;
    j["model_paths"] = json::array();
    if (o.timings) j["total_wall_seconds"] = total_wall;

    std::ofstream out(out_path);
    if (!out) throw srt::InvalidInputError("cannot write report file '" + out_path + "'");
    out << j.dump(2) << '\n';
    std::cout << "report: " << out_path << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// synth-bench
// ---------------------------------------------------------------------------

struct BenchRun {
    int fold = 0;
    int seed_index = 0;
    int variant = 0; // 0 plain, 1 no-reassign, 2 full
    double r2 = 0.0;
    double gini = 0.0;
    double train_error = 0.0;
    double wall_seconds = 0.0;
};

const char* kVariantNames[3] = {"plain", "no-reassign", "full"};

int cmd_synth_bench(const std::string& out_path, int folds, int seeds, int jobs,
                    const CommonOpts& o) {
    srt::ResolvedConfig rc = settle_config(o);
    if (folds < 2) throw srt::InvalidInputError("synth-bench needs --folds >= 2");
    if (seeds < 1) throw srt::InvalidInputError("synth-bench needs --seeds >= 1");
    const srt::Dataset raw = srt::gen_synthetic(rc.train.seed);
    // The routing benchmark runs unregularized: the ridge formula sized for
    // real datasets flattens every gate on this synthetic geometry (gradient
    // gates never open and all three variants collapse to the global affine
    // fit), which would make the comparison meaningless.  An explicit
    // lambda_omega/lambda_beta in the config still wins.
    if (rc.lambda_omega_auto) {
        rc.train.lambda_omega = 0.0;
        rc.lambda_omega_auto = false;
    }
    if (rc.lambda_beta_auto) {
        rc.train.lambda_beta = 0.0;
        rc.lambda_beta_auto = false;
    }
    srt::resolve_auto_lambdas(rc, raw.p());
    report_warnings(rc.train.validate());

    const auto fold_sets = srt::kfold(raw.n(), folds, rc.train.seed);
    const int total = folds * seeds * 3;
    std::vector<BenchRun> runs(static_cast<std::size_t>(total));

    run_pool(jobs, total, [&](int idx) {
        const int variant = idx % 3, pair = idx / 3;
        const int f = pair / seeds, s = pair % seeds;
        const auto t0 = std::chrono::steady_clock::now();
        const srt::Dataset test_raw = srt::take_rows(raw, fold_sets[static_cast<std::size_t>(f)]);
        const srt::Dataset train_raw = srt::drop_rows(raw, fold_sets[static_cast<std::size_t>(f)]);
        const srt::PreprocessParams pp = srt::fit_preprocess(train_raw);
        const srt::Dataset train_norm = srt::apply_preprocess(train_raw, pp);
        const srt::Dataset test_norm = srt::apply_preprocess(test_raw, pp);

        srt::TrainConfig cfg = rc.train;
        cfg.seed = derived_seed(rc.train.seed, static_cast<std::uint64_t>(pair));
        if (variant == 1) cfg.eps1 = 0.0; // imbalance heuristic off

        srt::FitReport report;
        srt::SrtModel model;
        if (variant == 2) {
            // Full pipeline exactly as `train` ships it: clustering warm
            // start plus the reassignment heuristic.
            auto outcome = srt::run_training(train_norm, cfg);
            model = std::move(outcome.model);
            report = std::move(outcome.report);
        } else {
            // The two stripped-down variants share one random start so the
            // comparison isolates the optimizer.
            srt::Rng rng(cfg.seed);
            const srt::SrtModel init =
                srt::SrtModel::random(cfg.depth, train_norm.p(), cfg.mu, rng);
            if (variant == 0)
                model = srt::plain_train(init, train_norm, cfg, &report);
            else
                model = srt::train(init, train_norm, cfg, &report);
        }

        BenchRun& r = runs[static_cast<std::size_t>(idx)];
        r.fold = f;
        r.seed_index = s;
        r.variant = variant;
        r.train_error = report.best_error;
        r.r2 = srt::r_squared(test_raw.y, predict_rows(model, test_norm, pp));
        r.gini = srt::gini_routing(model, train_norm);
        r.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    json aggregates;
    std::cout << "variant       fold  seed   test R^2      gini   time (s)\n";
    for (const auto& r : runs)
        std::cout << std::left << std::setw(12) << kVariantNames[r.variant] << std::right
                  << std::setw(6) << r.fold << std::setw(6) << r.seed_index << "  "
                  << std::setw(10) << std::fixed << std::setprecision(4) << r.r2 << "  "
                  << std::setw(8) << r.gini << "  " << std::setw(8) << std::setprecision(2)
                  << r.wall_seconds << '\n';
    for (int v = 0; v < 3; ++v) {
        std::vector<double> r2s, ginis;
        int negative = 0;
        for (const auto& r : runs)
            if (r.variant == v) {
                r2s.push_back(r.r2);
                ginis.push_back(r.gini);
                if (r.r2 < 0.0) ++negative;
            }
        json ja;
        ja["mean_r2"] = mean_of(r2s);
        ja["std_r2"] = sample_std(r2s);
        ja["median_gini"] = median_of(ginis);
        ja["negative_r2"] = negative;
        aggregates[kVariantNames[v]] = ja;
        std::cout << kVariantNames[v] << ": mean R^2 " << std::setprecision(4) << mean_of(r2s)
                  << ", std " << sample_std(r2s) << ", median gini " << median_of(ginis)
                  << ", negative " << negative << '\n';
    }

    json j;
    j["command"] = "synth-bench";
    j["folds"] = folds;
    j["seeds"] = seeds;
    j["config"] = srt::render_config(srt::describe_config(rc));
    j["runs"] = json::array();
    double total_wall = 0.0;
    for (const auto& r : runs) {
        json jr;
        jr["variant"] = kVariantNames[r.variant];
        jr["fold"] = r.fold;
        jr["seed_index"] = r.seed_index;
        jr["r2"] = r.r2;
        jr["gini"] = r.gini;
        jr["train_error"] = r.train_error;
        if (o.timings) jr["wall_seconds"] = r.wall_seconds;
        j["runs"].push_back(jr);
        total_wall += r.wall_seconds;
    }
    j["aggregates"] = aggregates;
    j["model_paths"] = json::array();
    if (o.timings) j["total_wall_seconds"] = total_wall;

    std::ofstream out(out_path);
    if (!out) throw srt::InvalidInputError("cannot write report file '" + out_path + "'");
    out << j.dump(2) << '\n';
    std::cout << "report: " << out_path << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"soft regression trees: node-decomposition training"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "fit a tree and write model + trace");
    std::string train_data, train_out = "model.json";
    CommonOpts train_opts;
    train->add_option("--data", train_data, "training CSV")->required();
    train->add_option("--out", train_out, "model JSON path");
    add_common(train, train_opts);

    // predict
    auto* predict = app.add_subcommand("predict", "predict with a saved model");
    std::string pred_model, pred_data, pred_out = "predictions.csv";
    predict->add_option("model", pred_model, "model JSON path")->required();
    predict->add_option("data", pred_data, "input CSV")->required();
    predict->add_option("--out", pred_out, "predictions output path");

    // crossval
    auto* crossval = app.add_subcommand("crossval", "k-fold x multi-seed cross-validation");
    std::string cv_data, cv_out = "report.json";
    int cv_folds = 4, cv_seeds = 20, cv_jobs = 0;
    CommonOpts cv_opts;
    crossval->add_option("--data", cv_data, "dataset CSV")->required();
    crossval->add_option("--out", cv_out, "report JSON path");
    crossval->add_option("--folds", cv_folds, "number of folds");
    crossval->add_option("--seeds", cv_seeds, "seeds per fold");
    crossval->add_option("--jobs", cv_jobs, "worker threads (0 = all cores)");
    add_common(crossval, cv_opts);

    // synth-bench
    auto* bench = app.add_subcommand("synth-bench",
                                     "ablation benchmark on the built-in synthetic data");
    std::string sb_out = "bench_report.json";
    int sb_folds = 4, sb_seeds = 5, sb_jobs = 0;
    CommonOpts sb_opts;
    bench->add_option("--out", sb_out, "report JSON path");
    bench->add_option("--folds", sb_folds, "number of folds");
    bench->add_option("--seeds", sb_seeds, "seeds per fold");
    bench->add_option("--jobs", sb_jobs, "worker threads (0 = all cores)");
    add_common(bench, sb_opts, /*with_plain=*/false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train) return cmd_train(train_data, train_out, train_opts);
        if (*predict) return cmd_predict(pred_model, pred_data, pred_out);
        if (*crossval)
            return cmd_crossval(cv_data, cv_out, cv_folds, cv_seeds, cv_jobs, cv_opts);
        if (*bench) return cmd_synth_bench(sb_out, sb_folds, sb_seeds, sb_jobs, sb_opts);
    } catch (const srt::InvalidInputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const srt::LineSearchError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const srt::SingularSystemError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const srt::DegenerateWeightsError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
