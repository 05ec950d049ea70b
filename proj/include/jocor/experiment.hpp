#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "jocor/config.hpp"
#include "jocor/data.hpp"
#include "jocor/noise.hpp"
#include "jocor/report.hpp"
#include "jocor/trainers.hpp"

namespace jocor {

/// Clean train/validation/test parts. Noise is applied later, per repeat, to `train` only.
struct PreparedData {
    LabeledDataset train;
    LabeledDataset validation;
    LabeledDataset test;
};

/// MNIST: the first `train_limit` training images for training, the next
/// `validation_count` as a clean validation set, and the first `test_limit`
/// test images. Files may be plain or gzip-compressed.
inline PreparedData prepare_data(const DatasetConfig& d) {
    if (d.source == DatasetSource::synthetic) {
        DatasetSplit s = split(make_synthetic(d.synthetic), d.fractions, mix_seed(d.synthetic.seed, 4));
        return {std::move(s.train), std::move(s.validation), std::move(s.test)};
    }
    namespace fs = std::filesystem;
    auto find = [&](const std::string& stem) {
        for (const std::string& name : {stem, stem + ".gz"}) {
            const fs::path p = fs::path(d.mnist_dir) / name;
            if (fs::exists(p)) return p.string();
        }
        throw ConfigError("MNIST file " + stem + "[.gz] not found in " + d.mnist_dir);
    };
    LabeledDataset all = load_mnist(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte"),
                                    d.mnist_train_limit + d.mnist_validation_count);
    if (all.size() < d.mnist_train_limit + d.mnist_validation_count) {
        throw ConfigError("MNIST training file holds fewer examples than train_limit + validation_count");
    }
    std::vector<std::size_t> train_rows(d.mnist_train_limit), val_rows(d.mnist_validation_count);
    std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
    std::iota(val_rows.begin(), val_rows.end(), d.mnist_train_limit);
    PreparedData out;
    out.train = subset(all, train_rows);
    out.validation = subset(all, val_rows);
    all = {};
    out.test = load_mnist(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"), d.mnist_test_limit);
    return out;
}

/// Mean of the first-network test accuracy over the trailing min(k, epochs) records.
inline double tail_accuracy(const std::vector<EpochRecord>& records, std::size_t k = 10) {
    if (records.empty()) return 0.0;
    const std::size_t n = std::min(k, records.size());
    double sum = 0.0;
    for (std::size_t i = records.size() - n; i < records.size(); ++i) sum += records[i].test_accuracy[0].value_or(0.0);
    return sum / static_cast<double>(n);
}

inline double tail_precision(const std::vector<EpochRecord>& records, std::size_t k = 10) {
    if (records.empty()) return 0.0;
    const std::size_t n = std::min(k, records.size());
    double sum = 0.0;
    for (std::size_t i = records.size() - n; i < records.size(); ++i) sum += records[i].label_precision;
    return sum / static_cast<double>(n);
}

struct TrainerSummary {
    std::string trainer;
    std::vector<double> accuracy_per_repeat;   // trailing-10-epoch mean, network 1
    std::vector<double> precision_per_repeat;  // trailing-10-epoch mean
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    double mean_precision = 0.0;
    double std_precision = 0.0;
};

struct RunSummary {
    std::vector<TrainerSummary> trainers;
    /// records[trainer][repeat]
    std::map<std::string, std::vector<std::vector<EpochRecord>>> records;
    std::vector<std::uint64_t> label_hashes;
    nlohmann::json json;

    const TrainerSummary& at(const std::string& trainer) const {
        for (const auto& t : trainers) {
            if (t.trainer == trainer) return t;
        }
        throw ConfigError("no summary for trainer " + trainer);
    }
};

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    const DatasetConfig& d = cfg.dataset;
    if (d.source == DatasetSource::mnist) {
        j["dataset"] = {{"source", "mnist"},
                        {"dir", d.mnist_dir},
                        {"train_limit", d.mnist_train_limit},
                        {"validation_count", d.mnist_validation_count},
                        {"test_limit", d.mnist_test_limit},
                        {"preprocessing", "pixel / 255, no centering"}};
    } else {
        j["dataset"] = {{"source", "synthetic"},
                        {"classes", d.synthetic.class_count},
                        {"per_class", d.synthetic.per_class},
                        {"dim", d.synthetic.dim},
                        {"spread", d.synthetic.cluster_spread},
                        {"seed", d.synthetic.seed},
                        {"split", {d.fractions.train, d.fractions.validation, d.fractions.test}}};
    }
    j["noise"] = {{"kind", to_string(cfg.noise.kind)}, {"rate", cfg.noise.rate}};
    std::vector<std::string> names;
    for (Variant v : cfg.trainers) names.emplace_back(to_string(v));
    j["trainers"] = names;
    const TrainerConfig& t = cfg.trainer;
    j["lambda"] = t.lambda;
    j["tau"] = cfg.schedule_tau();
    j["t_k"] = t.schedule.t_k;
    j["epochs"] = t.epochs;
    j["batch_size"] = t.batch_size;
    j["adam"] = {{"lr", t.adam.learning_rate}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"epsilon", t.adam.epsilon}};
    if (t.lr_decay) {
        j["lr_decay"] = {{"start", t.lr_decay->start_epoch}, {"end", t.lr_decay->end_epoch}};
    } else {
        j["lr_decay"] = nullptr;
    }
    j["hidden"] = t.hidden_widths;
    j["init"] = "uniform(-sqrt(6/fan_in), sqrt(6/fan_in)), zero bias";
    j["repeats"] = cfg.repeats;
    j["seed"] = cfg.base_seed;
    j["lambdas"] = cfg.lambdas;
    return j;
}

namespace detail {

/// Runs tasks on up to `jobs` threads. All tasks run even if some fail; the
/// first failure in task order is rethrown afterwards.
inline void run_tasks(const std::vector<std::function<void()>>& tasks, int jobs) {
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            try {
                tasks[i]();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = static_cast<std::size_t>(std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(tasks.size(), 1))));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::vector<Curve> curves_for(const std::map<std::string, std::vector<std::vector<EpochRecord>>>& records,
                                     const std::vector<std::string>& order, bool precision) {
    std::vector<Curve> out;
    for (const auto& name : order) {
        const auto& runs = records.at(name);
        Curve c{name, {}, {}};
        const std::size_t epochs = runs.empty() ? 0 : runs.front().size();
        for (std::size_t e = 0; e < epochs; ++e) {
            std::vector<double> xs;
            for (const auto& run : runs) {
                if (e < run.size()) xs.push_back(precision ? run[e].label_precision : run[e].test_accuracy[0].value_or(0.0));
            }
            auto [m, s] = mean_std(xs);
            c.mean.push_back(m);
            c.std.push_back(s);
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace detail

/// Runs every trainer on every repeat. Repeat r corrupts the training labels
/// with seed base + r and all trainers consume that same corrupted copy.
/// Writes epochs_<trainer>_<r>.csv (row by row), summary.json and curves.svg.
inline RunSummary run_experiment(const ExperimentConfig& cfg, int jobs = 1, std::ostream* log = nullptr) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    const PreparedData data = prepare_data(cfg.dataset);
    const TransitionMatrix q = build_q(cfg.noise, data.train.class_count);
    std::vector<LabeledDataset> noisy;
    RunSummary summary;
    for (int r = 0; r < cfg.repeats; ++r) {
        noisy.push_back(corrupt(data.train, q, cfg.noise_seed(r)));
        summary.label_hashes.push_back(label_hash(noisy.back().observed_labels));
    }

    std::vector<std::string> names;
    for (Variant v : cfg.trainers) {
        names.emplace_back(to_string(v));
        summary.records[names.back()].resize(static_cast<std::size_t>(cfg.repeats));
    }

    std::mutex log_mutex;
    std::vector<std::function<void()>> tasks;
    for (int r = 0; r < cfg.repeats; ++r) {
        for (Variant v : cfg.trainers) {
            tasks.emplace_back([&, r, v] {
                const std::string name = to_string(v);
                const std::string path = (fs::path(cfg.output_dir) / ("epochs_" + name + "_" + std::to_string(r) + ".csv")).string();
                CsvWriter csv(path, name, r);
                auto& slot = summary.records.at(name)[static_cast<std::size_t>(r)];
                train(noisy[static_cast<std::size_t>(r)], data.test, cfg.trainer_config(v, r), [&](const EpochRecord& rec) {
                    csv.write(rec);
                    slot.push_back(rec);
                    if (log) {
                        std::lock_guard lock(log_mutex);
                        *log << name << " repeat " << r << " epoch " << rec.epoch << ": acc "
                             << rec.test_accuracy[0].value_or(0.0) << " precision " << rec.label_precision << "\n";
                    }
                });
            });
        }
    }
    detail::run_tasks(tasks, jobs);

    nlohmann::json j;
    j["config"] = config_json(cfg);
    j["last_epochs_averaged"] = std::min(10, cfg.trainer.epochs);
    j["repeats"] = nlohmann::json::array();
    for (int r = 0; r < cfg.repeats; ++r) {
        j["repeats"].push_back({{"repeat", r},
                                {"noise_seed", cfg.noise_seed(r)},
                                {"observed_label_hash", detail::hex64(summary.label_hashes[static_cast<std::size_t>(r)])},
                                {"noise_fraction", noise_fraction(noisy[static_cast<std::size_t>(r)])}});
    }
    for (const auto& name : names) {
        TrainerSummary ts;
        ts.trainer = name;
        for (const auto& run : summary.records[name]) {
            ts.accuracy_per_repeat.push_back(tail_accuracy(run));
            ts.precision_per_repeat.push_back(tail_precision(run));
        }
        std::tie(ts.mean_accuracy, ts.std_accuracy) = mean_std(ts.accuracy_per_repeat);
        std::tie(ts.mean_precision, ts.std_precision) = mean_std(ts.precision_per_repeat);
        j["trainers"][name] = {{"mean_test_accuracy", ts.mean_accuracy},
                               {"std_test_accuracy", ts.std_accuracy},
                               {"test_accuracy_per_repeat", ts.accuracy_per_repeat},
                               {"mean_label_precision", ts.mean_precision},
                               {"std_label_precision", ts.std_precision},
                               {"label_precision_per_repeat", ts.precision_per_repeat}};
        summary.trainers.push_back(std::move(ts));
    }
    summary.json = j;
    {
        std::ofstream out(fs::path(cfg.output_dir) / "summary.json", std::ios::trunc);
        out << j.dump(2) << '\n';
    }
    emit_svg((fs::path(cfg.output_dir) / "curves.svg").string(), detail::curves_for(summary.records, names, false),
             detail::curves_for(summary.records, names, true));
    return summary;
}

struct SweepRow {
    double lambda = 0.0;
    double validation_accuracy = 0.0;  // final network-1 accuracy on clean validation data, mean over repeats
    double test_accuracy = 0.0;        // trailing-10-epoch test accuracy, mean over repeats
    bool best = false;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // ascending lambda
    std::vector<std::string> warnings;

    const SweepRow& best() const {
        for (const auto& r : rows) {
            if (r.best) return r;
        }
        throw DataError("sweep: no rows");
    }
};

/// JoCoR once per lambda on the same corrupted data; the best row has the
/// highest clean-validation accuracy (the smaller lambda wins an exact tie).
/// Writes epochs_jocor_lambda<λ>_<r>.csv and sweep.csv into the output directory.
inline SweepResult sweep_lambda(const ExperimentConfig& cfg, std::vector<double> lambdas, int jobs = 1,
                                std::ostream* log = nullptr) {
    cfg.validate();
    if (lambdas.empty()) throw ConfigError("sweep: no lambda values given");
    for (double l : lambdas) check_lambda(l);

    SweepResult result;
    std::sort(lambdas.begin(), lambdas.end());
    const auto last = std::unique(lambdas.begin(), lambdas.end());
    if (last != lambdas.end()) {
        result.warnings.push_back("duplicate lambda values removed");
        lambdas.erase(last, lambdas.end());
    }

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const PreparedData data = prepare_data(cfg.dataset);
    if (data.validation.empty()) throw ConfigError("sweep: the dataset has no validation part");
    const TransitionMatrix q = build_q(cfg.noise, data.train.class_count);
    std::vector<LabeledDataset> noisy;
    for (int r = 0; r < cfg.repeats; ++r) noisy.push_back(corrupt(data.train, q, cfg.noise_seed(r)));

    const std::size_t reps = static_cast<std::size_t>(cfg.repeats);
    std::vector<std::vector<double>> val(lambdas.size(), std::vector<double>(reps)),
        test(lambdas.size(), std::vector<double>(reps));
    std::mutex log_mutex;
    std::vector<std::function<void()>> tasks;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        for (std::size_t r = 0; r < reps; ++r) {
            tasks.emplace_back([&, li, r] {
                TrainerConfig tc = cfg.trainer_config(Variant::jocor, static_cast<int>(r));
                tc.lambda = lambdas[li];
                const std::string tag = "jocor_lambda" + format_number(lambdas[li]);
                CsvWriter csv((fs::path(cfg.output_dir) / ("epochs_" + tag + "_" + std::to_string(r) + ".csv")).string(),
                              tag, static_cast<int>(r));
                TrainResult tr = train_jocor(noisy[r], data.test, tc, [&](const EpochRecord& rec) {
                    csv.write(rec);
                    if (log) {
                        std::lock_guard lock(log_mutex);
                        *log << tag << " repeat " << r << " epoch " << rec.epoch << ": acc "
                             << rec.test_accuracy[0].value_or(0.0) << "\n";
                    }
                });
                val[li][r] = evaluate(tr.networks[0], data.validation);
                test[li][r] = tail_accuracy(tr.records);
            });
        }
    }
    detail::run_tasks(tasks, jobs);

    std::size_t best = 0;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        SweepRow row;
        row.lambda = lambdas[li];
        row.validation_accuracy = mean_std(val[li]).first;
        row.test_accuracy = mean_std(test[li]).first;
        result.rows.push_back(row);
        if (row.validation_accuracy > result.rows[best].validation_accuracy) best = li;
    }
    result.rows[best].best = true;

    std::ofstream out(fs::path(cfg.output_dir) / "sweep.csv", std::ios::trunc);
    out << "lambda,validation_accuracy,test_accuracy,best\n";
    for (const auto& row : result.rows) {
        out << format_number(row.lambda) << "," << format_number(row.validation_accuracy) << ","
            << format_number(row.test_accuracy) << "," << (row.best ? 1 : 0) << "\n";
    }
    return result;
}

}  // namespace jocor
