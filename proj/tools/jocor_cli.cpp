// Experiment front end: run trainer grids, sweep lambda, generate synthetic data.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "jocor/jocor.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

jocor::ExperimentConfig load_config(const std::string& path, const std::string& out_dir) {
    jocor::KeyValueFile kv = jocor::KeyValueFile::load(path);
    if (const char* seed = std::getenv("NLL_SEED")) kv.set("seed", seed);
    if (!out_dir.empty()) kv.set("output_dir", out_dir);
    return jocor::experiment_from_kv(kv);
}

template <typename F>
int guarded(F&& body) {
    try {
        body();
        return 0;
    } catch (const jocor::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust training under label noise: JoCoR and baselines"};
    app.require_subcommand(1);

    std::string config_path, out_dir, lambdas_arg, spec_path, gen_out = ".";
    int jobs = 1;
    bool verbose = false;

    auto* run = app.add_subcommand("run", "Run every configured trainer on every repeat");
    run->add_option("--config", config_path, "Experiment config (key = value)")->required();
    run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    run->add_option("--jobs", jobs, "Trainer runs executed in parallel")->check(CLI::PositiveNumber);
    run->add_flag("-v,--verbose", verbose, "Log every epoch");

    auto* sweep = app.add_subcommand("sweep-lambda", "Run JoCoR once per lambda and pick the best by validation");
    sweep->add_option("--config", config_path, "Experiment config (key = value)")->required();
    sweep->add_option("--lambdas", lambdas_arg, "Comma-separated lambda values (default: config 'lambdas')");
    sweep->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sweep->add_option("--jobs", jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);
    sweep->add_flag("-v,--verbose", verbose, "Log every epoch");

    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic Gaussian-blob dataset as IDX files");
    gen->add_option("--spec", spec_path, "Synthetic spec (key = value: classes, per_class, dim, spread, seed)")->required();
    gen->add_option("--out", gen_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    std::ostream* log = verbose ? &std::cerr : nullptr;

    if (*run) {
        return guarded([&] {
            const jocor::ExperimentConfig cfg = load_config(config_path, out_dir);
            const jocor::RunSummary summary = jocor::run_experiment(cfg, jobs, log);
            for (const auto& t : summary.trainers) {
                std::cout << t.trainer << ": test accuracy " << 100.0 * t.mean_accuracy << " +- "
                          << 100.0 * t.std_accuracy << " %, label precision " << 100.0 * t.mean_precision << " %\n";
            }
            std::cout << "wrote " << cfg.output_dir << "/summary.json and curves.svg\n";
        });
    }
    if (*sweep) {
        return guarded([&] {
            const jocor::ExperimentConfig cfg = load_config(config_path, out_dir);
            std::vector<double> lambdas = cfg.lambdas;
            if (!lambdas_arg.empty()) {
                lambdas.clear();
                for (const auto& s : jocor::KeyValueFile::split_list(lambdas_arg)) {
                    lambdas.push_back(jocor::KeyValueFile::parse_number<double>(s, "--lambdas"));
                }
            }
            const jocor::SweepResult res = jocor::sweep_lambda(cfg, lambdas, jobs, log);
            for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "lambda  validation_acc  test_acc\n";
            for (const auto& row : res.rows) {
                std::cout << row.lambda << "  " << row.validation_accuracy << "  " << row.test_accuracy
                          << (row.best ? "  <- best" : "") << "\n";
            }
        });
    }
    return guarded([&] {
        const jocor::SyntheticSpec spec = jocor::synthetic_from_kv(jocor::KeyValueFile::load(spec_path));
        const jocor::LabeledDataset data = jocor::make_synthetic(spec);
        std::filesystem::create_directories(gen_out);
        const jocor::IdxFile features = jocor::features_to_idx(data.features);
        const jocor::IdxFile labels = jocor::labels_to_idx(data.true_labels);
        jocor::write_idx((std::filesystem::path(gen_out) / "features.idx").string(), features.header, features.payload);
        jocor::write_idx((std::filesystem::path(gen_out) / "labels.idx").string(), labels.header, labels.payload);
        std::cout << "wrote " << data.size() << " examples (" << spec.class_count << " classes, dim " << spec.dim
                  << ") to " << gen_out << "\n";
    });
}
