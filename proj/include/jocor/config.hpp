#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "jocor/data.hpp"
#include "jocor/error.hpp"
#include "jocor/noise.hpp"
#include "jocor/trainers.hpp"

namespace jocor {

/// Flat `key = value` settings. `#` starts a comment; blank lines are ignored.
class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& in, const std::string& source = "<config>") {
        KeyValueFile kv;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            }
            std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            if (kv.values_.count(key)) {
                throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            }
            kv.values_[key] = trim(line.substr(eq + 1));
        }
        return kv;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path);
        return parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get(const std::string& key, const std::string& fallback) const {
        used_.push_back(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    template <typename T>
    T get_number(const std::string& key, T fallback) const {
        used_.push_back(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_number<T>(it->second, key);
    }

    template <typename T>
    std::vector<T> get_list(const std::string& key, const std::vector<T>& fallback) const {
        used_.push_back(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<T> out;
        for (const auto& item : split_list(it->second)) {
            if constexpr (std::is_same_v<T, std::string>) {
                out.push_back(item);
            } else {
                out.push_back(parse_number<T>(item, key));
            }
        }
        return out;
    }

    /// Throws on keys that no getter asked for (typos would otherwise be silent).
    void reject_unknown() const {
        for (const auto& [key, value] : values_) {
            if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
                throw ConfigError("unknown config key '" + key + "'");
            }
        }
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    template <typename T>
    static T parse_number(const std::string& text, const std::string& key) {
        T value{};
        const char* first = text.data();
        const char* last = text.data() + text.size();
        std::from_chars_result r;
        if constexpr (std::is_floating_point_v<T>) {
            // from_chars for double is incomplete in older libstdc++; strtod is exact too.
            char* end = nullptr;
            const std::string copy(text);
            value = static_cast<T>(std::strtod(copy.c_str(), &end));
            if (copy.empty() || end != copy.c_str() + copy.size()) {
                throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
            }
            return value;
        } else {
            r = std::from_chars(first, last, value);
            if (r.ec != std::errc() || r.ptr != last) {
                throw ConfigError("config key '" + key + "': '" + text + "' is not an integer");
            }
            return value;
        }
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    mutable std::vector<std::string> used_;
};

enum class DatasetSource { synthetic, mnist };

struct DatasetConfig {
    DatasetSource source = DatasetSource::synthetic;
    SyntheticSpec synthetic;
    SplitFractions fractions{0.7, 0.1, 0.2};
    std::string mnist_dir;
    std::size_t mnist_train_limit = 10000;
    std::size_t mnist_validation_count = 1000;
    std::size_t mnist_test_limit = 10000;
};

/// Settings shared by every trainer of an experiment; per-repeat seeds are derived from the base seed.
struct ExperimentConfig {
    DatasetConfig dataset;
    NoiseSpec noise;
    std::vector<Variant> trainers{Variant::standard, Variant::jocor};
    std::optional<double> tau;  // defaults to the noise model's expected corruption rate
    TrainerConfig trainer;      // variant and seeds are filled in per run
    std::vector<double> lambdas{0.05, 0.35, 0.65, 0.95};
    int repeats = 1;
    std::uint64_t base_seed = 1;
    std::string output_dir = "out";

    double schedule_tau() const { return tau.value_or(noise.expected_noise_rate()); }

    /// Config for one trainer in one repeat. All trainers in a repeat share
    /// initialization and shuffle seeds, so comparisons are paired.
    TrainerConfig trainer_config(Variant v, int repeat) const {
        TrainerConfig cfg = trainer;
        cfg.variant = v;
        cfg.schedule.tau = schedule_tau();
        const std::uint64_t base = base_seed + static_cast<std::uint64_t>(repeat);
        cfg.seeds = {mix_seed(base, 1), mix_seed(base, 2)};
        cfg.shuffle_seed = mix_seed(base, 3);
        if (v == Variant::joint_only) cfg.lambda = 0.0;
        return cfg;
    }

    std::uint64_t noise_seed(int repeat) const { return base_seed + static_cast<std::uint64_t>(repeat); }

    void validate() const {
        if (repeats < 1) throw ConfigError("repeats must be >= 1");
        if (trainers.empty()) throw ConfigError("at least one trainer is required");
        for (std::size_t i = 0; i < trainers.size(); ++i) {
            for (std::size_t j = i + 1; j < trainers.size(); ++j) {
                if (trainers[i] == trainers[j]) throw ConfigError(std::string("trainer listed twice: ") + to_string(trainers[i]));
            }
        }
        if (!(noise.rate >= 0.0 && noise.rate < 1.0)) throw ConfigError("noise.rate must lie in [0, 1)");
        if (noise.kind == NoiseKind::asymmetric && noise.rate > 0.5) {
            throw ConfigError("asymmetric noise.rate must be <= 0.5");
        }
        if (dataset.source == DatasetSource::synthetic) dataset.synthetic.validate();
        if (dataset.source == DatasetSource::mnist && dataset.mnist_dir.empty()) {
            throw ConfigError("dataset = mnist requires mnist.dir");
        }
        TrainerConfig probe = trainer_config(Variant::jocor, 0);
        probe.validate();
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    }
};

/// Builds an ExperimentConfig from key-value settings; absent keys keep their defaults.
inline ExperimentConfig experiment_from_kv(const KeyValueFile& kv) {
    ExperimentConfig cfg;
    DatasetConfig& d = cfg.dataset;
    const std::string source = kv.get("dataset", "synthetic");
    if (source == "synthetic") {
        d.source = DatasetSource::synthetic;
    } else if (source == "mnist") {
        d.source = DatasetSource::mnist;
    } else {
        throw ConfigError("dataset must be 'synthetic' or 'mnist', got '" + source + "'");
    }
    d.mnist_dir = kv.get("mnist.dir", d.mnist_dir);
    d.mnist_train_limit = kv.get_number("mnist.train_limit", d.mnist_train_limit);
    d.mnist_validation_count = kv.get_number("mnist.validation_count", d.mnist_validation_count);
    d.mnist_test_limit = kv.get_number("mnist.test_limit", d.mnist_test_limit);
    d.synthetic.class_count = kv.get_number("synthetic.classes", d.synthetic.class_count);
    d.synthetic.per_class = kv.get_number("synthetic.per_class", d.synthetic.per_class);
    d.synthetic.dim = kv.get_number("synthetic.dim", d.synthetic.dim);
    d.synthetic.cluster_spread = kv.get_number("synthetic.spread", d.synthetic.cluster_spread);
    d.synthetic.seed = kv.get_number("synthetic.seed", d.synthetic.seed);
    d.fractions.train = kv.get_number("split.train", d.fractions.train);
    d.fractions.validation = kv.get_number("split.validation", d.fractions.validation);
    d.fractions.test = kv.get_number("split.test", d.fractions.test);

    cfg.noise.kind = parse_noise_kind(kv.get("noise.kind", "symmetric"));
    cfg.noise.rate = kv.get_number("noise.rate", 0.0);

    cfg.trainers.clear();
    for (const auto& name : kv.get_list<std::string>("trainers", {"standard", "jocor"})) {
        cfg.trainers.push_back(parse_variant(name));
    }
    if (kv.has("tau")) cfg.tau = kv.get_number("tau", 0.0);

    TrainerConfig& t = cfg.trainer;
    t.lambda = kv.get_number("lambda", t.lambda);
    t.schedule.t_k = kv.get_number("t_k", t.schedule.t_k);
    t.epochs = kv.get_number("epochs", t.epochs);
    t.batch_size = kv.get_number("batch_size", t.batch_size);
    t.adam.learning_rate = kv.get_number("lr", t.adam.learning_rate);
    t.adam.beta1 = kv.get_number("beta1", t.adam.beta1);
    t.adam.beta2 = kv.get_number("beta2", t.adam.beta2);
    t.adam.epsilon = kv.get_number("epsilon", t.adam.epsilon);
    if (kv.has("lr_decay.start") || kv.has("lr_decay.end")) {
        t.lr_decay = LrDecay{kv.get_number("lr_decay.start", 0), kv.get_number("lr_decay.end", t.epochs)};
    }
    t.hidden_widths = kv.get_list<std::size_t>("hidden", t.hidden_widths);

    cfg.lambdas = kv.get_list<double>("lambdas", cfg.lambdas);
    cfg.repeats = kv.get_number("repeats", cfg.repeats);
    cfg.base_seed = kv.get_number("seed", cfg.base_seed);
    cfg.output_dir = kv.get("output_dir", cfg.output_dir);
    kv.reject_unknown();
    cfg.validate();
    return cfg;
}

inline SyntheticSpec synthetic_from_kv(const KeyValueFile& kv) {
    SyntheticSpec s;
    s.class_count = kv.get_number("classes", s.class_count);
    s.per_class = kv.get_number("per_class", s.per_class);
    s.dim = kv.get_number("dim", s.dim);
    s.cluster_spread = kv.get_number("spread", s.cluster_spread);
    s.seed = kv.get_number("seed", s.seed);
    kv.reject_unknown();
    s.validate();
    return s;
}

}  // namespace jocor
