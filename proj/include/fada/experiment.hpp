#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fada/checkpoint.hpp"
#include "fada/dataset.hpp"
#include "fada/log.hpp"
#include "fada/pair_groups.hpp"
#include "fada/training.hpp"

namespace fada {

using nlohmann::json;

namespace stream {
inline constexpr std::uint64_t kSourceSubset = 109, kTargetPool = 110, kFewShot = 111, kSourceVal = 112;
}

// ---------------------------------------------------------------------------
// Tasks and methods

enum class Domain { mnist, usps, svhn };

inline const char* domain_letter(Domain d) { return d == Domain::mnist ? "M" : d == Domain::usps ? "U" : "S"; }
inline const char* domain_file_stem(Domain d) {
    return d == Domain::mnist ? "mnist" : d == Domain::usps ? "usps" : "svhn";
}

struct Task {
    Domain source = Domain::mnist;
    Domain target = Domain::usps;

    std::string name() const { return std::string(domain_letter(source)) + "->" + domain_letter(target); }
    // M->U and U->M use the 2000 MNIST / 1800 USPS subsampling protocol.
    bool subsampled() const {
        return (source == Domain::mnist && target == Domain::usps) ||
               (source == Domain::usps && target == Domain::mnist);
    }
    bool involves_svhn() const { return source == Domain::svhn || target == Domain::svhn; }
};

inline std::optional<Domain> parse_domain(char c) {
    switch (c) {
        case 'M':
            return Domain::mnist;
        case 'U':
            return Domain::usps;
        case 'S':
            return Domain::svhn;
        default:
            return std::nullopt;
    }
}

// Accepts "M->U" and "M→U".
inline std::optional<Task> parse_task(const std::string& s) {
    std::string rest;
    if (s.size() == 4 && s.substr(1, 2) == "->")
        rest = s.substr(3);
    else if (s.size() == 5 && s.substr(1, 3) == "\xE2\x86\x92")
        rest = s.substr(4);
    else
        return std::nullopt;
    auto a = parse_domain(s[0]), b = parse_domain(rest[0]);
    if (!a || !b || *a == *b) return std::nullopt;
    return Task{*a, *b};
}

inline const std::vector<std::string>& known_tasks() {
    static const std::vector<std::string> t{"M->U", "U->M", "S->M", "M->S", "S->U", "U->S"};
    return t;
}

enum class Method { lb, ft, fada, uda_bin, ft_joint };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::lb:
            return "LB";
        case Method::ft:
            return "FT";
        case Method::fada:
            return "FADA";
        case Method::uda_bin:
            return "UDA-bin";
        case Method::ft_joint:
            return "FT-joint";
    }
    return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
    for (Method m : {Method::lb, Method::ft, Method::fada, Method::uda_bin, Method::ft_joint})
        if (s == method_name(m)) return m;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Experiment spec

inline constexpr std::size_t kMnistSubset = 2000, kUspsSubset = 1800, kSourceValCount = 1000;

struct ExperimentSpec {
    std::string task = "M->U";
    std::string method = "FADA";
    std::size_t repetitions = 10;
    std::uint64_t base_seed = 0;
    std::string data_dir = "data";
    std::size_t source_cap = 0;  // 0 = uncapped
    bool fast = false;
    bool save_checkpoints = true;
    TrainConfig train;

    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        const auto t = parse_task(task);
        if (!t) out.push_back("task '" + task + "' is not one of M->U, U->M, S->M, M->S, S->U, U->S");
        if (!parse_method(method))
            out.push_back("method '" + method + "' is not one of LB, FT, FADA, UDA-bin, FT-joint");
        if (repetitions < 1) out.push_back("repetitions must be >= 1");
        if (train.n_shot > 7) out.push_back("n_shot must lie in 1..7");
        if (t && source_cap && t->subsampled()) out.push_back("source_cap applies only to the full-source tasks");
        for (const auto& p : train.problems()) out.push_back(p);
        return out;
    }

    void validate() const {
        const auto p = problems();
        if (p.empty()) return;
        std::string msg = "invalid experiment spec:";
        for (const auto& s : p) msg += "\n  - " + s;
        throw ConfigError(msg);
    }

    Task parsed_task() const { return *parse_task(task); }
    Method parsed_method() const { return *parse_method(method); }

    // Budgets actually used: the fast profile halves every epoch budget.
    TrainConfig effective_train() const {
        TrainConfig c = train;
        if (fast) {
            auto half = [](std::size_t& e) { e = std::max<std::size_t>(1, e / 2); };
            half(c.epochs_pretrain);
            half(c.epochs_dcd);
            half(c.epochs_adv);
            half(c.epochs_finetune);
        }
        return c;
    }
};

inline json to_json(const TrainConfig& c) {
    return json{{"gamma", c.gamma},
                {"lr_pretrain", c.lr_pretrain},
                {"lr_dcd", c.lr_dcd},
                {"lr_adv", c.lr_adv},
                {"lr_finetune", c.lr_finetune},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_epsilon", c.adam_epsilon},
                {"epochs_pretrain", c.epochs_pretrain},
                {"epochs_dcd", c.epochs_dcd},
                {"epochs_adv", c.epochs_adv},
                {"epochs_finetune", c.epochs_finetune},
                {"batch_cls", c.batch_cls},
                {"batch_pair", c.batch_pair},
                {"dcd_steps_per_g", c.dcd_steps_per_g},
                {"n_shot", c.n_shot},
                {"eval_pairs_per_group", c.eval_pairs_per_group},
                {"activation", to_string(c.arch.activation)},
                {"embed_final_activation", c.arch.embed_final_activation}};
}

// Everything that determines a run's outcome apart from the seed.
inline json to_json(const ExperimentSpec& s) {
    return json{{"task", s.task},
                {"method", s.method},
                {"repetitions", s.repetitions},
                {"base_seed", s.base_seed},
                {"source_cap", s.source_cap},
                {"fast", s.fast},
                {"train", to_json(s.train)},
                {"effective_train", to_json(s.effective_train())},
                {"protocol",
                 {{"mnist_subset", kMnistSubset},
                  {"usps_subset", kUspsSubset},
                  {"source_val_count", kSourceValCount},
                  {"pair_ratios", {1.0, 1.0, 1.0, 1.0}},
                  {"dcd_hidden", kDcdHidden},
                  {"precision", "float32"}}}};
}

// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Digest of the per-run part of the spec: repetitions and base seed only
// choose which runs exist, so they are left out.
inline std::string spec_digest(const ExperimentSpec& s) {
    json j = to_json(s);
    j.erase("repetitions");
    j.erase("base_seed");
    return fnv1a_hex(j.dump());
}

// ---------------------------------------------------------------------------
// key = value config files

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename V>
bool parse_number(const std::string& text, V& out) {
    std::istringstream in(text);
    V v{};
    in >> v;
    if (!in || !(in >> std::ws).eof()) return false;
    if constexpr (std::is_unsigned_v<V>) {
        if (!text.empty() && text[0] == '-') return false;
    }
    out = v;
    return true;
}

inline bool parse_bool(const std::string& text, bool& out) {
    if (text == "true" || text == "1" || text == "yes") return out = true, true;
    if (text == "false" || text == "0" || text == "no") return out = false, true;
    return false;
}

}  // namespace detail

// Applies one setting; returns an error message or an empty string.
inline std::string apply_setting(ExperimentSpec& s, const std::string& key, const std::string& value) {
    auto num = [&](auto& field) -> std::string {
        return detail::parse_number(value, field) ? "" : "'" + key + "': cannot parse '" + value + "'";
    };
    auto flag = [&](bool& field) -> std::string {
        return detail::parse_bool(value, field) ? "" : "'" + key + "': expected true/false, got '" + value + "'";
    };
    TrainConfig& t = s.train;
    if (key == "task") return s.task = value, "";
    if (key == "method") return s.method = value, "";
    if (key == "data_dir") return s.data_dir = value, "";
    if (key == "repetitions") return num(s.repetitions);
    if (key == "seed" || key == "base_seed") return num(s.base_seed);
    if (key == "source_cap") return num(s.source_cap);
    if (key == "fast") return flag(s.fast);
    if (key == "save_checkpoints") return flag(s.save_checkpoints);
    if (key == "gamma") return num(t.gamma);
    if (key == "lr_pretrain") return num(t.lr_pretrain);
    if (key == "lr_dcd") return num(t.lr_dcd);
    if (key == "lr_adv") return num(t.lr_adv);
    if (key == "lr_finetune") return num(t.lr_finetune);
    if (key == "beta1") return num(t.beta1);
    if (key == "beta2") return num(t.beta2);
    if (key == "adam_epsilon") return num(t.adam_epsilon);
    if (key == "epochs_pretrain") return num(t.epochs_pretrain);
    if (key == "epochs_dcd") return num(t.epochs_dcd);
    if (key == "epochs_adv") return num(t.epochs_adv);
    if (key == "epochs_finetune") return num(t.epochs_finetune);
    if (key == "batch_cls") return num(t.batch_cls);
    if (key == "batch_pair") return num(t.batch_pair);
    if (key == "dcd_steps_per_g") return num(t.dcd_steps_per_g);
    if (key == "n_shot" || key == "n") return num(t.n_shot);
    if (key == "eval_pairs_per_group") return num(t.eval_pairs_per_group);
    if (key == "embed_final_activation") return flag(t.arch.embed_final_activation);
    if (key == "activation") {
        try {
            t.arch.activation = parse_activation(value);
            return "";
        } catch (const std::invalid_argument& e) {
            return "'activation': " + std::string(e.what());
        }
    }
    return "unknown key '" + key + "'";
}

// Lines of `key = value`; '#' starts a comment. All errors are reported
// together.
inline void apply_config_text(ExperimentSpec& s, const std::string& text, const std::string& origin = "config") {
    std::vector<std::string> errors;
    std::istringstream in(text);
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(origin + ":" + std::to_string(no) + ": expected key = value");
            continue;
        }
        const auto err = apply_setting(s, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        if (!err.empty()) errors.push_back(origin + ":" + std::to_string(no) + ": " + err);
    }
    if (errors.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
}

inline void apply_config_file(ExperimentSpec& s, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(s, buf.str(), path);
}

// ---------------------------------------------------------------------------
// Data protocol

inline std::string archive_path(const std::string& dir, Domain d, bool train) {
    return (std::filesystem::path(dir) / (std::string(domain_file_stem(d)) + (train ? "_train" : "_test") + ".fada"))
        .string();
}

struct TaskData {
    Dataset source;      // source training data
    Dataset source_val;  // disjoint source samples for held-out metrics
    Dataset target_pool;
    FewShotSplit split;  // train = few-shot picks, heldout = test set
};

inline void assert_disjoint(const FewShotSplit& split, std::size_t pool_size) {
    std::vector<char> seen(pool_size, 0);
    for (auto i : split.train_indices) seen.at(i) = 1;
    for (auto i : split.heldout_indices) {
        if (seen.at(i)) throw std::logic_error("few-shot picks overlap the test set at index " + std::to_string(i));
    }
    if (split.train_indices.size() + split.heldout_indices.size() != pool_size) {
        throw std::logic_error("few-shot split does not partition the target pool");
    }
}

inline Dataset uniform_subset(const Dataset& ds, std::size_t count, std::uint64_t seed, std::uint64_t stream_id) {
    if (count >= ds.size()) return ds;
    return sample_source_subset(ds, count, derive_seed(seed, stream_id));
}

// M->U / U->M: 2000 MNIST-train and 1800 USPS-train images drawn per seed;
// the target pool minus the few-shot picks is the test set. Other tasks:
// the full source training set (optionally capped) and the target test
// set minus the picks.
inline TaskData load_task_data(const ExperimentSpec& spec, std::uint64_t seed) {
    const Task task = spec.parsed_task();
    const std::string& dir = spec.data_dir;
    TaskData d;
    auto subset_size = [](Domain dom) { return dom == Domain::mnist ? kMnistSubset : kUspsSubset; };
    const Dataset source_train = archive::read(archive_path(dir, task.source, true), domain_letter(task.source));
    const Dataset source_test = archive::read(archive_path(dir, task.source, false), domain_letter(task.source));
    if (task.subsampled()) {
        d.source = uniform_subset(source_train, subset_size(task.source), seed, stream::kSourceSubset);
        const Dataset target_train = archive::read(archive_path(dir, task.target, true), domain_letter(task.target));
        d.target_pool = uniform_subset(target_train, subset_size(task.target), seed, stream::kTargetPool);
    } else {
        d.source =
            spec.source_cap ? uniform_subset(source_train, spec.source_cap, seed, stream::kSourceSubset) : source_train;
        d.target_pool = archive::read(archive_path(dir, task.target, false), domain_letter(task.target));
    }
    d.source_val = uniform_subset(source_test, kSourceValCount, seed, stream::kSourceVal);
    d.split = sample_few_shot_target(d.target_pool, spec.train.n_shot, derive_seed(seed, stream::kFewShot));
    assert_disjoint(d.split, d.target_pool.size());
    if (d.split.heldout.empty()) throw DatasetError("target test set is empty after removing the few-shot picks");
    return d;
}

// ---------------------------------------------------------------------------
// Runs

struct RunRecord {
    json data;

    std::string digest() const { return data.at("digest").get<std::string>(); }
    double accuracy() const { return data.at("accuracy").get<double>(); }
};

inline json to_json(const StageMetrics& sm) {
    json epochs = json::array();
    for (const auto& e : sm.epochs) epochs.push_back({{"epoch", e.epoch}, {"values", e.values}});
    return json{{"stage", sm.stage}, {"epochs", epochs}};
}

inline json to_json(const DcdScores& s) {
    return json{{"accuracy4", s.accuracy4},
                {"separate12", s.separate12},
                {"separate34", s.separate34},
                {"g2_distance", s.g2_distance},
                {"g4_distance", s.g4_distance}};
}

// Digest over the canonical record without the runtime block and the
// digest itself.
inline std::string record_digest(json j) {
    j.erase("runtime");
    j.erase("digest");
    return fnv1a_hex(j.dump());
}

inline std::string run_id(const ExperimentSpec& spec, std::uint64_t seed) {
    std::string task = spec.task;
    for (auto& c : task)
        if (c == '>') c = '-';
    task.erase(std::unique(task.begin(), task.end(), [](char a, char b) { return a == '-' && b == '-'; }), task.end());
    return task + "_" + spec.method + "_n" + std::to_string(spec.train.n_shot) + "_s" + std::to_string(seed);
}

struct RunOptions {
    std::string out_dir = "runs";
    MetricsSink sink;  // optional live view of every epoch
};

namespace detail {

inline std::string pretrain_cache_path(const ExperimentSpec& spec, std::uint64_t seed, const std::string& out_dir) {
    const TrainConfig c = spec.effective_train();
    const Task t = spec.parsed_task();
    json key{{"source", domain_letter(t.source)},
             {"subsampled", t.subsampled()},
             {"source_cap", spec.source_cap},
             {"target", domain_letter(t.target)},
             {"seed", seed},
             {"lr_pretrain", c.lr_pretrain},
             {"epochs_pretrain", c.epochs_pretrain},
             {"batch_cls", c.batch_cls},
             {"adam", {c.beta1, c.beta2, c.adam_epsilon}},
             {"activation", to_string(c.arch.activation)},
             {"embed_final_activation", c.arch.embed_final_activation}};
    std::string task = t.name();
    task.replace(task.find("->"), 2, "-");
    return (std::filesystem::path(out_dir) / "cache" /
            ("pretrain_" + task + "_s" + std::to_string(seed) + "_" + fnv1a_hex(key.dump()) + ".fadc"))
        .string();
}

}  // namespace detail

inline StageMetrics stage_from_json(const json& j) {
    StageMetrics sm{j.at("stage").get<std::string>(), {}};
    for (const auto& e : j.at("epochs"))
        sm.epochs.push_back(
            {sm.stage, e.at("epoch").get<std::size_t>(), e.at("values").get<std::map<std::string, double>>()});
    return sm;
}

// Stage-one model for (task, seed), reused across methods and n values
// through a checkpoint cache under out_dir/cache. Its metrics carry no
// target-side values, so they do not depend on which run filled the cache.
inline ModelBundle<float> pretrained_model(const ExperimentSpec& spec, std::uint64_t seed, const TaskData& data,
                                           const std::string& out_dir, StageMetrics& metrics, bool* cache_hit = nullptr,
                                           const MetricsSink& sink = {}) {
    const std::string path = detail::pretrain_cache_path(spec, seed, out_dir);
    const std::string side = path + ".json";
    if (std::filesystem::exists(path) && std::filesystem::exists(side)) {
        if (cache_hit) *cache_hit = true;
        std::ifstream in(side);
        metrics = stage_from_json(json::parse(in));
        return checkpoint::load<float>(path);
    }
    TrainConfig cfg = spec.effective_train();
    cfg.seed = seed;
    auto m = init_models<float>(seed, cfg.arch);
    EvalContext ctx{&data.source_val, nullptr, nullptr, sink};
    metrics = pretrain_source(m, data.source, cfg, ctx);
    if (cache_hit) *cache_hit = false;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    {
        std::ofstream out(side + ".tmp", std::ios::trunc);
        out << to_json(metrics).dump() << '\n';
    }
    checkpoint::save(m, "pretrain", path + ".tmp");
    std::filesystem::rename(side + ".tmp", side);
    std::filesystem::rename(path + ".tmp", path);
    return m;
}

inline json evaluation_json(const Evaluation& e) {
    return json{{"accuracy", e.accuracy},
                {"count", e.count},
                {"per_class_accuracy", e.per_class_accuracy},
                {"per_class_count", e.per_class_count}};
}

// Executes one (spec, seed) run and writes <out_dir>/records/<id>.json plus
// a line-delimited metrics stream and, optionally, per-stage checkpoints.
inline RunRecord execute_run(const ExperimentSpec& spec, std::uint64_t seed, const RunOptions& opt = {}) {
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();
    namespace fs = std::filesystem;
    const Task task = spec.parsed_task();
    const Method method = spec.parsed_method();
    TrainConfig cfg = spec.effective_train();
    cfg.seed = seed;
    const std::string id = run_id(spec, seed);
    fs::create_directories(fs::path(opt.out_dir) / "records");
    fs::create_directories(fs::path(opt.out_dir) / "metrics");

    const TaskData data = load_task_data(spec, seed);
    const Dataset& test = data.split.heldout;
    const GroupedPairs eval_pairs = build_grouped_pairs(data.source_val, test, derive_seed(seed, stream::kEvalPairs),
                                                        PairConfig{{1, 1, 1, 1}, cfg.eval_pairs_per_group});

    std::ofstream metrics_out(fs::path(opt.out_dir) / "metrics" / (id + ".jsonl"), std::ios::trunc);
    EvalContext ctx{
        &data.source_val, &test, &eval_pairs, [&](const EpochMetrics& e) {
            metrics_out << json{{"run", id}, {"stage", e.stage}, {"epoch", e.epoch}, {"values", e.values}}.dump()
                        << '\n';
            metrics_out.flush();
            if (opt.sink) opt.sink(e);
        }};
    auto save_stage = [&](ModelBundle<float>& m, const std::string& stage) {
        if (!spec.save_checkpoints) return;
        fs::create_directories(fs::path(opt.out_dir) / "checkpoints");
        checkpoint::save(m, stage, (fs::path(opt.out_dir) / "checkpoints" / (id + "_" + stage + ".fadc")).string());
    };

    json stages = json::array();
    json extras = json::object();
    StageMetrics pre;
    bool cache_hit = false;
    auto m = pretrained_model(spec, seed, data, opt.out_dir, pre, &cache_hit, ctx.sink);
    stages.push_back(to_json(pre));
    const Evaluation lb = evaluate(m, test);
    extras["lb_accuracy"] = lb.accuracy;
    save_stage(m, "pretrain");

    switch (method) {
        case Method::lb:
            break;
        case Method::ft:
            stages.push_back(to_json(finetune_baseline(m, data.split.train, cfg, ctx)));
            break;
        case Method::ft_joint: {
            const auto pairs =
                build_grouped_pairs(data.source, data.split.train, derive_seed(seed, stream::kTrainPairs));
            const std::size_t steps = PairBatchStream(pairs, cfg.batch_pair, 0).batches_per_epoch();
            stages.push_back(to_json(joint_finetune_baseline(m, data.source, data.split.train, steps, cfg, ctx)));
            break;
        }
        case Method::fada: {
            const auto pairs =
                build_grouped_pairs(data.source, data.split.train, derive_seed(seed, stream::kTrainPairs));
            extras["pair_counts"] = {pairs.group(1).size(), pairs.group(2).size(), pairs.group(3).size(),
                                     pairs.group(4).size()};
            const auto zs0 = embed_dataset(m, data.source_val);
            const auto zt0 = embed_dataset(m, test);
            extras["dcd_after_pretrain"] = to_json(score_dcd(m, eval_pairs, zs0, zt0));
            extras["alignment_lb"] = semantic_alignment_distance(m, data.source_val, test, eval_pairs.group(2));
            stages.push_back(to_json(train_dcd(m, pairs, data.source, data.split.train, cfg, ctx)));
            save_stage(m, "dcd");
            extras["dcd_after_stage2"] =
                to_json(score_dcd(m, eval_pairs, embed_dataset(m, data.source_val), embed_dataset(m, test)));
            stages.push_back(to_json(fada_loop(m, data.source, data.split.train, pairs, cfg, ctx)));
            extras["dcd_after_stage3"] =
                to_json(score_dcd(m, eval_pairs, embed_dataset(m, data.source_val), embed_dataset(m, test)));
            extras["alignment_final"] = semantic_alignment_distance(m, data.source_val, test, eval_pairs.group(2));
            break;
        }
        case Method::uda_bin: {
            // Unlabeled target data: the target pool for the subsampled tasks,
            // otherwise the target training set.
            const Dataset unlabeled =
                task.subsampled() ? data.target_pool : archive::read(archive_path(spec.data_dir, task.target, true));
            auto res = uda_binary_baseline(m, data.source, unlabeled, cfg, ctx, &data.source_val, &test);
            stages.push_back(to_json(res.metrics));
            extras["domain_accuracy"] = res.domain_accuracy;
            break;
        }
    }
    if (method != Method::lb) save_stage(m, method == Method::fada ? "adversarial" : "final");

    const Evaluation final_eval = method == Method::lb ? lb : evaluate(m, test);
    json j{{"run_id", id},
           {"spec", to_json(spec)},
           {"spec_digest", spec_digest(spec)},
           {"task", task.name()},
           {"method", method_name(method)},
           {"n_shot", cfg.n_shot},
           {"seed", seed},
           {"capped", spec.source_cap != 0},
           {"accuracy", final_eval.accuracy},
           {"evaluation", evaluation_json(final_eval)},
           {"data",
            {{"source", data.source.size()},
             {"source_val", data.source_val.size()},
             {"target_pool", data.target_pool.size()},
             {"target_train", data.split.train.size()},
             {"test", test.size()}}},
           {"stages", stages},
           {"extras", extras}};
    j["runtime"] = {{"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
                    {"pretrain_cached", cache_hit}};
    j["digest"] = record_digest(j);
    std::ofstream out(fs::path(opt.out_dir) / "records" / (id + ".json"), std::ios::trunc);
    out << j.dump(2) << '\n';
    return {j};
}

inline RunRecord read_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open record " + path);
    return {json::parse(in)};
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPlan {
    ExperimentSpec base;
    std::vector<std::size_t> n_values{1, 2, 3, 4, 5, 6, 7};
};

struct SweepResult {
    std::vector<RunRecord> records;
    std::size_t executed = 0;
    std::size_t reused = 0;
};

struct PlannedRun {
    ExperimentSpec spec;
    std::uint64_t seed;
    std::string path;
};

inline std::vector<PlannedRun> plan_sweep(const SweepPlan& plan, const std::string& out_dir) {
    std::vector<PlannedRun> out;
    for (std::size_t n : plan.n_values) {
        for (std::size_t rep = 0; rep < plan.base.repetitions; ++rep) {
            ExperimentSpec s = plan.base;
            s.train.n_shot = n;
            const std::uint64_t seed = plan.base.base_seed + rep;
            out.push_back(
                {s, seed, (std::filesystem::path(out_dir) / "records" / (run_id(s, seed) + ".json")).string()});
        }
    }
    return out;
}

// Runs every (n, repetition) cell; seeds are base_seed + rep. Records that
// already exist are reused, but only if they were produced by the same spec.
inline SweepResult run_sweep(const SweepPlan& plan, const RunOptions& opt = {},
                             const std::function<void(const PlannedRun&, bool reused)>& progress = {}) {
    const auto planned = plan_sweep(plan, opt.out_dir);
    std::vector<std::string> mismatched;
    for (const auto& p : planned) {
        p.spec.validate();
        if (!std::filesystem::exists(p.path)) continue;
        const auto rec = read_record(p.path);
        const auto want = spec_digest(p.spec);
        if (rec.data.value("spec_digest", "") != want || record_digest(rec.data) != rec.digest()) {
            mismatched.push_back(p.path);
        }
    }
    if (!mismatched.empty()) {
        std::string msg = "refusing to mix with prior results produced by a different spec:";
        for (const auto& m : mismatched) msg += "\n  - " + m;
        throw ConfigError(msg);
    }
    SweepResult res;
    for (const auto& p : planned) {
        const bool exists = std::filesystem::exists(p.path);
        if (progress) progress(p, exists);
        if (exists) {
            res.records.push_back(read_record(p.path));
            ++res.reused;
        } else {
            res.records.push_back(execute_run(p.spec, p.seed, opt));
            ++res.executed;
        }
    }
    return res;
}

}  // namespace fada
