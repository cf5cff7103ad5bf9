// fada: dataset conversion, single runs, n-shot sweeps and reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "fada/experiment.hpp"
#include "fada/report.hpp"

using namespace fada;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpecArgs {
    std::string config, task, method, data_dir, out_dir = "runs";
    std::vector<std::string> settings;
    std::uint64_t seed = 0;
    std::size_t n = 0, reps = 0, source_cap = 0;
    bool fast = false, no_checkpoints = false, verbose = false;
    CLI::Option *seed_opt = nullptr, *cap_opt = nullptr;
};

void add_spec_options(CLI::App* cmd, SpecArgs& a) {
    cmd->add_option("--config", a.config, "key = value configuration file");
    cmd->add_option("--task", a.task, "M->U, U->M, S->M, M->S, S->U or U->S");
    cmd->add_option("--method", a.method, "LB, FT, FADA, UDA-bin or FT-joint");
    cmd->add_option("--data-dir", a.data_dir, "directory holding <domain>_{train,test}.fada archives");
    cmd->add_option("--out-dir", a.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--set", a.settings, "override one setting, key=value (repeatable)");
    a.seed_opt = cmd->add_option("--seed", a.seed, "base seed");
    cmd->add_option("--n", a.n, "target samples per class");
    cmd->add_option("--reps", a.reps, "repetitions");
    a.cap_opt = cmd->add_option("--source-cap", a.source_cap, "cap the source training set (full-source tasks)");
    cmd->add_flag("--fast", a.fast, "3 repetitions and halved epoch budgets");
    cmd->add_flag("--no-checkpoints", a.no_checkpoints, "skip per-stage checkpoints");
    cmd->add_flag("-v,--verbose", a.verbose, "print every epoch");
}

// Defaults, then the config file, then --set overrides, then flags.
ExperimentSpec build_spec(const SpecArgs& a) {
    ExperimentSpec s;
    if (!a.config.empty()) {
        if (!fs::exists(a.config)) throw UsageError("config file not found: " + a.config);
        apply_config_file(s, a.config);
    }
    std::vector<std::string> errors;
    for (const auto& kv : a.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            errors.push_back("--set " + kv + ": expected key=value");
            continue;
        }
        const auto err = apply_setting(s, kv.substr(0, eq), kv.substr(eq + 1));
        if (!err.empty()) errors.push_back("--set " + err);
    }
    if (!errors.empty()) {
        std::string msg = "invalid settings:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    if (!a.task.empty()) s.task = a.task;
    if (!a.method.empty()) s.method = a.method;
    if (!a.data_dir.empty()) s.data_dir = a.data_dir;
    if (a.seed_opt->count()) s.base_seed = a.seed;
    if (a.n) s.train.n_shot = a.n;
    if (a.cap_opt->count()) s.source_cap = a.source_cap;
    if (a.fast) {
        s.fast = true;
        s.repetitions = 3;
    }
    if (a.reps) s.repetitions = a.reps;
    if (a.no_checkpoints) s.save_checkpoints = false;
    s.validate();
    return s;
}

MetricsSink epoch_printer(bool verbose) {
    if (!verbose) return {};
    return [](const EpochMetrics& e) {
        std::fprintf(stderr, "%s %zu", e.stage.c_str(), e.epoch);
        for (const auto& [k, v] : e.values) std::fprintf(stderr, " %s=%.4f", k.c_str(), v);
        std::fprintf(stderr, "\n");
    };
}

std::vector<std::size_t> parse_n_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto dash = item.find('-');
        std::size_t lo = 0, hi = 0;
        const bool ok = dash == std::string::npos ? detail::parse_number(item, lo) && (hi = lo, true)
                                                  : detail::parse_number(item.substr(0, dash), lo) &&
                                                        detail::parse_number(item.substr(dash + 1), hi);
        if (!ok || lo < 1 || hi > 7 || lo > hi) throw UsageError("bad n list '" + text + "' (values in 1..7)");
        for (std::size_t n = lo; n <= hi; ++n) out.push_back(n);
    }
    if (out.empty()) throw UsageError("empty n list");
    return out;
}

int cmd_convert(const std::vector<std::string>& inputs, const std::string& out, const std::string& tag) {
    for (const auto& p : inputs)
        if (!fs::exists(p)) throw UsageError("input not found: " + p);
    Dataset ds;
    if (inputs.size() == 1) {
        const auto bytes = idx::read_file_bytes(inputs[0]);
        if (!archive::has_magic(bytes)) {
            throw UsageError("a single input must be a canonical archive; IDX needs images and labels");
        }
        ds = archive::decode(bytes, tag);
    } else if (inputs.size() == 2) {
        ds = dataset_from_idx(idx::load(inputs[0]), idx::load(inputs[1]), tag);
    } else {
        throw UsageError("convert takes an archive, or IDX images and labels");
    }
    ds.validate();
    if (!out.empty()) {
        if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
        archive::write(ds, out);
    }
    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
    const json manifest{
        {"output", out}, {"count", ds.size()}, {"sample_shape", ds.sample_shape}, {"class_counts", counts}};
    std::cout << manifest.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot adversarial domain adaptation for digits"};
    app.require_subcommand(1);

    std::vector<std::string> convert_inputs;
    std::string convert_out, convert_tag;
    auto* convert = app.add_subcommand("convert", "IDX or archive input -> normalized 16x16 archive");
    convert->add_option("inputs", convert_inputs, "archive, or IDX images and labels")->required()->expected(1, 2);
    convert->add_option("-o,--out", convert_out, "output archive path");
    convert->add_option("--tag", convert_tag, "domain tag");

    SpecArgs pre_args, run_args, sweep_args;
    auto* pretrain = app.add_subcommand("pretrain", "train and cache the source-only model");
    add_spec_options(pretrain, pre_args);
    auto* run = app.add_subcommand("run", "one run; writes a RunRecord");
    add_spec_options(run, run_args);
    auto* sweep = app.add_subcommand("sweep", "n values x repetitions, resumable");
    add_spec_options(sweep, sweep_args);
    std::string n_list = "1-7";
    sweep->add_option("--n-list", n_list, "n values, e.g. 1,3,5 or 1-7")->capture_default_str();

    std::string records_dir, report_out;
    auto* report = app.add_subcommand("report", "aggregate RunRecords into CSV and SVG");
    report->add_option("records", records_dir, "directory of RunRecords (or a sweep out-dir)")->required();
    report->add_option("--out-dir", report_out, "where to write report.csv and charts (default: records dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*convert) return cmd_convert(convert_inputs, convert_out, convert_tag);
        if (*pretrain) {
            const auto spec = build_spec(pre_args);
            const auto data = load_task_data(spec, spec.base_seed);
            StageMetrics sm;
            bool hit = false;
            auto m = pretrained_model(spec, spec.base_seed, data, pre_args.out_dir, sm, &hit,
                                      epoch_printer(pre_args.verbose));
            std::cout << json{{"task", spec.task},
                              {"seed", spec.base_seed},
                              {"cached", hit},
                              {"checkpoint", detail::pretrain_cache_path(spec, spec.base_seed, pre_args.out_dir)},
                              {"source_train_acc", sm.last().values.at("train_acc")},
                              {"lb_accuracy", evaluate(m, data.split.heldout).accuracy}}
                             .dump()
                      << '\n';
            return 0;
        }
        if (*run) {
            const auto spec = build_spec(run_args);
            RunOptions opt{run_args.out_dir, epoch_printer(run_args.verbose)};
            const auto rec = execute_run(spec, spec.base_seed, opt);
            std::cout << json{{"run_id", rec.data.at("run_id")},
                              {"accuracy", rec.accuracy()},
                              {"digest", rec.digest()},
                              {"record", (fs::path(opt.out_dir) / "records" /
                                          (rec.data.at("run_id").get<std::string>() + ".json"))
                                             .string()}}
                             .dump()
                      << '\n';
            return 0;
        }
        if (*sweep) {
            SweepPlan plan{build_spec(sweep_args), parse_n_list(n_list)};
            RunOptions opt{sweep_args.out_dir, epoch_printer(sweep_args.verbose)};
            const auto res = run_sweep(plan, opt, [](const PlannedRun& p, bool reused) {
                std::fprintf(stderr, "%s %s\n", reused ? "reuse" : "run  ", run_id(p.spec, p.seed).c_str());
            });
            std::cout
                << json{{"records", res.records.size()}, {"executed", res.executed}, {"reused", res.reused}}.dump()
                << '\n';
            return 0;
        }
        if (*report) {
            if (!fs::exists(records_dir)) throw UsageError("records directory not found: " + records_dir);
            const auto records = load_records(records_dir);
            if (records.empty()) throw UsageError("no RunRecords in " + records_dir);
            const auto rep = write_report(records_dir, report_out.empty() ? records_dir : report_out);
            std::cout << to_csv(rep);
            for (const auto& f : rep.flags) std::cerr << "flag: " << f << '\n';
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
