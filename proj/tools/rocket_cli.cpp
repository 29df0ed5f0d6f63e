// Command-line front end: train / gradcheck / ablate / datagen / eval.
// Exit codes are a contract for scripts: 0 success, 1 runtime failure,
// 2 usage or config error.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rocketnet/checksuite.hpp"
#include "rocketnet/harness.hpp"

namespace {

// One-line, machine-parsable error on stderr.
int fail(const std::exception& e, int code) {
    std::string msg = e.what();
    for (char& c : msg) {
        if (c == '\n') c = ';';
    }
    std::cerr << "error: " << msg << "\n";
    return code;
}

rocket::TrainConfig load_train_config(const std::string& path,
                                      const std::vector<std::string>& overrides) {
    rocket::ConfigFile file = rocket::ConfigFile::load(path);
    for (const std::string& o : overrides) file.apply_override(o);
    rocket::TrainConfig cfg = rocket::TrainConfig::from_config(file);
    file.reject_unknown();
    return cfg;
}

int run_train(const std::string& config_path, const std::vector<std::string>& overrides) {
    rocket::TrainConfig cfg;
    try {
        cfg = load_train_config(config_path, overrides);
    } catch (const std::exception& e) {
        return fail(e, 2);
    }
    try {
        if (rocket::mode_needs_teacher(cfg.mode) && cfg.teacher_path.empty()) {
            std::cout << "note: no teacher checkpoint configured; pretraining a booster first\n";
        }
        const rocket::TrainResult res = rocket::train(cfg);
        const rocket::EpochRecord& rec =
            res.records[res.best_net ? res.best_epoch : res.records.size() - 1];
        std::cout << "result mode=" << rocket::train_mode_name(cfg.mode)
                  << " epochs=" << cfg.epochs;
        if (res.best_net) std::cout << " best_epoch=" << res.best_epoch;
        if (rec.err_light_test) {
            std::cout << " err_light_test=" << rocket::detail::format_double(*rec.err_light_test);
        }
        if (rec.err_booster_test) {
            std::cout << " err_booster_test="
                      << rocket::detail::format_double(*rec.err_booster_test);
        }
        if (!res.log_path.empty()) std::cout << " log=" << res.log_path;
        std::cout << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e, 1);
    }
}

int run_gradcheck(const std::string& scope, std::uint64_t seed, bool corrupt) {
    std::vector<rocket::CheckOutcome> outcomes;
    try {
        rocket::CheckOptions opts;
        opts.seed = seed;
        opts.corrupt_mse_oracle = corrupt;
        outcomes = rocket::run_check_suite(scope, opts);
    } catch (const std::exception& e) {
        return fail(e, 2);
    }
    std::vector<std::string> failed;
    for (const rocket::CheckOutcome& c : outcomes) {
        std::cout << "check " << c.name << ": worst=" << rocket::detail::format_sci(c.worst)
                  << " tol=" << rocket::detail::format_sci(c.tolerance)
                  << (c.pass ? " pass" : " FAIL");
        if (!c.note.empty()) std::cout << " (" << c.note << ")";
        std::cout << "\n";
        if (!c.pass) failed.push_back(c.name);
    }
    if (failed.empty()) {
        std::cout << "gradcheck: " << outcomes.size() << " checks passed\n";
        return 0;
    }
    std::cout << "gradcheck: FAILED:";
    for (const std::string& name : failed) std::cout << " " << name;
    std::cout << "\n";
    return 1;
}

int run_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::vector<std::string>& mode_names, std::size_t seeds,
               const std::string& csv_path) {
    rocket::TrainConfig cfg;
    std::vector<rocket::TrainMode> modes;
    try {
        cfg = load_train_config(config_path, overrides);
        for (const std::string& name : mode_names) {
            modes.push_back(rocket::parse_train_mode(name));
        }
        if (modes.empty()) throw rocket::SpecError("ablate: --modes must name at least one mode");
    } catch (const std::exception& e) {
        return fail(e, 2);
    }
    try {
        if (cfg.teacher_path.empty()) {
            for (rocket::TrainMode m : modes) {
                if (rocket::mode_needs_teacher(m)) {
                    std::cout << "note: " << rocket::train_mode_name(m)
                              << " has no teacher checkpoint; each run pretrains its own "
                                 "booster first\n";
                }
            }
        }
        const rocket::AblationResult res =
            rocket::run_ablation_grid(cfg, modes, seeds, csv_path);
        std::cout << res.csv_text;
        return 0;
    } catch (const std::exception& e) {
        return fail(e, 1);
    }
}

int run_datagen(const std::string& task, std::size_t count, std::size_t dims,
                std::size_t classes, double noise, double positive_rate, std::size_t groups,
                std::uint64_t seed, const std::string& out_path) {
    rocket::SynthSpec spec;
    try {
        if (task == "blobs") spec.task = rocket::SynthTask::Blobs;
        else if (task == "spirals") spec.task = rocket::SynthTask::Spirals;
        else if (task == "ctr") spec.task = rocket::SynthTask::Ctr;
        else throw rocket::SpecError("datagen: unknown task '" + task + "'");
        spec.dims = dims;
        spec.classes = task == "ctr" ? 2 : classes;
        spec.train_count = count;
        spec.val_count = 0;
        spec.test_count = 0;
        spec.noise = noise;
        spec.positive_rate = positive_rate;
        spec.group_count = groups;
        spec.seed = seed;
        spec.validate();
    } catch (const std::exception& e) {
        return fail(e, 2);
    }
    try {
        const rocket::Dataset ds = spec.task == rocket::SynthTask::Ctr
                                       ? rocket::gen_ctr(spec).splits.train
                                       : rocket::gen_classification(spec).train;
        rocket::write_csv(ds, out_path);
        std::vector<std::size_t> histogram(ds.classes, 0);
        for (std::size_t y : ds.labels) histogram[y] += 1;
        std::cout << "wrote " << task << " dataset: path=" << out_path << " rows=" << ds.size()
                  << " dims=" << ds.dim() << " classes=" << ds.classes << "\n";
        std::cout << "class_histogram=";
        for (std::size_t c = 0; c < histogram.size(); ++c) {
            std::cout << (c ? "," : "") << histogram[c];
        }
        std::cout << "\n";
        if (spec.task == rocket::SynthTask::Ctr) {
            const double rate =
                static_cast<double>(histogram[1]) / static_cast<double>(ds.size());
            std::cout << "groups=" << spec.group_count
                      << " positive_rate=" << rocket::detail::format_double(rate) << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        return fail(e, 1);
    }
}

int run_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& format, std::size_t classes) {
    try {
        const rocket::RocketNet net = rocket::load_checkpoint(checkpoint_path);
        rocket::Dataset ds;
        if (format == "cifar") {
            ds = rocket::read_cifar10_binary(data_path, "eval");
        } else if (format == "csv") {
            ds = rocket::read_csv(data_path, "eval", classes);
        } else {
            throw rocket::SpecError("eval: --format must be csv or cifar, got '" + format + "'");
        }
        if (ds.dim() != net.arch.input_dim || ds.classes != net.arch.classes) {
            throw rocket::SpecError("eval: checkpoint expects " +
                                    std::to_string(net.arch.input_dim) + " features / " +
                                    std::to_string(net.arch.classes) + " classes, dataset has " +
                                    std::to_string(ds.dim()) + " / " +
                                    std::to_string(ds.classes));
        }
        const rocket::detail::PathEval light =
            rocket::detail::eval_path(net, ds, rocket::Path::Light);
        const rocket::detail::PathEval booster =
            rocket::detail::eval_path(net, ds, rocket::Path::Booster);
        rocket::EvalReport rep;
        rep.samples = ds.size();
        rep.error_light = light.err;
        rep.error_booster = booster.err;
        rep.auc_light = light.auc_v;
        rep.gauc_light = light.gauc_v;
        std::cout << "samples=" << rep.samples << "\n";
        std::cout << "err_light=" << rocket::detail::format_double(rep.error_light) << "\n";
        std::cout << "err_booster=" << rocket::detail::format_double(*rep.error_booster) << "\n";
        if (rep.auc_light) {
            std::cout << "auc=" << rocket::detail::format_double(*rep.auc_light) << "\n";
        }
        if (rep.gauc_light) {
            std::cout << "gauc=" << rocket::detail::format_double(*rep.gauc_light) << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        return fail(e, 1);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-trained light/booster classifier toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    CLI::App* train = app.add_subcommand("train", "Run one training mode from a config file");
    train->add_option("config", config_path, "Config file path")->required();
    train->add_option("-D,--set", overrides, "Override as section.key=value (repeatable)");

    std::string scope = "all";
    std::uint64_t gc_seed = 1;
    bool corrupt = false;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference and closed-form gradient checks");
    gradcheck->add_option("scope", scope, "all, autodiff, objective or model");
    gradcheck->add_option("--seed", gc_seed, "Seed for the random cases");
    gradcheck->add_flag("--corrupt-mse-oracle", corrupt)->group("");

    std::vector<std::string> mode_names;
    std::size_t seeds = 5;
    std::string csv_path;
    CLI::App* ablate = app.add_subcommand("ablate", "Run a mode grid and tabulate medians");
    ablate->add_option("config", config_path, "Config file path")->required();
    ablate->add_option("--modes", mode_names, "Comma-separated training modes")
        ->required()
        ->delimiter(',');
    ablate->add_option("--seeds", seeds, "Seeds per mode (master seed, +1, ...)");
    ablate->add_option("--csv", csv_path, "Comparison table output path")->required();
    ablate->add_option("-D,--set", overrides, "Override as section.key=value (repeatable)");

    std::string task = "spirals", out_path;
    std::size_t count = 1000, dims = 2, classes = 2, groups = 10;
    double noise = 0.2, positive_rate = 0.1;
    std::uint64_t dg_seed = 1;
    CLI::App* datagen = app.add_subcommand("datagen", "Write a synthetic dataset as CSV");
    datagen->add_option("--task", task, "blobs, spirals or ctr");
    datagen->add_option("--count", count, "Number of rows");
    datagen->add_option("--dims", dims, "Feature dimensions (item dims for ctr)");
    datagen->add_option("--classes", classes, "Class count (blobs/spirals)");
    datagen->add_option("--noise", noise, "Noise level");
    datagen->add_option("--positive-rate", positive_rate, "Positive fraction (ctr)");
    datagen->add_option("--groups", groups, "Group count (ctr)");
    datagen->add_option("--seed", dg_seed, "Generator seed");
    datagen->add_option("--out", out_path, "Output CSV path")->required();

    std::string checkpoint_path, data_path, data_format = "csv";
    std::size_t eval_classes = 0;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
    eval->add_option("--data", data_path, "Dataset path")->required();
    eval->add_option("--format", data_format, "csv or cifar");
    eval->add_option("--classes", eval_classes, "Class count override for CSV (0 = infer)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (train->parsed()) return run_train(config_path, overrides);
    if (gradcheck->parsed()) return run_gradcheck(scope, gc_seed, corrupt);
    if (ablate->parsed()) return run_ablate(config_path, overrides, mode_names, seeds, csv_path);
    if (datagen->parsed()) {
        return run_datagen(task, count, dims, classes, noise, positive_rate, groups, dg_seed,
                           out_path);
    }
    return run_eval(checkpoint_path, data_path, data_format, eval_classes);
}
