#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rocketnet/autodiff.hpp"
#include "rocketnet/checkpoint.hpp"
#include "rocketnet/cifar10.hpp"
#include "rocketnet/config.hpp"
#include "rocketnet/data.hpp"
#include "rocketnet/errors.hpp"
#include "rocketnet/metrics.hpp"
#include "rocketnet/model.hpp"
#include "rocketnet/objective.hpp"
#include "rocketnet/optimizer.hpp"
#include "rocketnet/rng.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// ---------------------------------------------------------------------------
// Training modes
// ---------------------------------------------------------------------------

// The full comparison grid:
//   Base           light net alone, cross-entropy only.
//   BoosterOnly    booster net alone, cross-entropy only.
//   Rocket         joint objective, gradient block on.
//   RocketNoGb     joint objective, hint gradients also reach the booster.
//   RocketNoSharing  two disjoint nets (each with its own trunk copy), hint
//                    loss still applied, gradient block on.
//   RocketNoJoint  two-phase: a booster is trained first, then the light net
//                  starts from the booster's trunk and mimics its frozen
//                  logits.
//   RocketPlusKd   Rocket plus an extra distillation term against a frozen
//                  pretrained booster's softened probabilities.
enum class TrainMode {
    Base,
    BoosterOnly,
    Rocket,
    RocketNoGb,
    RocketNoSharing,
    RocketNoJoint,
    RocketPlusKd,
};

inline const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::Base: return "base";
        case TrainMode::BoosterOnly: return "booster_only";
        case TrainMode::Rocket: return "rocket";
        case TrainMode::RocketNoGb: return "rocket_no_gb";
        case TrainMode::RocketNoSharing: return "rocket_no_sharing";
        case TrainMode::RocketNoJoint: return "rocket_no_joint";
        default: return "rocket_plus_kd";
    }
}

inline TrainMode parse_train_mode(const std::string& s) {
    for (TrainMode m : {TrainMode::Base, TrainMode::BoosterOnly, TrainMode::Rocket,
                        TrainMode::RocketNoGb, TrainMode::RocketNoSharing,
                        TrainMode::RocketNoJoint, TrainMode::RocketPlusKd}) {
        if (s == train_mode_name(m)) return m;
    }
    throw SpecError("unknown training mode '" + s +
                    "' (expected base, booster_only, rocket, rocket_no_gb, rocket_no_sharing, "
                    "rocket_no_joint or rocket_plus_kd)");
}

inline bool mode_trains_light(TrainMode m) { return m != TrainMode::BoosterOnly; }

inline bool mode_trains_booster(TrainMode m) {
    return m == TrainMode::BoosterOnly || m == TrainMode::Rocket || m == TrainMode::RocketNoGb ||
           m == TrainMode::RocketNoSharing || m == TrainMode::RocketPlusKd;
}

inline bool mode_needs_teacher(TrainMode m) {
    return m == TrainMode::RocketNoJoint || m == TrainMode::RocketPlusKd;
}

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

// In RocketNoSharing the light copy draws its parameters from a seed offset
// from the master, so the two nets start decoupled yet each is reproducible
// by a standalone run (booster copy: same seed; light copy: seed + offset
// passed as init_seed).
inline constexpr std::uint64_t kNoSharingLightSeedOffset = 7919;

// Per-epoch shuffle seed.  Double mixing keeps neighbouring master seeds
// from producing overlapping batch orders.
inline std::uint64_t epoch_batch_seed(std::uint64_t master, std::size_t epoch) {
    return mix_seed(mix_seed(master) + epoch + 1);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DataConfig {
    enum class Source { Synth, Csv, Cifar };
    Source source = Source::Synth;
    SynthSpec synth;                             // Source::Synth
    std::string csv_train, csv_val, csv_test;    // Source::Csv (val/test optional)
    std::string cifar_train, cifar_test;         // Source::Cifar (one file per split)

    void validate() const {
        if (source == Source::Synth) {
            synth.validate();
        } else if (source == Source::Csv) {
            if (csv_train.empty()) throw SpecError("data: csv source needs data.train_csv");
        } else {
            if (cifar_train.empty()) throw SpecError("data: cifar source needs data.cifar_train");
        }
    }
};

struct TrainConfig {
    TrainMode mode = TrainMode::Rocket;
    ArchSpec arch;
    HintLossSpec hint;
    double lambda = 1.0;
    double kd_weight = 1.0;        // RocketPlusKd: weight of the frozen distill term
    double kd_temperature = 4.0;   // RocketPlusKd: its temperature
    std::string teacher_path;      // pretrained booster checkpoint; "" = pretrain in-run
    OptimizerSpec optimizer;
    LrSchedule schedule{0.1, 0.2, {60, 120, 160}};
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> init_seed;  // parameter draw seed; defaults to `seed`
    DataConfig data;
    std::string out_stem;   // "" = write no files; else <stem>.jsonl + checkpoints
    bool log_timing = true;  // emit wall-clock seconds per epoch

    std::uint64_t init_seed_value() const { return init_seed ? *init_seed : seed; }

    void validate() const {
        arch.validate();
        hint.validate();
        optimizer.validate();
        schedule.validate();
        data.validate();
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
            throw SpecError("config: hint.lambda must be finite and >= 0");
        }
        if (epochs < 1) throw SpecError("config: train.epochs must be >= 1");
        if (batch_size < 1) throw SpecError("config: train.batch must be >= 1");
        if (mode == TrainMode::RocketPlusKd) {
            if (!(lambda > 0.0)) {
                throw SpecError("config: rocket_plus_kd needs hint.lambda > 0 (the distill term "
                                "is folded into the logged hint as hint + (kd.weight/lambda) * "
                                "kd, which has no meaning at lambda = 0)");
            }
            if (!(kd_weight >= 0.0) || !std::isfinite(kd_weight)) {
                throw SpecError("config: kd.weight must be finite and >= 0");
            }
            if (!(kd_temperature > 0.0)) {
                throw SpecError("config: kd.temperature must be positive");
            }
        }
    }

    // Reads every key this program understands.  The caller decides when to
    // call file.reject_unknown(), typically right after this.
    static TrainConfig from_config(ConfigFile& file) {
        TrainConfig c;
        c.mode = parse_train_mode(file.get_string("mode", "name", "rocket"));

        c.arch.input_dim = static_cast<std::size_t>(file.get_uint("arch", "input", 0));
        c.arch.classes = static_cast<std::size_t>(file.get_uint("arch", "classes", 0));
        const std::string sharing = file.get_string("arch", "sharing", "bottom");
        if (sharing == "bottom") c.arch.sharing = Sharing::Bottom;
        else if (sharing == "interval") c.arch.sharing = Sharing::Interval;
        else throw SpecError("config: arch.sharing must be bottom or interval, got '" + sharing + "'");
        c.arch.residual = file.get_bool("arch", "residual", false);
        c.arch.shared = file.get_uint_list("arch", "shared", {});
        c.arch.light = file.get_uint_list("arch", "light", {});
        c.arch.booster = file.get_uint_list("arch", "booster", {});

        const std::string kind = file.get_string("hint", "kind", "logit_mimic");
        if (kind == "softmax_mse") c.hint.kind = HintKind::SoftmaxMSE;
        else if (kind == "logit_mimic") c.hint.kind = HintKind::LogitMimic;
        else if (kind == "distill") c.hint.kind = HintKind::Distill;
        else throw SpecError("config: hint.kind must be softmax_mse, logit_mimic or distill, got '" +
                             kind + "'");
        c.lambda = file.get_double("hint", "lambda", 1.0);
        c.hint.temperature = file.get_double("hint", "temperature", 4.0);
        c.hint.swap_distill_target = file.get_bool("hint", "swap_distill_target", false);

        c.kd_weight = file.get_double("kd", "weight", 1.0);
        c.kd_temperature = file.get_double("kd", "temperature", 4.0);
        c.teacher_path = file.get_string("kd", "teacher", "");

        const std::string opt = file.get_string("optimizer", "kind", "sgd");
        if (opt == "sgd") c.optimizer.kind = OptimizerSpec::Kind::SgdMomentum;
        else if (opt == "adam") c.optimizer.kind = OptimizerSpec::Kind::Adam;
        else throw SpecError("config: optimizer.kind must be sgd or adam, got '" + opt + "'");
        c.optimizer.momentum = file.get_double("optimizer", "momentum", 0.9);
        c.optimizer.beta1 = file.get_double("optimizer", "beta1", 0.9);
        c.optimizer.beta2 = file.get_double("optimizer", "beta2", 0.999);
        c.optimizer.epsilon = file.get_double("optimizer", "epsilon", 1e-8);
        c.optimizer.weight_decay = file.get_double("optimizer", "weight_decay", 0.0);

        c.schedule.initial = file.get_double("schedule", "initial", 0.1);
        c.schedule.decay = file.get_double("schedule", "decay", 0.2);
        c.schedule.milestones = file.get_uint_list("schedule", "milestones", {60, 120, 160});

        c.epochs = static_cast<std::size_t>(file.get_uint("train", "epochs", 200));
        c.batch_size = static_cast<std::size_t>(file.get_uint("train", "batch", 128));
        c.seed = file.get_uint("train", "seed", 1);
        if (file.has("train", "init_seed")) {
            c.init_seed = file.get_uint("train", "init_seed", 0);
        }

        const std::string source = file.get_string("data", "source", "synth");
        if (source == "synth") {
            c.data.source = DataConfig::Source::Synth;
            SynthSpec& s = c.data.synth;
            const std::string task = file.get_string("data", "task", "spirals");
            if (task == "blobs") s.task = SynthTask::Blobs;
            else if (task == "spirals") s.task = SynthTask::Spirals;
            else if (task == "ctr") s.task = SynthTask::Ctr;
            else throw SpecError("config: data.task must be blobs, spirals or ctr, got '" + task + "'");
            s.dims = static_cast<std::size_t>(file.get_uint("data", "dims", 2));
            s.classes = static_cast<std::size_t>(file.get_uint("data", "classes", 2));
            s.train_count = static_cast<std::size_t>(file.get_uint("data", "train", 10000));
            s.val_count = static_cast<std::size_t>(file.get_uint("data", "val", 0));
            s.test_count = static_cast<std::size_t>(file.get_uint("data", "test", 2000));
            s.noise = file.get_double("data", "noise", 0.2);
            s.positive_rate = file.get_double("data", "positive_rate", 0.1);
            s.group_count = static_cast<std::size_t>(file.get_uint("data", "groups", 10));
            s.seed = file.get_uint("data", "seed", 1);
        } else if (source == "csv") {
            c.data.source = DataConfig::Source::Csv;
            c.data.csv_train = file.require_string("data", "train_csv");
            c.data.csv_val = file.get_string("data", "val_csv", "");
            c.data.csv_test = file.get_string("data", "test_csv", "");
        } else if (source == "cifar") {
            c.data.source = DataConfig::Source::Cifar;
            c.data.cifar_train = file.require_string("data", "cifar_train");
            c.data.cifar_test = file.get_string("data", "cifar_test", "");
        } else {
            throw SpecError("config: data.source must be synth, csv or cifar, got '" + source + "'");
        }

        c.out_stem = file.get_string("paths", "out", "");
        c.log_timing = file.get_bool("log", "timing", true);

        c.validate();
        return c;
    }

    // Every setting after defaults are applied, as the flat dotted keys the
    // config file uses.  Embedded in the first line of the run log.
    nlohmann::ordered_json resolved() const {
        nlohmann::ordered_json j;
        j["mode.name"] = train_mode_name(mode);
        j["arch.input"] = arch.input_dim;
        j["arch.classes"] = arch.classes;
        j["arch.sharing"] = arch.sharing == Sharing::Bottom ? "bottom" : "interval";
        j["arch.residual"] = arch.residual;
        j["arch.shared"] = join_list(arch.shared);
        j["arch.light"] = join_list(arch.light);
        j["arch.booster"] = join_list(arch.booster);
        j["hint.kind"] = hint_kind_name(hint.kind);
        j["hint.lambda"] = lambda;
        j["hint.temperature"] = hint.temperature;
        j["hint.swap_distill_target"] = hint.swap_distill_target;
        if (mode == TrainMode::RocketPlusKd || !teacher_path.empty()) {
            j["kd.weight"] = kd_weight;
            j["kd.temperature"] = kd_temperature;
            j["kd.teacher"] = teacher_path;
        }
        j["optimizer.kind"] = optimizer.kind == OptimizerSpec::Kind::SgdMomentum ? "sgd" : "adam";
        j["optimizer.momentum"] = optimizer.momentum;
        j["optimizer.beta1"] = optimizer.beta1;
        j["optimizer.beta2"] = optimizer.beta2;
        j["optimizer.epsilon"] = optimizer.epsilon;
        j["optimizer.weight_decay"] = optimizer.weight_decay;
        j["schedule.initial"] = schedule.initial;
        j["schedule.decay"] = schedule.decay;
        j["schedule.milestones"] = join_list(schedule.milestones);
        j["train.epochs"] = epochs;
        j["train.batch"] = batch_size;
        j["train.seed"] = seed;
        if (init_seed) j["train.init_seed"] = *init_seed;
        if (data.source == DataConfig::Source::Synth) {
            j["data.source"] = "synth";
            const SynthSpec& s = data.synth;
            j["data.task"] = s.task == SynthTask::Blobs ? "blobs"
                             : s.task == SynthTask::Spirals ? "spirals" : "ctr";
            j["data.dims"] = s.dims;
            j["data.classes"] = s.classes;
            j["data.train"] = s.train_count;
            j["data.val"] = s.val_count;
            j["data.test"] = s.test_count;
            j["data.noise"] = s.noise;
            if (s.task == SynthTask::Ctr) {
                j["data.positive_rate"] = s.positive_rate;
                j["data.groups"] = s.group_count;
            }
            j["data.seed"] = s.seed;
        } else if (data.source == DataConfig::Source::Csv) {
            j["data.source"] = "csv";
            j["data.train_csv"] = data.csv_train;
            j["data.val_csv"] = data.csv_val;
            j["data.test_csv"] = data.csv_test;
        } else {
            j["data.source"] = "cifar";
            j["data.cifar_train"] = data.cifar_train;
            j["data.cifar_test"] = data.cifar_test;
        }
        j["paths.out"] = out_stem;
        j["log.timing"] = log_timing;
        return j;
    }

  private:
    static std::string join_list(const std::vector<std::size_t>& v) {
        if (v.empty()) return "-";
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(v[i]);
        }
        return s;
    }
};

// Materializes the config's dataset reference.  Splits may be empty (no
// validation / no test); the train split never is.
inline SplitDatasets load_data(const TrainConfig& cfg) {
    SplitDatasets out;
    switch (cfg.data.source) {
        case DataConfig::Source::Synth:
            out = cfg.data.synth.task == SynthTask::Ctr ? gen_ctr(cfg.data.synth).splits
                                                        : gen_classification(cfg.data.synth);
            break;
        case DataConfig::Source::Csv: {
            out.train = read_csv(cfg.data.csv_train, "train", cfg.arch.classes);
            auto optional_split = [&cfg, &out](const std::string& path, const char* tag) {
                if (!path.empty()) return read_csv(path, tag, cfg.arch.classes);
                Dataset d;
                d.features = Tensor(0, out.train.dim());
                d.classes = out.train.classes;
                d.split = tag;
                if (out.train.grouped()) d.groups = {};
                return d;
            };
            out.val = optional_split(cfg.data.csv_val, "val");
            out.test = optional_split(cfg.data.csv_test, "test");
            break;
        }
        case DataConfig::Source::Cifar: {
            out.train = read_cifar10_binary(cfg.data.cifar_train, "train");
            if (!cfg.data.cifar_test.empty()) {
                out.test = read_cifar10_binary(cfg.data.cifar_test, "test");
            } else {
                out.test.features = Tensor(0, kCifarPixels);
                out.test.classes = kCifarClasses;
                out.test.split = "test";
            }
            out.val.features = Tensor(0, kCifarPixels);
            out.val.classes = kCifarClasses;
            out.val.split = "val";
            break;
        }
    }
    if (out.train.dim() != cfg.arch.input_dim) {
        throw SpecError("config: arch.input is " + std::to_string(cfg.arch.input_dim) +
                        " but the train split has " + std::to_string(out.train.dim()) +
                        " features");
    }
    if (out.train.classes != cfg.arch.classes) {
        throw SpecError("config: arch.classes is " + std::to_string(cfg.arch.classes) +
                        " but the train split has " + std::to_string(out.train.classes) +
                        " classes");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

// One epoch's log line.  Optional fields are omitted from the output when
// the mode or dataset does not define them (never written as 0 or null).
struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    std::optional<double> ce_light, ce_booster, hint, total;
    std::optional<double> err_light_train, err_light_val, err_light_test, err_booster_test;
    std::optional<double> auc, gauc, seconds;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["epoch"] = epoch;
        j["lr"] = lr;
        auto put = [&j](const char* key, const std::optional<double>& v) {
            if (v) j[key] = *v;
        };
        put("ce_light", ce_light);
        put("ce_booster", ce_booster);
        put("hint", hint);
        put("total", total);
        put("err_light_train", err_light_train);
        put("err_light_val", err_light_val);
        put("err_light_test", err_light_test);
        put("err_booster_test", err_booster_test);
        put("auc", auc);
        put("gauc", gauc);
        put("seconds", seconds);
        return j;
    }

    static EpochRecord from_json(const nlohmann::ordered_json& j) {
        EpochRecord r;
        r.epoch = j.at("epoch").get<std::size_t>();
        r.lr = j.at("lr").get<double>();
        auto get = [&j](const char* key) -> std::optional<double> {
            if (!j.contains(key)) return std::nullopt;
            return j.at(key).get<double>();
        };
        r.ce_light = get("ce_light");
        r.ce_booster = get("ce_booster");
        r.hint = get("hint");
        r.total = get("total");
        r.err_light_train = get("err_light_train");
        r.err_light_val = get("err_light_val");
        r.err_light_test = get("err_light_test");
        r.err_booster_test = get("err_booster_test");
        r.auc = get("auc");
        r.gauc = get("gauc");
        r.seconds = get("seconds");
        return r;
    }
};

struct RunLog {
    nlohmann::ordered_json config;
    std::vector<EpochRecord> records;
};

// Parses a .jsonl run log written by train(): first line {"config": ...},
// then one epoch object per line.
inline RunLog read_run_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("run log: cannot open '" + path + "'");
    RunLog log;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("run log '" + path + "' line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        if (lineno == 1) {
            if (!j.contains("config")) {
                throw FormatError("run log '" + path + "': first line must hold the config");
            }
            log.config = j.at("config");
            continue;
        }
        log.records.push_back(EpochRecord::from_json(j));
    }
    return log;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Observation point for tests: fires once per batch after the backward pass
// and before the optimizer step, with the parameter state the gradients were
// taken at still in place.
struct BatchProbe {
    std::size_t epoch = 0;
    std::size_t batch_index = 0;
    const Batch* batch = nullptr;
    const RocketNet* net = nullptr;          // primary net (light-bearing, or the booster-only net)
    const RocketNet* booster_net = nullptr;  // RocketNoSharing's second net, else null
    Tape* tape = nullptr;
    const TapeNet* tnet = nullptr;
    const TapeNet* booster_tnet = nullptr;
    const ObjectiveParts* parts = nullptr;   // null for Base / BoosterOnly / RocketNoJoint
};
using BatchHook = std::function<void(const BatchProbe&)>;

struct TrainResult {
    TrainConfig config;
    std::vector<EpochRecord> records;
    RocketNet net;                          // final-epoch parameters
    std::optional<RocketNet> booster_net;   // RocketNoSharing: final booster copy
    std::optional<RocketNet> best_net;      // best-validation snapshot, when a val split exists
    std::optional<RocketNet> best_booster_net;
    std::size_t best_epoch = 0;
    std::string log_path, final_path, best_path;

    // The net a consumer should deploy: best-validation when it was tracked,
    // else the final epoch.
    const RocketNet& selected_net() const { return best_net ? *best_net : net; }
};

namespace detail {

// Chunked full-split forward, bitwise identical to one big call because
// every kernel is row-independent.  Chunking bounds peak memory on wide
// inputs.
inline Tensor eval_logits(const RocketNet& net, const Tensor& features, Path which) {
    const std::size_t chunk = 1024;
    const std::size_t m = features.rows();
    Tensor out(m, net.arch.classes);
    for (std::size_t start = 0; start < m; start += chunk) {
        const std::size_t b = std::min(chunk, m - start);
        Tensor x(b, features.cols());
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t d = 0; d < features.cols(); ++d) {
                x.at(i, d) = features.at(start + i, d);
            }
        }
        const Tensor logits =
            which == Path::Light ? light_only_forward(net, x) : booster_forward(net, x);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t c = 0; c < out.cols(); ++c) out.at(start + i, c) = logits.at(i, c);
        }
    }
    return out;
}

struct PathEval {
    double err = 0.0;
    std::optional<double> auc_v, gauc_v;
};

inline PathEval eval_path(const RocketNet& net, const Dataset& ds, Path which) {
    const Tensor logits = eval_logits(net, ds.features, which);
    PathEval e;
    e.err = error_rate(logits, ds.labels);
    if (ds.classes == 2) {
        const Tensor probs = kernel::softmax(logits);
        std::vector<double> scores(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) scores[i] = probs.at(i, 1);
        e.auc_v = auc(scores, ds.labels);
        if (ds.grouped()) e.gauc_v = gauc(scores, ds.labels, ds.groups);
    }
    return e;
}

// Gradients in the same order named_params() enumerates the matching
// selection, so the two line up index-for-index in the optimizer step.
inline void collect_grads(Tape& tape, const TapeNet& tn, ParamSet sel,
                          std::vector<Tensor>& out) {
    auto take = [&](const std::vector<std::array<Value, 2>>& layers) {
        for (const auto& l : layers) {
            out.push_back(tape.grad(l[0]));
            out.push_back(tape.grad(l[1]));
        }
    };
    take(tn.shared);
    if (sel != ParamSet::BoosterPath) take(tn.light);
    if (sel != ParamSet::LightPath) take(tn.booster);
}

inline void check_finite_term(double v, const char* term, std::size_t epoch,
                              std::size_t batch_index) {
    if (!std::isfinite(v)) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + term + " is non-finite");
    }
}

// The teacher's job is to produce logits for the student's inputs; its arch
// may differ beyond that.  RocketNoJoint additionally needs the teacher's
// shared layers to fit the student's trunk.
inline void check_teacher(const RocketNet& teacher, const TrainConfig& cfg) {
    if (teacher.arch.input_dim != cfg.arch.input_dim ||
        teacher.arch.classes != cfg.arch.classes) {
        throw SpecError("teacher: expects " + std::to_string(teacher.arch.input_dim) +
                        " inputs / " + std::to_string(teacher.arch.classes) +
                        " classes, run has " + std::to_string(cfg.arch.input_dim) + " / " +
                        std::to_string(cfg.arch.classes));
    }
    if (cfg.mode != TrainMode::RocketNoJoint) return;
    const RocketNet student = init_rocket(cfg.arch, 0);
    std::string bad;
    if (teacher.shared.size() != student.shared.size()) {
        bad = "layer count " + std::to_string(teacher.shared.size()) + " vs " +
              std::to_string(student.shared.size());
    } else {
        for (std::size_t i = 0; i < student.shared.size(); ++i) {
            if (!teacher.shared[i].w.same_shape(student.shared[i].w)) {
                if (!bad.empty()) bad += ", ";
                bad += "S." + std::to_string(i) + " " + teacher.shared[i].w.shape_str() +
                       " vs " + student.shared[i].w.shape_str();
            }
        }
    }
    if (!bad.empty()) {
        throw SpecError("teacher: shared layers do not fit the student trunk (" + bad + ")");
    }
}

}  // namespace detail

inline TrainResult train(const TrainConfig& cfg, const SplitDatasets& data,
                         const RocketNet* teacher = nullptr, const BatchHook& hook = {});

// Convenience entry: loads data (and, for the two-phase modes, the teacher)
// from the config alone.
inline TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    const SplitDatasets data = load_data(cfg);
    if (mode_needs_teacher(cfg.mode) && !cfg.teacher_path.empty()) {
        const RocketNet teacher = load_checkpoint(cfg.teacher_path);
        return train(cfg, data, &teacher);
    }
    return train(cfg, data, nullptr);
}

// Booster-alone pass over the same config, producing the checkpoint the
// two-phase modes consume.
inline TrainResult pretrain_booster(const TrainConfig& cfg, const SplitDatasets& data) {
    TrainConfig pre = cfg;
    pre.mode = TrainMode::BoosterOnly;
    pre.teacher_path.clear();
    if (!cfg.out_stem.empty()) pre.out_stem = cfg.out_stem + ".teacher";
    return train(pre, data);
}

inline TrainResult train(const TrainConfig& cfg, const SplitDatasets& data,
                         const RocketNet* teacher, const BatchHook& hook) {
    cfg.validate();
    data.train.validate();
    if (data.train.size() == 0) throw SpecError("train: train split is empty");
    if (data.train.dim() != cfg.arch.input_dim || data.train.classes != cfg.arch.classes) {
        throw SpecError("train: dataset is " + std::to_string(data.train.dim()) + "-dim / " +
                        std::to_string(data.train.classes) + "-class, arch wants " +
                        std::to_string(cfg.arch.input_dim) + " / " +
                        std::to_string(cfg.arch.classes));
    }
    const TrainMode mode = cfg.mode;

    // Frozen teacher for the two-phase modes: passed in, loaded from the
    // configured path, or pretrained here and now.  Once it is in memory
    // nothing below reads any file again.
    RocketNet teacher_local;
    if (mode_needs_teacher(mode)) {
        if (teacher == nullptr) {
            if (!cfg.teacher_path.empty()) {
                teacher_local = load_checkpoint(cfg.teacher_path);
            } else {
                teacher_local = pretrain_booster(cfg, data).selected_net();
            }
            teacher = &teacher_local;
        }
        detail::check_teacher(*teacher, cfg);
    }

    RocketNet net = init_rocket(cfg.arch, mode == TrainMode::RocketNoSharing
                                              ? cfg.init_seed_value() + kNoSharingLightSeedOffset
                                              : cfg.init_seed_value());
    std::optional<RocketNet> net_b;
    if (mode == TrainMode::RocketNoSharing) {
        net_b = init_rocket(cfg.arch, cfg.init_seed_value());
    }
    if (mode == TrainMode::RocketNoJoint) {
        for (std::size_t i = 0; i < net.shared.size(); ++i) net.shared[i] = teacher->shared[i];
    }

    std::vector<ParamRef> refs;
    switch (mode) {
        case TrainMode::Base:
        case TrainMode::RocketNoJoint: refs = named_params(net, ParamSet::LightPath); break;
        case TrainMode::BoosterOnly: refs = named_params(net, ParamSet::BoosterPath); break;
        case TrainMode::RocketNoSharing: {
            refs = named_params(net, ParamSet::LightPath);
            for (ParamRef& r : named_params(*net_b, ParamSet::BoosterPath)) {
                refs.push_back(std::move(r));
            }
            break;
        }
        default: refs = named_params(net, ParamSet::All); break;
    }
    std::vector<Tensor*> params;
    params.reserve(refs.size());
    for (const ParamRef& r : refs) params.push_back(r.tensor);

    Optimizer optimizer(cfg.optimizer);

    TrainResult result;
    result.config = cfg;

    std::ofstream log;
    if (!cfg.out_stem.empty()) {
        result.log_path = cfg.out_stem + ".jsonl";
        log.open(result.log_path);
        if (!log) throw IoError("train: cannot open '" + result.log_path + "' for writing");
        nlohmann::ordered_json head;
        head["config"] = cfg.resolved();
        log << head.dump() << "\n";
    }

    const bool track_best = data.val.size() > 0;
    double best_sel = 0.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.schedule.at(epoch);
        const std::vector<Batch> epoch_batches =
            batches(data.train, cfg.batch_size, epoch_batch_seed(cfg.seed, epoch));

        double sum_ce_l = 0.0, sum_ce_b = 0.0, sum_hint = 0.0, sum_total = 0.0;
        for (std::size_t bi = 0; bi < epoch_batches.size(); ++bi) {
            const Batch& batch = epoch_batches[bi];
            Tape tape;
            TapeNet tn = stage_params(tape, net);
            TapeNet tnb;
            if (net_b) tnb = stage_params(tape, *net_b);
            const Value x = tape.constant(batch.x);
            const Value y = tape.constant(batch.y);

            ObjectiveParts parts;
            bool have_parts = false;
            Value total;
            std::optional<double> b_ce_l, b_ce_b, b_hint;

            switch (mode) {
                case TrainMode::Base: {
                    const Value l = light_logits(tape, tn, x);
                    const Value ce = cross_entropy(tape, y, tape.softmax(l));
                    total = ce;
                    b_ce_l = ce.tensor().data()[0];
                    break;
                }
                case TrainMode::BoosterOnly: {
                    const Value z = booster_logits(tape, tn, x);
                    const Value ce = cross_entropy(tape, y, tape.softmax(z));
                    total = ce;
                    b_ce_b = ce.tensor().data()[0];
                    break;
                }
                case TrainMode::RocketNoJoint: {
                    const Tensor z_star = booster_forward(*teacher, batch.x);
                    const Value l = light_logits(tape, tn, x);
                    const Value p = tape.softmax(l);
                    const Value ce = cross_entropy(tape, y, p);
                    const HintLossSpec mimic{HintKind::LogitMimic};
                    const Value hint = hint_loss(tape, mimic, l, p, tape.constant(z_star));
                    total = cfg.lambda == 0.0
                                ? ce
                                : tape.add(ce, tape.scale(hint, cfg.lambda));
                    b_ce_l = ce.tensor().data()[0];
                    b_hint = hint.tensor().data()[0];
                    break;
                }
                case TrainMode::RocketNoSharing: {
                    RocketOutputs out;
                    out.l = light_logits(tape, tn, x);
                    out.z = booster_logits(tape, tnb, x);
                    out.p = tape.softmax(out.l);
                    out.q = tape.softmax(out.z);
                    parts = rocket_objective(tape, out, y, cfg.hint, cfg.lambda, true);
                    have_parts = true;
                    total = parts.total;
                    break;
                }
                default: {  // Rocket, RocketNoGb, RocketPlusKd
                    const RocketOutputs out = forward_rocket(tape, tn, x);
                    const bool gb = mode != TrainMode::RocketNoGb;
                    parts = rocket_objective(tape, out, y, cfg.hint, cfg.lambda, gb);
                    have_parts = true;
                    total = parts.total;
                    if (mode == TrainMode::RocketPlusKd) {
                        const Tensor z_star = booster_forward(*teacher, batch.x);
                        const Value kd =
                            frozen_distill_term(tape, out.l, z_star, cfg.kd_temperature);
                        total = tape.add(parts.total, tape.scale(kd, cfg.kd_weight));
                        // Folded so that total = ce_l + ce_b + lambda * hint
                        // still holds for the logged values.
                        b_hint = parts.hint_v() +
                                 (cfg.kd_weight / cfg.lambda) * kd.tensor().data()[0];
                    }
                    break;
                }
            }

            if (have_parts) {
                b_ce_l = parts.ce_light_v();
                b_ce_b = parts.ce_booster_v();
                if (!b_hint) b_hint = parts.hint_v();
            }
            const double total_v = total.tensor().data()[0];
            if (b_ce_l) detail::check_finite_term(*b_ce_l, "ce_light", epoch, bi);
            if (b_ce_b) detail::check_finite_term(*b_ce_b, "ce_booster", epoch, bi);
            if (b_hint) detail::check_finite_term(*b_hint, "hint", epoch, bi);
            detail::check_finite_term(total_v, "total", epoch, bi);

            tape.backward(total);

            std::vector<Tensor> grads;
            grads.reserve(refs.size());
            switch (mode) {
                case TrainMode::Base:
                case TrainMode::RocketNoJoint:
                    detail::collect_grads(tape, tn, ParamSet::LightPath, grads);
                    break;
                case TrainMode::BoosterOnly:
                    detail::collect_grads(tape, tn, ParamSet::BoosterPath, grads);
                    break;
                case TrainMode::RocketNoSharing:
                    detail::collect_grads(tape, tn, ParamSet::LightPath, grads);
                    detail::collect_grads(tape, tnb, ParamSet::BoosterPath, grads);
                    break;
                default: detail::collect_grads(tape, tn, ParamSet::All, grads); break;
            }

            if (hook) {
                BatchProbe probe;
                probe.epoch = epoch;
                probe.batch_index = bi;
                probe.batch = &batch;
                probe.net = &net;
                probe.booster_net = net_b ? &*net_b : nullptr;
                probe.tape = &tape;
                probe.tnet = &tn;
                probe.booster_tnet = net_b ? &tnb : nullptr;
                probe.parts = have_parts ? &parts : nullptr;
                hook(probe);
            }

            optimizer.step(params, grads, lr);

            if (b_ce_l) sum_ce_l += *b_ce_l;
            if (b_ce_b) sum_ce_b += *b_ce_b;
            if (b_hint) sum_hint += *b_hint;
            sum_total += total_v;
        }

        const double nb = static_cast<double>(epoch_batches.size());
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.total = sum_total / nb;
        if (mode != TrainMode::BoosterOnly) rec.ce_light = sum_ce_l / nb;
        if (mode_trains_booster(mode) && mode != TrainMode::BoosterOnly) {
            rec.ce_booster = sum_ce_b / nb;
        }
        if (mode == TrainMode::BoosterOnly) rec.ce_booster = sum_ce_b / nb;
        if (mode != TrainMode::Base && mode != TrainMode::BoosterOnly) {
            rec.hint = sum_hint / nb;
        }

        // The logged auc/gauc always describe the path being deployed: the
        // light net everywhere except booster-only training.
        double selection_err = 0.0;
        if (mode_trains_light(mode)) {
            rec.err_light_train = detail::eval_path(net, data.train, Path::Light).err;
            if (data.val.size() > 0) {
                rec.err_light_val = detail::eval_path(net, data.val, Path::Light).err;
                selection_err = *rec.err_light_val;
            }
            if (data.test.size() > 0) {
                const detail::PathEval e = detail::eval_path(net, data.test, Path::Light);
                rec.err_light_test = e.err;
                rec.auc = e.auc_v;
                rec.gauc = e.gauc_v;
            }
        }
        if (mode_trains_booster(mode)) {
            const RocketNet& bn = net_b ? *net_b : net;
            if (data.test.size() > 0) {
                const detail::PathEval e = detail::eval_path(bn, data.test, Path::Booster);
                rec.err_booster_test = e.err;
                if (mode == TrainMode::BoosterOnly) {
                    rec.auc = e.auc_v;
                    rec.gauc = e.gauc_v;
                }
            }
            if (mode == TrainMode::BoosterOnly && data.val.size() > 0) {
                selection_err = detail::eval_path(bn, data.val, Path::Booster).err;
            }
        }

        if (cfg.log_timing) {
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
        }
        result.records.push_back(rec);
        if (log) log << rec.to_json().dump() << "\n";

        if (track_best && (!result.best_net || selection_err < best_sel)) {
            best_sel = selection_err;
            result.best_epoch = epoch;
            result.best_net = net;
            if (net_b) result.best_booster_net = net_b;
        }
    }

    result.net = std::move(net);
    if (net_b) result.booster_net = std::move(net_b);

    if (!cfg.out_stem.empty()) {
        result.final_path = cfg.out_stem + ".final.rckt";
        save_checkpoint(result.net, result.final_path);
        if (result.booster_net) {
            save_checkpoint(*result.booster_net, cfg.out_stem + ".booster.final.rckt");
        }
        if (result.best_net) {
            result.best_path = cfg.out_stem + ".best.rckt";
            save_checkpoint(*result.best_net, result.best_path);
            if (result.best_booster_net) {
                save_checkpoint(*result.best_booster_net, cfg.out_stem + ".booster.best.rckt");
            }
        }
        if (log) {
            log.flush();
            if (!log) throw IoError("train: write to '" + result.log_path + "' failed");
        }
    }
    return result;
}

// Light-net phase of the two-phase mode, against an already trained booster.
inline TrainResult distill_phase(const TrainConfig& cfg, const RocketNet& booster) {
    TrainConfig phase = cfg;
    phase.mode = TrainMode::RocketNoJoint;
    const SplitDatasets data = load_data(phase);
    return train(phase, data, &booster);
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

struct AblationRow {
    TrainMode mode;
    std::uint64_t seed_lo = 0, seed_hi = 0;
    std::optional<double> median_err_light, median_err_booster;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::string csv_text;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows,
                                const std::string& note) {
    std::ostringstream os;
    os << "mode,seeds,median_err_light,median_err_booster\n";
    for (const AblationRow& r : rows) {
        os << train_mode_name(r.mode) << ',' << r.seed_lo << ".." << r.seed_hi << ',';
        if (r.median_err_light) os << format_double(*r.median_err_light);
        os << ',';
        if (r.median_err_booster) os << format_double(*r.median_err_booster);
        os << "\n";
    }
    if (!note.empty()) os << "# error: " << note << "\n";
    return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw IoError("ablation: cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw IoError("ablation: write to '" + path + "' failed");
}

}  // namespace detail

// Runs each mode with master seeds {base seed .. base seed + seed_count - 1}
// over one shared dataset, and reports per-mode medians of the error the run
// would deploy with (best-validation epoch when a validation split exists,
// else the final epoch).  Serial execution; any failure flushes the rows
// finished so far (annotated) before the error propagates.
inline AblationResult run_ablation_grid(const TrainConfig& base_cfg,
                                        const std::vector<TrainMode>& modes,
                                        std::size_t seed_count,
                                        const std::string& csv_path = "") {
    if (modes.empty()) throw SpecError("ablation: mode list must be non-empty");
    if (seed_count < 1) throw SpecError("ablation: seed count must be >= 1");
    base_cfg.validate();
    const SplitDatasets data = load_data(base_cfg);

    AblationResult result;
    TrainMode at_mode = modes[0];
    std::uint64_t at_seed = base_cfg.seed;
    try {
        for (TrainMode mode : modes) {
            at_mode = mode;
            std::vector<double> errs_light, errs_booster;
            for (std::size_t k = 0; k < seed_count; ++k) {
                TrainConfig cfg = base_cfg;
                cfg.mode = mode;
                cfg.seed = base_cfg.seed + k;
                at_seed = cfg.seed;
                if (!base_cfg.out_stem.empty()) {
                    cfg.out_stem = base_cfg.out_stem + "." + train_mode_name(mode) + ".s" +
                                   std::to_string(cfg.seed);
                }
                const TrainResult run = train(cfg, data);
                const std::size_t pick = run.best_net ? run.best_epoch
                                                      : run.records.size() - 1;
                const EpochRecord& rec = run.records[pick];
                if (rec.err_light_test) errs_light.push_back(*rec.err_light_test);
                if (rec.err_booster_test) errs_booster.push_back(*rec.err_booster_test);
            }
            AblationRow row;
            row.mode = mode;
            row.seed_lo = base_cfg.seed;
            row.seed_hi = base_cfg.seed + seed_count - 1;
            if (!errs_light.empty()) row.median_err_light = detail::median(errs_light);
            if (!errs_booster.empty()) row.median_err_booster = detail::median(errs_booster);
            result.rows.push_back(row);
        }
    } catch (const std::exception& e) {
        const std::string note = std::string("mode=") + train_mode_name(at_mode) +
                                 " seed=" + std::to_string(at_seed) + ": " + e.what();
        result.csv_text = detail::ablation_csv(result.rows, note);
        detail::write_text(csv_path, result.csv_text);
        throw;
    }
    result.csv_text = detail::ablation_csv(result.rows, "");
    detail::write_text(csv_path, result.csv_text);
    return result;
}

}  // namespace rocket
