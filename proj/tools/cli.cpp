#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dunet/data.hpp"
#include "dunet/errors.hpp"
#include "dunet/gradcheck.hpp"
#include "dunet/metrics.hpp"
#include "dunet/retinex.hpp"
#include "dunet/train.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<double> parse_list(const std::string& s, std::size_t expect, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string(what) + ": cannot parse '" + tok + "'");
        }
    }
    if (expect && out.size() != expect)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(expect) +
                                    " comma-separated values, got '" + s + "'");
    return out;
}

// --config FILE holds key=value lines ('#' comments) mirroring the subcommand's
// flags; expand them into --key=value tokens in place, so explicit flags given
// after --config override the file.
std::string trim(const std::string& s) {
    const auto l = s.find_first_not_of(" \t\r");
    if (l == std::string::npos) return "";
    const auto r = s.find_last_not_of(" \t\r");
    return s.substr(l, r - l + 1);
}

std::vector<std::string> config_tokens(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw dunet::DataError(file + ": cannot open config file");
    std::vector<std::string> tokens;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw dunet::DataError(file + ":" + std::to_string(lineno) +
                                   ": expected key=value, got '" + line + "'");
        tokens.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
    }
    return tokens;
}

std::vector<std::string> expand_args(int argc, char** argv) {
    std::vector<std::string> out;
    for (int i = 0; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            for (auto& t : config_tokens(argv[++i])) out.push_back(std::move(t));
        } else if (a.rfind("--config=", 0) == 0) {
            for (auto& t : config_tokens(a.substr(9))) out.push_back(std::move(t));
        } else {
            out.push_back(a);
        }
    }
    return out;
}

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos)
        throw std::invalid_argument("--size: expected HxW, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw std::invalid_argument("--size: expected HxW, got '" + s + "'");
    }
}

struct CorrectArgs {
    std::string input, output;
    std::string sigmas = "12,80,250";
    double s1 = 0.01, s2 = 0.01, log_offset = 1.0;
};

int run_correct(const CorrectArgs& a) {
    dunet::CorrectionParams params;
    const auto sig = parse_list(a.sigmas, 3, "--sigmas");
    params.sigmas = {sig[0], sig[1], sig[2]};
    params.s1 = a.s1;
    params.s2 = a.s2;
    params.log_offset = a.log_offset;
    params.validate();

    auto t0 = Clock::now();
    const dunet::Tensor<float> image = dunet::load_ppm(a.input);
    std::printf("load        %8.1f ms  (%dx%d)\n", ms_since(t0), image.shape[1], image.shape[2]);

    t0 = Clock::now();
    const dunet::Tensor<float> int_map = dunet::intensity(image);
    std::printf("intensity   %8.1f ms\n", ms_since(t0));

    t0 = Clock::now();
    const dunet::Tensor<float> retinex = dunet::msr(int_map, params);
    std::printf("msr         %8.1f ms\n", ms_since(t0));

    t0 = Clock::now();
    const dunet::Tensor<float> int1 = dunet::simplest_color_balance(retinex, params.s1, params.s2);
    std::printf("balance     %8.1f ms\n", ms_since(t0));

    t0 = Clock::now();
    const dunet::Tensor<float> out = dunet::chromatic_scale(image, int_map, int1);
    std::printf("chromatic   %8.1f ms\n", ms_since(t0));

    t0 = Clock::now();
    dunet::save_ppm(out, a.output);
    std::printf("save        %8.1f ms  -> %s\n", ms_since(t0), a.output.c_str());
    return 0;
}

struct SynthArgs {
    int count = 8;
    std::uint64_t seed = 0;
    std::string size = "96x128";
    std::string illum = "0.5,1.5";
    std::string out;
};

int run_synth(const SynthArgs& a) {
    const auto [h, w] = parse_size(a.size);
    const auto range = parse_list(a.illum, 2, "--illum");
    const auto samples = dunet::synth_generate(a.count, a.seed, h, w, range[0], range[1]);
    dunet::write_synth_dataset(samples, a.seed, range[0], range[1], a.out);
    std::printf("wrote %zu samples (+%zu flat twins) to %s\n", samples.size(), samples.size(),
                a.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string variant = "unet";
    std::string data;
    std::string out;
    int epochs = 10;
    int batch = 10;
    double lr = 1e-4;
    double rms_decay = 0.99;
    double rms_eps = 1e-8;
    int base_channels = 8;
    int depth = 3;
    std::string sigmas = "3,10,30";
    double s1 = 0.01, s2 = 0.01, log_offset = 1.0;
    std::uint64_t seed = 0;
    int eval_every = 1;
    double threshold = 0.5;
    std::string split; // optional "r1,r2,r3"
};

int run_train(const TrainArgs& a) {
    const std::vector<dunet::Sample> dataset = dunet::load_dataset(a.data);
    if (dataset.empty()) throw dunet::DataError(a.data + ": dataset is empty");

    dunet::DUNetConfig cfg;
    cfg.variant = dunet::variant_from_string(a.variant);
    cfg.base_channels = a.base_channels;
    cfg.depth = a.depth;
    cfg.in_h = dataset[0].image.shape[1];
    cfg.in_w = dataset[0].image.shape[2];
    const auto sig = parse_list(a.sigmas, 3, "--sigmas");
    cfg.illum.sigmas = {sig[0], sig[1], sig[2]};
    cfg.illum.s1 = a.s1;
    cfg.illum.s2 = a.s2;
    cfg.illum.log_offset = a.log_offset;

    std::vector<dunet::Sample> train_set, val_set;
    if (!a.split.empty()) {
        const auto r = parse_list(a.split, 3, "--split");
        auto parts = dunet::split_dataset(dataset, {r[0], r[1], r[2]}, a.seed);
        train_set = std::move(parts[0]);
        val_set = parts[1].empty() ? train_set : std::move(parts[1]);
    } else {
        train_set = dataset;
        val_set = dataset;
    }

    dunet::Model model(cfg, a.seed);
    std::printf("variant %s: %lld parameters, %zu train / %zu val samples\n", a.variant.c_str(),
                static_cast<long long>(model.parameter_count()), train_set.size(), val_set.size());

    dunet::TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch;
    tc.lr = a.lr;
    tc.rms_decay = a.rms_decay;
    tc.rms_eps = a.rms_eps;
    tc.seed = a.seed;
    tc.eval_every = a.eval_every;
    tc.threshold = a.threshold;

    const dunet::TrainResult result = dunet::train(model, train_set, val_set, tc);

    namespace fs = std::filesystem;
    fs::create_directories(a.out);
    dunet::save_checkpoint(fs::path(a.out) / "final.ckpt", model,
                           static_cast<std::uint64_t>(result.steps), a.seed);
    dunet::write_train_log(result, tc, cfg, model.parameter_count(), fs::path(a.out) / "train.log");
    if (!result.best_params.empty()) {
        dunet::restore_params(model, result.best_params);
        dunet::save_checkpoint(fs::path(a.out) / "best.ckpt", model,
                               static_cast<std::uint64_t>(result.steps), a.seed);
    }
    std::printf("done: %lld steps, best val mIoU %.4f -> %s\n", static_cast<long long>(result.steps),
                result.best_val_miou, a.out.c_str());
    return 0;
}

struct EvalArgs {
    std::string model, data, report;
    double threshold = 0.5;
};

int run_eval(const EvalArgs& a) {
    dunet::Model model = dunet::load_checkpoint(a.model);
    const auto dataset = dunet::load_dataset(a.data);
    if (dataset.empty()) throw dunet::DataError(a.data + ": dataset is empty");
    const dunet::EvalReport rep = dunet::evaluate(model, dataset, a.threshold, a.model);
    dunet::save_report(rep, a.report);
    std::printf("mIoU %.6f over %zu images -> %s\n", rep.miou, rep.records.size(), a.report.c_str());
    return 0;
}

int run_exceed(const std::string& report, const std::string& baseline) {
    const double exc = dunet::exceed_rate(dunet::load_report(report), dunet::load_report(baseline));
    std::printf("%.6f\n", exc);
    return 0;
}

int run_gradcheck(int seeds, bool self_test) {
    const auto rows = dunet::gradcheck_suite(seeds, self_test);
    std::printf("%-36s %12s %12s %6s  %s\n", "op", "max rel err", "threshold", "seeds", "status");
    for (const auto& r : rows)
        std::printf("%-36s %12.3e %12.1e %6d  %s\n", r.op.c_str(), r.max_err, r.threshold, r.seeds,
                    r.pass ? "pass" : "FAIL");
    if (!dunet::gradcheck_all_pass(rows)) {
        std::fprintf(stderr, "gradcheck: at least one op failed\n");
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dunet: illumination-corrected wound segmentation toolkit"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_path; // consumed by expand_args; registered for --help

    CorrectArgs ca;
    CLI::App* c = app.add_subcommand("correct", "Run the static illumination correction on a PPM image");
    c->add_option("--input", ca.input, "input P6 PPM")->required();
    c->add_option("--output", ca.output, "output P6 PPM")->required();
    c->add_option("--sigmas", ca.sigmas, "blur scales")->capture_default_str();
    c->add_option("--s1", ca.s1, "low clip fraction")->capture_default_str();
    c->add_option("--s2", ca.s2, "high clip fraction")->capture_default_str();
    c->add_option("--log-offset", ca.log_offset, "offset inside the log")->capture_default_str();
    c->add_option("--config", config_path, "key=value file mirroring the flags");

    SynthArgs sa;
    CLI::App* s = app.add_subcommand("synth", "Generate a synthetic illumination x reflectance dataset");
    s->add_option("--count", sa.count, "number of samples")->capture_default_str();
    s->add_option("--seed", sa.seed, "generator seed")->capture_default_str();
    s->add_option("--size", sa.size, "image size HxW")->capture_default_str();
    s->add_option("--illum", sa.illum, "illumination range lo,hi")->capture_default_str();
    s->add_option("--out", sa.out, "output directory")->required();
    s->add_option("--config", config_path, "key=value file mirroring the flags");

    TrainArgs ta;
    CLI::App* t = app.add_subcommand("train", "Train a segmentation model");
    t->add_option("--variant", ta.variant, "unet|dicu|dvsfn|dunet")->capture_default_str();
    t->add_option("--data", ta.data, "dataset directory (images/ + masks/)")->required();
    t->add_option("--out", ta.out, "output directory for checkpoints and log")->required();
    t->add_option("--epochs", ta.epochs, "training epochs")->capture_default_str();
    t->add_option("--batch", ta.batch, "batch size")->capture_default_str();
    t->add_option("--lr", ta.lr, "learning rate")->capture_default_str();
    t->add_option("--rms-decay", ta.rms_decay, "RMSprop decay")->capture_default_str();
    t->add_option("--rms-eps", ta.rms_eps, "RMSprop epsilon")->capture_default_str();
    t->add_option("--base-channels", ta.base_channels, "channels of the first encoder level")->capture_default_str();
    t->add_option("--depth", ta.depth, "number of encoder levels")->capture_default_str();
    t->add_option("--sigmas", ta.sigmas, "correction blur scales")->capture_default_str();
    t->add_option("--s1", ta.s1, "low clip fraction")->capture_default_str();
    t->add_option("--s2", ta.s2, "high clip fraction")->capture_default_str();
    t->add_option("--log-offset", ta.log_offset, "offset inside the log")->capture_default_str();
    t->add_option("--seed", ta.seed, "init/shuffle seed")->capture_default_str();
    t->add_option("--eval-every", ta.eval_every, "epochs between validation passes")->capture_default_str();
    t->add_option("--threshold", ta.threshold, "mask binarization threshold")->capture_default_str();
    t->add_option("--split", ta.split, "optional train,val,test ratios (default: train on all)");
    t->add_option("--config", config_path, "key=value file mirroring the flags");

    EvalArgs ea;
    CLI::App* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    e->add_option("--model", ea.model, "checkpoint path")->required();
    e->add_option("--data", ea.data, "dataset directory")->required();
    e->add_option("--threshold", ea.threshold, "mask binarization threshold")->capture_default_str();
    e->add_option("--report", ea.report, "output report path")->required();
    e->add_option("--config", config_path, "key=value file mirroring the flags");

    std::string xr, xb;
    CLI::App* x = app.add_subcommand("exceed", "Fraction of images where a report beats a baseline");
    x->add_option("--report", xr, "evaluation report")->required();
    x->add_option("--baseline", xb, "baseline report")->required();
    x->add_option("--config", config_path, "key=value file mirroring the flags");

    int gc_seeds = 20;
    bool gc_self_test = false;
    CLI::App* g = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    g->add_option("--seeds", gc_seeds, "random seeds per op")->capture_default_str();
    g->add_flag("--self-test", gc_self_test, "inject a sign-flipped conv backward; must exit 3");
    g->add_option("--config", config_path, "key=value file mirroring the flags");

    std::vector<std::string> args;
    try {
        args = expand_args(argc, argv);
    } catch (const dunet::DataError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return 2;
    }
    std::vector<char*> cargs;
    cargs.reserve(args.size());
    for (auto& a : args) cargs.push_back(a.data());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 1;
    }

    try {
        if (c->parsed()) return run_correct(ca);
        if (s->parsed()) return run_synth(sa);
        if (t->parsed()) return run_train(ta);
        if (e->parsed()) return run_eval(ea);
        if (x->parsed()) return run_exceed(xr, xb);
        if (g->parsed()) return run_gradcheck(gc_seeds, gc_self_test);
    } catch (const dunet::NumericError& err) {
        std::cerr << "numeric error: " << err.what() << "\n";
        return 3;
    } catch (const dunet::DataError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
    return 1;
}
