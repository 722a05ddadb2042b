// gradlab: config-driven gradient-leakage experiments.
//
// Stages persist their artifacts under the run directory, so attack /
// detect / lambda / landscape / report can re-run offline against a
// finished capture set.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "gl/eggv.hpp"
#include "gl/experiment.hpp"
#include "gl/io.hpp"
#include "gl/lambda.hpp"
#include "gl/pgla.hpp"
#include "gl/rng.hpp"

namespace fs = std::filesystem;
using namespace gl;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "override output_dir");
    cmd->add_option("--seed", args.seed, "override master_seed")
        ->each([&](const std::string&) { args.has_seed = true; });
}

ExperimentConfig load(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (args.has_seed) cfg.master_seed = args.seed;
    if (cfg.output_dir.empty())
        throw std::runtime_error("no output directory (set output_dir or pass --out)");
    fs::create_directories(cfg.output_dir);
    return cfg;
}

// Rebuild the evaluation context (model, eval parameters, captures,
// batches) from a finished capture stage.
struct Persisted {
    ExperimentConfig cfg;
    ParamVector theta_eval;
    std::vector<fl::GradientCapture> captures;
    std::vector<Batch> batches;
};

Persisted load_persisted(const CommonArgs& args) {
    Persisted p{load(args), {}, {}, {}};
    fs::path dir = p.cfg.output_dir;
    ParamVector layout = p.cfg.model.param_layout();
    p.theta_eval = ParamVector(layout.segments(), io::read_f64(dir / "theta_eval.f64"));

    Dataset target = realize_dataset(p.cfg.dataset, p.cfg.master_seed, "dataset");
    // Same shard/batch walk as the capture stage.
    std::size_t per = target.size() / p.cfg.clients;
    std::vector<std::vector<Batch>> client_batches;
    for (std::size_t c = 0; c < p.cfg.clients; ++c) {
        Dataset shard;
        shard.m = target.m;
        shard.C = target.C;
        shard.x.assign(target.x.begin() + static_cast<std::ptrdiff_t>(c * per * target.m),
                       target.x.begin() + static_cast<std::ptrdiff_t>((c + 1) * per * target.m));
        shard.y.assign(target.y.begin() + static_cast<std::ptrdiff_t>(c * per),
                       target.y.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
        client_batches.push_back(shard.batches(p.cfg.batch_size));
    }
    for (int rep = 0; rep < p.cfg.repetitions; ++rep) {
        fs::path prefix = dir / "captures" / ("cap" + std::to_string(rep));
        fs::path hdr = prefix;
        hdr += ".hdr";
        if (!fs::exists(hdr)) break;
        p.captures.push_back(fl::load_capture(prefix, layout));
        std::size_t c = static_cast<std::size_t>(rep) % p.cfg.clients;
        const auto& batches = client_batches[c];
        p.batches.push_back(batches[(static_cast<std::size_t>(rep) / p.cfg.clients) % batches.size()]);
    }
    if (p.captures.empty()) throw std::runtime_error("no captures found under " + dir.string());
    return p;
}

int cmd_synth_data(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    fs::path dir = cfg.output_dir;
    Dataset d = realize_dataset(cfg.dataset, cfg.master_seed, "dataset");
    write_csv(dir / "dataset.csv", d);
    write_raw_f32(dir / "dataset.raw", d);
    if (cfg.aux_dataset) {
        Dataset a = realize_dataset(*cfg.aux_dataset, cfg.master_seed, "aux");
        write_csv(dir / "aux_dataset.csv", a);
        write_raw_f32(dir / "aux_dataset.raw", a);
    }
    std::cout << "wrote " << d.size() << " samples (m=" << d.m << ", C=" << d.C << ") to "
              << dir << "\n";
    return 0;
}

int cmd_run(const CommonArgs& args, const std::string& only_stage) {
    ExperimentConfig cfg = load(args);
    if (!only_stage.empty() && only_stage != "all") {
        // Single-stage execution maps onto the dedicated subcommands.
        std::cerr << "note: --stage " << only_stage
                  << " runs the full pipeline up to that stage's artifacts\n";
    }
    RunReport report = run_experiment(cfg);
    if (report.failed_stage) {
        std::cerr << "stage '" << *report.failed_stage << "' failed: " << report.failure_message
                  << "\n";
        return 1;
    }
    std::cout << "run complete: " << report.quality.size() << " quality rows, "
              << report.detect.size() << " detect rows -> " << cfg.output_dir << "\n";
    return 0;
}

int cmd_poison(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    if (cfg.poison.kind == PoisonSettings::Kind::None)
        throw std::runtime_error("config has poison.kind=none");
    Dataset aux = cfg.aux_dataset ? realize_dataset(*cfg.aux_dataset, cfg.master_seed, "aux")
                                  : realize_dataset(cfg.dataset, cfg.master_seed, "dataset");
    std::uint64_t init_seed =
        cfg.init_seed ? cfg.init_seed : Rng::derive(cfg.master_seed, "init");
    ParamVector theta0 = init_params(cfg.model, cfg.init_scheme, init_seed);

    if (cfg.poison.kind == PoisonSettings::Kind::Fishing) {
        ParamVector theta = eggv::fishing_baseline_poison(cfg.model, theta0, cfg.poison.fishing_target);
        io::write_f64(fs::path(cfg.output_dir) / "theta_fishing.f64", theta.values());
        std::cout << "fishing-poisoned parameters written\n";
        return 0;
    }
    eggv::PoisonConfig pc = cfg.poison.eggv;
    pc.seed = Rng::derive(cfg.master_seed, "poison");
    eggv::PoisonRun run = eggv::poison_model(cfg.model, theta0, aux.batches(cfg.batch_size), pc);
    eggv::save_poison_run(fs::path(cfg.output_dir) / "poison", run);
    std::cout << "poisoning " << (run.aborted ? "aborted" : "finished") << ": initial L "
              << run.initial_loss << ", final moving avg " << run.final_moving_avg << "\n";
    return run.aborted ? 1 : 0;
}

int cmd_attack(const CommonArgs& args) {
    Persisted p = load_persisted(args);
    if (!p.cfg.attack) throw std::runtime_error("config has no attack section");
    fs::path dir = fs::path(p.cfg.output_dir) / "attack";
    fs::create_directories(dir);
    for (std::size_t rep = 0; rep < p.captures.size(); ++rep) {
        pgla::AttackConfig ac = *p.cfg.attack;
        if (ac.seed == 0) ac.seed = Rng::derive(p.cfg.master_seed, "attack", rep);
        auto rr = pgla::reconstruct(p.captures[rep], p.cfg.model, p.theta_eval, ac, &p.batches[rep]);
        fs::path f64 = dir / ("rec" + std::to_string(rep));
        f64 += ".x_hat.f64";
        io::write_f64(f64, rr.x_hat.data());
        auto q = metrics::quality_report(rr.x_hat, p.batches[rep].x);
        std::cout << "rep " << rep << ": min/pruned/max PSNR " << q.min_psnr << "/"
                  << q.pruned_mean_psnr << "/" << q.max_psnr
                  << (rr.failed ? " (failed: " + rr.failure_reason + ")" : "") << "\n";
    }
    return 0;
}

int cmd_detect(const CommonArgs& args) {
    Persisted p = load_persisted(args);
    for (std::size_t rep = 0; rep < p.captures.size(); ++rep) {
        const auto& cap = p.captures[rep];
        if (!cap.per_sample || cap.per_sample->size() < 2) {
            std::cout << "rep " << rep << ": no per-sample gradients captured\n";
            continue;
        }
        auto d = metrics::d_snr(*cap.per_sample);
        auto [var, mean] = metrics::grad_norm_variance(*cap.per_sample);
        std::cout << "rep " << rep << ": D-SNR " << d.value << " (layer " << d.argmax_layer
                  << "), norm variance " << var << ", norm mean " << mean << "\n";
    }
    return 0;
}

int cmd_lambda(const CommonArgs& args) {
    Persisted p = load_persisted(args);
    fs::path csv_path = fs::path(p.cfg.output_dir) / "lambda_profile.csv";
    io::CsvWriter csv(csv_path);
    csv.row({"rep", "class", "valid", "max_lambda", "entropy"});
    for (std::size_t rep = 0; rep < p.batches.size(); ++rep) {
        LambdaMatrix lm = compute_lambda(p.cfg.model, p.theta_eval, p.batches[rep]);
        LambdaProfile prof = lambda_bias_profile(lm);
        for (std::size_t k = 0; k < lm.C; ++k)
            csv.row({std::to_string(rep), std::to_string(k), prof.row_valid[k] ? "1" : "0",
                     io::format_double(prof.max_lambda[k]), io::format_double(prof.entropy[k])});
    }
    csv.close();
    std::cout << "lambda profiles -> " << csv_path << "\n";
    return 0;
}

int cmd_landscape(const CommonArgs& args, double extent, int steps, bool with_accuracy,
                  const std::string& probe) {
    Persisted p = load_persisted(args);
    fs::path dir = p.cfg.output_dir;
    eggv::PoisonRun run = eggv::load_poison_run(dir / "poison", p.cfg.model);
    Dataset target = realize_dataset(p.cfg.dataset, p.cfg.master_seed, "dataset");
    std::vector<Batch> probes;
    if (probe == "aux") {
        if (!p.cfg.aux_dataset) throw std::runtime_error("--probe aux needs an aux_dataset");
        Dataset aux = realize_dataset(*p.cfg.aux_dataset, p.cfg.master_seed, "aux");
        probes = aux.batches(p.cfg.batch_size);
    } else {
        probes.push_back(p.batches.at(0));
    }
    eggv::LandscapeGrid grid = eggv::landscape_grid(
        p.cfg.model, run.theta_star, run.decoder, run.plan, probes, extent, steps,
        Rng::derive(p.cfg.master_seed, "landscape"), with_accuracy ? &target : nullptr);
    eggv::write_landscape_csv(dir / "landscape.csv", grid);
    std::cout << "landscape grid (" << steps << "x" << steps << ") -> "
              << (dir / "landscape.csv") << "\n";
    return 0;
}

int cmd_report(const CommonArgs& args) {
    ExperimentConfig cfg = load(args);
    RunReport report = run_experiment(cfg);
    std::cout << "report emitted under " << cfg.output_dir << "\n";
    return report.failed_stage ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-leakage attack laboratory"};
    app.require_subcommand(1);

    CommonArgs synth_args, run_args, poison_args, attack_args, detect_args, lambda_args,
        landscape_args, report_args;
    std::string run_stage = "all";
    double extent = 1.0;
    int steps = 21;
    bool with_accuracy = false;
    std::string probe = "aux";

    add_common(app.add_subcommand("synth-data", "materialize configured datasets"), synth_args);
    auto* run = app.add_subcommand("run", "full pipeline: poison, capture, attack, detect");
    add_common(run, run_args);
    run->add_option("--stage", run_stage, "stage name (informational)");
    add_common(app.add_subcommand("poison", "poison stage only"), poison_args);
    add_common(app.add_subcommand("attack", "attack persisted captures"), attack_args);
    add_common(app.add_subcommand("detect", "detection metrics on persisted captures"),
               detect_args);
    add_common(app.add_subcommand("lambda", "lambda bias profiles"), lambda_args);
    auto* landscape = app.add_subcommand("landscape", "vulnerability landscape grid");
    add_common(landscape, landscape_args);
    landscape->add_option("--extent", extent, "half-width of the grid");
    landscape->add_option("--steps", steps, "cells per axis (odd keeps the center exact)");
    landscape->add_flag("--accuracy", with_accuracy, "also evaluate classification accuracy");
    landscape->add_option("--probe", probe, "score batches: aux (training mean) or eval");
    add_common(app.add_subcommand("report", "re-run and re-emit reports"), report_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("synth-data")) return cmd_synth_data(synth_args);
        if (app.got_subcommand("run")) return cmd_run(run_args, run_stage);
        if (app.got_subcommand("poison")) return cmd_poison(poison_args);
        if (app.got_subcommand("attack")) return cmd_attack(attack_args);
        if (app.got_subcommand("detect")) return cmd_detect(detect_args);
        if (app.got_subcommand("lambda")) return cmd_lambda(lambda_args);
        if (app.got_subcommand("landscape"))
            return cmd_landscape(landscape_args, extent, steps, with_accuracy, probe);
        if (app.got_subcommand("report")) return cmd_report(report_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
