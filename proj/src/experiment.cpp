#include "gl/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "gl/eggv.hpp"
#include "gl/io.hpp"
#include "gl/lambda.hpp"
#include "gl/pgla.hpp"
#include "gl/rng.hpp"
#include "json.hpp"

namespace gl {
namespace {

double vec_norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct StageClock {
    RunReport* report;
    std::string name;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    ~StageClock() {
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              start)
                        .count();
        report->timings_ms.emplace_back(name, ms);
    }
};

// Clients get equal consecutive shards of the target data, pre-split into
// batches.
std::vector<fl::ClientState> make_clients(const Dataset& data, std::size_t clients,
                                          std::size_t batch_size) {
    std::vector<fl::ClientState> out;
    std::size_t per = data.size() / clients;
    if (per < batch_size)
        throw std::runtime_error("run_experiment: each client needs at least one full batch");
    for (std::size_t c = 0; c < clients; ++c) {
        fl::ClientState cs;
        cs.id = static_cast<int>(c);
        Dataset shard;
        shard.m = data.m;
        shard.C = data.C;
        shard.x.assign(data.x.begin() + static_cast<std::ptrdiff_t>(c * per * data.m),
                       data.x.begin() + static_cast<std::ptrdiff_t>((c + 1) * per * data.m));
        shard.y.assign(data.y.begin() + static_cast<std::ptrdiff_t>(c * per),
                       data.y.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
        cs.dataset = shard.batches(batch_size);
        out.push_back(std::move(cs));
    }
    return out;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunReport report;
    report.config_echo = config_to_json_string(cfg);

    std::filesystem::path out_dir = cfg.output_dir.empty() ? "." : cfg.output_dir;
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "config.json") << report.config_echo;

    Dataset target, aux;
    std::vector<fl::ClientState> clients;
    try {
        StageClock clock{&report, "data"};
        target = realize_dataset(cfg.dataset, cfg.master_seed, "dataset");
        if (cfg.aux_dataset) {
            aux = realize_dataset(*cfg.aux_dataset, cfg.master_seed, "aux");
            if (aux.C != cfg.model.num_classes())
                throw std::runtime_error(
                    "aux_dataset class count does not match the model");
        }
        clients = make_clients(target, cfg.clients, cfg.batch_size);
    } catch (const std::exception& e) {
        report.failed_stage = "data";
        report.failure_message = e.what();
        emit_report(report, out_dir);
        return report;
    }

    std::uint64_t init_seed =
        cfg.init_seed ? cfg.init_seed : Rng::derive(cfg.master_seed, "init");
    ParamVector theta0 = init_params(cfg.model, cfg.init_scheme, init_seed);

    // Poison stage: the parameters the server will distribute at
    // poison.round.
    ParamVector theta_poisoned = theta0;
    std::optional<eggv::PoisonRun> poison_run;
    try {
        StageClock clock{&report, "poison"};
        switch (cfg.poison.kind) {
            case PoisonSettings::Kind::None:
                break;
            case PoisonSettings::Kind::Eggv: {
                eggv::PoisonConfig pc = cfg.poison.eggv;
                pc.seed = Rng::derive(cfg.master_seed, "poison");
                poison_run = eggv::poison_model(cfg.model, theta0, aux.batches(cfg.batch_size), pc);
                theta_poisoned = poison_run->theta_star;
                report.poisoned = true;
                report.poison_initial_loss = poison_run->initial_loss;
                report.poison_final_moving_avg = poison_run->final_moving_avg;
                eggv::save_poison_run(out_dir / "poison", *poison_run);
                break;
            }
            case PoisonSettings::Kind::Fishing:
                theta_poisoned =
                    eggv::fishing_baseline_poison(cfg.model, theta0, cfg.poison.fishing_target);
                report.poisoned = true;
                io::write_f64(out_dir / "theta_fishing.f64", theta_poisoned.values());
                break;
        }
    } catch (const std::exception& e) {
        report.failed_stage = "poison";
        report.failure_message = e.what();
        emit_report(report, out_dir);
        return report;
    }

    // Protocol simulation: each round distributes a model, captures one
    // gradient per client, aggregates, and steps. The poisoned round
    // distributes theta_poisoned instead of the evolved parameters.
    ParamVector theta = theta0;
    ParamVector theta_eval = theta_poisoned;
    try {
        StageClock clock{&report, "rounds"};
        std::vector<std::size_t> sizes;
        for (const auto& c : clients) sizes.push_back(c.size());
        for (int r = 0; r < cfg.rounds; ++r) {
            const ParamVector& distributed = (r == cfg.poison.round) ? theta_poisoned : theta;
            if (r == cfg.poison.round) theta_eval = distributed;
            std::vector<fl::GradientCapture> caps;
            for (std::size_t c = 0; c < clients.size(); ++c) {
                const auto& batches = clients[c].dataset;
                const Batch& b = batches[static_cast<std::size_t>(r) % batches.size()];
                caps.push_back(fl::client_gradient(cfg.model, distributed, b, false, r,
                                                   static_cast<int>(c)));
            }
            ParamVector update = fl::aggregate(caps, sizes);
            theta = fl::sgd_step(distributed, update, cfg.learning_rate);
            RoundRow row;
            row.round = r;
            row.update_norm = vec_norm(update.values());
            row.theta_norm = vec_norm(theta.values());
            row.poisoned = (r == cfg.poison.round) && cfg.poison.kind != PoisonSettings::Kind::None;
            report.rounds.push_back(row);
        }
    } catch (const std::exception& e) {
        report.failed_stage = "rounds";
        report.failure_message = e.what();
        emit_report(report, out_dir);
        return report;
    }

    // Evaluation captures at the distributed (poisoned) parameters.
    bool need_per_sample = cfg.detect.dsnr || cfg.detect.variance;
    std::vector<fl::GradientCapture> eval_caps;
    std::vector<Batch> eval_batches;
    try {
        StageClock clock{&report, "capture"};
        std::filesystem::create_directories(out_dir / "captures");
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
            std::size_t c = static_cast<std::size_t>(rep) % clients.size();
            const auto& batches = clients[c].dataset;
            const Batch& b = batches[(static_cast<std::size_t>(rep) / clients.size()) % batches.size()];
            fl::GradientCapture cap = fl::client_gradient(cfg.model, theta_eval, b,
                                                          need_per_sample, cfg.poison.round,
                                                          static_cast<int>(c));
            fl::save_capture(out_dir / "captures" / ("cap" + std::to_string(rep)), cap);
            eval_caps.push_back(std::move(cap));
            eval_batches.push_back(b);
        }
        io::write_f64(out_dir / "theta_eval.f64", theta_eval.values());
    } catch (const std::exception& e) {
        report.failed_stage = "capture";
        report.failure_message = e.what();
        emit_report(report, out_dir);
        return report;
    }

    if (cfg.attack) {
        try {
            StageClock clock{&report, "attack"};
            std::filesystem::create_directories(out_dir / "attack");
            for (int rep = 0; rep < cfg.repetitions; ++rep) {
                pgla::AttackConfig ac = *cfg.attack;
                if (ac.seed == 0)
                    ac.seed = Rng::derive(cfg.master_seed, "attack", static_cast<std::uint64_t>(rep));
                pgla::ReconstructionResult rr =
                    pgla::reconstruct(eval_caps[static_cast<std::size_t>(rep)], cfg.model,
                                      theta_eval, ac, &eval_batches[static_cast<std::size_t>(rep)]);

                std::filesystem::path prefix = out_dir / "attack" / ("rec" + std::to_string(rep));
                std::filesystem::path f64 = prefix;
                f64 += ".x_hat.f64";
                io::write_f64(f64, rr.x_hat.data());
                std::filesystem::path traj = prefix;
                traj += ".trajectory.csv";
                io::CsvWriter csv(traj);
                csv.row({"iter", "match_loss", "psnr"});
                for (const auto& p : rr.trajectory)
                    csv.row({std::to_string(p.iter), io::format_double(p.match_loss),
                             p.has_psnr ? io::format_double(p.psnr) : ""});
                csv.close();

                QualityRow row;
                row.rep = rep;
                row.round = eval_caps[static_cast<std::size_t>(rep)].round;
                row.client = eval_caps[static_cast<std::size_t>(rep)].client_id;
                row.attack_failed = rr.failed;
                row.best_match_loss = rr.best_match_loss;
                row.iterations_used = rr.iterations_used;
                metrics::QualityReport q = metrics::quality_report(
                    rr.x_hat, eval_batches[static_cast<std::size_t>(rep)].x);
                row.min_psnr = q.min_psnr;
                row.pruned_mean_psnr = q.pruned_mean_psnr;
                row.max_psnr = q.max_psnr;
                row.per_sample_psnr = q.per_sample_psnr;
                row.per_sample_ssim = q.per_sample_ssim;
                report.quality.push_back(std::move(row));
            }
        } catch (const std::exception& e) {
            report.failed_stage = "attack";
            report.failure_message = e.what();
            emit_report(report, out_dir);
            return report;
        }
    }

    if (cfg.detect.dsnr || cfg.detect.variance || cfg.detect.lambda_layer >= 0) {
        try {
            StageClock clock{&report, "detect"};
            for (int rep = 0; rep < cfg.repetitions; ++rep) {
                const auto& cap = eval_caps[static_cast<std::size_t>(rep)];
                DetectRow row;
                row.rep = rep;
                row.round = cap.round;
                row.client = cap.client_id;
                if (cap.per_sample && cap.per_sample->size() >= 2 && cfg.detect.dsnr) {
                    metrics::DsnrReport d = metrics::d_snr(*cap.per_sample);
                    row.has_dsnr = true;
                    row.dsnr = d.value;
                    row.argmax_layer = d.argmax_layer;
                }
                if (cap.per_sample && cfg.detect.variance) {
                    auto [var, mean] = metrics::grad_norm_variance(*cap.per_sample);
                    row.has_variance = true;
                    row.norm_variance = var;
                    row.norm_mean = mean;
                }
                report.detect.push_back(std::move(row));

                if (cfg.detect.lambda_layer >= 0) {
                    LambdaMatrix lm = compute_lambda(cfg.model, theta_eval,
                                                     eval_batches[static_cast<std::size_t>(rep)]);
                    LambdaProfile prof = lambda_bias_profile(lm);
                    for (std::size_t k = 0; k < lm.C; ++k) {
                        LambdaRow lr;
                        lr.rep = rep;
                        lr.round = cap.round;
                        lr.client = cap.client_id;
                        lr.class_index = static_cast<int>(k);
                        lr.valid = prof.row_valid[k];
                        lr.max_lambda = prof.max_lambda[k];
                        lr.entropy = prof.entropy[k];
                        report.lambda.push_back(lr);
                    }
                }
            }
        } catch (const std::exception& e) {
            report.failed_stage = "detect";
            report.failure_message = e.what();
            emit_report(report, out_dir);
            return report;
        }
    }

    emit_report(report, out_dir);
    return report;
}

void emit_report(const RunReport& report, const std::filesystem::path& dir, bool csv, bool jsonl) {
    std::filesystem::create_directories(dir);
    using io::format_double;

    if (csv) {
        {
            io::CsvWriter w(dir / "rounds.csv");
            w.row({"round", "update_norm", "theta_norm", "poisoned"});
            for (const auto& r : report.rounds)
                w.row({std::to_string(r.round), format_double(r.update_norm),
                       format_double(r.theta_norm), r.poisoned ? "1" : "0"});
            w.close();
        }
        {
            io::CsvWriter w(dir / "quality.csv");
            w.row({"rep", "round", "client", "min_psnr", "pruned_mean_psnr", "max_psnr",
                   "attack_failed", "best_match_loss", "iterations_used", "per_sample_psnr",
                   "per_sample_ssim"});
            for (const auto& q : report.quality) {
                std::string psnrs, ssims;
                for (std::size_t i = 0; i < q.per_sample_psnr.size(); ++i) {
                    if (i) psnrs.push_back(';');
                    psnrs += format_double(q.per_sample_psnr[i]);
                }
                for (std::size_t i = 0; i < q.per_sample_ssim.size(); ++i) {
                    if (i) ssims.push_back(';');
                    ssims += format_double(q.per_sample_ssim[i]);
                }
                w.row({std::to_string(q.rep), std::to_string(q.round), std::to_string(q.client),
                       format_double(q.min_psnr), format_double(q.pruned_mean_psnr),
                       format_double(q.max_psnr), q.attack_failed ? "1" : "0",
                       format_double(q.best_match_loss), std::to_string(q.iterations_used), psnrs,
                       ssims});
            }
            w.close();
        }
        {
            io::CsvWriter w(dir / "detect.csv");
            w.row({"rep", "round", "client", "dsnr", "argmax_layer", "norm_variance",
                   "norm_mean"});
            for (const auto& d : report.detect)
                w.row({std::to_string(d.rep), std::to_string(d.round), std::to_string(d.client),
                       d.has_dsnr ? format_double(d.dsnr) : "", d.argmax_layer,
                       d.has_variance ? format_double(d.norm_variance) : "",
                       d.has_variance ? format_double(d.norm_mean) : ""});
            w.close();
        }
        {
            io::CsvWriter w(dir / "lambda.csv");
            w.row({"rep", "round", "client", "class", "valid", "max_lambda", "entropy"});
            for (const auto& l : report.lambda)
                w.row({std::to_string(l.rep), std::to_string(l.round), std::to_string(l.client),
                       std::to_string(l.class_index), l.valid ? "1" : "0",
                       format_double(l.max_lambda), format_double(l.entropy)});
            w.close();
        }
    }

    if (jsonl) {
        std::ofstream out(dir / "report.jsonl", std::ios::binary);
        auto emit = [&](nlohmann::json j) { out << j.dump() << "\n"; };
        {
            nlohmann::json j;
            j["type"] = "run";
            j["poisoned"] = report.poisoned;
            if (report.poisoned) {
                j["poison_initial_loss"] = report.poison_initial_loss;
                j["poison_final_moving_avg"] = report.poison_final_moving_avg;
            }
            if (report.failed_stage) {
                j["failed_stage"] = *report.failed_stage;
                j["failure_message"] = report.failure_message;
            }
            emit(j);
        }
        for (const auto& r : report.rounds)
            emit({{"type", "round"},
                  {"round", r.round},
                  {"update_norm", r.update_norm},
                  {"theta_norm", r.theta_norm},
                  {"poisoned", r.poisoned}});
        for (const auto& q : report.quality)
            emit({{"type", "quality"},
                  {"rep", q.rep},
                  {"round", q.round},
                  {"client", q.client},
                  {"min_psnr", q.min_psnr},
                  {"pruned_mean_psnr", q.pruned_mean_psnr},
                  {"max_psnr", q.max_psnr},
                  {"attack_failed", q.attack_failed},
                  {"best_match_loss", q.best_match_loss},
                  {"iterations_used", q.iterations_used},
                  {"per_sample_psnr", q.per_sample_psnr},
                  {"per_sample_ssim", q.per_sample_ssim}});
        for (const auto& d : report.detect) {
            nlohmann::json j{{"type", "detect"}, {"rep", d.rep}, {"round", d.round},
                             {"client", d.client}};
            if (d.has_dsnr) {
                j["dsnr"] = d.dsnr;
                j["argmax_layer"] = d.argmax_layer;
            }
            if (d.has_variance) {
                j["norm_variance"] = d.norm_variance;
                j["norm_mean"] = d.norm_mean;
            }
            emit(j);
        }
        for (const auto& l : report.lambda)
            emit({{"type", "lambda"},
                  {"rep", l.rep},
                  {"round", l.round},
                  {"client", l.client},
                  {"class", l.class_index},
                  {"valid", l.valid},
                  {"max_lambda", l.max_lambda},
                  {"entropy", l.entropy}});
    }

    // Wall-clock timings: informational only, excluded from the
    // determinism contract.
    {
        io::CsvWriter w(dir / "timings.csv");
        w.row({"stage", "ms"});
        for (const auto& [name, ms] : report.timings_ms)
            w.row({name, format_double(ms)});
        w.close();
    }
}

}  // namespace gl
