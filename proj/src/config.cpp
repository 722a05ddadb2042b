#include "gl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gl/rng.hpp"
#include "json.hpp"

namespace gl {
namespace {

using nlohmann::json;

[[noreturn]] void cfg_error(const std::string& path, const std::string& what) {
    throw std::runtime_error("config: " + path + ": " + what);
}

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            cfg_error(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
}

template <class T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        cfg_error(path + "." + key, e.what());
    }
}

DatasetConfig parse_dataset(const json& j, const std::string& path) {
    reject_unknown(j, path, {"kind", "m", "C", "n", "seed", "path", "format"});
    DatasetConfig dc;
    if (j.contains("path")) {
        dc.synthetic = false;
        dc.path = j.at("path").get<std::string>();
        dc.format = get_or<std::string>(j, path, "format", "csv");
        if (dc.format != "csv" && dc.format != "raw_f32")
            cfg_error(path + ".format", "must be csv or raw_f32");
        if (!std::filesystem::exists(dc.path))
            cfg_error(path + ".path", "file does not exist: " + dc.path);
        if (j.contains("kind") || j.contains("m") || j.contains("C") || j.contains("n"))
            cfg_error(path, "file datasets take no synthesis keys");
    } else {
        dc.synthetic = true;
        dc.kind = synth_kind_from_string(get_or<std::string>(j, path, "kind", "gaussian_blobs"));
        dc.m = get_or<std::size_t>(j, path, "m", 16);
        dc.C = get_or<std::size_t>(j, path, "C", 4);
        dc.n = get_or<std::size_t>(j, path, "n", 64);
        dc.seed = get_or<std::uint64_t>(j, path, "seed", 0);
        if (dc.n < dc.C) cfg_error(path + ".n", "need at least one sample per class");
    }
    return dc;
}

json dataset_to_json(const DatasetConfig& dc) {
    json j;
    if (dc.synthetic) {
        j["kind"] = to_string(dc.kind);
        j["m"] = dc.m;
        j["C"] = dc.C;
        j["n"] = dc.n;
        j["seed"] = dc.seed;
    } else {
        j["path"] = dc.path;
        j["format"] = dc.format;
    }
    return j;
}

pgla::AttackConfig parse_attack(const json& j, const std::string& path, std::size_t input_dim) {
    reject_unknown(j, path,
                   {"method", "iterations", "step_size", "tv_weight", "distance", "optimizer",
                    "momentum", "restarts", "seed", "cosine_decay", "image"});
    std::string method = get_or<std::string>(j, path, "method", "dlg");
    pgla::AttackConfig ac = method == "ig" ? pgla::AttackConfig::ig_defaults(input_dim, 0)
                                           : pgla::AttackConfig::dlg_defaults(input_dim, 0);
    if (method != "dlg" && method != "ig") cfg_error(path + ".method", "must be dlg or ig");
    ac.iterations = get_or<int>(j, path, "iterations", ac.iterations);
    ac.step_size = get_or<double>(j, path, "step_size", ac.step_size);
    ac.tv_weight = get_or<double>(j, path, "tv_weight", ac.tv_weight);
    ac.momentum = get_or<double>(j, path, "momentum", ac.momentum);
    ac.restarts = get_or<int>(j, path, "restarts", ac.restarts);
    ac.seed = get_or<std::uint64_t>(j, path, "seed", 0);
    ac.cosine_decay = get_or<bool>(j, path, "cosine_decay", ac.cosine_decay);
    if (j.contains("optimizer")) {
        std::string o = j.at("optimizer").get<std::string>();
        if (o == "gd")
            ac.optimizer = pgla::Optimizer::Gd;
        else if (o == "adam")
            ac.optimizer = pgla::Optimizer::Adam;
        else
            cfg_error(path + ".optimizer", "must be gd or adam");
    }
    if (j.contains("distance")) {
        std::string d = j.at("distance").get<std::string>();
        if (d == "squared_l2")
            ac.distance = pgla::Distance::SquaredL2;
        else if (d == "negative_cosine")
            ac.distance = pgla::Distance::NegativeCosine;
        else
            cfg_error(path + ".distance", "must be squared_l2 or negative_cosine");
    }
    if (j.contains("image")) {
        const json& im = j.at("image");
        reject_unknown(im, path + ".image", {"h", "w", "ch"});
        ac.image.h = get_or<std::size_t>(im, path + ".image", "h", 0);
        ac.image.w = get_or<std::size_t>(im, path + ".image", "w", 0);
        ac.image.ch = get_or<std::size_t>(im, path + ".image", "ch", 1);
    }
    return ac;
}

json attack_to_json(const pgla::AttackConfig& ac) {
    json j;
    j["method"] = ac.method == pgla::Method::Dlg ? "dlg" : "ig";
    j["iterations"] = ac.iterations;
    j["step_size"] = ac.step_size;
    j["tv_weight"] = ac.tv_weight;
    j["distance"] =
        ac.distance == pgla::Distance::SquaredL2 ? "squared_l2" : "negative_cosine";
    j["optimizer"] = ac.optimizer == pgla::Optimizer::Gd ? "gd" : "adam";
    j["momentum"] = ac.momentum;
    j["restarts"] = ac.restarts;
    j["seed"] = ac.seed;
    j["cosine_decay"] = ac.cosine_decay;
    j["image"] = {{"h", ac.image.h}, {"w", ac.image.w}, {"ch", ac.image.ch}};
    return j;
}

ExperimentConfig parse_root(const json& j) {
    reject_unknown(j, "",
                   {"model", "init", "dataset", "aux_dataset", "batch_size", "clients", "rounds",
                    "learning_rate", "repetitions", "poison", "attack", "detect", "output_dir",
                    "master_seed"});
    ExperimentConfig cfg;

    if (!j.contains("model")) cfg_error("model", "required");
    {
        const json& m = j.at("model");
        reject_unknown(m, "model", {"layer_dims", "activations", "bias"});
        if (!m.contains("layer_dims")) cfg_error("model.layer_dims", "required");
        cfg.model.layer_dims = m.at("layer_dims").get<std::vector<std::size_t>>();
        std::size_t hidden = cfg.model.layer_dims.size() >= 2 ? cfg.model.layer_dims.size() - 2 : 0;
        if (m.contains("activations")) {
            for (const auto& a : m.at("activations"))
                cfg.model.activations.push_back(activation_from_string(a.get<std::string>()));
        } else {
            cfg.model.activations.assign(hidden, Activation::Relu);
        }
        if (m.contains("bias")) {
            cfg.model.has_bias = m.at("bias").get<std::vector<bool>>();
        } else {
            cfg.model.has_bias.assign(cfg.model.layer_dims.size() - 1, true);
        }
        try {
            cfg.model.validate();
        } catch (const std::exception& e) {
            cfg_error("model", e.what());
        }
    }

    if (j.contains("init")) {
        const json& in = j.at("init");
        reject_unknown(in, "init", {"scheme", "seed"});
        cfg.init_scheme = init_scheme_from_string(get_or<std::string>(in, "init", "scheme", "random"));
        cfg.init_seed = get_or<std::uint64_t>(in, "init", "seed", 0);
    }

    if (!j.contains("dataset")) cfg_error("dataset", "required");
    cfg.dataset = parse_dataset(j.at("dataset"), "dataset");
    if (j.contains("aux_dataset")) cfg.aux_dataset = parse_dataset(j.at("aux_dataset"), "aux_dataset");

    cfg.batch_size = get_or<std::size_t>(j, "", "batch_size", 8);
    cfg.clients = get_or<std::size_t>(j, "", "clients", 1);
    cfg.rounds = get_or<int>(j, "", "rounds", 1);
    cfg.learning_rate = get_or<double>(j, "", "learning_rate", 0.1);
    cfg.repetitions = get_or<int>(j, "", "repetitions", 100);

    if (j.contains("poison")) {
        const json& p = j.at("poison");
        reject_unknown(p, "poison",
                       {"kind", "iterations", "alpha_theta", "alpha_phi", "epsilon", "rho",
                        "decoder_hidden", "target_class", "round"});
        std::string kind = get_or<std::string>(p, "poison", "kind", "none");
        if (kind == "none")
            cfg.poison.kind = PoisonSettings::Kind::None;
        else if (kind == "eggv")
            cfg.poison.kind = PoisonSettings::Kind::Eggv;
        else if (kind == "fishing")
            cfg.poison.kind = PoisonSettings::Kind::Fishing;
        else
            cfg_error("poison.kind", "must be none, eggv, or fishing");
        cfg.poison.eggv.iterations = get_or<int>(p, "poison", "iterations", 2000);
        cfg.poison.eggv.alpha_theta = get_or<double>(p, "poison", "alpha_theta", 1e-3);
        cfg.poison.eggv.alpha_phi = get_or<double>(p, "poison", "alpha_phi", 1e-2);
        cfg.poison.eggv.epsilon = get_or<double>(p, "poison", "epsilon", 1e-3);
        cfg.poison.eggv.rho = get_or<double>(p, "poison", "rho", 0.004);
        cfg.poison.eggv.decoder_hidden = get_or<std::size_t>(p, "poison", "decoder_hidden", 0);
        cfg.poison.fishing_target = get_or<int>(p, "poison", "target_class", 0);
        cfg.poison.round = get_or<int>(p, "poison", "round", 0);
    }

    if (j.contains("attack") && !j.at("attack").is_null())
        cfg.attack = parse_attack(j.at("attack"), "attack", cfg.model.input_dim());

    if (j.contains("detect")) {
        const json& d = j.at("detect");
        reject_unknown(d, "detect", {"dsnr", "variance", "lambda_layer"});
        cfg.detect.dsnr = get_or<bool>(d, "detect", "dsnr", true);
        cfg.detect.variance = get_or<bool>(d, "detect", "variance", true);
        cfg.detect.lambda_layer = get_or<int>(d, "detect", "lambda_layer", -1);
    }

    cfg.output_dir = get_or<std::string>(j, "", "output_dir", "");
    cfg.master_seed = get_or<std::uint64_t>(j, "", "master_seed", 42);
    return cfg;
}

void apply_env_overrides(ExperimentConfig& cfg) {
    auto env = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (!v) return std::nullopt;
        return std::string(v);
    };
    if (auto v = env("GL_BATCH_SIZE")) cfg.batch_size = std::stoul(*v);
    if (auto v = env("GL_CLIENTS")) cfg.clients = std::stoul(*v);
    if (auto v = env("GL_ROUNDS")) cfg.rounds = std::stoi(*v);
    if (auto v = env("GL_LEARNING_RATE")) cfg.learning_rate = std::stod(*v);
    if (auto v = env("GL_REPETITIONS")) cfg.repetitions = std::stoi(*v);
    if (auto v = env("GL_MASTER_SEED")) cfg.master_seed = std::stoull(*v);
    if (auto v = env("GL_OUTPUT_DIR")) cfg.output_dir = *v;
    if (auto v = env("GL_INIT_SCHEME")) cfg.init_scheme = init_scheme_from_string(*v);
    if (auto v = env("GL_INIT_SEED")) cfg.init_seed = std::stoull(*v);
    if (auto v = env("GL_POISON_RHO")) cfg.poison.eggv.rho = std::stod(*v);
    if (auto v = env("GL_POISON_ITERATIONS")) cfg.poison.eggv.iterations = std::stoi(*v);
    if (auto v = env("GL_POISON_ALPHA_THETA")) cfg.poison.eggv.alpha_theta = std::stod(*v);
    if (auto v = env("GL_POISON_ALPHA_PHI")) cfg.poison.eggv.alpha_phi = std::stod(*v);
    if (auto v = env("GL_POISON_EPSILON")) cfg.poison.eggv.epsilon = std::stod(*v);
    if (auto v = env("GL_ATTACK_ITERATIONS")) {
        if (cfg.attack) cfg.attack->iterations = std::stoi(*v);
    }
    if (auto v = env("GL_ATTACK_STEP_SIZE")) {
        if (cfg.attack) cfg.attack->step_size = std::stod(*v);
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    model.validate();
    if (batch_size < 1) throw std::runtime_error("config: batch_size: must be >= 1");
    if (clients < 1) throw std::runtime_error("config: clients: must be >= 1");
    if (rounds < 1) throw std::runtime_error("config: rounds: must be >= 1");
    if (repetitions < 1) throw std::runtime_error("config: repetitions: must be >= 1");
    if (poison.kind == PoisonSettings::Kind::Eggv) {
        double rho = poison.eggv.rho;
        if (!(rho > 0.0) || rho > 1.0) {
            std::ostringstream os;
            os << "config: poison.rho: " << rho << " outside the valid range (0, 1]";
            throw std::runtime_error(os.str());
        }
        if (!aux_dataset)
            throw std::runtime_error("config: aux_dataset: required for eggv poisoning");
        // The poisoned model is distributed for the target task, so the
        // auxiliary data must carry the same class count.
        if (aux_dataset->synthetic && aux_dataset->C != model.num_classes())
            throw std::runtime_error("config: aux_dataset.C: must match the model class count");
    }
    if (poison.kind == PoisonSettings::Kind::Fishing) {
        if (poison.fishing_target < 0 ||
            static_cast<std::size_t>(poison.fishing_target) >= model.num_classes())
            throw std::runtime_error("config: poison.target_class: out of range");
    }
    if (poison.round < 0 || poison.round >= rounds)
        throw std::runtime_error("config: poison.round: must lie in [0, rounds)");
    if (dataset.synthetic && dataset.m != model.input_dim())
        throw std::runtime_error("config: dataset.m: does not match model input width");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: " + path.string() + ": " + e.what());
    }
    ExperimentConfig cfg = parse_root(j);
    apply_env_overrides(cfg);
    cfg.validate();
    if (!cfg.output_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.output_dir, ec);
        std::filesystem::path probe = std::filesystem::path(cfg.output_dir) / ".writable";
        std::ofstream p(probe);
        if (ec || !p) throw std::runtime_error("config: output_dir: not writable: " + cfg.output_dir);
        p.close();
        std::filesystem::remove(probe);
    }
    return cfg;
}

std::string config_to_json_string(const ExperimentConfig& cfg) {
    json j;
    json m;
    m["layer_dims"] = cfg.model.layer_dims;
    std::vector<std::string> acts;
    for (auto a : cfg.model.activations) acts.push_back(to_string(a));
    m["activations"] = acts;
    m["bias"] = std::vector<bool>(cfg.model.has_bias.begin(), cfg.model.has_bias.end());
    j["model"] = m;
    j["init"] = {{"scheme", to_string(cfg.init_scheme)}, {"seed", cfg.init_seed}};
    j["dataset"] = dataset_to_json(cfg.dataset);
    if (cfg.aux_dataset) j["aux_dataset"] = dataset_to_json(*cfg.aux_dataset);
    j["batch_size"] = cfg.batch_size;
    j["clients"] = cfg.clients;
    j["rounds"] = cfg.rounds;
    j["learning_rate"] = cfg.learning_rate;
    j["repetitions"] = cfg.repetitions;
    json p;
    switch (cfg.poison.kind) {
        case PoisonSettings::Kind::None: p["kind"] = "none"; break;
        case PoisonSettings::Kind::Eggv: p["kind"] = "eggv"; break;
        case PoisonSettings::Kind::Fishing: p["kind"] = "fishing"; break;
    }
    p["iterations"] = cfg.poison.eggv.iterations;
    p["alpha_theta"] = cfg.poison.eggv.alpha_theta;
    p["alpha_phi"] = cfg.poison.eggv.alpha_phi;
    p["epsilon"] = cfg.poison.eggv.epsilon;
    p["rho"] = cfg.poison.eggv.rho;
    p["decoder_hidden"] = cfg.poison.eggv.decoder_hidden;
    p["target_class"] = cfg.poison.fishing_target;
    p["round"] = cfg.poison.round;
    j["poison"] = p;
    if (cfg.attack) j["attack"] = attack_to_json(*cfg.attack);
    j["detect"] = {{"dsnr", cfg.detect.dsnr},
                   {"variance", cfg.detect.variance},
                   {"lambda_layer", cfg.detect.lambda_layer}};
    j["output_dir"] = cfg.output_dir;
    j["master_seed"] = cfg.master_seed;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json_string(const std::string& text) {
    ExperimentConfig cfg = parse_root(json::parse(text));
    cfg.validate();
    return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_config: cannot open " + path.string());
    out << config_to_json_string(cfg);
}

Dataset realize_dataset(const DatasetConfig& dc, std::uint64_t master_seed,
                        std::string_view stage) {
    if (dc.synthetic) {
        std::uint64_t seed = dc.seed ? dc.seed : Rng::derive(master_seed, stage);
        return synth_dataset(dc.kind, dc.m, dc.C, dc.n, seed);
    }
    if (dc.format == "raw_f32") return ingest_raw_f32(dc.path);
    return ingest_csv(dc.path);
}

}  // namespace gl
