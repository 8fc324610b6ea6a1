#include "vtok/config.hpp"

#include <algorithm>
#include <fstream>

#include "vtok/hash.hpp"

namespace vtok {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

json optim_json(const OptimConfig& o) {
    return {{"lr", o.lr},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"eps", o.eps},
            {"weight_decay", o.weight_decay},
            {"clip_norm", o.clip_norm}};
}

OptimConfig optim_from(const json& j, OptimConfig o) {
    read(j, "lr", o.lr);
    read(j, "beta1", o.beta1);
    read(j, "beta2", o.beta2);
    read(j, "eps", o.eps);
    read(j, "weight_decay", o.weight_decay);
    read(j, "clip_norm", o.clip_norm);
    return o;
}

const json& section(const json& j, const char* name) {
    static const json empty = json::object();
    if (!j.contains(name)) return empty;
    if (!j.at(name).is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
    return j.at(name);
}

}  // namespace

LossWeights LossSection::weights(int k) const {
    LossWeights w = LossWeights::for_stage(k);
    w.rec = rec;
    w.kl = kl;
    if (gan) w.gan = *gan;
    w.perceptual = perceptual;
    return w;
}

Config Config::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    static const char* known[] = {"seed", "data", "model", "stage", "optim", "losses", "logging", "inference"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw ConfigError("unknown config section '" + key + "'");
    }
    Config c;
    read(j, "seed", c.seed);

    const json& d = section(j, "data");
    read(d, "corpus", c.data.corpus);
    read(d, "held_out", c.data.held_out);
    const json& s = section(d, "synth");
    read(s, "num_clips", c.data.synth.num_clips);
    read(s, "frames", c.data.synth.frames_per_clip);
    read(s, "height", c.data.synth.height);
    read(s, "width", c.data.synth.width);
    read(s, "channels", c.data.synth.channels);
    read(s, "max_shapes", c.data.synth.max_shapes);
    read(s, "min_velocity", c.data.synth.min_velocity);
    read(s, "max_velocity", c.data.synth.max_velocity);

    const json& m = section(j, "model");
    read(m, "widths", c.model.widths);
    read(m, "res_units", c.model.res_units);
    read(m, "latent_channels", c.model.latent_channels);

    const json& st = section(j, "stage");
    read(st, "k", c.stage.k);
    read(st, "steps", c.stage.steps);
    read(st, "parent", c.stage.parent);
    read(st, "image_checkpoint", c.stage.image_checkpoint);
    read(st, "output", c.stage.output);
    read(st, "image_steps", c.stage.image_steps);
    read(st, "budgets", c.stage.budgets);
    read(st, "ablation", c.stage.ablation);

    const json& o = section(j, "optim");
    c.optim.generator = optim_from(o, c.optim.generator);
    if (o.contains("discriminator")) c.optim.discriminator = optim_from(section(o, "discriminator"), c.optim.discriminator);
    read(o, "batch", c.optim.batch);

    const json& l = section(j, "losses");
    read(l, "rec", c.losses.rec);
    read(l, "kl", c.losses.kl);
    if (l.contains("gan") && !l.at("gan").is_null()) {
        double g = 0;
        read(l, "gan", g);
        c.losses.gan = g;
    }
    read(l, "perceptual", c.losses.perceptual);
    read(l, "disc_widths", c.losses.disc_widths);

    const json& lg = section(j, "logging");
    read(lg, "dir", c.logging.dir);
    read(lg, "log_every", c.logging.log_every);
    read(lg, "eval_every", c.logging.eval_every);
    read(lg, "eval_clips", c.logging.eval_clips);
    read(lg, "save_every", c.logging.save_every);

    const json& in = section(j, "inference");
    read(in, "tile", c.inference.tile);
    read(in, "overlap", c.inference.overlap);
    read(in, "chunk_frames", c.inference.chunk_frames);
    read(in, "chunk_overlap", c.inference.chunk_overlap);

    if (c.optim.batch < 1) throw ConfigError("optim.batch must be >= 1");
    if (c.stage.budgets.size() != 3) throw ConfigError("stage.budgets needs three entries (4x, 8x, 16x)");
    c.plan(4).validate();
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

json Config::to_json() const {
    json j;
    j["seed"] = seed;
    j["data"] = {{"corpus", data.corpus},
                 {"held_out", data.held_out},
                 {"synth",
                  {{"num_clips", data.synth.num_clips},
                   {"frames", data.synth.frames_per_clip},
                   {"height", data.synth.height},
                   {"width", data.synth.width},
                   {"channels", data.synth.channels},
                   {"max_shapes", data.synth.max_shapes},
                   {"min_velocity", data.synth.min_velocity},
                   {"max_velocity", data.synth.max_velocity}}}};
    j["model"] = {{"widths", model.widths}, {"res_units", model.res_units}, {"latent_channels", model.latent_channels}};
    j["stage"] = {{"k", stage.k},
                  {"steps", stage.steps},
                  {"parent", stage.parent},
                  {"image_checkpoint", stage.image_checkpoint},
                  {"output", stage.output},
                  {"image_steps", stage.image_steps},
                  {"budgets", stage.budgets},
                  {"ablation", stage.ablation}};
    j["optim"] = optim_json(optim.generator);
    j["optim"]["batch"] = optim.batch;
    j["optim"]["discriminator"] = optim_json(optim.discriminator);
    j["losses"] = {{"rec", losses.rec},
                   {"kl", losses.kl},
                   {"gan", losses.gan ? json(*losses.gan) : json(nullptr)},
                   {"perceptual", losses.perceptual},
                   {"disc_widths", losses.disc_widths}};
    j["logging"] = {{"dir", logging.dir},
                    {"log_every", logging.log_every},
                    {"eval_every", logging.eval_every},
                    {"eval_clips", logging.eval_clips},
                    {"save_every", logging.save_every}};
    j["inference"] = {{"tile", inference.tile},
                      {"overlap", inference.overlap},
                      {"chunk_frames", inference.chunk_frames},
                      {"chunk_overlap", inference.chunk_overlap}};
    return j;
}

std::string Config::fingerprint() const {
    Fnv1a h;
    h.update(to_json().dump());
    return h.hex();
}

StagePlan Config::plan(int k, bool mixing) const {
    StagePlan p = model;
    p.k = k;
    p.mixing = mixing;
    p.validate();
    return p;
}

}  // namespace vtok
