#include "vtok/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <utility>

#include "vtok/video.hpp"

namespace vtok {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'V', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    unsigned char b[sizeof(T)];
    is.read(reinterpret_cast<char*>(b), sizeof(T));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) throw TruncationError("checkpoint header truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
}

std::vector<ArchiveTensor> model_tensors(const std::vector<const Param<Real>*>& params) {
    std::vector<ArchiveTensor> out;
    out.reserve(params.size());
    for (const auto* p : params) out.push_back({p->name, p->value, p->stage, p->frozen});
    return out;
}

void assign_params(const ParamList<Real>& params, const Archive& ar, const fs::path& path) {
    for (auto* p : params) {
        const ArchiveTensor* t = ar.find(p->name);
        if (!t) throw FormatError(path.string() + ": missing tensor " + p->name);
        if (t->value.shape() != p->value.shape())
            throw FormatError(path.string() + ": shape mismatch for " + p->name + " " +
                              shape_str(t->value.shape()) + " vs " + shape_str(p->value.shape()));
        p->value = t->value;
        p->stage = t->stage;
        p->frozen = t->frozen;
        p->zero_grad();
    }
}

json info_json(const CheckpointInfo& info) {
    json j;
    j["kind"] = info.kind;
    j["parent_hash"] = info.parent_hash;
    j["step"] = info.step;
    j["growth_mixing"] = info.growth_mixing;
    j["trainer"] = info.trainer.is_null() ? json::object() : info.trainer;
    return j;
}

CheckpointInfo info_from(const Archive& ar, const std::vector<const Param<Real>*>& params) {
    CheckpointInfo info;
    const json& h = ar.header;
    info.kind = h.value("kind", "tokenizer");
    info.parent_hash = h.value("parent_hash", "");
    info.step = h.value("step", std::int64_t{0});
    if (h.contains("growth_mixing")) info.growth_mixing = h["growth_mixing"].get<std::vector<bool>>();
    info.trainer = h.value("trainer", json::object());
    for (const auto& t : ar.tensors) {
        const bool is_param = std::any_of(params.begin(), params.end(),
                                          [&](const Param<Real>* p) { return p->name == t.name; });
        if (!is_param) info.extra_tensors.push_back(t);
    }
    return info;
}

}  // namespace

std::string hash_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Fnv1a h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

const ArchiveTensor* Archive::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void write_archive(const fs::path& path, const Archive& archive) {
    json header = archive.header;
    json table = json::array();
    std::uint64_t offset = 0;
    for (const auto& t : archive.tensors) {
        const std::uint64_t nbytes = t.value.numel() * sizeof(float);
        table.push_back({{"name", t.name},
                         {"dtype", "f32"},
                         {"shape", t.value.shape()},
                         {"offset", offset},
                         {"nbytes", nbytes},
                         {"stage", t.stage},
                         {"frozen", t.frozen}});
        offset += nbytes;
    }
    header["tensors"] = std::move(table);
    const std::string text = header.dump(1);

    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out.write(kMagic, 4);
        put<std::uint32_t>(out, kVersion);
        put<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& t : archive.tensors) {
            static_assert(sizeof(float) == 4);
            for (std::size_t i = 0; i < t.value.numel(); ++i) {
                std::uint32_t bits;
                std::memcpy(&bits, &t.value[i], 4);
                put<std::uint32_t>(out, bits);
            }
        }
        if (!out) throw IoError("write failed for " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Archive read_archive(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path.string() + ": not a VTCK archive");
    const auto version = get<std::uint32_t>(in);
    if (version != kVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    const auto len = get<std::uint64_t>(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len) throw TruncationError(path.string() + ": header truncated");
    Archive ar;
    ar.header = json::parse(text);
    const json table = ar.header["tensors"];
    ar.header.erase("tensors");
    for (const auto& e : table) {
        if (e.value("dtype", "f32") != "f32") throw FormatError("unsupported dtype in " + path.string());
        ArchiveTensor t;
        t.name = e["name"].get<std::string>();
        t.value = Tensor<float>(e["shape"].get<Shape>());
        t.stage = e.value("stage", 0);
        t.frozen = e.value("frozen", false);
        std::vector<unsigned char> bytes(t.value.numel() * 4);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(in.gcount()) != bytes.size())
            throw TruncationError(path.string() + ": payload truncated at " + t.name);
        for (std::size_t i = 0; i < t.value.numel(); ++i) {
            const unsigned char* b = bytes.data() + 4 * i;
            const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                                       (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
            std::memcpy(&t.value[i], &bits, 4);
        }
        ar.tensors.push_back(std::move(t));
    }
    return ar;
}

json plan_to_json(const StagePlan& plan) {
    return {{"k", plan.k},
            {"widths", plan.widths},
            {"res_units", plan.res_units},
            {"latent_channels", plan.latent_channels},
            {"mixing", plan.mixing}};
}

StagePlan plan_from_json(const json& j) {
    StagePlan p;
    p.k = j.value("k", p.k);
    p.widths = j.value("widths", p.widths);
    p.res_units = j.value("res_units", p.res_units);
    p.latent_channels = j.value("latent_channels", p.latent_channels);
    p.mixing = j.value("mixing", p.mixing);
    p.validate();
    return p;
}

std::vector<bool> growth_mixing(const TokenizerModel& model) {
    std::vector<bool> out;
    for (const auto& g : model.growth()) out.push_back(g.mixing);
    return out;
}

void save_tokenizer(const fs::path& path, const TokenizerModel& model, const CheckpointInfo& info) {
    Archive ar;
    CheckpointInfo meta = info;
    meta.kind = "tokenizer";
    meta.growth_mixing = growth_mixing(model);
    ar.header = info_json(meta);
    ar.header["plan"] = plan_to_json(model.plan());
    ar.tensors = model_tensors(model.parameters());
    for (const auto& t : info.extra_tensors) ar.tensors.push_back(t);
    write_archive(path, ar);
}

TokenizerModel load_tokenizer(const fs::path& path, CheckpointInfo* info) {
    Archive ar = read_archive(path);
    if (ar.header.value("kind", "") != "tokenizer")
        throw FormatError(path.string() + ": not a tokenizer checkpoint");
    const StagePlan plan = plan_from_json(ar.header.at("plan"));
    const auto mixing = ar.header.value("growth_mixing", std::vector<bool>{});
    if (static_cast<int>(mixing.size()) != plan.growth_steps())
        throw FormatError(path.string() + ": growth history does not match k");
    StagePlan base = plan;
    base.k = 4;
    TokenizerModel model = TokenizerModel::build(base, 0);
    for (std::size_t i = 0; i < mixing.size(); ++i) {
        StagePlan next = base;
        next.k = 4 << (i + 1);
        next.mixing = mixing[i];
        model = TokenizerModel::grow(model, next, 0);
    }
    assign_params(model.parameters(), ar, path);
    if (info) *info = info_from(ar, std::as_const(model).parameters());
    return model;
}

void save_image_model(const fs::path& path, const ImageAutoencoder& model, const CheckpointInfo& info) {
    Archive ar;
    CheckpointInfo meta = info;
    meta.kind = "image";
    ar.header = info_json(meta);
    ar.header["plan"] = plan_to_json(model.plan());
    ar.tensors = model_tensors(model.parameters());
    for (const auto& t : info.extra_tensors) ar.tensors.push_back(t);
    write_archive(path, ar);
}

ImageAutoencoder load_image_model(const fs::path& path, CheckpointInfo* info) {
    Archive ar = read_archive(path);
    if (ar.header.value("kind", "") != "image")
        throw FormatError(path.string() + ": not an image-model checkpoint");
    ImageAutoencoder model = ImageAutoencoder::build(plan_from_json(ar.header.at("plan")), 0);
    assign_params(model.parameters(), ar, path);
    if (info) *info = info_from(ar, std::as_const(model).parameters());
    return model;
}

}  // namespace vtok
