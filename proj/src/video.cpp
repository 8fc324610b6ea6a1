#include "vtok/video.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "vtok/model.hpp"

namespace vtok {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic{'N', 'V', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace

std::uint8_t quantize_pixel(float v) {
    const double scaled = (static_cast<double>(v) + 1.0) * 127.5;
    const double r = std::round(scaled);  // halves away from zero
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

VideoClip load_clip(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open clip " + path.string());
    unsigned char header[20];
    in.read(reinterpret_cast<char*>(header), sizeof header);
    if (in.gcount() < 4 || std::memcmp(header, kMagic.data(), 4) != 0)
        throw FormatError(path.string() + ": missing NVT1 magic");
    if (in.gcount() < static_cast<std::streamsize>(sizeof header))
        throw TruncationError(path.string() + ": header truncated");
    const std::uint32_t t = get_u32(header + 4), c = get_u32(header + 8), h = get_u32(header + 12),
                        w = get_u32(header + 16);
    if (t == 0 || c == 0 || h == 0 || w == 0)
        throw FormatError(path.string() + ": zero dimension in header");
    const std::size_t n = std::size_t(t) * c * h * w;
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw TruncationError(path.string() + ": payload has " + std::to_string(in.gcount()) +
                              " bytes, header claims " + std::to_string(n));
    VideoClip clip;
    clip.frames = Tensor<float>({int(t), int(c), int(h), int(w)});
    for (std::size_t i = 0; i < n; ++i) clip.frames[i] = dequantize_pixel(bytes[i]);
    return clip;
}

void save_clip(const VideoClip& clip, const fs::path& path) {
    const auto& f = clip.frames;
    if (f.rank() != 4) throw ShapeError("save_clip expects [T,C,H,W]");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write clip " + path.string());
    out.write(kMagic.data(), 4);
    for (int d = 0; d < 4; ++d) put_u32(out, static_cast<std::uint32_t>(f.dim(d)));
    std::vector<unsigned char> bytes(f.numel());
    for (std::size_t i = 0; i < f.numel(); ++i) bytes[i] = quantize_pixel(f[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

VideoClip subsample_frames(const VideoClip& clip, int factor) {
    VideoClip out;
    out.frames = subsample_time(clip.frames, factor);
    out.fps = std::max(1, clip.fps / factor);
    return out;
}

ChunkPlan plan_chunks(int total_frames, int chunk_length, int overlap) {
    if (total_frames < 1) throw ConfigError("plan_chunks: no frames");
    if (chunk_length < 1) throw ConfigError("plan_chunks: chunk length must be positive");
    if (overlap < 0 || overlap >= chunk_length)
        throw ConfigError("plan_chunks: overlap " + std::to_string(overlap) +
                          " must be in [0, chunk_length)");
    ChunkPlan plan{total_frames, chunk_length, overlap, {}};
    if (total_frames <= chunk_length) {
        plan.spans.emplace_back(0, total_frames);
        return plan;
    }
    const int stride = chunk_length - overlap;
    const int n = 1 + (total_frames - chunk_length + stride - 1) / stride;
    for (int i = 0; i < n; ++i) {
        const int start = std::min(i * stride, total_frames - chunk_length);
        plan.spans.emplace_back(start, start + chunk_length);
    }
    return plan;
}

// ---------------------------------------------------------------- synthetic data

void SynthSpec::validate() const {
    if (num_clips < 1) throw ConfigError("synthetic corpus needs at least one clip");
    if (frames_per_clip < 1) throw ConfigError("synthetic clips need at least one frame");
    if (height < 4 || width < 4) throw ConfigError("synthetic resolution too small");
    if (channels != 1 && channels != 3) throw ConfigError("synthetic clips have 1 or 3 channels");
    if (max_shapes < 1) throw ConfigError("max_shapes must be >= 1");
    if (min_velocity < 0 || max_velocity < min_velocity)
        throw ConfigError("velocity range must satisfy 0 <= min <= max");
}

namespace {

struct Sprite {
    bool disc = true;
    double x = 0, y = 0, vx = 0, vy = 0, size = 6;
    std::array<double, 3> color{};
};

double coverage(const Sprite& s, double px, double py) {
    const double dx = px - s.x, dy = py - s.y;
    const double dist = s.disc ? std::sqrt(dx * dx + dy * dy) : std::max(std::abs(dx), std::abs(dy));
    return std::clamp(s.size - dist + 0.5, 0.0, 1.0);
}

void bounce(double& p, double& v, double lo, double hi) {
    for (int guard = 0; guard < 4 && (p < lo || p > hi); ++guard) {
        if (p < lo) {
            p = 2 * lo - p;
            v = -v;
        } else if (p > hi) {
            p = 2 * hi - p;
            v = -v;
        }
    }
    p = std::clamp(p, lo, hi);
}

}  // namespace

VideoClip synthesize_clip(const SynthSpec& spec, int index) {
    spec.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    Rng rng(seq);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };

    const int h = spec.height, w = spec.width, c = spec.channels;
    std::array<double, 3> bg0{}, bg1{};
    for (int i = 0; i < 3; ++i) {
        bg0[i] = uni(-0.9, 0.2);
        bg1[i] = uni(-0.9, 0.2);
    }
    const int n_shapes = 1 + static_cast<int>(u01(rng) * spec.max_shapes) % spec.max_shapes;
    std::vector<Sprite> sprites(static_cast<std::size_t>(n_shapes));
    const double min_dim = std::min(h, w);
    for (auto& s : sprites) {
        s.disc = u01(rng) < 0.5;
        s.size = uni(min_dim * 0.06, min_dim * 0.18);
        s.x = uni(s.size, w - 1 - s.size);
        s.y = uni(s.size, h - 1 - s.size);
        const double speed = uni(spec.min_velocity, spec.max_velocity);
        const double angle = uni(0.0, 2.0 * 3.14159265358979323846);
        s.vx = speed * std::cos(angle);
        s.vy = speed * std::sin(angle);
        for (auto& col : s.color) col = uni(-0.2, 1.0);
    }

    VideoClip clip;
    clip.frames = Tensor<float>({spec.frames_per_clip, c, h, w});
    for (int t = 0; t < spec.frames_per_clip; ++t) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double a = (x + y) / double(w + h - 2);
                std::array<double, 3> px{};
                for (int i = 0; i < 3; ++i) px[i] = bg0[i] * (1 - a) + bg1[i] * a;
                for (const auto& s : sprites) {
                    const double cov = coverage(s, x, y);
                    if (cov <= 0) continue;
                    for (int i = 0; i < 3; ++i) px[i] = px[i] * (1 - cov) + s.color[i] * cov;
                }
                if (c == 1) {
                    clip.frames.at(t, 0, y, x) = static_cast<float>((px[0] + px[1] + px[2]) / 3.0);
                } else {
                    for (int i = 0; i < 3; ++i) clip.frames.at(t, i, y, x) = static_cast<float>(px[static_cast<std::size_t>(i)]);
                }
            }
        }
        for (auto& s : sprites) {
            s.x += s.vx;
            s.y += s.vy;
            bounce(s.x, s.vx, s.size, w - 1 - s.size);
            bounce(s.y, s.vy, s.size, h - 1 - s.size);
        }
    }
    return clip;
}

std::vector<fs::path> generate_synthetic(const SynthSpec& spec, const fs::path& dir) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());
    std::vector<std::string> names(static_cast<std::size_t>(spec.num_clips));
    for (int i = 0; i < spec.num_clips; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "clip_%05d.nvt", i);
        names[static_cast<std::size_t>(i)] = buf;
    }
    // Clips are independent; exceptions are collected and rethrown serially.
    std::vector<std::string> errors(names.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < spec.num_clips; ++i) {
        try {
            save_clip(synthesize_clip(spec, i), dir / names[static_cast<std::size_t>(i)]);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw IoError(e);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) throw IoError("cannot write manifest in " + dir.string());
    std::vector<fs::path> paths;
    for (const auto& n : names) {
        manifest << n << "\n";
        paths.push_back(dir / n);
    }
    return paths;
}

Corpus Corpus::open(const fs::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw IoError("no manifest.txt in " + dir.string());
    Corpus c;
    c.root = dir;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) c.entries.push_back(line);
    }
    return c;
}

std::pair<Corpus, Corpus> Corpus::split(std::size_t held_out) const {
    held_out = std::min(held_out, entries.size());
    Corpus train{root, {entries.begin(), entries.end() - static_cast<std::ptrdiff_t>(held_out)}};
    Corpus test{root, {entries.end() - static_cast<std::ptrdiff_t>(held_out), entries.end()}};
    return {train, test};
}

}  // namespace vtok
