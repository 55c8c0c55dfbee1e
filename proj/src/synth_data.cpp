#include "gti3d/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "gti3d/blob_io.hpp"
#include "gti3d/errors.hpp"

namespace gti3d::data {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t id) {
    return splitmix64(splitmix64(seed ^ (tag << 48)) + id);
}

constexpr std::uint64_t kSubjectStream = 1;
constexpr std::uint64_t kClipStream = 2;
constexpr std::uint64_t kSplitStream = 3;

struct Appearance {
    double radius;
    double stripe_angle;
    double stripe_freq;
    double base;
    double background;
};

Appearance subject_appearance(std::uint64_t seed, int subject) {
    std::mt19937_64 rng(stream_seed(seed, kSubjectStream, static_cast<std::uint64_t>(subject)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Appearance a;
    a.radius = 2.5 + 1.5 * u(rng);
    a.stripe_angle = std::numbers::pi * u(rng);
    a.stripe_freq = 0.8 + 0.8 * u(rng);
    a.base = 0.6 + 0.3 * u(rng);
    a.background = 0.05 + 0.15 * u(rng);
    return a;
}

std::string blob_name(Modality m, int instance) {
    return std::string(m == Modality::flat ? "flat/" : "fisheye/") + std::to_string(instance) + ".uvht";
}

json pinhole_json(const optics::PinholeIntrinsics& p) {
    return {{"focal", p.focal}, {"center_x", p.center_x}, {"center_y", p.center_y}, {"width", p.width},
            {"height", p.height}};
}

json fisheye_json(const optics::FisheyeIntrinsics& f) {
    return {{"focal", f.focal},   {"center_x", f.center_x}, {"center_y", f.center_y},
            {"fov", f.fov},       {"width", f.width},       {"height", f.height},
            {"model", optics::to_string(f.model)}};
}

} // namespace

optics::PinholeIntrinsics GeneratorConfig::flat_intrinsics() const {
    return optics::PinholeIntrinsics::centered(width, height);
}

optics::FisheyeIntrinsics GeneratorConfig::fisheye_intrinsics() const {
    auto fe = optics::FisheyeIntrinsics::centered(width, height, fisheye_focal);
    fe.model = fisheye_model;
    return fe;
}

void GeneratorConfig::validate() const {
    if (classes < 2) throw InputError("generate: need K >= 2 classes, got " + std::to_string(classes));
    if (subjects < 2) throw InputError("generate: need S >= 2 subjects, got " + std::to_string(subjects));
    if (clips_per_subject < 1) throw InputError("generate: clips_per_subject must be >= 1");
    if (frames < 1) throw InputError("generate: frames must be >= 1");
    if (height < 8 || width < 8) throw ConfigError("generate: frames must be at least 8x8 pixels");
    flat_intrinsics().validate();
    fisheye_intrinsics().validate();
    if (fisheye_model == optics::ProjectionModel::rectilinear)
        throw ConfigError("generate: fisheye twin needs a non-rectilinear projection model");
}

Clip render_flat_clip(const GeneratorConfig& cfg, int subject_id, int label, int instance_id) {
    const Appearance a = subject_appearance(cfg.seed, subject_id);
    std::mt19937_64 rng(stream_seed(cfg.seed, kClipStream, static_cast<std::uint64_t>(instance_id)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.02);

    // Class template: direction index x speed tier.
    const int directions = (cfg.classes + 1) / 2;
    const int dir = label % directions;
    const int tier = label / directions;
    const double angle = 2.0 * std::numbers::pi * dir / directions + 0.3 * (u(rng) - 0.5);
    const double speed = (0.9 + 0.8 * tier) * (0.92 + 0.16 * u(rng));
    const double mid_r = 8.0 * std::sqrt(u(rng));
    const double mid_phi = 2.0 * std::numbers::pi * u(rng);
    const double cx = (cfg.width - 1) / 2.0 + mid_r * std::cos(mid_phi);
    const double cy = (cfg.height - 1) / 2.0 + mid_r * std::sin(mid_phi);
    const double vx = speed * std::cos(angle);
    const double vy = speed * std::sin(angle);
    const double sa = std::sin(a.stripe_angle), ca = std::cos(a.stripe_angle);

    constexpr int kSuper = 4;
    Clip clip;
    clip.frames = Tensor4<float>(Dims4{cfg.frames, 1, cfg.height, cfg.width});
    clip.label = label;
    clip.subject_id = subject_id;
    clip.instance_id = instance_id;
    clip.modality = Modality::flat;
    for (int t = 0; t < cfg.frames; ++t) {
        const double dt = t - (cfg.frames - 1) / 2.0;
        const double sx = cx + dt * vx;
        const double sy = cy + dt * vy;
        float* px = clip.frames.slice(t, 0);
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x) {
                double v = a.background;
                if (std::abs(x - sx) <= a.radius + 1.0 && std::abs(y - sy) <= a.radius + 1.0) {
                    double acc = 0.0;
                    for (int j = 0; j < kSuper; ++j)
                        for (int i = 0; i < kSuper; ++i) {
                            const double ox = x - 0.5 + (i + 0.5) / kSuper - sx;
                            const double oy = y - 0.5 + (j + 0.5) / kSuper - sy;
                            if (ox * ox + oy * oy > a.radius * a.radius) {
                                acc += a.background;
                                continue;
                            }
                            acc += a.base + 0.25 * std::sin(a.stripe_freq * (ox * ca + oy * sa));
                        }
                    v = acc / (kSuper * kSuper);
                }
                v += noise(rng);
                px[y * cfg.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    }
    return clip;
}

Clip make_fisheye_twin(const Clip& flat, const optics::PinholeIntrinsics& pin, const optics::FisheyeIntrinsics& fe) {
    const Dims4& d = flat.frames.dims();
    Clip out = flat;
    out.modality = Modality::fisheye;
    out.frames = Tensor4<float>(Dims4{d.d, d.c, fe.height, fe.width});
    const std::size_t in_frame = static_cast<std::size_t>(d.c) * d.plane();
    const std::size_t out_frame = static_cast<std::size_t>(d.c) * fe.height * fe.width;
    for (int t = 0; t < d.d; ++t) {
        Tensor4<float> frame(Dims4{1, d.c, d.h, d.w},
                             std::vector<float>(flat.frames.data() + t * in_frame, flat.frames.data() + (t + 1) * in_frame));
        const auto warped = optics::warp_frame(frame, optics::WarpDirection::flat_to_fisheye, pin, fe);
        std::copy_n(warped.data(), out_frame, out.frames.data() + t * out_frame);
    }
    return out;
}

const ClipRecord& DatasetManifest::record(int instance_id, Modality modality) const {
    for (const auto& r : records)
        if (r.instance_id == instance_id && r.modality == modality) return r;
    throw InputError("dataset has no " + std::string(to_string(modality)) + " clip with id " + std::to_string(instance_id));
}

std::vector<int> DatasetManifest::instance_ids() const {
    std::vector<int> ids;
    for (const auto& r : records)
        if (r.modality == Modality::flat) ids.push_back(r.instance_id);
    return ids;
}

DatasetManifest generate(const GeneratorConfig& cfg, const std::filesystem::path& root) {
    cfg.validate();
    DatasetManifest m;
    m.seed = cfg.seed;
    m.classes = cfg.classes;
    m.frames = cfg.frames;
    m.channels = 1;
    m.height = cfg.height;
    m.width = cfg.width;
    m.flat = cfg.flat_intrinsics();
    m.fisheye = cfg.fisheye_intrinsics();
    m.root = root;
    std::filesystem::create_directories(root / "flat");
    std::filesystem::create_directories(root / "fisheye");

    int instance = 0;
    for (int s = 0; s < cfg.subjects; ++s) {
        m.subjects.push_back(s);
        for (int i = 0; i < cfg.clips_per_subject; ++i, ++instance) {
            const int label = instance % cfg.classes;
            const Clip flat = render_flat_clip(cfg, s, label, instance);
            const Clip fish = make_fisheye_twin(flat, m.flat, m.fisheye);
            for (const Clip* c : {&flat, &fish}) {
                ClipRecord r{instance, s, label, c->modality, blob_name(c->modality, instance)};
                const auto blob = io::to_blob(c->frames);
                io::write_blob(root / r.path, blob.shape, blob.data);
                m.records.push_back(std::move(r));
            }
        }
    }
    write_manifest(m, root / "manifest.json");
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    json j;
    j["format"] = "gti3d-synthetic-dataset";
    j["version"] = 1;
    j["seed"] = m.seed;
    j["classes"] = m.classes;
    j["subjects"] = m.subjects;
    j["frames"] = m.frames;
    j["channels"] = m.channels;
    j["height"] = m.height;
    j["width"] = m.width;
    j["intrinsics"] = {{"flat", pinhole_json(m.flat)}, {"fisheye", fisheye_json(m.fisheye)}};
    json recs = json::array();
    for (const auto& r : m.records)
        recs.push_back({{"instance", r.instance_id}, {"subject", r.subject_id}, {"label", r.label},
                        {"modality", to_string(r.modality)}, {"path", r.path}});
    j["records"] = std::move(recs);
    io::write_file(path, j.dump(1) + "\n");
}

DatasetManifest read_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.json";
    DatasetManifest m;
    try {
        const json j = json::parse(io::read_file(path));
        if (j.at("format") != "gti3d-synthetic-dataset" || j.at("version") != 1)
            throw CorruptData(path.string() + ": unrecognized manifest format");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.classes = j.at("classes").get<int>();
        m.subjects = j.at("subjects").get<std::vector<int>>();
        m.frames = j.at("frames").get<int>();
        m.channels = j.at("channels").get<int>();
        m.height = j.at("height").get<int>();
        m.width = j.at("width").get<int>();
        const auto& fl = j.at("intrinsics").at("flat");
        m.flat = {fl.at("focal").get<double>(), fl.at("center_x").get<double>(), fl.at("center_y").get<double>(),
                  fl.at("width").get<int>(), fl.at("height").get<int>()};
        const auto& fe = j.at("intrinsics").at("fisheye");
        m.fisheye.focal = fe.at("focal").get<double>();
        m.fisheye.center_x = fe.at("center_x").get<double>();
        m.fisheye.center_y = fe.at("center_y").get<double>();
        m.fisheye.fov = fe.at("fov").get<double>();
        m.fisheye.width = fe.at("width").get<int>();
        m.fisheye.height = fe.at("height").get<int>();
        m.fisheye.model = optics::parse_projection_model(fe.at("model").get<std::string>());
        for (const auto& r : j.at("records"))
            m.records.push_back({r.at("instance").get<int>(), r.at("subject").get<int>(), r.at("label").get<int>(),
                                 parse_modality(r.at("modality").get<std::string>()), r.at("path").get<std::string>()});
    } catch (const json::exception& e) {
        throw CorruptData(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw CorruptData(path.string() + ": " + e.what());
    }
    m.root = root;

    if (m.classes < 2 || m.frames < 1 || m.channels < 1 || m.height < 1 || m.width < 1)
        throw CorruptData(path.string() + ": invalid dataset dimensions");
    const std::set<int> subjects(m.subjects.begin(), m.subjects.end());
    std::map<int, const ClipRecord*> flats, fishes;
    std::vector<int> per_class(static_cast<std::size_t>(m.classes), 0);
    for (const auto& r : m.records) {
        if (r.label < 0 || r.label >= m.classes)
            throw CorruptData(path.string() + ": label out of range for clip " + std::to_string(r.instance_id));
        if (!subjects.count(r.subject_id))
            throw CorruptData(path.string() + ": unknown subject for clip " + std::to_string(r.instance_id));
        auto& slot = r.modality == Modality::flat ? flats : fishes;
        if (!slot.emplace(r.instance_id, &r).second)
            throw CorruptData(path.string() + ": duplicate record for clip " + std::to_string(r.instance_id));
        if (r.modality == Modality::flat) ++per_class[r.label];
    }
    for (const auto& [id, fr] : fishes) {
        auto it = flats.find(id);
        if (it == flats.end()) throw CorruptData(path.string() + ": fisheye clip " + std::to_string(id) + " has no flat twin");
        if (it->second->label != fr->label || it->second->subject_id != fr->subject_id)
            throw CorruptData(path.string() + ": flat/fisheye twins disagree for clip " + std::to_string(id));
    }
    const auto [lo, hi] = std::minmax_element(per_class.begin(), per_class.end());
    if (*hi - *lo > 1) throw CorruptData(path.string() + ": class counts are not balanced within one clip");
    return m;
}

SplitSpec split_cross_subject(const DatasetManifest& m, int train_subject_count, std::uint64_t seed) {
    const int s = static_cast<int>(m.subjects.size());
    if (train_subject_count < 1 || train_subject_count >= s)
        throw InputError("split: train subject count " + std::to_string(train_subject_count) + " must lie in [1, " +
                         std::to_string(s) + ")");
    std::vector<int> order = m.subjects;
    std::sort(order.begin(), order.end());
    std::mt19937_64 rng(stream_seed(seed, kSplitStream, 0));
    // Fisher-Yates with an explicit draw so the partition does not depend on
    // the standard library's shuffle.
    for (int i = s - 1; i > 0; --i) {
        const int k = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[i], order[k]);
    }
    SplitSpec sp;
    sp.seed = seed;
    sp.train_subjects.assign(order.begin(), order.begin() + train_subject_count);
    sp.test_subjects.assign(order.begin() + train_subject_count, order.end());
    std::sort(sp.train_subjects.begin(), sp.train_subjects.end());
    std::sort(sp.test_subjects.begin(), sp.test_subjects.end());
    const std::set<int> train(sp.train_subjects.begin(), sp.train_subjects.end());
    for (const auto& r : m.records) {
        if (r.modality != Modality::flat) continue;
        (train.count(r.subject_id) ? sp.train_ids : sp.test_ids).push_back(r.instance_id);
    }
    return sp;
}

void write_split(const SplitSpec& s, const std::filesystem::path& path) {
    json j{{"seed", s.seed},
           {"train_subjects", s.train_subjects},
           {"test_subjects", s.test_subjects},
           {"train", s.train_ids},
           {"test", s.test_ids}};
    io::write_file(path, j.dump(1) + "\n");
}

SplitSpec read_split(const std::filesystem::path& path) {
    try {
        const json j = json::parse(io::read_file(path));
        SplitSpec s;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.train_subjects = j.at("train_subjects").get<std::vector<int>>();
        s.test_subjects = j.at("test_subjects").get<std::vector<int>>();
        s.train_ids = j.at("train").get<std::vector<int>>();
        s.test_ids = j.at("test").get<std::vector<int>>();
        return s;
    } catch (const json::exception& e) {
        throw CorruptData(path.string() + ": " + e.what());
    }
}

Clip load_clip(const DatasetManifest& m, int instance_id, Modality modality) {
    const ClipRecord& r = m.record(instance_id, modality);
    const auto path = m.root / r.path;
    const io::Blob blob = io::read_blob(path);
    const int h = modality == Modality::flat ? m.flat.height : m.fisheye.height;
    const int w = modality == Modality::flat ? m.flat.width : m.fisheye.width;
    const std::vector<std::uint32_t> expected{static_cast<std::uint32_t>(m.frames), static_cast<std::uint32_t>(m.channels),
                                              static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
    if (blob.shape != expected) throw CorruptData(path.string() + ": header dims disagree with the manifest");
    for (float v : blob.data)
        if (!(v >= 0.0f && v <= 1.0f))
            throw ContractViolation(path.string() + ": pixel value " + std::to_string(v) + " outside [0, 1]");
    Clip c;
    c.frames = io::to_tensor<float>(blob, path.string());
    c.label = r.label;
    c.subject_id = r.subject_id;
    c.instance_id = r.instance_id;
    c.modality = modality;
    return c;
}

std::vector<Clip> load_clips(const DatasetManifest& m, const std::vector<int>& ids, Modality modality) {
    std::vector<Clip> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(load_clip(m, id, modality));
    return out;
}

} // namespace gti3d::data
