#include "gti3d/commands.hpp"

#include <chrono>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "gti3d/blob_io.hpp"
#include "gti3d/checkpoint.hpp"
#include "gti3d/errors.hpp"
#include "gti3d/fisheye_optics.hpp"
#include "gti3d/pgm.hpp"
#include "gti3d/trainer.hpp"

namespace gti3d::harness {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointName = "checkpoint.gti3d";

fs::path out_dir(const RunConfig& cfg) {
    const fs::path p = cfg.get("run.out");
    if (p.empty()) throw ConfigError("run.out must name a directory");
    fs::create_directories(p);
    return p;
}

void write_echo(const RunConfig& cfg, const fs::path& dir) { io::write_file(dir / "config.echo", cfg.echo()); }

bool double_precision(const RunConfig& cfg) {
    const std::string& p = cfg.get("run.precision");
    if (p == "f32") return false;
    if (p == "f64") return true;
    throw ConfigError("run.precision must be f32 or f64, got '" + p + "'");
}

struct Dataset {
    data::DatasetManifest manifest;
    data::SplitSpec split;
};

Dataset load_dataset(const RunConfig& cfg) {
    const fs::path root = cfg.get("data.root");
    if (!fs::exists(root / "manifest.json"))
        throw InputError("no dataset at '" + root.string() + "' (run gen-data first)");
    Dataset d{data::read_manifest(root), data::read_split(root / "split.json")};
    return d;
}

const std::vector<int>& split_ids(const Dataset& d, const std::string& split) {
    if (split == "train") return d.split.train_ids;
    if (split == "test") return d.split.test_ids;
    throw ConfigError("eval.split must be train or test, got '" + split + "'");
}

model::NetworkSpec network_spec(const RunConfig& cfg, const data::DatasetManifest& m) {
    model::NetworkSpec s;
    s.classes = m.classes;
    s.frames = cfg.get_int("train.frames");
    s.channels = m.channels;
    s.height = m.height;
    s.width = m.width;
    s.input_gain = cfg.get_double("model.input_gain");
    s.stem_channels = cfg.get_int("model.stem_channels");
    s.block_channels = cfg.get_int_list("model.block_channels");
    s.family = gt::parse_family(cfg.get("model.family"));
    s.loc_hidden = cfg.get_int("model.loc_hidden");
    s.loc_mode = gt::parse_locnet_mode(cfg.get("model.loc_mode"));
    s.validate();
    if (s.frames > m.frames)
        throw ConfigError("train.frames = " + std::to_string(s.frames) + " exceeds the " + std::to_string(m.frames) +
                          " frames stored per clip");
    return s;
}

train::TrainConfig train_config(const RunConfig& cfg) {
    train::TrainConfig t;
    t.iterations = cfg.get_int("train.iterations");
    t.batch = cfg.get_int("train.batch");
    t.learning_rate = cfg.get_double("train.learning_rate");
    t.schedule = train::parse_lr_schedule(cfg.get("train.lr_schedule"));
    t.gt_lr_scale = cfg.get_double("train.gt_lr_scale");
    t.frames = cfg.get_int("train.frames");
    t.random_phase = cfg.get_bool("train.random_phase");
    t.seed = cfg.get_u64("run.seed");
    t.validate();
    return t;
}

template <typename T>
AccuracyRow count_correct(const std::vector<Clip>& clips, const model::StreamWeights<T>& w,
                          const model::NetworkSpec& spec, const std::string& split) {
    if (clips.empty()) throw InputError("accuracy: split '" + split + "' is empty");
    AccuracyRow row{split, 0, clips.size()};
    for (const Clip& c : clips) {
        const Clip s = train::sample_frames(c, spec.frames);
        const int pred = c.modality == Modality::flat ? model::argmax<T>(model::rgb_forward(s, w, spec).logits)
                                                      : model::infer(s, w, spec);
        if (pred == c.label) ++row.correct;
    }
    return row;
}

std::vector<train::PairedClip> paired(const data::DatasetManifest& m, const std::vector<int>& ids) {
    std::vector<train::PairedClip> out;
    out.reserve(ids.size());
    for (int id : ids)
        out.push_back({data::load_clip(m, id, Modality::flat), data::load_clip(m, id, Modality::fisheye)});
    return out;
}

// Saves, reloads and scores the checkpoint so the reported accuracies are the
// ones any later eval of the file reproduces.
template <typename T>
TrainRun finish_run(const RunConfig& cfg, const fs::path& dir, const model::StreamWeights<T>& w,
                    const CheckpointInfo& info, const std::vector<train::CurveRow>& curve, const Dataset& d,
                    Modality modality, std::ostream& log) {
    TrainRun run{dir / kCheckpointName, dir / "metrics.csv", {}};
    save_checkpoint(run.checkpoint, w, info);
    const auto loaded = load_checkpoint<T>(run.checkpoint);
    for (const std::string split : {"train", "test"}) {
        run.accuracy.push_back(
            count_correct(data::load_clips(d.manifest, split_ids(d, split), modality), loaded.weights, w.spec, split));
        log << "  " << split << " accuracy " << run.accuracy.back().correct << "/" << run.accuracy.back().total << " = "
            << run.accuracy.back().accuracy() << '\n';
    }
    io::write_file(run.metrics, metrics_csv(curve, w.spec.taps(), run.accuracy, cfg.get_u64("run.seed")));
    return run;
}

template <typename T>
TrainRun pretrain(const RunConfig& cfg, std::ostream& log) {
    const fs::path dir = out_dir(cfg);
    write_echo(cfg, dir);
    const Dataset d = load_dataset(cfg);
    const auto spec = network_spec(cfg, d.manifest);
    const auto tc = train_config(cfg);
    log << "pretrain-rgb: " << d.split.train_ids.size() << " train clips, " << tc.iterations << " iterations\n";
    const auto train_clips = data::load_clips(d.manifest, d.split.train_ids, Modality::flat);
    auto res = train::pretrain_rgb<T>(train_clips, {}, spec, tc);
    CheckpointInfo info{"rgb", "none", tc.seed, tc.iterations, cfg.get("run.precision"), spec, false};
    return finish_run(cfg, dir, res.weights, info, res.curve, d, Modality::flat, log);
}

template <typename T>
TrainRun train_fish(const RunConfig& cfg, std::ostream& log) {
    const auto ablation = model::parse_ablation(cfg.get("run.ablation"));
    const std::string rgb_path = cfg.get("train.rgb_checkpoint");
    if (model::uses_guidance(ablation) && rgb_path.empty())
        throw ConfigError(std::string("train-fisheye: ablation ") + model::to_string(ablation) +
                          " needs an RGB checkpoint (--rgb)");
    const fs::path dir = out_dir(cfg);
    write_echo(cfg, dir);
    const Dataset d = load_dataset(cfg);
    const auto spec = network_spec(cfg, d.manifest);
    const auto tc = train_config(cfg);

    std::optional<LoadedCheckpoint<T>> rgb;
    if (model::uses_guidance(ablation)) {
        rgb = load_checkpoint<T>(rgb_path);
        if (rgb->info.stream != "rgb" || rgb->weights.has_gt)
            throw ConfigError("train-fisheye: '" + rgb_path + "' is not an RGB stream checkpoint");
        if (rgb->weights.spec.tap_dims() != spec.tap_dims() || rgb->weights.spec.classes != spec.classes)
            throw ConfigError("train-fisheye: RGB checkpoint topology differs from the fisheye stream");
    }
    log << "train-fisheye (" << model::to_string(ablation) << "): " << d.split.train_ids.size() << " pairs, "
        << tc.iterations << " iterations\n";
    const auto pairs = paired(d.manifest, d.split.train_ids);
    auto res = train::train_fisheye<T>(pairs, rgb ? &rgb->weights : nullptr, spec, tc, ablation);
    CheckpointInfo info{"fisheye", model::to_string(ablation), tc.seed, tc.iterations, cfg.get("run.precision"),
                        spec, model::uses_gt(ablation)};
    return finish_run(cfg, dir, res.weights, info, res.curve, d, Modality::fisheye, log);
}

template <typename T>
AccuracyRow evaluate(const RunConfig& cfg, std::ostream& log) {
    const std::string ckpt = cfg.get("eval.checkpoint");
    if (ckpt.empty()) throw ConfigError("eval: eval.checkpoint (--checkpoint) is required");
    const auto loaded = load_checkpoint<T>(ckpt);
    const Dataset d = load_dataset(cfg);
    const std::string split = cfg.get("eval.split");
    const Modality modality = loaded.info.stream == "rgb" ? Modality::flat : Modality::fisheye;
    const auto clips = data::load_clips(d.manifest, split_ids(d, split), modality);
    const AccuracyRow row = count_correct(clips, loaded.weights, loaded.weights.spec, split);
    log << "eval " << ckpt << " on " << split << " (" << to_string(modality) << "): " << row.correct << "/"
        << row.total << " = " << format_double(row.accuracy()) << '\n';
    return row;
}

} // namespace

double TrainRun::test_accuracy() const {
    for (const auto& a : accuracy)
        if (a.split == "test") return a.accuracy();
    return 0.0;
}

data::DatasetManifest cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
    const fs::path root = cfg.get("run.out");
    if (root.empty()) throw ConfigError("run.out must name a directory");
    data::GeneratorConfig g;
    g.seed = cfg.get_u64("run.seed");
    g.classes = cfg.get_int("data.classes");
    g.subjects = cfg.get_int("data.subjects");
    g.clips_per_subject = cfg.get_int("data.clips_per_subject");
    g.frames = cfg.get_int("data.frames");
    g.height = cfg.get_int("data.height");
    g.width = cfg.get_int("data.width");
    g.fisheye_focal = cfg.get_double("data.fisheye_focal");
    g.fisheye_model = optics::parse_projection_model(cfg.get("data.fisheye_model"));
    g.validate();
    const int train_subjects = cfg.get_int("data.train_subjects");
    if (train_subjects < 1 || train_subjects >= g.subjects)
        throw InputError("gen-data: data.train_subjects must lie in [1, " + std::to_string(g.subjects) + ")");

    if (fs::exists(root) && !fs::is_empty(root)) {
        if (!cfg.get_bool("run.force"))
            throw InputError("gen-data: output directory '" + root.string() + "' is not empty (use --force)");
        // Only our own artifacts are removed.
        for (const char* name : {"manifest.json", "split.json", "config.echo", "flat", "fisheye"})
            fs::remove_all(root / name);
    }
    log << "gen-data: K=" << g.classes << " S=" << g.subjects << " clips/subject=" << g.clips_per_subject << " -> "
        << root.string() << '\n';
    auto m = data::generate(g, root);
    const auto split = data::split_cross_subject(m, train_subjects, g.seed);
    data::write_split(split, root / "split.json");
    write_echo(cfg, root);
    log << "  " << m.records.size() / 2 << " instances, " << split.train_ids.size() << " train / "
        << split.test_ids.size() << " test\n";
    return m;
}

TrainRun cmd_pretrain_rgb(const RunConfig& cfg, std::ostream& log) {
    return double_precision(cfg) ? pretrain<double>(cfg, log) : pretrain<float>(cfg, log);
}

TrainRun cmd_train_fisheye(const RunConfig& cfg, std::ostream& log) {
    return double_precision(cfg) ? train_fish<double>(cfg, log) : train_fish<float>(cfg, log);
}

AccuracyRow cmd_eval(const RunConfig& cfg, std::ostream& log) {
    const AccuracyRow row = double_precision(cfg) ? evaluate<double>(cfg, log) : evaluate<float>(cfg, log);
    const fs::path dir = out_dir(cfg);
    write_echo(cfg, dir);
    io::write_file(dir / "eval.csv", "checkpoint,split,correct,total,accuracy\n" + cfg.get("eval.checkpoint") + "," +
                                         row.split + "," + std::to_string(row.correct) + "," +
                                         std::to_string(row.total) + "," + format_double(row.accuracy()) + "\n");
    return row;
}

double AblationTable::mean(std::size_t row) const {
    const auto& v = accuracy.at(row);
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double AblationTable::mean(const std::string& row) const {
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i] == row) return mean(i);
    throw ConfigError("ablation table has no row '" + row + "'");
}

AblationTable cmd_ablation_suite(const RunConfig& cfg, std::ostream& log) {
    const fs::path dir = out_dir(cfg);
    write_echo(cfg, dir);
    const int repeats = cfg.get_int("ablation.repeats");
    if (repeats < 1) throw ConfigError("ablation.repeats must be >= 1");
    const std::uint64_t first = cfg.get_u64("run.seed");
    const model::Ablation ablations[] = {model::Ablation::plain, model::Ablation::guidance_only,
                                         model::Ablation::transformer_only, model::Ablation::full};

    AblationTable table;
    for (auto a : ablations) table.rows.emplace_back(model::to_string(a));
    table.rows.emplace_back("rgb_flat");
    table.accuracy.assign(table.rows.size(), {});
    std::ostringstream timing;
    timing << "seed,run,seconds\n";
    const auto t0 = std::chrono::steady_clock::now();
    auto stamp = [&](std::uint64_t seed, const std::string& run, std::chrono::steady_clock::time_point since) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
        timing << seed << ',' << run << ',' << std::fixed << std::setprecision(2) << s << '\n';
    };

    for (int r = 0; r < repeats; ++r) {
        const std::uint64_t seed = first + static_cast<std::uint64_t>(r);
        table.seeds.push_back(seed);
        const fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
        RunConfig sub = cfg;
        sub.set("run.seed", std::to_string(seed));

        auto t = std::chrono::steady_clock::now();
        sub.set("run.out", (seed_dir / "rgb").string());
        const TrainRun rgb = cmd_pretrain_rgb(sub, log);
        table.accuracy.back().push_back(rgb.test_accuracy());
        stamp(seed, "rgb_flat", t);

        sub.set("train.rgb_checkpoint", rgb.checkpoint.string());
        for (std::size_t i = 0; i < std::size(ablations); ++i) {
            t = std::chrono::steady_clock::now();
            sub.set("run.ablation", model::to_string(ablations[i]));
            sub.set("run.out", (seed_dir / model::to_string(ablations[i])).string());
            table.accuracy[i].push_back(cmd_train_fisheye(sub, log).test_accuracy());
            stamp(seed, model::to_string(ablations[i]), t);
        }
    }
    stamp(0, "total", t0);

    std::ostringstream csv;
    csv << "ablation";
    for (auto s : table.seeds) csv << ",seed_" << s;
    csv << ",mean\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        csv << table.rows[i];
        for (double a : table.accuracy[i]) csv << ',' << format_double(a);
        csv << ',' << format_double(table.mean(i)) << '\n';
    }
    io::write_file(dir / "ablation.csv", csv.str());
    io::write_file(dir / "timing.csv", timing.str());
    log << csv.str();
    return table;
}

std::vector<diff::OpCheckResult> cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
    diff::SuiteOptions o;
    o.tolerance = cfg.get_double("gradcheck.tolerance");
    o.seed = static_cast<unsigned>(cfg.get_u64("run.seed"));
    o.corrupt = cfg.get("gradcheck.corrupt");
    const auto results = diff::run_gradcheck_suite(o);
    for (const auto& r : results)
        log << std::left << std::setw(16) << r.op << " max_rel_err " << std::scientific << std::setprecision(3)
            << r.max_relative_error << std::defaultfloat << "  (" << r.checked << " coords)  "
            << (r.passed ? "PASS" : "FAIL") << '\n';
    return results;
}

WarpDemo cmd_warp_demo(const RunConfig& cfg, std::ostream& log) {
    const fs::path dir = out_dir(cfg);
    const std::string image = cfg.get("warp.image");
    Tensor4<float> input = image.empty()
                               ? optics::make_checkerboard(cfg.get_int("warp.height"), cfg.get_int("warp.width"),
                                                           cfg.get_int("warp.square"))
                               : read_pgm(image);
    const int h = input.dims().h, w = input.dims().w;
    const auto pin = optics::PinholeIntrinsics::centered(w, h);
    auto fe = optics::FisheyeIntrinsics::centered(w, h, cfg.get_double("warp.fisheye_focal"));
    fe.fov = cfg.get_double("warp.fov");
    fe.model = optics::parse_projection_model(cfg.get("warp.model"));
    if (fe.model == optics::ProjectionModel::rectilinear)
        throw InputError("warp-demo: a rectilinear 'fisheye' is the pinhole itself; choose equidistant or equisolid");
    fe.validate();
    const double interior = cfg.get_double("warp.interior");
    if (!(interior > 0.0 && interior <= 1.0)) throw ConfigError("warp.interior must lie in (0, 1]");
    write_echo(cfg, dir);

    const auto fish = optics::warp_frame(input, optics::WarpDirection::flat_to_fisheye, pin, fe, 0.0f);
    const auto back = optics::warp_frame(fish, optics::WarpDirection::fisheye_to_flat, pin, fe, 0.0f);
    WarpDemo demo{optics::psnr(input, back, optics::interior_mask(pin, interior)), dir / "input.pgm",
                  dir / "fisheye.pgm", dir / "rectified.pgm"};
    write_pgm(demo.input, input);
    write_pgm(demo.fisheye, fish);
    write_pgm(demo.rectified, back);
    io::write_file(dir / "warp.csv", "width,height,fisheye_focal,fov,model,interior,psnr_db\n" + std::to_string(w) + "," +
                                         std::to_string(h) + "," + format_double(fe.focal) + "," +
                                         format_double(fe.fov) + "," + optics::to_string(fe.model) + "," +
                                         format_double(interior) + "," + format_double(demo.psnr) + "\n");
    log << "warp-demo: " << w << "x" << h << " " << optics::to_string(fe.model) << " f=" << fe.focal
        << ", round-trip interior PSNR " << std::fixed << std::setprecision(2) << demo.psnr << " dB\n"
        << std::defaultfloat;
    return demo;
}

} // namespace gti3d::harness
