// Acceptance gate: prints one [PASS]/[FAIL] line per criterion and exits
// nonzero when any criterion fails. Runs the full desk-scale experiment
// (default dataset, three-seed ablation suite) under --work.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gti3d/blob_io.hpp"
#include "gti3d/commands.hpp"
#include "gti3d/errors.hpp"
#include "gti3d/fisheye_optics.hpp"
#include "gti3d/gt_module.hpp"
#include "gti3d/metrics.hpp"
#include "gti3d/model.hpp"
#include "gti3d/ops.hpp"

using namespace gti3d;
using namespace gti3d::harness;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;
std::vector<int> only;  // empty: every criterion

bool selected(int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); }

void report(int id, const std::string& what, const Outcome& o) {
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << what << " -- " << o.detail << std::endl;
    if (!o.pass) ++failures;
}

// Runs a criterion body, turning an unexpected exception into a failure.
void run(int id, const std::string& what, const std::function<Outcome()>& body) {
    if (!selected(id)) return;
    try {
        report(id, what, body());
    } catch (const std::exception& e) {
        report(id, what, {false, std::string("exception: ") + e.what()});
    }
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) { return io::read_file(a) == io::read_file(b); }

// Every regular file under `a` has a byte-identical twin under `b`, and vice versa.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
    std::vector<fs::path> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) {
        why = "file lists differ";
        return false;
    }
    for (const auto& f : fa) {
        if (!same_bytes(a / f, b / f)) {
            why = f.string() + " differs";
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- 1
Outcome gradient_suite(std::ostream& log) {
    RunConfig cfg;
    const auto t0 = Clock::now();
    const auto results = cmd_gradcheck(cfg, log);
    const double secs = seconds_since(t0);
    double worst = 0.0;
    std::string failed;
    for (const auto& r : results) {
        worst = std::max(worst, r.max_relative_error);
        if (!r.passed) failed += " " + r.op;
    }
    const bool ok = failed.empty() && results.size() == 11 && secs <= 120.0;
    return {ok, std::to_string(results.size()) + " ops, worst rel err " + fmt(worst) + ", " + fmt(secs, 3) + " s" +
                    (failed.empty() ? "" : ", failed:" + failed)};
}

// ---------------------------------------------------------------- 2
Outcome identity_and_shapes() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::string why;

    // Fresh GT-Module: identity within 1e-6 for every family and localization mode.
    double worst_identity = 0.0;
    for (auto fam : {gt::TransformFamily::affine, gt::TransformFamily::projective, gt::TransformFamily::radial})
        for (auto mode : {gt::LocNetMode::temporal, gt::LocNetMode::per_frame, gt::LocNetMode::pooled}) {
            diff::ParamStore<float> store;
            std::mt19937_64 init(7);
            const auto w = gt::register_locnet(store, "gt", gt::LocNetConfig{3, 4, mode, fam}, init);
            Tensor4<float> f(Dims4{4, 3, 9, 13});
            for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(u(rng));
            const auto y = gt::gt_forward(f, store, w);
            for (std::size_t i = 0; i < f.size(); ++i)
                worst_identity = std::max(worst_identity, static_cast<double>(std::abs(y[i] - f[i])));
        }

    // Tap dims: f^R == f^F == f^T at every insertion point, for randomized specs.
    int specs_checked = 0;
    bool dims_ok = true;
    std::uniform_int_distribution<int> hw(24, 40), fr(2, 6), ch(1, 3), bc(1, 6), stride(1, 2);
    for (int j = 1; j <= 3; ++j)
        for (int trial = 0; trial < 4; ++trial) {
            model::NetworkSpec s;
            s.classes = 3;
            s.frames = fr(rng);
            s.channels = ch(rng);
            s.height = hw(rng);
            s.width = hw(rng);
            s.stem_channels = bc(rng);
            s.stem_stride = stride(rng);
            s.block_channels.clear();
            for (int k = 0; k < j; ++k) s.block_channels.push_back(bc(rng));
            const auto expected = s.tap_dims();
            const auto rgb = model::init_stream<float>(s, false, 1);
            const auto fish = model::init_stream<float>(s, true, 2);
            Tensor4<float> x(s.input_dims());
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(0.5 + 0.5 * u(rng));
            const auto tr = model::stream_forward(rgb, x, false);
            const auto tf = model::stream_forward(fish, x, true);
            for (int k = 0; k < j; ++k) {
                const Dims4 r = tr.taps[k].dims(), f = tf.gt[k].input.dims(), t = tf.taps[k].dims();
                if (!(r == f && f == t && t == expected[k])) {
                    dims_ok = false;
                    why = "spec J=" + std::to_string(j) + " tap " + std::to_string(k + 1) + ": " + r.str() + " / " +
                          f.str() + " / " + t.str();
                }
            }
            ++specs_checked;
        }

    // Channel consistency: channels that are power-of-two multiples of one another
    // stay exact multiples after sampling with one grid per frame.
    bool channels_ok = true;
    {
        Tensor4<double> f(Dims4{3, 3, 10, 10});
        for (int d = 0; d < 3; ++d)
            for (int i = 0; i < 100; ++i) {
                const double v = u(rng);
                for (int c = 0; c < 3; ++c) f.slice(d, c)[i] = std::ldexp(v, c);
            }
        gt::TransformParams<double> p{gt::TransformFamily::radial, 3, {}};
        for (int d = 0; d < 3; ++d)
            for (double v : {0.9, 0.1 * d, 0.05, -0.1, 1.1, 0.02 * d, 0.2, -0.05}) p.values.push_back(v);
        const auto y = gt::sample(f, gt::generate_grid(p, 10, 10));
        for (int d = 0; d < 3; ++d)
            for (int c = 1; c < 3; ++c)
                for (int i = 0; i < 100; ++i)
                    channels_ok = channels_ok && y.slice(d, c)[i] == std::ldexp(y.slice(d, 0)[i], c);
    }

    const bool ok = worst_identity <= 1e-6 && dims_ok && channels_ok;
    return {ok, "identity max dev " + fmt(worst_identity) + ", " + std::to_string(specs_checked) +
                    " random specs tap dims " + (dims_ok ? "equal" : "DIFFER (" + why + ")") +
                    ", channel multiples " + (channels_ok ? "exact" : "NOT exact")};
}

// ---------------------------------------------------------------- 3
Outcome kl_properties(const fs::path& suite_dir) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> temp(0.1, 10.0);
    auto random_distribution = [&]() {
        Tensor4<double> logits(Dims4{2, 2, 4, 4});
        const double t = temp(rng);
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = t * (2.0 * u(rng) - 1.0);
        return diff::spatial_softmax(logits);
    };
    double worst_self = 0.0, min_kl = INFINITY;
    for (int i = 0; i < 1000; ++i) {
        const auto p = random_distribution();
        const auto q = random_distribution();
        worst_self = std::max(worst_self, std::abs(diff::kl_divergence(p, p)));
        min_kl = std::min(min_kl, diff::kl_divergence(p, q));
    }

    // L == L_G + L_C on every logged iteration of every run in the suite.
    std::size_t rows = 0, files = 0;
    double worst_sum = 0.0;
    for (const auto& e : fs::recursive_directory_iterator(suite_dir)) {
        if (e.path().filename() != "metrics.csv") continue;
        ++files;
        for (const auto& r : read_csv(e.path()).records()) {
            if (r.at("kind") != "iter") continue;
            ++rows;
            const double lg = std::stod(r.at("L_G")), lc = std::stod(r.at("L_C")), l = std::stod(r.at("L"));
            worst_sum = std::max(worst_sum, std::abs(l - (lg + lc)));
        }
    }
    const bool ok = worst_self <= 1e-9 && min_kl >= -1e-9 && worst_sum <= 1e-9 && rows > 0;
    return {ok, "max KL(p,p) " + fmt(worst_self) + ", min KL over 1000 pairs " + fmt(min_kl) + ", max |L-(L_G+L_C)| " +
                    fmt(worst_sum) + " over " + std::to_string(rows) + " rows in " + std::to_string(files) + " files"};
}

// ---------------------------------------------------------------- 4
Outcome fisheye_optics(const fs::path& work, std::ostream& log) {
    const auto t0 = Clock::now();
    const auto pin = optics::PinholeIntrinsics::centered(32, 32);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 31.0);
    double worst = 0.0;
    for (auto model : {optics::ProjectionModel::equidistant, optics::ProjectionModel::equisolid}) {
        auto fe = optics::FisheyeIntrinsics::centered(32, 32, 12.0);
        fe.model = model;
        for (int i = 0; i < 10000; ++i) {
            const optics::Point2 p{u(rng), u(rng)};
            const auto q = optics::flat_to_fisheye_coord(p, pin, fe);
            const auto back = q ? optics::fisheye_to_flat_coord(*q, pin, fe) : std::nullopt;
            if (!back) return {false, "interior point left the field of view"};
            worst = std::max({worst, std::abs(back->x - p.x), std::abs(back->y - p.y)});
        }
    }
    RunConfig cfg;
    cfg.set("run.out", (work / "warp_demo").string());
    const auto demo = cmd_warp_demo(cfg, log);
    const double secs = seconds_since(t0);
    const bool ok = worst <= 1e-9 && demo.psnr >= 25.0 && secs <= 10.0;
    return {ok, "round-trip max err " + fmt(worst) + " px, checkerboard interior PSNR " + fmt(demo.psnr) + " dB, " +
                    fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 5-7
struct SuiteRun {
    AblationTable table;
    double seconds = 0.0;
    double rgb_seconds = 0.0;  // seed of the default config
};

double timing_of(const fs::path& timing_csv, const std::string& seed, const std::string& run) {
    for (const auto& r : read_csv(timing_csv).records())
        if (r.at("seed") == seed && r.at("run") == run) return std::stod(r.at("seconds"));
    throw CorruptData("timing.csv has no row for " + run + " seed " + seed);
}

Outcome learnability(const SuiteRun& s) {
    const double acc = s.table.accuracy.back().front();
    const bool ok = acc >= 0.90 && s.rgb_seconds <= 600.0;
    return {ok, "flat test accuracy " + fmt(100.0 * acc) + "% at seed " + std::to_string(s.table.seeds.front()) + ", " +
                    fmt(s.rgb_seconds, 4) + " s"};
}

Outcome efficacy(const SuiteRun& s) {
    const auto& t = s.table;
    const double rgb = t.mean("rgb_flat"), full = t.mean("full"), plain = t.mean("plain");
    const double guid = t.mean("guidance"), trans = t.mean("transformer");
    auto between = [&](double v) { return v >= plain && v <= full; };
    const bool order = rgb >= full && full >= plain;
    const bool margin = 100.0 * (full - plain) >= 3.0;
    const bool ok = order && margin && between(guid) && between(trans) && s.seconds <= 45.0 * 60.0;
    std::string d = "means % rgb " + fmt(100 * rgb) + ", full " + fmt(100 * full) + ", guidance " + fmt(100 * guid) +
                    ", transformer " + fmt(100 * trans) + ", plain " + fmt(100 * plain) + "; full-plain " +
                    fmt(100 * (full - plain)) + " pts; suite " + fmt(s.seconds / 60.0, 3) + " min";
    if (!order) d += "; ordering rgb>=full>=plain violated";
    if (!margin) d += "; margin < 3 pts";
    if (!between(guid)) d += "; guidance outside [plain, full]";
    if (!between(trans)) d += "; transformer outside [plain, full]";
    return {ok, d};
}

Outcome guidance_convergence(const fs::path& suite_dir, const AblationTable& t) {
    bool ok = true;
    std::string d;
    for (auto seed : t.seeds) {
        std::vector<double> lg;
        for (const auto& r : read_csv(suite_dir / ("seed_" + std::to_string(seed)) / "full" / "metrics.csv").records())
            if (r.at("kind") == "iter") lg.push_back(std::stod(r.at("L_G")));
        if (lg.size() < 10) return {false, "fewer than 10 logged iterations"};
        const double first = std::accumulate(lg.begin(), lg.begin() + 10, 0.0) / 10.0;
        const double ratio = lg.back() / first;
        ok = ok && ratio <= 0.5;
        d += (d.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + " final/first10 " + fmt(ratio, 3);
    }
    return {ok, d};
}

// ---------------------------------------------------------------- 8-9
Outcome determinism(const fs::path& work, const fs::path& data, std::ostream& log) {
    // Each command chain runs twice at the same output path (the first result is
    // moved aside), so every file, paths included, must repeat byte for byte.
    std::string why;
    auto twice = [&](const fs::path& out, const std::function<void()>& chain) {
        const fs::path first = out.string() + "_first";
        fs::remove_all(out);
        fs::remove_all(first);
        chain();
        fs::rename(out, first);
        chain();
        const bool same = same_tree(first, out, why);
        fs::remove_all(first);
        return same;
    };

    const fs::path gen = work / "repeat" / "gen";
    const bool gen_same = twice(gen, [&] {
        RunConfig g;
        g.set("run.out", gen.string());
        cmd_gen_data(g, log);
    });
    if (!gen_same) return {false, "gen-data: " + why};
    fs::remove_all(gen);

    // Short pretrain/train/eval chains in both precisions.
    for (const char* precision : {"f32", "f64"}) {
        const fs::path root = work / "repeat" / precision;
        const bool same = twice(root, [&] {
            RunConfig c;
            c.set("data.root", data.string());
            c.set("run.precision", precision);
            c.set("train.iterations", "25");
            c.set("run.out", (root / "rgb").string());
            const auto rgb = cmd_pretrain_rgb(c, log);
            c.set("train.rgb_checkpoint", rgb.checkpoint.string());
            for (const char* ablation : {"full", "transformer"}) {
                c.set("run.ablation", ablation);
                c.set("run.out", (root / ablation).string());
                const auto fish = cmd_train_fisheye(c, log);
                c.set("eval.checkpoint", fish.checkpoint.string());
                c.set("run.out", (root / (std::string("eval_") + ablation)).string());
                cmd_eval(c, log);
            }
        });
        if (!same) return {false, std::string(precision) + ": " + why};
    }
    return {true, "gen-data tree, configs, metrics, checkpoints and eval.csv byte-identical across repeats (f32, f64)"};
}

Outcome frozen_rgb(const fs::path& work, const fs::path& data, std::ostream& log) {
    const fs::path root = work / "frozen";
    fs::remove_all(root);
    RunConfig c;
    c.set("data.root", data.string());
    c.set("train.iterations", "25");
    c.set("run.out", (root / "rgb").string());
    const auto rgb = cmd_pretrain_rgb(c, log);
    const std::string before = io::read_file(rgb.checkpoint);
    c.set("train.rgb_checkpoint", rgb.checkpoint.string());
    std::string d;
    bool ok = true;
    for (const char* ablation : {"full", "guidance"}) {
        c.set("run.ablation", ablation);
        c.set("run.out", (root / ablation).string());
        cmd_train_fisheye(c, log);
        const bool same = io::read_file(rgb.checkpoint) == before;
        ok = ok && same;
        d += (d.empty() ? "" : ", ") + std::string(ablation) + (same ? " unchanged" : " CHANGED");
    }
    return {ok, "RGB checkpoint (" + std::to_string(before.size()) + " bytes) after train-fisheye: " + d};
}

} // namespace

int main(int argc, char** argv) {
    // --work DIR, --only 8,9 (comma-separated criterion numbers)
    fs::path work = "acceptance_work";
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--work") work = argv[i + 1];
        if (std::string(argv[i]) == "--only") {
            std::istringstream ids(argv[i + 1]);
            for (std::string id; std::getline(ids, id, ',');) only.push_back(std::stoi(id));
        }
    }
    fs::create_directories(work);
    std::ofstream log(work / "acceptance.log");
    std::cout << "acceptance work directory: " << fs::absolute(work).string() << std::endl;

    run(1, "gradient suite matches finite differences (<= 1e-4, <= 2 min)", [&] { return gradient_suite(log); });
    run(2, "fresh GT identity, tap shape lattice, channel consistency", [] { return identity_and_shapes(); });
    run(4, "fisheye optics round trip and checkerboard PSNR (<= 10 s)", [&] { return fisheye_optics(work, log); });

    const fs::path data = work / "data";
    const fs::path suite_dir = work / "suite";
    SuiteRun suite;
    bool suite_ok = false;
    try {
        RunConfig g;
        g.set("run.out", data.string());
        g.set("run.force", "true");
        cmd_gen_data(g, log);
        if (selected(3) || selected(5) || selected(6) || selected(7)) {
            RunConfig s;
            s.set("data.root", data.string());
            s.set("run.out", suite_dir.string());
            const auto t0 = Clock::now();
            suite.table = cmd_ablation_suite(s, log);
            suite.seconds = seconds_since(t0);
            suite.rgb_seconds =
                timing_of(suite_dir / "timing.csv", std::to_string(suite.table.seeds.front()), "rgb_flat");
            suite_ok = true;
            std::cout << "ablation suite finished in " << fmt(suite.seconds / 60.0, 3) << " min:\n"
                      << io::read_file(suite_dir / "ablation.csv") << std::flush;
        }
    } catch (const std::exception& e) {
        std::cout << "dataset or ablation suite failed: " << e.what() << std::endl;
    }

    auto needs_suite = [&](const std::function<Outcome()>& body) {
        return [&, body] { return suite_ok ? body() : Outcome{false, "ablation suite did not complete"}; };
    };
    run(3, "KL properties and L == L_G + L_C on every logged row", needs_suite([&] { return kl_properties(suite_dir); }));
    run(5, "flat RGB stream learns the task (>= 90% test, <= 10 min)", needs_suite([&] { return learnability(suite); }));
    run(6, "ablation ordering over 3 seeds (<= 45 min)", needs_suite([&] { return efficacy(suite); }));
    run(7, "guidance loss halves in the full-model run", needs_suite([&] {
            return guidance_convergence(suite_dir, suite.table);
        }));
    run(8, "determinism of repeated commands", [&] { return determinism(work, data, log); });
    run(9, "RGB checkpoint bytes unchanged by train-fisheye", [&] { return frozen_rgb(work, data, log); });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
