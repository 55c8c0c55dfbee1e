// gti3d: command-line front end for the guided transformer I3D experiments.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gti3d/commands.hpp"
#include "gti3d/errors.hpp"

using namespace gti3d;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool force = false;
    std::optional<std::string> precision;
    std::optional<std::string> ablation;
    std::vector<std::pair<std::string, std::optional<std::string>>> flags;  // config key <- flag value
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "INI config file (key = value in [sections])");
    cmd->add_option("--set", c.sets, "Override a config key, e.g. --set train.iterations=200");
    cmd->add_option("--seed", c.seed, "Seed for every RNG of the run");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_flag("--force", c.force, "Overwrite an existing output directory");
    cmd->add_option("--precision", c.precision, "Arithmetic precision")->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--ablation", c.ablation, "Fisheye ablation")
        ->check(CLI::IsMember({"plain", "guidance", "transformer", "full"}));
}

// Registers a flag whose value, when given, overrides `key`.
template <typename V>
void add_key_flag(CLI::App* cmd, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
    c.flags.emplace_back(key, std::nullopt);
    const std::size_t slot = c.flags.size() - 1;
    cmd->add_option_function<V>(
        flag, [&c, slot](const V& v) {
            if constexpr (std::is_same_v<V, std::string>) c.flags[slot].second = v;
            else c.flags[slot].second = std::to_string(v);
        },
        help);
}

harness::RunConfig resolve(const Common& c) {
    harness::RunConfig cfg;
    if (!c.config.empty()) cfg.load_file(c.config);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
    if (c.out) cfg.set("run.out", *c.out);
    if (c.force) cfg.set("run.force", "true");
    if (c.precision) cfg.set("run.precision", *c.precision);
    if (c.ablation) cfg.set("run.ablation", *c.ablation);
    for (const auto& [key, value] : c.flags)
        if (value) cfg.set(key, *value);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guided transformer I3D for fisheye action recognition (desk scale)"};
    app.require_subcommand(1);

    Common gen, rgb, fish, eval, suite, grad, warp;

    auto* c_gen = app.add_subcommand("gen-data", "Generate the paired flat/fisheye synthetic dataset");
    add_common(c_gen, gen);
    add_key_flag<int>(c_gen, gen, "--classes", "data.classes", "Number of action classes K");
    add_key_flag<int>(c_gen, gen, "--subjects", "data.subjects", "Number of subjects S");

    auto* c_rgb = app.add_subcommand("pretrain-rgb", "Train the flat RGB stream");
    add_common(c_rgb, rgb);
    add_key_flag<std::string>(c_rgb, rgb, "--data", "data.root", "Dataset directory");

    auto* c_fish = app.add_subcommand("train-fisheye", "Train the fisheye stream under an ablation");
    add_common(c_fish, fish);
    add_key_flag<std::string>(c_fish, fish, "--data", "data.root", "Dataset directory");
    add_key_flag<std::string>(c_fish, fish, "--rgb", "train.rgb_checkpoint", "Frozen RGB stream checkpoint");

    auto* c_eval = app.add_subcommand("eval", "Accuracy of a checkpoint on a split");
    add_common(c_eval, eval);
    add_key_flag<std::string>(c_eval, eval, "--data", "data.root", "Dataset directory");
    add_key_flag<std::string>(c_eval, eval, "--checkpoint", "eval.checkpoint", "Checkpoint file");
    add_key_flag<std::string>(c_eval, eval, "--split", "eval.split", "train or test");

    auto* c_suite = app.add_subcommand("ablation-suite", "Train RGB + all four fisheye ablations over R seeds");
    add_common(c_suite, suite);
    add_key_flag<std::string>(c_suite, suite, "--data", "data.root", "Dataset directory");
    add_key_flag<int>(c_suite, suite, "--repeats", "ablation.repeats", "Number of seeds R");

    auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    add_common(c_grad, grad);
    add_key_flag<std::string>(c_grad, grad, "--corrupt", "gradcheck.corrupt", "Perturb this op's gradient (self-test)");

    auto* c_warp = app.add_subcommand("warp-demo", "Fisheye warp and rectification round trip");
    add_common(c_warp, warp);
    add_key_flag<std::string>(c_warp, warp, "--image", "warp.image", "Input PGM (default: checkerboard)");
    add_key_flag<double>(c_warp, warp, "--focal", "warp.fisheye_focal", "Fisheye focal length, pixels per radian");
    add_key_flag<double>(c_warp, warp, "--fov", "warp.fov", "Fisheye field of view, radians");
    add_key_flag<std::string>(c_warp, warp, "--model", "warp.model", "equidistant | equisolid | rectilinear");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::input_error);
    }

    try {
        if (c_gen->parsed()) {
            harness::cmd_gen_data(resolve(gen), std::cout);
        } else if (c_rgb->parsed()) {
            harness::cmd_pretrain_rgb(resolve(rgb), std::cout);
        } else if (c_fish->parsed()) {
            harness::cmd_train_fisheye(resolve(fish), std::cout);
        } else if (c_eval->parsed()) {
            harness::cmd_eval(resolve(eval), std::cout);
        } else if (c_suite->parsed()) {
            harness::cmd_ablation_suite(resolve(suite), std::cout);
        } else if (c_grad->parsed()) {
            std::string failed;
            for (const auto& r : harness::cmd_gradcheck(resolve(grad), std::cout))
                if (!r.passed) failed += (failed.empty() ? "" : ", ") + r.op;
            if (!failed.empty()) {
                std::cerr << "gradcheck: FAILED ops: " << failed << '\n';
                return static_cast<int>(ExitCode::failure);
            }
        } else if (c_warp->parsed()) {
            harness::cmd_warp_demo(resolve(warp), std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(exit_code(e));
    }
    return 0;
}
