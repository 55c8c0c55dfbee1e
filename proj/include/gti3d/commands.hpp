#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "gti3d/gradcheck_suite.hpp"
#include "gti3d/metrics.hpp"
#include "gti3d/run_config.hpp"
#include "gti3d/synth_data.hpp"

// Subcommand bodies shared by the CLI and the tests. Each one reads its
// settings from a RunConfig, writes config.echo plus its artifacts under
// run.out (data.root for gen-data is run.out itself) and reports progress on
// `log`. Failures are thrown as the gti3d error classes.
namespace gti3d::harness {

// Writes manifest.json, split.json and the clip blobs to run.out. Refuses a
// non-empty directory unless run.force is set.
data::DatasetManifest cmd_gen_data(const RunConfig& cfg, std::ostream& log);

struct TrainRun {
    std::filesystem::path checkpoint;
    std::filesystem::path metrics;
    std::vector<AccuracyRow> accuracy;  // train, test; from the reloaded checkpoint
    double test_accuracy() const;
};

// Flat-stream pretraining on the train split of data.root.
TrainRun cmd_pretrain_rgb(const RunConfig& cfg, std::ostream& log);

// Fisheye stream under run.ablation. Guided ablations need
// train.rgb_checkpoint; plain and transformer_only never read it.
TrainRun cmd_train_fisheye(const RunConfig& cfg, std::ostream& log);

// Accuracy of eval.checkpoint on eval.split (train | test) of data.root. The
// checkpoint decides the modality: flat clips for an RGB stream, fisheye
// clips otherwise.
AccuracyRow cmd_eval(const RunConfig& cfg, std::ostream& log);

struct AblationTable {
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> rows;             // plain, guidance_only, transformer_only, full, rgb_flat
    std::vector<std::vector<double>> accuracy;  // rows x seeds
    double mean(std::size_t row) const;
    double mean(const std::string& row) const;
};

// Per seed: pretrain the RGB stream, then train every fisheye ablation from
// the same seed. Writes ablation.csv (and timing.csv) to run.out.
AblationTable cmd_ablation_suite(const RunConfig& cfg, std::ostream& log);

// Runs the gradient registry; the returned list has one entry per op.
std::vector<diff::OpCheckResult> cmd_gradcheck(const RunConfig& cfg, std::ostream& log);

struct WarpDemo {
    double psnr = 0.0;  // interior PSNR of the flat -> fisheye -> flat round trip
    std::filesystem::path input, fisheye, rectified;
};

// Warps warp.image (or a generated checkerboard) into the fisheye view and
// back, writing PGM images of all three stages.
WarpDemo cmd_warp_demo(const RunConfig& cfg, std::ostream& log);

} // namespace gti3d::harness
