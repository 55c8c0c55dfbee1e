#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gti3d/model.hpp"

// Single-file weights checkpoint: a text manifest terminated by a line
// "end", followed by the concatenated UVHT blobs of every parameter.
//
//   gti3d-checkpoint 1
//   stream fisheye
//   ablation full
//   seed 1
//   iterations 1000
//   spec.classes 8
//   ...
//   param <name> <offset> <length>
//   end
//
// Blob offsets count from the first byte after "end\n". Values are stored as
// float32 regardless of the training precision.
namespace gti3d::harness {

struct CheckpointInfo {
    std::string stream = "rgb";    // rgb | fisheye
    std::string ablation = "none";  // fisheye ablation tag, "none" for rgb
    std::uint64_t seed = 0;
    int iterations = 0;
    std::string precision = "f32";
    model::NetworkSpec spec;
    bool has_gt = false;
};

template <typename T>
struct LoadedCheckpoint {
    CheckpointInfo info;
    model::StreamWeights<T> weights;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const model::StreamWeights<T>& w, const CheckpointInfo& info);

// CorruptData for structural damage (bad header, offsets past the end,
// malformed blobs, missing or mis-shaped parameters).
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

} // namespace gti3d::harness
