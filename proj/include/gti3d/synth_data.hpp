#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gti3d/clip.hpp"
#include "gti3d/fisheye_optics.hpp"

// Procedural paired flat/fisheye action clips. The class is encoded in the
// motion of a textured sprite (direction x speed); the subject controls the
// sprite's appearance. Fisheye twins are warp_frame() of the flat frames.
//
// On disk:
//   <root>/manifest.json
//   <root>/flat/<instance>.uvht
//   <root>/fisheye/<instance>.uvht
//   <root>/split.json           (written by the CLI)
namespace gti3d::data {

struct GeneratorConfig {
    std::uint64_t seed = 7;
    int classes = 8;             // K
    int subjects = 32;           // S
    int clips_per_subject = 32;  // labels assigned round-robin, so each class appears clips_per_subject / K times
    int frames = 8;
    int height = 32;
    int width = 32;
    double fisheye_focal = 12.0;
    optics::ProjectionModel fisheye_model = optics::ProjectionModel::equidistant;

    optics::PinholeIntrinsics flat_intrinsics() const;
    optics::FisheyeIntrinsics fisheye_intrinsics() const;
    void validate() const;  // InputError for K < 2 or S < 2, ConfigError for bad geometry
};

struct ClipRecord {
    int instance_id = 0;
    int subject_id = 0;
    int label = 0;
    Modality modality = Modality::flat;
    std::string path;  // relative to the dataset root
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    int classes = 0;
    std::vector<int> subjects;
    int frames = 0;
    int channels = 1;
    int height = 0;
    int width = 0;
    optics::PinholeIntrinsics flat;
    optics::FisheyeIntrinsics fisheye;
    std::vector<ClipRecord> records;
    std::filesystem::path root;

    const ClipRecord& record(int instance_id, Modality modality) const;
    std::vector<int> instance_ids() const;
};

// Renders the flat clip of one instance. Deterministic in (seed, instance_id).
Clip render_flat_clip(const GeneratorConfig& cfg, int subject_id, int label, int instance_id);
Clip make_fisheye_twin(const Clip& flat, const optics::PinholeIntrinsics& pin, const optics::FisheyeIntrinsics& fe);

// Writes manifest and blobs under `root` and returns the manifest.
DatasetManifest generate(const GeneratorConfig& cfg, const std::filesystem::path& root);

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
// Eagerly validates the manifest structure; CorruptData on failure.
DatasetManifest read_manifest(const std::filesystem::path& root);

struct SplitSpec {
    std::uint64_t seed = 0;
    std::vector<int> train_subjects;
    std::vector<int> test_subjects;
    std::vector<int> train_ids;  // instance ids
    std::vector<int> test_ids;
};

// Partitions subjects (not clips) into disjoint train/test sets.
SplitSpec split_cross_subject(const DatasetManifest& m, int train_subject_count, std::uint64_t seed);
void write_split(const SplitSpec& s, const std::filesystem::path& path);
SplitSpec read_split(const std::filesystem::path& path);

// Loads and validates one clip: header dims must match the manifest and all
// values must lie in [0, 1].
Clip load_clip(const DatasetManifest& m, int instance_id, Modality modality);
std::vector<Clip> load_clips(const DatasetManifest& m, const std::vector<int>& ids, Modality modality);

} // namespace gti3d::data
