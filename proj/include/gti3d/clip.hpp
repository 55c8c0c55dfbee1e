#pragma once

#include <string>

#include "gti3d/tensor.hpp"

namespace gti3d {

enum class Modality { flat, fisheye };

const char* to_string(Modality m);
Modality parse_modality(const std::string& s);

// One labeled video sample. Pixel values lie in [0, 1]. A flat clip and its
// fisheye twin share (label, subject_id, instance_id).
struct Clip {
    Tensor4<float> frames;  // n x C x H x W
    int label = 0;
    int subject_id = 0;
    int instance_id = 0;
    Modality modality = Modality::flat;
};

} // namespace gti3d
