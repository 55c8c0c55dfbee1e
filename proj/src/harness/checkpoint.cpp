#include "gti3d/checkpoint.hpp"

#include <sstream>
#include <vector>

#include "gti3d/blob_io.hpp"
#include "gti3d/errors.hpp"
#include "gti3d/metrics.hpp"

namespace gti3d::harness {

namespace {

constexpr const char* kMagic = "gti3d-checkpoint";
constexpr int kVersion = 1;

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string& s, const std::string& origin) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw CorruptData(origin + ": bad integer list '" + s + "'");
        }
    }
    return out;
}

struct Entry {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
};

} // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const model::StreamWeights<T>& w, const CheckpointInfo& info) {
    const model::NetworkSpec& s = w.spec;
    std::ostringstream head;
    head << kMagic << ' ' << kVersion << '\n'
         << "stream " << info.stream << '\n'
         << "ablation " << info.ablation << '\n'
         << "seed " << info.seed << '\n'
         << "iterations " << info.iterations << '\n'
         << "precision " << info.precision << '\n'
         << "has_gt " << (w.has_gt ? 1 : 0) << '\n'
         << "spec.classes " << s.classes << '\n'
         << "spec.frames " << s.frames << '\n'
         << "spec.channels " << s.channels << '\n'
         << "spec.height " << s.height << '\n'
         << "spec.width " << s.width << '\n'
         << "spec.input_gain " << format_double(s.input_gain) << '\n'
         << "spec.stem_channels " << s.stem_channels << '\n'
         << "spec.stem_stride " << s.stem_stride << '\n'
         << "spec.block_channels " << join(s.block_channels) << '\n'
         << "spec.family " << gt::to_string(s.family) << '\n'
         << "spec.loc_hidden " << s.loc_hidden << '\n'
         << "spec.loc_mode " << gt::to_string(s.loc_mode) << '\n';

    std::string blobs;
    for (const auto& p : w.store) {
        std::vector<std::uint32_t> shape(p.shape.begin(), p.shape.end());
        const std::vector<float> values(p.value.begin(), p.value.end());
        const std::string b = io::encode_blob(shape, values);
        head << "param " << p.name << ' ' << blobs.size() << ' ' << b.size() << '\n';
        blobs += b;
    }
    head << "end\n";
    io::write_file(path, head.str() + blobs);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
    const std::string origin = path.string();
    if (!std::filesystem::is_regular_file(path)) throw InputError("no checkpoint at '" + origin + "'");
    const std::string bytes = io::read_file(path);
    const std::size_t end = bytes.find("\nend\n");
    if (end == std::string::npos) throw CorruptData(origin + ": checkpoint manifest has no terminating 'end' line");
    const std::size_t payload = end + 5;

    LoadedCheckpoint<T> out;
    CheckpointInfo& info = out.info;
    model::NetworkSpec& spec = info.spec;
    std::vector<Entry> entries;
    std::istringstream head(bytes.substr(0, end + 1));
    std::string line;
    bool magic = false;
    try {
        while (std::getline(head, line)) {
            std::istringstream ls(line);
            std::string key;
            ls >> key;
            if (!magic) {
                int version = 0;
                ls >> version;
                if (key != kMagic || version != kVersion)
                    throw CorruptData(origin + ": not a version " + std::to_string(kVersion) + " checkpoint");
                magic = true;
                continue;
            }
            std::string value;
            ls >> value;
            if (key == "param") {
                Entry e;
                e.name = value;
                if (!(ls >> e.offset >> e.length)) throw CorruptData(origin + ": malformed param line '" + line + "'");
                entries.push_back(e);
            } else if (key == "stream") info.stream = value;
            else if (key == "ablation") info.ablation = value;
            else if (key == "seed") info.seed = std::stoull(value);
            else if (key == "iterations") info.iterations = std::stoi(value);
            else if (key == "precision") info.precision = value;
            else if (key == "has_gt") info.has_gt = value == "1";
            else if (key == "spec.classes") spec.classes = std::stoi(value);
            else if (key == "spec.frames") spec.frames = std::stoi(value);
            else if (key == "spec.channels") spec.channels = std::stoi(value);
            else if (key == "spec.height") spec.height = std::stoi(value);
            else if (key == "spec.width") spec.width = std::stoi(value);
            else if (key == "spec.input_gain") spec.input_gain = std::stod(value);
            else if (key == "spec.stem_channels") spec.stem_channels = std::stoi(value);
            else if (key == "spec.stem_stride") spec.stem_stride = std::stoi(value);
            else if (key == "spec.block_channels") spec.block_channels = split_ints(value, origin);
            else if (key == "spec.family") spec.family = gt::parse_family(value);
            else if (key == "spec.loc_hidden") spec.loc_hidden = std::stoi(value);
            else if (key == "spec.loc_mode") spec.loc_mode = gt::parse_locnet_mode(value);
            else throw CorruptData(origin + ": unknown manifest line '" + line + "'");
        }
    } catch (const CorruptData&) {
        throw;
    } catch (const std::exception& e) {
        throw CorruptData(origin + ": malformed manifest (" + e.what() + ")");
    }
    if (!magic) throw CorruptData(origin + ": empty checkpoint");

    diff::ParamStore<T> store;
    try {
        for (const auto& e : entries) {
            if (e.offset > bytes.size() - payload || e.length > bytes.size() - payload - e.offset)
                throw CorruptData(origin + ": blob '" + e.name + "' lies past the end of the file");
            const io::Blob b = io::decode_blob(std::string_view(bytes).substr(payload + e.offset, e.length),
                                               origin + ":" + e.name);
            std::vector<int> shape(b.shape.begin(), b.shape.end());
            const std::size_t i = store.add(e.name, shape);
            if (store[i].value.size() != b.data.size()) throw CorruptData(origin + ": blob '" + e.name + "' size mismatch");
            std::copy(b.data.begin(), b.data.end(), store[i].value.begin());
        }
        spec.validate();
        out.weights = model::bind_stream<T>(spec, info.has_gt, std::move(store));
    } catch (const ConfigError& e) {
        throw CorruptData(origin + ": " + e.what());
    }
    return out;
}

template void save_checkpoint<float>(const std::filesystem::path&, const model::StreamWeights<float>&,
                                     const CheckpointInfo&);
template void save_checkpoint<double>(const std::filesystem::path&, const model::StreamWeights<double>&,
                                      const CheckpointInfo&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&);

} // namespace gti3d::harness
