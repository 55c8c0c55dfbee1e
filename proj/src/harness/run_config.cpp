#include "gti3d/run_config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gti3d/errors.hpp"

namespace gti3d::harness {

namespace {

const std::map<std::string, std::string>& schema() {
    static const std::map<std::string, std::string> s{
        {"run.seed", "1"},
        {"run.out", "run"},
        {"run.precision", "f32"},
        {"run.ablation", "full"},
        {"run.force", "false"},

        {"data.root", "data"},
        {"data.classes", "8"},
        {"data.subjects", "32"},
        {"data.clips_per_subject", "32"},
        {"data.frames", "8"},
        {"data.height", "32"},
        {"data.width", "32"},
        {"data.fisheye_focal", "12"},
        {"data.fisheye_model", "equidistant"},
        {"data.train_subjects", "24"},

        {"model.input_gain", "4"},
        {"model.stem_channels", "4"},
        {"model.block_channels", "8,8,16"},
        {"model.family", "radial"},
        {"model.loc_hidden", "4"},
        {"model.loc_mode", "temporal"},

        {"train.iterations", "1000"},
        {"train.batch", "8"},
        {"train.learning_rate", "0.004"},
        {"train.lr_schedule", "cosine"},
        {"train.gt_lr_scale", "0.01"},
        {"train.frames", "8"},
        {"train.random_phase", "false"},
        {"train.rgb_checkpoint", ""},

        {"eval.checkpoint", ""},
        {"eval.split", "test"},

        {"ablation.repeats", "3"},

        {"gradcheck.tolerance", "1e-4"},
        {"gradcheck.corrupt", ""},

        {"warp.image", ""},
        {"warp.square", "32"},
        {"warp.width", "256"},
        {"warp.height", "256"},
        {"warp.fisheye_focal", "128"},
        {"warp.fov", "3.141592653589793"},
        {"warp.model", "equidistant"},
        {"warp.interior", "0.5"},
    };
    return s;
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
    V v{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
    return v;
}

} // namespace

RunConfig::RunConfig() : values_(schema()) {}

void RunConfig::load_file(const std::filesystem::path& path) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        if (!std::filesystem::exists(path)) throw InputError("config: cannot read " + path.string());
        throw ConfigError("config: " + path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config: key '" + section + "' is outside any [section]");
        for (const auto& [key, value] : body) set(section + "." + key, value.data());
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }

std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

double RunConfig::get_double(const std::string& key) const {
    const double v = parse_number<double>(key, get(key));
    if (!std::isfinite(v)) throw ConfigError("config: '" + key + "' must be finite");
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, item));
    if (out.empty()) throw ConfigError("config: '" + key + "' expects a comma-separated list");
    return out;
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string s = key.substr(0, dot);
        if (s != section) {
            if (!section.empty()) os << '\n';
            os << '[' << s << "]\n";
            section = s;
        }
        os << key.substr(dot + 1) << " = " << value << '\n';
    }
    return os.str();
}

} // namespace gti3d::harness
