// Copyright 2026 The PDNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pdnet/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "pdnet/errors.hpp"

namespace pdnet {

namespace {

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text)
{
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    return value;
}

bool parse_bool(const std::string& key, const std::string& text)
{
    if (text == "true" || text == "1" || text == "yes" || text == "on")
        return true;
    if (text == "false" || text == "0" || text == "no" || text == "off")
        return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

// Shortest text that parses back to the same value.
template <typename T>
std::string format_double(T v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field int_field(T TrainConfig::*member)
{
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<T>(k, v); },
            [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(double TrainConfig::*member)
{
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                c.*member = parse_number<double>(k, v);
            },
            [member](const TrainConfig& c) { return format_double(c.*member); }};
}

Field bool_field(bool TrainConfig::*member)
{
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); },
            [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(std::string TrainConfig::*member)
{
    return {[member](TrainConfig& c, const std::string&, const std::string& v) { c.*member = v; },
            [member](const TrainConfig& c) { return c.*member; }};
}

template <typename Get>
Field nested_double(Get get)
{
    return {[get](TrainConfig& c, const std::string& k, const std::string& v) { get(c) = parse_number<double>(k, v); },
            [get](const TrainConfig& c) { return format_double(get(const_cast<TrainConfig&>(c))); }};
}

template <typename Get>
Field nested_bool(Get get)
{
    return {[get](TrainConfig& c, const std::string& k, const std::string& v) { get(c) = parse_bool(k, v); },
            [get](const TrainConfig& c) { return std::string(get(const_cast<TrainConfig&>(c)) ? "true" : "false"); }};
}

// Comma-separated triple, e.g. "0.485,0.456,0.406".
template <typename Get>
Field triple_field(Get get)
{
    return {[get](TrainConfig& c, const std::string& k, const std::string& v) {
                std::array<float, 3> out{};
                std::stringstream ss(v);
                std::string item;
                std::size_t i = 0;
                while (std::getline(ss, item, ',')) {
                    if (i >= 3)
                        throw ConfigError("config key '" + k + "': expected three values");
                    out[i++] = static_cast<float>(parse_number<double>(k, trim(item)));
                }
                if (i != 3)
                    throw ConfigError("config key '" + k + "': expected three values");
                get(c) = out;
            },
            [get](const TrainConfig& c) {
                const auto& t = get(const_cast<TrainConfig&>(c));
                return format_double(t[0]) + "," + format_double(t[1]) + "," + format_double(t[2]);
            }};
}

// Ordered so that to_text() reads top-down like the struct.
const std::vector<std::pair<std::string, Field>>& fields()
{
    static const std::vector<std::pair<std::string, Field>> table = {
        {"epochs", int_field(&TrainConfig::epochs)},
        {"iterations", int_field(&TrainConfig::iterations)},
        {"batch_size", int_field(&TrainConfig::batch_size)},
        {"momentum", double_field(&TrainConfig::momentum)},
        {"weight_decay", double_field(&TrainConfig::weight_decay)},
        {"lr_image_max", double_field(&TrainConfig::lr_image_max)},
        {"lr_video_backbone_max", double_field(&TrainConfig::lr_video_backbone_max)},
        {"lr_video_rest_max", double_field(&TrainConfig::lr_video_rest_max)},
        {"lr_power", double_field(&TrainConfig::lr_power)},
        {"grad_clip_norm", double_field(&TrainConfig::grad_clip_norm)},
        {"image_iters", int_field(&TrainConfig::image_iters)},
        {"video_iters", int_field(&TrainConfig::video_iters)},
        {"seed", int_field(&TrainConfig::seed)},
        {"parts_p", int_field(&TrainConfig::parts_p)},
        {"input_size", int_field(&TrainConfig::input_size)},
        {"use_ipda", bool_field(&TrainConfig::use_ipda)},
        {"backbone_depth", int_field(&TrainConfig::backbone_depth)},
        {"backbone_width", int_field(&TrainConfig::backbone_width)},
        {"fpn_width", int_field(&TrainConfig::fpn_width)},
        {"compressed_channels", int_field(&TrainConfig::compressed_channels)},
        {"backbone_weights", string_field(&TrainConfig::backbone_weights)},
        {"semantic_depth", int_field(&TrainConfig::semantic_depth)},
        {"semantic_width", int_field(&TrainConfig::semantic_width)},
        {"semantic_weights", string_field(&TrainConfig::semantic_weights)},
        {"w_seg_final", nested_double([](TrainConfig& c) -> double& { return c.loss_weights.seg_final; })},
        {"w_seg_aux", nested_double([](TrainConfig& c) -> double& { return c.loss_weights.seg_aux; })},
        {"w_saliency", nested_double([](TrainConfig& c) -> double& { return c.loss_weights.saliency; })},
        {"w_part_total", nested_double([](TrainConfig& c) -> double& { return c.loss_weights.part_total; })},
        {"use_geo", nested_bool([](TrainConfig& c) -> bool& { return c.part_terms.geo; })},
        {"use_area", nested_bool([](TrainConfig& c) -> bool& { return c.part_terms.area; })},
        {"use_sem", nested_bool([](TrainConfig& c) -> bool& { return c.part_terms.sem; })},
        {"data_root", string_field(&TrainConfig::data_root)},
        {"image_manifest", string_field(&TrainConfig::image_manifest)},
        {"crop_scale_min", double_field(&TrainConfig::crop_scale_min)},
        {"crop_scale_max", double_field(&TrainConfig::crop_scale_max)},
        {"hflip_probability", double_field(&TrainConfig::hflip_probability)},
        {"norm_mean", triple_field([](TrainConfig& c) -> std::array<float, 3>& { return c.normalization.mean; })},
        {"norm_std", triple_field([](TrainConfig& c) -> std::array<float, 3>& { return c.normalization.std; })},
        {"checkpoint_every", int_field(&TrainConfig::checkpoint_every)},
        {"log_every", int_field(&TrainConfig::log_every)},
        {"eval_every", int_field(&TrainConfig::eval_every)},
    };
    return table;
}

const Field& field(const std::string& key)
{
    for (const auto& [name, f] : fields())
        if (name == key)
            return f;
    throw ConfigError("unknown config key '" + key + "'");
}

} // namespace

std::vector<std::string> TrainConfig::keys()
{
    std::vector<std::string> out;
    for (const auto& [name, f] : fields())
        out.push_back(name);
    return out;
}

void TrainConfig::set(const std::string& key, const std::string& value)
{
    field(key).set(*this, key, trim(value));
}

std::string TrainConfig::get(const std::string& key) const
{
    return field(key).get(*this);
}

void TrainConfig::apply_override(const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

TrainConfig TrainConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    TrainConfig cfg;
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        try {
            cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    // Relative data paths are taken relative to the config file.
    const auto base = path.parent_path();
    for (auto* p : {&cfg.data_root, &cfg.image_manifest, &cfg.backbone_weights, &cfg.semantic_weights})
        if (!p->empty() && std::filesystem::path(*p).is_relative())
            *p = (base / *p).lexically_normal().string();
    return cfg;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j)
{
    TrainConfig cfg;
    for (const auto& [key, value] : j.items())
        cfg.set(key, value.is_string() ? value.get<std::string>() : value.dump());
    return cfg;
}

void TrainConfig::validate() const
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok)
            throw ConfigError("invalid config: " + what);
    };
    require(epochs >= 1 || iterations >= 1, "epochs or iterations must be positive");
    require(iterations >= 0, "iterations must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(lr_image_max >= 0.0 && lr_video_backbone_max >= 0.0 && lr_video_rest_max >= 0.0,
            "learning rates must be >= 0");
    require(lr_power > 0.0, "lr_power must be positive");
    require(grad_clip_norm >= 0.0, "grad_clip_norm must be >= 0");
    require(image_iters >= 0 && video_iters >= 0, "alternation counts must be >= 0");
    require(video_iters >= 1, "video_iters must be >= 1");
    require(parts_p >= 1, "parts_p must be >= 1");
    require(input_size >= 32, "input_size must be >= 32");
    require(fpn_width >= 1 && compressed_channels >= 1 && backbone_width >= 1 && semantic_width >= 1,
            "channel widths must be positive");
    loss_weights.validate();
    augment_config(0).validate();
}

ModelConfig TrainConfig::model_config() const
{
    ModelConfig m;
    m.backbone = {backbone_depth, backbone_width, fpn_width};
    m.compressed_channels = compressed_channels;
    m.parts = parts_p;
    m.use_ipda = use_ipda;
    return m;
}

BackboneConfig TrainConfig::semantic_config() const
{
    return {semantic_depth, semantic_width, fpn_width};
}

AugmentConfig TrainConfig::augment_config(std::uint64_t sample_seed) const
{
    AugmentConfig a;
    a.crop_scale_range = {crop_scale_min, crop_scale_max};
    a.hflip_probability = hflip_probability;
    a.output_size = input_size;
    a.seed = sample_seed;
    return a;
}

nlohmann::json TrainConfig::to_json() const
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, f] : fields())
        j[name] = f.get(*this);
    return j;
}

std::string TrainConfig::to_text() const
{
    std::ostringstream os;
    for (const auto& [name, f] : fields())
        os << name << " = " << f.get(*this) << '\n';
    return os.str();
}

} // namespace pdnet
