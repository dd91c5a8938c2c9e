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

#include "pdnet/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pdnet/errors.hpp"

namespace pdnet {

namespace {

constexpr int kMaxCropRedraws = 10;

bool is_frame_file(const fs::path& p)
{
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

// Numeric stems sort by value, everything else lexicographically after them.
bool frame_order(const fs::path& a, const fs::path& b)
{
    const auto sa = a.stem().string();
    const auto sb = b.stem().string();
    long long va = 0;
    long long vb = 0;
    const bool na = std::from_chars(sa.data(), sa.data() + sa.size(), va).ec == std::errc{};
    const bool nb = std::from_chars(sb.data(), sb.data() + sb.size(), vb).ec == std::errc{};
    if (na && nb && va != vb)
        return va < vb;
    if (na != nb)
        return na;
    return sa < sb;
}

std::vector<fs::path> sorted_files(const fs::path& dir)
{
    std::vector<fs::path> files;
    if (!fs::is_directory(dir))
        return files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_frame_file(entry.path()))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end(), frame_order);
    return files;
}

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

struct CropBox {
    cv::Rect rect;
    bool flip = false;
};

CropBox draw_transform(std::mt19937_64& rng, cv::Size size, const AugmentConfig& cfg, const cv::Mat* mask)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto [lo, hi] = cfg.crop_scale_range;
    CropBox box;
    box.rect = cv::Rect(0, 0, size.width, size.height);
    const bool has_foreground = mask != nullptr && cv::countNonZero(*mask) > 0;

    bool accepted = false;
    for (int attempt = 0; attempt < kMaxCropRedraws && !accepted; ++attempt) {
        const double scale = lo + (hi - lo) * unit(rng);
        const int w = std::clamp(static_cast<int>(std::lround(scale * size.width)), 1, size.width);
        const int h = std::clamp(static_cast<int>(std::lround(scale * size.height)), 1, size.height);
        const int x = static_cast<int>(std::floor(unit(rng) * (size.width - w + 1)));
        const int y = static_cast<int>(std::floor(unit(rng) * (size.height - h + 1)));
        const cv::Rect rect(std::min(x, size.width - w), std::min(y, size.height - h), w, h);
        if (!has_foreground || cv::countNonZero((*mask)(rect)) > 0) {
            box.rect = rect;
            accepted = true;
        }
    }
    // Falls back to the full frame when every draw missed the foreground.
    box.flip = unit(rng) < cfg.hflip_probability;
    return box;
}

cv::Mat apply_transform(const cv::Mat& src, const CropBox& box, int output_size, int interpolation)
{
    cv::Mat cropped = src(box.rect);
    cv::Mat flipped;
    if (box.flip)
        cv::flip(cropped, flipped, 1);
    else
        flipped = cropped;
    cv::Mat out;
    cv::resize(flipped, out, cv::Size(output_size, output_size), 0, 0, interpolation);
    return out;
}

void augment_view(std::mt19937_64& rng, const AugmentConfig& cfg, cv::Mat& image, std::optional<cv::Mat>& mask)
{
    const cv::Mat* m = mask ? &*mask : nullptr;
    const CropBox box = draw_transform(rng, image.size(), cfg, m);
    image = apply_transform(image, box, cfg.output_size, cv::INTER_LINEAR);
    if (mask)
        mask = apply_transform(*mask, box, cfg.output_size, cv::INTER_NEAREST);
}

void check_mask(const cv::Mat& image, const std::optional<cv::Mat>& mask, const std::string& what)
{
    if (mask && mask->size() != image.size())
        throw DatasetError(what + ": mask " + std::to_string(mask->cols) + "x" + std::to_string(mask->rows) +
                           " does not match image " + std::to_string(image.cols) + "x" +
                           std::to_string(image.rows));
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::string to_string(Split split)
{
    return split == Split::Train ? "train" : "test";
}

void AugmentConfig::validate() const
{
    if (output_size <= 0)
        throw ConfigError("augment: output_size must be positive");
    if (hflip_probability < 0.0 || hflip_probability > 1.0)
        throw ConfigError("augment: hflip_probability must lie in [0, 1]");
    const auto [lo, hi] = crop_scale_range;
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0))
        throw ConfigError("augment: crop_scale_range must satisfy 0 < lo <= hi <= 1");
}

std::vector<ClipDescriptor> scan_dataset(const fs::path& root, Split split)
{
    const fs::path split_file = root / "ImageSets" / (to_string(split) + ".txt");
    std::ifstream in(split_file);
    if (!in)
        throw ConfigError("missing split file " + split_file.string());

    std::vector<std::string> ids;
    for (std::string line; std::getline(in, line);) {
        line = trim(line);
        if (!line.empty())
            ids.push_back(line);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    std::vector<ClipDescriptor> clips;
    clips.reserve(ids.size());
    for (const auto& id : ids) {
        ClipDescriptor clip;
        clip.clip_id = id;
        clip.frame_paths = sorted_files(root / "JPEGImages" / id);
        if (clip.frame_paths.empty())
            throw DatasetError("clip '" + id + "' has no frames under " + (root / "JPEGImages" / id).string());

        std::map<std::string, int> index_of_stem;
        for (int i = 0; i < clip.size(); ++i)
            index_of_stem.emplace(clip.frame_paths[static_cast<std::size_t>(i)].stem().string(), i);
        for (const auto& ann : sorted_files(root / "Annotations" / id)) {
            const auto it = index_of_stem.find(ann.stem().string());
            if (it != index_of_stem.end())
                clip.annotation_paths.emplace(it->second, ann);
        }
        clips.push_back(std::move(clip));
    }
    return clips;
}

cv::Mat binarize_mask(const cv::Mat& raster)
{
    cv::Mat gray;
    if (raster.channels() == 1)
        gray = raster;
    else
        cv::cvtColor(raster, gray, raster.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
    if (gray.depth() != CV_8U)
        gray.convertTo(gray, CV_8U);
    cv::Mat out;
    cv::threshold(gray, out, 127, 1, cv::THRESH_BINARY);
    return out;
}

cv::Mat load_frame(const fs::path& path, const Normalization& norm)
{
    const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty())
        throw IoError("cannot read image " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat out;
    rgb.convertTo(out, CV_32FC3, 1.0 / 255.0);
    out -= cv::Scalar(norm.mean[0], norm.mean[1], norm.mean[2]);
    cv::divide(out, cv::Scalar(norm.std[0], norm.std[1], norm.std[2]), out);
    return out;
}

cv::Mat load_mask(const fs::path& path)
{
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (raw.empty())
        throw IoError("cannot read mask " + path.string());
    return binarize_mask(raw);
}

SamplePair make_pair(const ClipDescriptor& clip, int target_index, const Normalization& norm)
{
    if (target_index < 0 || target_index >= clip.size())
        throw std::invalid_argument("make_pair: frame index " + std::to_string(target_index) +
                                    " out of range for clip '" + clip.clip_id + "' (" +
                                    std::to_string(clip.size()) + " frames)");
    SamplePair pair;
    pair.clip_id = clip.clip_id;
    pair.target_index = target_index;
    pair.reference_image = load_frame(clip.frame_paths.front(), norm);
    pair.target_image = target_index == 0 ? pair.reference_image.clone()
                                          : load_frame(clip.frame_paths[static_cast<std::size_t>(target_index)], norm);
    if (pair.reference_image.size() != pair.target_image.size())
        throw DatasetError("clip '" + clip.clip_id + "': frame " + std::to_string(target_index) +
                           " size differs from frame 0");
    if (clip.is_annotated(0))
        pair.reference_mask = load_mask(clip.annotation_paths.at(0));
    if (clip.is_annotated(target_index))
        pair.target_mask = load_mask(clip.annotation_paths.at(target_index));
    check_mask(pair.reference_image, pair.reference_mask, clip.clip_id);
    check_mask(pair.target_image, pair.target_mask, clip.clip_id);
    return pair;
}

SamplePair augment_pair(const SamplePair& pair, const AugmentConfig& cfg)
{
    cfg.validate();
    if (pair.reference_image.size() != pair.target_image.size())
        throw std::invalid_argument("augment_pair: reference and target sizes differ");
    check_mask(pair.reference_image, pair.reference_mask, pair.clip_id);
    check_mask(pair.target_image, pair.target_mask, pair.clip_id);

    SamplePair out;
    out.clip_id = pair.clip_id;
    out.target_index = pair.target_index;
    out.reference_image = pair.reference_image;
    out.target_image = pair.target_image;
    out.reference_mask = pair.reference_mask;
    out.target_mask = pair.target_mask;

    std::mt19937_64 rng(cfg.seed);
    augment_view(rng, cfg, out.reference_image, out.reference_mask);
    augment_view(rng, cfg, out.target_image, out.target_mask);
    return out;
}

SamplePair image_as_pretrain_sample(const fs::path& image_path, const fs::path& mask_path,
                                    const AugmentConfig& cfg, const Normalization& norm)
{
    SamplePair pair;
    pair.clip_id = image_path.stem().string();
    pair.reference_image = load_frame(image_path, norm);
    pair.target_image = pair.reference_image;
    cv::Mat mask = load_mask(mask_path);
    if (mask.size() != pair.reference_image.size())
        throw DatasetError("mask " + mask_path.string() + " (" + std::to_string(mask.cols) + "x" +
                           std::to_string(mask.rows) + ") does not match image " + image_path.string());
    pair.reference_mask = mask;
    pair.target_mask = mask;
    return augment_pair(pair, cfg);
}

std::vector<ImageRecord> read_image_manifest(const fs::path& manifest)
{
    std::ifstream in(manifest);
    if (!in)
        throw IoError("cannot read image manifest " + manifest.string());
    const fs::path base = manifest.parent_path();
    std::vector<ImageRecord> records;
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DatasetError(manifest.string() + ":" + std::to_string(line_no) + ": expected two tab-separated columns");
        fs::path image = line.substr(0, tab);
        fs::path mask = line.substr(tab + 1);
        if (image.is_relative())
            image = base / image;
        if (mask.is_relative())
            mask = base / mask;
        records.push_back({image, mask});
    }
    return records;
}

std::vector<int> training_targets(const ClipDescriptor& clip)
{
    std::vector<int> out;
    for (const auto& [index, path] : clip.annotation_paths)
        if (index > 0)
            out.push_back(index);
    return out;
}

std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& clip_id, int target_index, int epoch)
{
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : clip_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = splitmix64(global_seed);
    s = splitmix64(s ^ h);
    s = splitmix64(s ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(target_index)));
    s = splitmix64(s ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(epoch)));
    return s;
}

} // namespace pdnet
