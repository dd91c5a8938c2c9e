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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

namespace pdnet {

namespace fs = std::filesystem;

enum class Split { Train, Test };

std::string to_string(Split split);

/// One video clip laid out DAVIS-style. Frame indices are positions in the
/// sorted frame list; annotations are keyed by the index of the frame with
/// the same file stem.
struct ClipDescriptor {
    std::string clip_id;
    std::vector<fs::path> frame_paths;
    std::map<int, fs::path> annotation_paths;
    double fps = 30.0;

    int size() const { return static_cast<int>(frame_paths.size()); }
    bool is_annotated(int index) const { return annotation_paths.count(index) > 0; }
};

/// Per-channel normalization applied to RGB values in [0, 1].
struct Normalization {
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

/// Reference/target unit fed to the network. Images are CV_32FC3 in RGB
/// order, normalized; masks are CV_8U with values in {0, 1}.
struct SamplePair {
    cv::Mat reference_image;
    cv::Mat target_image;
    std::optional<cv::Mat> reference_mask;
    std::optional<cv::Mat> target_mask;
    std::string clip_id;
    int target_index = 0;
};

struct AugmentConfig {
    std::pair<double, double> crop_scale_range{1.0, 1.0};
    double hflip_probability = 0.0;
    int output_size = 480;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Lists clips named in `<root>/ImageSets/<split>.txt`, frames from
/// `<root>/JPEGImages/<clip>/` and masks from `<root>/Annotations/<clip>/`.
/// Output is sorted by clip id.
std::vector<ClipDescriptor> scan_dataset(const fs::path& root, Split split);

cv::Mat binarize_mask(const cv::Mat& raster);

/// Loads an RGB frame as normalized CV_32FC3.
cv::Mat load_frame(const fs::path& path, const Normalization& norm = {});
cv::Mat load_mask(const fs::path& path);

/// Frame 0 is always the reference.
SamplePair make_pair(const ClipDescriptor& clip, int target_index, const Normalization& norm = {});

/// Random crop, horizontal flip, then resize to output_size². Each image of
/// the pair draws its own transform and shares it with its own mask.
SamplePair augment_pair(const SamplePair& pair, const AugmentConfig& cfg);

/// Two augmented views of one still image, used as (reference, target).
SamplePair image_as_pretrain_sample(const fs::path& image_path, const fs::path& mask_path,
                                    const AugmentConfig& cfg, const Normalization& norm = {});

struct ImageRecord {
    fs::path image_path;
    fs::path mask_path;
};

/// Reads a `image_path<TAB>mask_path` manifest. Relative paths resolve
/// against the manifest's directory.
std::vector<ImageRecord> read_image_manifest(const fs::path& manifest);

/// Annotated frames usable as training targets (index > 0).
std::vector<int> training_targets(const ClipDescriptor& clip);

/// Stable per-sample seed from (global seed, clip, target index, epoch).
std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& clip_id, int target_index,
                          int epoch);

} // namespace pdnet
