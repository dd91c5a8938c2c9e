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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

namespace pdnet::synthetic {

/// Corpus of short clips showing an articulated figure: a rectangular torso
/// with a head that drifts across a static background, and a limb that swings
/// about the shoulder on its own schedule.
struct CorpusConfig {
    int clips = 5;
    int frames = 16;
    int width = 160;
    int height = 120;
    int annotation_interval = 5;
    int still_images = 8;
    std::uint64_t seed = 7;
};

struct FigureFrame {
    cv::Mat bgr;  // CV_8UC3
    cv::Mat mask; // CV_8UC1, foreground = 255
};

/// Renders frame `t` of clip `clip_index`; deterministic in (seed, clip_index, t).
FigureFrame render_figure_frame(const CorpusConfig& cfg, int clip_index, int t);

/// Writes JPEGImages/, Annotations/, ImageSets/{train,test}.txt and a still
/// image manifest (images.txt) under root. Both splits list every clip.
/// Returns the clip ids.
std::vector<std::string> write_corpus(const std::filesystem::path& root, const CorpusConfig& cfg);

/// Gray frame whose texture grows with `complexity` in [0, 1]: a smooth
/// gradient plus noise and random blocks whose amplitude and count scale with it.
cv::Mat texture_frame(std::uint64_t seed, int width, int height, double complexity);

} // namespace pdnet::synthetic
