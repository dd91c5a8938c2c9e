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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

namespace pdnet {

struct ClipDescriptor;

namespace metrics {

/// Region similarity: |pred ∩ gt| / |pred ∪ gt| over CV_8U masks where any
/// nonzero value is foreground. Two empty masks score 1.
double jaccard(const cv::Mat& pred, const cv::Mat& gt);

/// Boundary tolerance used when contour_f is called without one:
/// ceil(0.008 * image diagonal).
int default_boundary_tolerance(cv::Size size);

/// One-pixel boundary of a mask: foreground pixels with at least one
/// 4-neighbour in the background. Pixels outside the raster count as
/// background, so foreground touching the border is boundary.
cv::Mat mask_boundary(const cv::Mat& mask);

/// Boundary F-measure. A boundary pixel of one mask is matched when a boundary
/// pixel of the other lies within `tolerance_px` (Euclidean). Pass a negative
/// tolerance to use default_boundary_tolerance.
double contour_f(const cv::Mat& pred, const cv::Mat& gt, int tolerance_px = -1);

struct FrameScore {
    std::string clip_id;
    int frame_index = 0;
    double j = 0.0;
    double f = 0.0;
};

struct MetricStats {
    double mean = 0.0;
    double recall = 0.0;
    double decay = 0.0;
};

struct ClipBreakdown {
    std::string clip_id;
    std::size_t frames = 0;
    double j_mean = 0.0;
    double f_mean = 0.0;
    double j_decay = 0.0;
    double f_decay = 0.0;
    bool decay_valid = false;
};

struct BenchmarkReport {
    MetricStats j;
    MetricStats f;
    double jf_mean = 0.0;
    std::vector<ClipBreakdown> clips;
    double fps = 0.0;
    std::vector<std::string> warnings;
};

inline constexpr double kRecallThreshold = 0.5;
inline constexpr std::size_t kMinFramesForDecay = 4;

/// Splits n temporally ordered items into four quarters. Quarter sizes differ
/// by at most one and extra items go to the middle quarters first. Returns
/// the five boundaries [q0, q1, q2, q3, n].
std::array<std::size_t, 5> quartile_bounds(std::size_t n);

/// Mean of the first quarter minus mean of the last quarter.
double decay(std::span<const double> ordered_scores);

/// Pools per-frame scores into DAVIS-style mean / recall / decay statistics.
/// Frames of one clip are ordered by frame_index before computing decay;
/// clips with fewer than four scored frames are left out of decay and noted
/// in the report warnings.
BenchmarkReport aggregate(std::span<const FrameScore> scores);

/// Table layout: J&F Mean, J Mean/Recall/Decay, F Mean/Recall/Decay, FPS;
/// values in percent with one decimal.
std::string format_table(const BenchmarkReport& report, const std::string& method = "PDNet");

nlohmann::json to_json(const BenchmarkReport& report);

// ---------------------------------------------------------------------------
// Scene complexity

struct GlcmOffset {
    int dx = 0;
    int dy = 0;
};

struct GlcmConfig {
    int levels = 32;
    std::vector<GlcmOffset> offsets{{1, 0}, {0, 1}, {1, 1}, {1, -1}};
    // Frames are rescaled to this height before analysis; 0 keeps native size.
    int analysis_height = 480;
};

/// Shannon entropy (bits) of the normalized, symmetric gray-level
/// co-occurrence matrix of an 8-bit single-channel image.
double glcm_entropy(const cv::Mat& gray, int levels, std::span<const GlcmOffset> offsets);

struct ClipComplexity {
    std::string clip_id;
    double mean_entropy = 0.0;
    std::vector<double> frame_entropies;
};

/// Luminance of an 8-bit BGR or gray frame, rescaled per cfg.analysis_height.
cv::Mat analysis_luminance(const cv::Mat& frame, const GlcmConfig& cfg);

/// Average GLCM entropy over every readable frame of a clip.
ClipComplexity clip_complexity(const ClipDescriptor& clip, const GlcmConfig& cfg = {});

struct HistogramBin {
    double center = 0.0;
    double frequency = 0.0;
};

/// Fixed-width histogram of per-clip entropies; frequencies sum to 1.
std::vector<HistogramBin> entropy_histogram(std::span<const double> values, double bin_width = 0.25);

void write_histogram_csv(const std::filesystem::path& path, std::span<const HistogramBin> bins);

nlohmann::json to_json(const GlcmConfig& cfg);

} // namespace metrics
} // namespace pdnet
