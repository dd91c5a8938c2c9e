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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "pdnet/dataio.hpp"
#include "pdnet/metrics.hpp"
#include "pdnet/model.hpp"

namespace pdnet {

/// Foreground where probability > 0.5 (0.5 itself is background).
cv::Mat threshold_probability(const cv::Mat& probability);

struct FramePrediction {
    int frame_index = 0;
    cv::Mat probability;  // CV_32F at native frame size
    cv::Mat mask;         // CV_8U in {0, 1}
};

struct ClipInference {
    std::string clip_id;
    std::vector<FramePrediction> frames;
    double fps = 0.0;
    std::vector<std::string> warnings;
};

/// Part overlay for one frame: RGBA at native size, one palette color per
/// part (argmax of the saliency-gated part maps), transparent where the
/// saliency is below 0.5.
struct PartOverlay {
    int frame_index = 0;
    cv::Mat rgba;
};

/// Runs a trained network over clips with frame 0 as reference for every
/// target. Frames are resized to input_size for the forward pass and the
/// probabilities are resized back before thresholding.
class Predictor {
public:
    Predictor(PdNet model, int input_size, Normalization norm = {});

    /// Probability map at the native size of `target`.
    cv::Mat predict(const cv::Mat& reference, const cv::Mat& target);

    /// FPS covers resizing and the forward pass, not disk reads. Frames that
    /// cannot be read are skipped and listed in the warnings.
    ClipInference infer_clip(const ClipDescriptor& clip);

    std::vector<PartOverlay> visualize_parts(const ClipDescriptor& clip);

    PdNet& model() { return model_; }

private:
    torch::Tensor prepare(const cv::Mat& frame) const;

    PdNet model_;
    int input_size_;
    Normalization norm_;
};

/// Per-frame J and F on the annotated frames of one clip; `masks` maps frame
/// index to a predicted binary mask.
std::vector<metrics::FrameScore> score_clip(const ClipDescriptor& clip, const std::map<int, cv::Mat>& masks);

/// Infers every clip and scores its annotated frames.
metrics::BenchmarkReport evaluate_epoch(Predictor& predictor, const std::vector<ClipDescriptor>& clips);

/// Scores masks stored as `<dir>/<clip_id>/<frame stem>.png` (foreground 255).
metrics::BenchmarkReport evaluate_predictions(const std::vector<ClipDescriptor>& clips,
                                              const std::filesystem::path& predictions_dir);

/// Writes `<dir>/<clip_id>/<frame stem>.png` for every predicted frame.
void write_masks(const ClipInference& inference, const ClipDescriptor& clip, const std::filesystem::path& dir);

/// Distinct RGB colors for part visualizations.
const std::vector<cv::Vec3b>& part_palette();

} // namespace pdnet
