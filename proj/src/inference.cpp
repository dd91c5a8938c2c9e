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

#include "pdnet/inference.hpp"

#include <chrono>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pdnet/errors.hpp"
#include "pdnet/train_engine.hpp"

namespace pdnet {

cv::Mat threshold_probability(const cv::Mat& probability)
{
    if (probability.type() != CV_32F)
        throw std::invalid_argument("threshold_probability: expected CV_32F");
    cv::Mat mask = probability > 0.5f;
    return mask / 255;
}

Predictor::Predictor(PdNet model, int input_size, Normalization norm)
    : model_(std::move(model)), input_size_(input_size), norm_(norm)
{
    if (input_size_ <= 0)
        throw ConfigError("input_size must be positive");
}

torch::Tensor Predictor::prepare(const cv::Mat& frame) const
{
    cv::Mat resized;
    cv::resize(frame, resized, cv::Size(input_size_, input_size_), 0, 0, cv::INTER_LINEAR);
    return image_to_tensor(resized);
}

cv::Mat Predictor::predict(const cv::Mat& reference, const cv::Mat& target)
{
    torch::NoGradGuard no_grad;
    model_->eval();
    const auto out = model_->forward(prepare(target), prepare(reference));
    const auto prob = out.probability[0][0].contiguous();
    cv::Mat small(static_cast<int>(prob.size(0)), static_cast<int>(prob.size(1)), CV_32F, prob.data_ptr<float>());
    cv::Mat native;
    cv::resize(small, native, target.size(), 0, 0, cv::INTER_LINEAR);
    return native;
}

ClipInference Predictor::infer_clip(const ClipDescriptor& clip)
{
    using Clock = std::chrono::steady_clock;
    ClipInference result;
    result.clip_id = clip.clip_id;
    if (clip.frame_paths.empty())
        throw DatasetError("clip '" + clip.clip_id + "' has no frames");
    const cv::Mat reference = load_frame(clip.frame_paths.front(), norm_);

    Clock::duration busy{};
    for (std::size_t i = 0; i < clip.frame_paths.size(); ++i) {
        cv::Mat target;
        try {
            target = i == 0 ? reference : load_frame(clip.frame_paths[i], norm_);
        } catch (const IoError& e) {
            result.warnings.push_back(clip.clip_id + ": skipped frame " + std::to_string(i) + " (" + e.what() + ")");
            continue;
        }
        const auto t0 = Clock::now();
        FramePrediction frame;
        frame.frame_index = static_cast<int>(i);
        frame.probability = predict(reference, target);
        frame.mask = threshold_probability(frame.probability);
        busy += Clock::now() - t0;
        result.frames.push_back(std::move(frame));
    }
    const double seconds = std::chrono::duration<double>(busy).count();
    result.fps = seconds > 0.0 ? static_cast<double>(result.frames.size()) / seconds : 0.0;
    return result;
}

const std::vector<cv::Vec3b>& part_palette()
{
    static const std::vector<cv::Vec3b> palette{
        {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
        {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
    };
    return palette;
}

std::vector<PartOverlay> Predictor::visualize_parts(const ClipDescriptor& clip)
{
    if (!model_->config().use_ipda)
        throw ConfigError("part visualization needs a model with IPDA enabled");
    torch::NoGradGuard no_grad;
    model_->eval();
    const cv::Mat reference = load_frame(clip.frame_paths.front(), norm_);
    const auto& palette = part_palette();

    std::vector<PartOverlay> overlays;
    for (std::size_t i = 0; i < clip.frame_paths.size(); ++i) {
        const cv::Mat target = i == 0 ? reference : load_frame(clip.frame_paths[i], norm_);
        const auto out = model_->forward(prepare(target), prepare(reference));
        const auto& bundle = out.ipda->target;
        const std::vector<int64_t> size{target.rows, target.cols};
        const auto parts = resize_bilinear(bundle.masked_parts_pred, size)[0];
        const auto saliency = resize_bilinear(bundle.saliency, size)[0][0].contiguous();
        const auto label = parts.argmax(0).to(torch::kInt32).contiguous();

        PartOverlay overlay;
        overlay.frame_index = static_cast<int>(i);
        overlay.rgba = cv::Mat(target.rows, target.cols, CV_8UC4, cv::Scalar::all(0));
        const auto* lab = label.data_ptr<int32_t>();
        const auto* sal = saliency.data_ptr<float>();
        for (int y = 0; y < target.rows; ++y) {
            auto* row = overlay.rgba.ptr<cv::Vec4b>(y);
            for (int x = 0; x < target.cols; ++x) {
                const std::size_t k = static_cast<std::size_t>(y) * target.cols + x;
                if (sal[k] < 0.5f)
                    continue;
                const auto& c = palette[static_cast<std::size_t>(lab[k]) % palette.size()];
                row[x] = cv::Vec4b(c[0], c[1], c[2], 255);
            }
        }
        overlays.push_back(std::move(overlay));
    }
    return overlays;
}

std::vector<metrics::FrameScore> score_clip(const ClipDescriptor& clip, const std::map<int, cv::Mat>& masks)
{
    std::vector<metrics::FrameScore> scores;
    for (const auto& [index, gt_path] : clip.annotation_paths) {
        const cv::Mat gt = load_mask(gt_path);
        const auto it = masks.find(index);
        const cv::Mat pred = it != masks.end() ? it->second : cv::Mat::zeros(gt.size(), CV_8U);
        if (pred.size() != gt.size())
            throw DatasetError("clip '" + clip.clip_id + "' frame " + std::to_string(index) +
                               ": prediction size differs from annotation");
        scores.push_back({clip.clip_id, index, metrics::jaccard(pred, gt), metrics::contour_f(pred, gt)});
    }
    return scores;
}

metrics::BenchmarkReport evaluate_epoch(Predictor& predictor, const std::vector<ClipDescriptor>& clips)
{
    std::vector<metrics::FrameScore> all;
    std::vector<std::string> warnings;
    double frames = 0.0;
    double seconds = 0.0;
    for (const auto& clip : clips) {
        const auto inference = predictor.infer_clip(clip);
        std::map<int, cv::Mat> masks;
        for (const auto& f : inference.frames)
            masks.emplace(f.frame_index, f.mask);
        const auto scores = score_clip(clip, masks);
        all.insert(all.end(), scores.begin(), scores.end());
        warnings.insert(warnings.end(), inference.warnings.begin(), inference.warnings.end());
        frames += static_cast<double>(inference.frames.size());
        if (inference.fps > 0.0)
            seconds += static_cast<double>(inference.frames.size()) / inference.fps;
    }
    auto report = metrics::aggregate(all);
    report.fps = seconds > 0.0 ? frames / seconds : 0.0;
    report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
    return report;
}

namespace {

std::filesystem::path mask_path(const std::filesystem::path& dir, const ClipDescriptor& clip, int index)
{
    return dir / clip.clip_id / (clip.frame_paths.at(static_cast<std::size_t>(index)).stem().string() + ".png");
}

} // namespace

metrics::BenchmarkReport evaluate_predictions(const std::vector<ClipDescriptor>& clips,
                                              const std::filesystem::path& predictions_dir)
{
    std::vector<metrics::FrameScore> all;
    std::vector<std::string> warnings;
    for (const auto& clip : clips) {
        std::map<int, cv::Mat> masks;
        for (const auto& [index, gt_path] : clip.annotation_paths) {
            const auto path = mask_path(predictions_dir, clip, index);
            if (!std::filesystem::exists(path)) {
                warnings.push_back("missing prediction " + path.string() + " scored as empty");
                continue;
            }
            masks.emplace(index, load_mask(path));
        }
        const auto scores = score_clip(clip, masks);
        all.insert(all.end(), scores.begin(), scores.end());
    }
    auto report = metrics::aggregate(all);
    report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
    return report;
}

void write_masks(const ClipInference& inference, const ClipDescriptor& clip, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir / clip.clip_id);
    for (const auto& frame : inference.frames) {
        const auto path = mask_path(dir, clip, frame.frame_index);
        if (!cv::imwrite(path.string(), frame.mask * 255))
            throw IoError("cannot write " + path.string());
    }
}

} // namespace pdnet
