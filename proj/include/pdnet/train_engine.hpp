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
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "pdnet/config.hpp"
#include "pdnet/dataio.hpp"
#include "pdnet/losses.hpp"
#include "pdnet/metrics.hpp"
#include "pdnet/model.hpp"

namespace pdnet {

/// Polynomial decay: max_lr * (1 - iter / total_iters)^power.
double schedule_lr(std::int64_t iter, std::int64_t total_iters, double max_lr, double power = 0.9);

enum class BatchKind { Image, Video };

const char* to_string(BatchKind kind);

struct AlternationSchedule {
    int image_iters = 1;
    int video_iters = 2;

    /// Kind of the step-th batch of the stream (image batches first in each cycle).
    BatchKind kind_at(std::int64_t step) const;
};

/// Draws indices in [0, size) without replacement, reshuffling at every pass.
/// The permutation of pass e depends only on (seed, e).
class CyclicSampler {
public:
    CyclicSampler(std::size_t size, std::uint64_t seed);

    std::size_t next();
    int pass() const { return pass_; }
    std::size_t size() const { return order_.size(); }

private:
    void reshuffle();

    std::uint64_t seed_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    int pass_ = 0;
};

struct TaggedBatch {
    BatchKind kind = BatchKind::Video;
    std::vector<SamplePair> pairs;
};

using BatchSource = std::function<std::vector<SamplePair>()>;

/// Interleaves two endless batch sources: image_iters image batches, then
/// video_iters video batches, repeated.
class AlternatingStream {
public:
    AlternatingStream(BatchSource images, BatchSource videos, AlternationSchedule schedule);

    TaggedBatch next();
    std::int64_t step() const { return step_; }

private:
    BatchSource images_;
    BatchSource videos_;
    AlternationSchedule schedule_;
    std::int64_t step_ = 0;
};

/// Augmented (frame 0, annotated frame) pairs drawn from a clip set.
class VideoPairSource {
public:
    VideoPairSource(std::vector<ClipDescriptor> clips, const TrainConfig& cfg);

    std::vector<SamplePair> next_batch();
    std::size_t pairs() const { return targets_.size(); }
    int epoch() const { return sampler_.pass(); }

private:
    std::vector<ClipDescriptor> clips_;
    std::vector<std::pair<std::size_t, int>> targets_;
    TrainConfig cfg_;
    CyclicSampler sampler_;
};

/// Two-view pairs drawn from an image manifest.
class ImagePairSource {
public:
    ImagePairSource(std::vector<ImageRecord> records, const TrainConfig& cfg);

    std::vector<SamplePair> next_batch();
    std::size_t size() const { return records_.size(); }

private:
    std::vector<ImageRecord> records_;
    TrainConfig cfg_;
    CyclicSampler sampler_;
};

/// Stacked tensors of a batch of pairs: frames [B, 3, S, S], masks [B, 1, S, S].
struct BatchTensors {
    torch::Tensor target;
    torch::Tensor reference;
    std::optional<torch::Tensor> target_mask;
    std::optional<torch::Tensor> reference_mask;
};

BatchTensors to_tensors(const std::vector<SamplePair>& pairs);

/// HxWx3 float raster -> [1, 3, H, W] tensor (copy).
torch::Tensor image_to_tensor(const cv::Mat& image);

struct TrainSummary {
    std::int64_t steps = 0;
    std::int64_t video_steps = 0;
    std::int64_t image_steps = 0;
    int epochs_completed = 0;
    std::filesystem::path final_checkpoint;
    std::vector<losses::LossReport> history;
};

/// Owns the network, the semantic-loss state and the optimizer. Parameters
/// live in two SGD groups: the residual trunk and everything else.
class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    /// Full forward and one momentum-SGD update on a batch of annotated pairs.
    losses::LossReport train_step_video(const std::vector<SamplePair>& batch);

    /// Encoder and auxiliary heads only; IPDA, fusion and the final head are
    /// left out of the graph and therefore untouched.
    losses::LossReport train_step_image(const std::vector<SamplePair>& batch);

    /// Sets both group learning rates for `kind` at the current step and
    /// applies the gradients currently held by the parameters.
    void apply_update(BatchKind kind);

    /// Learning rates (backbone group, rest group) for `kind` at the current step.
    std::pair<double, double> learning_rates(BatchKind kind) const;

    /// Total steps the polynomial schedule decays over.
    void set_total_steps(std::int64_t total) { total_steps_ = std::max<std::int64_t>(1, total); }
    std::int64_t total_steps() const { return total_steps_; }
    std::int64_t step() const { return step_; }
    std::int64_t optimizer_updates() const { return updates_; }

    /// Trains on `data_root` (and `image_manifest` when set) per the config,
    /// writing checkpoints and a JSON-lines log under output_dir.
    TrainSummary fit(const std::filesystem::path& output_dir, std::ostream* console = nullptr);

    void save(const std::filesystem::path& path, const nlohmann::json& metric_history = nlohmann::json::array());
    void load(const std::filesystem::path& path);

    PdNet& model() { return model_; }
    losses::PartSemanticBasis& basis() { return basis_; }
    losses::SemanticExtractor& extractor() { return extractor_; }
    torch::optim::SGD& optimizer() { return *optimizer_; }
    const TrainConfig& config() const { return cfg_; }
    int epoch() const { return epoch_; }

private:
    void check_finite(const torch::Tensor& loss, const std::vector<SamplePair>& batch, BatchKind kind,
                      const losses::LossComponents& parts) const;
    torch::Tensor aux_loss(const AppearanceFeatures& features, const torch::Tensor& mask,
                           const std::vector<int64_t>& size) const;

    TrainConfig cfg_;
    PdNet model_{nullptr};
    losses::SemanticExtractor extractor_{nullptr};
    losses::PartSemanticBasis basis_{nullptr};
    std::unique_ptr<torch::optim::SGD> optimizer_;
    std::int64_t step_ = 0;
    std::int64_t total_steps_ = 1;
    std::int64_t updates_ = 0;
    int epoch_ = 0;
};

/// Steps needed for `epochs` passes over `video_pairs` pairs, including the
/// image steps interleaved by the schedule.
std::int64_t planned_steps(const TrainConfig& cfg, std::size_t video_pairs, bool have_images);

} // namespace pdnet
