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

#include <optional>
#include <vector>

#include <torch/torch.h>

#include "pdnet/backbone.hpp"

namespace pdnet {

/// Part decoupling result for one frame. All maps are [B, *, h, w] at half
/// the appearance-feature resolution.
struct PartBundle {
    torch::Tensor saliency;                          // [B, 1, h, w], in (0, 1)
    torch::Tensor saliency_logits;                   // pre-sigmoid saliency
    torch::Tensor part_assign;                       // [B, p, h, w], sums to 1 over p
    std::vector<torch::Tensor> part_feats;           // p x [B, c', h, w]
    torch::Tensor masked_parts_pred;                 // saliency * part_assign
    std::optional<torch::Tensor> masked_parts_gt;    // downsampled mask * part_assign

    int parts() const { return static_cast<int>(part_feats.size()); }
};

struct MotionFeatures {
    std::vector<torch::Tensor> per_part;  // p x [B, c', h, w]
    torch::Tensor assembled;              // [B, c', h, w]
};

struct IpdaConfig {
    int in_channels = 256;
    int compressed_channels = 128;
    int parts = 5;
};

struct AttentionResult {
    torch::Tensor output;   // [B, c', h_t, w_t]
    torch::Tensor weights;  // [B, h_t*w_t, h_ref*w_ref], rows sum to 1
};

/// Asymmetric single-head cross-attention: queries from the target part
/// features, keys and values from the reference part features.
class PartCrossAttentionImpl : public torch::nn::Module {
public:
    explicit PartCrossAttentionImpl(int channels);

    AttentionResult forward(const torch::Tensor& target, const torch::Tensor& reference);

    torch::nn::Conv2d query{nullptr};
    torch::nn::Conv2d key{nullptr};
    torch::nn::Conv2d value{nullptr};
};
TORCH_MODULE(PartCrossAttention);

struct IpdaOutput {
    MotionFeatures motion;
    PartBundle target;
    PartBundle reference;
};

class IpdaImpl : public torch::nn::Module {
public:
    explicit IpdaImpl(const IpdaConfig& cfg);

    /// Strided 3x3 (downsample by 2) followed by a channel-compressing 1x1.
    torch::Tensor compress_features(const torch::Tensor& appearance);

    /// Sigmoid saliency map [B, 1, h, w].
    torch::Tensor predict_saliency(const torch::Tensor& compressed);
    torch::Tensor saliency_logits(const torch::Tensor& compressed);

    /// p part feature maps and their softmax-normalized assignment [B, p, h, w].
    /// The assignment head is one operator shared by every branch.
    std::pair<std::vector<torch::Tensor>, torch::Tensor> decouple_parts(const torch::Tensor& compressed);

    /// Decoupling stage for one frame; `mask` is the full-resolution ground
    /// truth [B, 1, H, W] when available.
    PartBundle decouple_frame(const torch::Tensor& appearance, const std::optional<torch::Tensor>& mask);

    AttentionResult part_cross_attention(int part, const torch::Tensor& target, const torch::Tensor& reference);

    IpdaOutput forward(const AppearanceFeatures& target, const AppearanceFeatures& reference,
                       const std::optional<torch::Tensor>& target_mask = std::nullopt,
                       const std::optional<torch::Tensor>& reference_mask = std::nullopt);

    /// Same composition on raw appearance tensors.
    IpdaOutput forward(const torch::Tensor& target, const torch::Tensor& reference,
                       const std::optional<torch::Tensor>& target_mask = std::nullopt,
                       const std::optional<torch::Tensor>& reference_mask = std::nullopt);

    const IpdaConfig& config() const { return cfg_; }

    torch::nn::ModuleList part_branches() const { return branches_; }
    torch::nn::Conv2d assign_head() const { return assign_head_; }
    PartCrossAttention attention(int part) const;

private:
    IpdaConfig cfg_;
    torch::nn::Conv2d down_{nullptr};
    torch::nn::Conv2d squeeze_{nullptr};
    torch::nn::Conv2d saliency_hidden_{nullptr};
    torch::nn::Conv2d saliency_out_{nullptr};
    torch::nn::ModuleList branches_;
    torch::nn::Conv2d assign_head_{nullptr};
    torch::nn::ModuleList attentions_;
};
TORCH_MODULE(Ipda);

/// output[:, k] = gate * assignment[:, k]. The gate is [B, 1, h, w] and must
/// match the assignment's spatial size.
torch::Tensor mask_parts(const torch::Tensor& gate, const torch::Tensor& assignment);

/// Area-averaged downsampling of a [B, 1, H, W] mask to (h, w); values stay
/// soft in [0, 1].
torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t h, int64_t w);

/// M = sum_k Q_k * R_k with R_k = masked_parts[:, k].
torch::Tensor assemble_motion(const std::vector<torch::Tensor>& per_part, const torch::Tensor& masked_parts);

} // namespace pdnet
