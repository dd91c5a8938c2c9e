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
#include <string>
#include <vector>

#include <torch/torch.h>

namespace pdnet {

/// A feature tensor [B, C, H', W'] with its downsampling factor relative to
/// the network input; H' = ceil(H / stride).
struct FeatureMap {
    torch::Tensor data;
    int stride = 1;
};

/// Encoder output for one frame.
struct AppearanceFeatures {
    FeatureMap fused;                    // pyramid output used downstream
    std::vector<FeatureMap> pyramid;     // deep to shallow (strides 32, 16, 8, 4)
    std::vector<FeatureMap> aux_logits;  // one single-channel map per pyramid level
};

struct BackboneConfig {
    // 10, 18 and 34 use basic blocks, 50 and 101 bottlenecks.
    int depth = 50;
    int base_width = 64;
    int fpn_width = 256;
};

/// Output channels of stage i (0..3) for a config.
int stage_channels(const BackboneConfig& cfg, int stage);

// Residual trunk with torchvision parameter names (conv1, bn1, layer1..layer4)
// so converted classification weights load directly.
class ResNetImpl : public torch::nn::Module {
public:
    explicit ResNetImpl(const BackboneConfig& cfg, int num_stages = 4);

    /// Stage outputs at strides 4, 8, 16, 32 (only num_stages of them).
    std::vector<torch::Tensor> forward(const torch::Tensor& x);

    const BackboneConfig& config() const { return cfg_; }

private:
    BackboneConfig cfg_;
    torch::nn::Conv2d conv1{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr};
    torch::nn::MaxPool2d maxpool{nullptr};
    std::vector<torch::nn::Sequential> layers_;
};
TORCH_MODULE(ResNet);

/// Shared-weight encoder: residual trunk, top-down pyramid fusion and one
/// auxiliary 1-channel head per pyramid level.
class SiameseEncoderImpl : public torch::nn::Module {
public:
    explicit SiameseEncoderImpl(const BackboneConfig& cfg);

    AppearanceFeatures encode(const torch::Tensor& frame);

    /// Target and reference through the same parameters. In training mode
    /// both frames share one batch so normalization statistics are joint; in
    /// evaluation mode each frame runs on its own.
    std::pair<AppearanceFeatures, AppearanceFeatures> encode_pair(const torch::Tensor& target,
                                                                  const torch::Tensor& reference);

    ResNet trunk() const { return trunk_; }
    int out_channels() const { return cfg_.fpn_width; }
    const BackboneConfig& config() const { return cfg_; }

    /// Trunk parameters only (the group that gets the backbone learning rate).
    std::vector<torch::Tensor> trunk_parameters() const;

private:
    BackboneConfig cfg_;
    ResNet trunk_{nullptr};
    torch::nn::ModuleList lateral_;
    torch::nn::ModuleList smooth_;
    torch::nn::ModuleList aux_heads_;
};
TORCH_MODULE(SiameseEncoder);

/// Loads a parameter archive keyed by torchvision names (e.g.
/// "layer1.0.conv1.weight") into a trunk. Missing keys and shape mismatches
/// are errors; extra keys such as the classification head are ignored.
void load_trunk_weights(ResNet& trunk, const std::filesystem::path& archive);

/// Bilinear resize of [B, C, H, W] to `size` (align_corners = false).
torch::Tensor resize_bilinear(const torch::Tensor& x, std::vector<int64_t> size);

} // namespace pdnet
