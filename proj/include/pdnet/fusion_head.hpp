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

#include <vector>

#include <torch/torch.h>

namespace pdnet {

/// Fused spatiotemporal features at the appearance-feature resolution.
struct FusedFeatures {
    torch::Tensor data;
};

/// Appearance/motion fusion: the motion map is upsampled to the appearance
/// resolution and expanded by a 1x1; a second 1x1 on the expanded map gates
/// the appearance features; the three terms are summed and refined by two
/// 3x3 convolutions.
class SpatiotemporalFusionImpl : public torch::nn::Module {
public:
    SpatiotemporalFusionImpl(int appearance_channels, int motion_channels);

    FusedFeatures forward(const torch::Tensor& appearance, const torch::Tensor& motion);

    torch::nn::Conv2d expand{nullptr};
    torch::nn::Conv2d gate{nullptr};
    torch::nn::Conv2d refine1{nullptr};
    torch::nn::Conv2d refine2{nullptr};
};
TORCH_MODULE(SpatiotemporalFusion);

/// 3x3 + ReLU + 1-channel 1x1, upsampled bilinearly to the requested size.
class PredictionHeadImpl : public torch::nn::Module {
public:
    explicit PredictionHeadImpl(int channels);

    /// Logits at `out_size`.
    torch::Tensor logits(const torch::Tensor& features, std::vector<int64_t> out_size);

    /// Sigmoid probabilities at `out_size`.
    torch::Tensor predict_mask(const FusedFeatures& fused, std::vector<int64_t> out_size);

    torch::nn::Conv2d hidden{nullptr};
    torch::nn::Conv2d out{nullptr};
};
TORCH_MODULE(PredictionHead);

} // namespace pdnet
