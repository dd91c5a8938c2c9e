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

#include "pdnet/fusion_head.hpp"

#include <stdexcept>

#include "pdnet/backbone.hpp"

namespace pdnet {

namespace nn = torch::nn;

SpatiotemporalFusionImpl::SpatiotemporalFusionImpl(int appearance_channels, int motion_channels)
    : expand(register_module("expand", nn::Conv2d(nn::Conv2dOptions(motion_channels, appearance_channels, 1)))),
      gate(register_module("gate", nn::Conv2d(nn::Conv2dOptions(appearance_channels, appearance_channels, 1)))),
      refine1(register_module("refine1",
                              nn::Conv2d(nn::Conv2dOptions(appearance_channels, appearance_channels, 3).padding(1)))),
      refine2(register_module("refine2",
                              nn::Conv2d(nn::Conv2dOptions(appearance_channels, appearance_channels, 3).padding(1))))
{
}

FusedFeatures SpatiotemporalFusionImpl::forward(const torch::Tensor& appearance, const torch::Tensor& motion)
{
    const auto up = resize_bilinear(motion, {appearance.size(2), appearance.size(3)});
    const auto expanded = expand(up);
    if (expanded.sizes() != appearance.sizes())
        throw std::logic_error("spatiotemporal_fuse: expanded motion does not match appearance features");
    const auto gated = gate(expanded) * appearance;
    auto h = torch::relu(refine1(appearance + expanded + gated));
    return {torch::relu(refine2(h))};
}

PredictionHeadImpl::PredictionHeadImpl(int channels)
    : hidden(register_module("hidden", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)))),
      out(register_module("out", nn::Conv2d(nn::Conv2dOptions(channels, 1, 1))))
{
}

torch::Tensor PredictionHeadImpl::logits(const torch::Tensor& features, std::vector<int64_t> out_size)
{
    return resize_bilinear(out(torch::relu(hidden(features))), std::move(out_size));
}

torch::Tensor PredictionHeadImpl::predict_mask(const FusedFeatures& fused, std::vector<int64_t> out_size)
{
    return torch::sigmoid(logits(fused.data, std::move(out_size)));
}

} // namespace pdnet
