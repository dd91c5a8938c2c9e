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

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "pdnet/backbone.hpp"
#include "pdnet/fusion_head.hpp"
#include "pdnet/ipda.hpp"

namespace pdnet {

struct ModelConfig {
    BackboneConfig backbone;
    int compressed_channels = 128;
    int parts = 5;
    // false drops IPDA and fusion; the head then reads appearance features directly.
    bool use_ipda = true;
};

nlohmann::json to_json(const ModelConfig& cfg);

struct ModelOutput {
    AppearanceFeatures target;
    std::optional<AppearanceFeatures> reference;
    std::optional<IpdaOutput> ipda;
    std::optional<FusedFeatures> fused;
    torch::Tensor logits;       // [B, 1, H, W]
    torch::Tensor probability;  // sigmoid(logits)
};

/// Encoder -> IPDA -> spatiotemporal fusion -> prediction head.
class PdNetImpl : public torch::nn::Module {
public:
    explicit PdNetImpl(const ModelConfig& cfg);

    /// Frames are [B, 3, H, W]; masks, when given, are [B, 1, H, W] in {0, 1}
    /// and populate the ground-truth-gated part maps.
    ModelOutput forward(const torch::Tensor& target, const torch::Tensor& reference,
                        const std::optional<torch::Tensor>& target_mask = std::nullopt,
                        const std::optional<torch::Tensor>& reference_mask = std::nullopt);

    const ModelConfig& config() const { return cfg_; }

    SiameseEncoder encoder() const { return encoder_; }
    Ipda ipda() const { return ipda_; }
    SpatiotemporalFusion fusion() const { return fusion_; }
    PredictionHead head() const { return head_; }

    /// Residual trunk parameters.
    std::vector<torch::Tensor> backbone_parameters() const;
    /// Everything that is not in the trunk.
    std::vector<torch::Tensor> rest_parameters() const;

private:
    ModelConfig cfg_;
    SiameseEncoder encoder_{nullptr};
    Ipda ipda_{nullptr};
    SpatiotemporalFusion fusion_{nullptr};
    PredictionHead head_{nullptr};
};
TORCH_MODULE(PdNet);

} // namespace pdnet
