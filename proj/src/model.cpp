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

#include "pdnet/model.hpp"

#include <unordered_set>

namespace pdnet {

nlohmann::json to_json(const ModelConfig& cfg)
{
    return {{"backbone_depth", cfg.backbone.depth},
            {"backbone_width", cfg.backbone.base_width},
            {"fpn_width", cfg.backbone.fpn_width},
            {"compressed_channels", cfg.compressed_channels},
            {"parts_p", cfg.parts},
            {"use_ipda", cfg.use_ipda}};
}

PdNetImpl::PdNetImpl(const ModelConfig& cfg) : cfg_(cfg)
{
    encoder_ = register_module("encoder", SiameseEncoder(cfg.backbone));
    const int width = cfg.backbone.fpn_width;
    if (cfg.use_ipda) {
        ipda_ = register_module("ipda", Ipda(IpdaConfig{width, cfg.compressed_channels, cfg.parts}));
        fusion_ = register_module("fusion", SpatiotemporalFusion(width, cfg.compressed_channels));
    }
    head_ = register_module("head", PredictionHead(width));
}

ModelOutput PdNetImpl::forward(const torch::Tensor& target, const torch::Tensor& reference,
                               const std::optional<torch::Tensor>& target_mask,
                               const std::optional<torch::Tensor>& reference_mask)
{
    const std::vector<int64_t> out_size{target.size(2), target.size(3)};
    ModelOutput out;
    if (!cfg_.use_ipda) {
        out.target = encoder_->encode(target);
        out.logits = head_->logits(out.target.fused.data, out_size);
        out.probability = torch::sigmoid(out.logits);
        return out;
    }
    auto [a_t, a_ref] = encoder_->encode_pair(target, reference);
    out.ipda = ipda_->forward(a_t, a_ref, target_mask, reference_mask);
    out.fused = fusion_->forward(a_t.fused.data, out.ipda->motion.assembled);
    out.logits = head_->logits(out.fused->data, out_size);
    out.probability = torch::sigmoid(out.logits);
    out.target = std::move(a_t);
    out.reference = std::move(a_ref);
    return out;
}

std::vector<torch::Tensor> PdNetImpl::backbone_parameters() const
{
    return encoder_->trunk_parameters();
}

std::vector<torch::Tensor> PdNetImpl::rest_parameters() const
{
    std::unordered_set<const void*> trunk;
    for (const auto& p : backbone_parameters())
        trunk.insert(p.unsafeGetTensorImpl());
    std::vector<torch::Tensor> rest;
    for (const auto& p : parameters())
        if (!trunk.count(p.unsafeGetTensorImpl()))
            rest.push_back(p);
    return rest;
}

} // namespace pdnet
