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

#include "pdnet/ipda.hpp"

#include <cmath>
#include <stdexcept>

#include "pdnet/errors.hpp"

namespace pdnet {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int k, int stride = 1)
{
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

std::string shape_str(const torch::Tensor& t)
{
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i)
        s += (i ? ", " : "") + std::to_string(t.size(i));
    return s + "]";
}

} // namespace

PartCrossAttentionImpl::PartCrossAttentionImpl(int channels)
    : query(register_module("query", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)))),
      key(register_module("key", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)))),
      value(register_module("value", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1))))
{
}

AttentionResult PartCrossAttentionImpl::forward(const torch::Tensor& target, const torch::Tensor& reference)
{
    if (target.size(1) != reference.size(1))
        throw std::invalid_argument("part_cross_attention: channel counts differ");
    const int64_t b = target.size(0);
    const int64_t c = query->options.out_channels();
    const int64_t ht = target.size(2);
    const int64_t wt = target.size(3);

    const auto q = query(target).flatten(2).transpose(1, 2);  // [B, Nt, c]
    const auto k = key(reference).flatten(2);                 // [B, c, Nr]
    const auto v = value(reference).flatten(2);               // [B, c, Nr]
    const auto logits = torch::bmm(q, k) / std::sqrt(static_cast<double>(c));
    auto weights = torch::softmax(logits, -1);                // [B, Nt, Nr]
    auto out = torch::bmm(v, weights.transpose(1, 2)).view({b, c, ht, wt});
    return {out, weights};
}

IpdaImpl::IpdaImpl(const IpdaConfig& cfg) : cfg_(cfg)
{
    if (cfg.parts < 1)
        throw ConfigError("ipda: parts must be >= 1");
    if (cfg.in_channels < 1 || cfg.compressed_channels < 1)
        throw ConfigError("ipda: channel widths must be positive");
    const int c = cfg.compressed_channels;
    down_ = register_module("down", conv(cfg.in_channels, cfg.in_channels, 3, 2));
    squeeze_ = register_module("squeeze", conv(cfg.in_channels, c, 1));
    saliency_hidden_ = register_module("saliency_hidden", conv(c, c, 3));
    saliency_out_ = register_module("saliency_out", conv(c, 1, 1));
    for (int k = 0; k < cfg.parts; ++k) {
        branches_->push_back(nn::Sequential(conv(c, c, 1), nn::ReLU(), conv(c, c, 3), nn::ReLU(), conv(c, c, 1)));
        attentions_->push_back(PartCrossAttention(c));
    }
    register_module("branches", branches_);
    assign_head_ = register_module("assign_head", conv(c, 1, 1));
    register_module("attentions", attentions_);
}

torch::Tensor IpdaImpl::compress_features(const torch::Tensor& appearance)
{
    if (appearance.dim() != 4 || appearance.size(1) != cfg_.in_channels)
        throw std::invalid_argument("compress_features: expected [B, " + std::to_string(cfg_.in_channels) +
                                    ", H, W], got " + shape_str(appearance));
    return squeeze_(torch::relu(down_(appearance)));
}

torch::Tensor IpdaImpl::saliency_logits(const torch::Tensor& compressed)
{
    return saliency_out_(torch::relu(saliency_hidden_(compressed)));
}

torch::Tensor IpdaImpl::predict_saliency(const torch::Tensor& compressed)
{
    return torch::sigmoid(saliency_logits(compressed));
}

std::pair<std::vector<torch::Tensor>, torch::Tensor> IpdaImpl::decouple_parts(const torch::Tensor& compressed)
{
    std::vector<torch::Tensor> feats;
    std::vector<torch::Tensor> logits;
    feats.reserve(branches_->size());
    for (const auto& branch : *branches_) {
        auto p = branch->as<nn::Sequential>()->forward(compressed);
        logits.push_back(assign_head_(p));
        feats.push_back(std::move(p));
    }
    auto assign = torch::softmax(torch::cat(logits, 1), 1);
    return {std::move(feats), std::move(assign)};
}

PartBundle IpdaImpl::decouple_frame(const torch::Tensor& appearance, const std::optional<torch::Tensor>& mask)
{
    const auto compressed = compress_features(appearance);
    PartBundle bundle;
    bundle.saliency_logits = saliency_logits(compressed);
    bundle.saliency = torch::sigmoid(bundle.saliency_logits);
    std::tie(bundle.part_feats, bundle.part_assign) = decouple_parts(compressed);
    bundle.masked_parts_pred = mask_parts(bundle.saliency, bundle.part_assign);
    if (mask) {
        const auto g = downsample_mask(*mask, bundle.part_assign.size(2), bundle.part_assign.size(3));
        bundle.masked_parts_gt = mask_parts(g, bundle.part_assign);
    }
    return bundle;
}

PartCrossAttention IpdaImpl::attention(int part) const
{
    return PartCrossAttention(attentions_->ptr<PartCrossAttentionImpl>(static_cast<std::size_t>(part)));
}

AttentionResult IpdaImpl::part_cross_attention(int part, const torch::Tensor& target, const torch::Tensor& reference)
{
    if (part < 0 || part >= cfg_.parts)
        throw std::invalid_argument("part_cross_attention: part index out of range");
    return attention(part)->forward(target, reference);
}

IpdaOutput IpdaImpl::forward(const AppearanceFeatures& target, const AppearanceFeatures& reference,
                             const std::optional<torch::Tensor>& target_mask,
                             const std::optional<torch::Tensor>& reference_mask)
{
    return forward(target.fused.data, reference.fused.data, target_mask, reference_mask);
}

IpdaOutput IpdaImpl::forward(const torch::Tensor& target, const torch::Tensor& reference,
                             const std::optional<torch::Tensor>& target_mask,
                             const std::optional<torch::Tensor>& reference_mask)
{
    IpdaOutput out;
    out.target = decouple_frame(target, target_mask);
    out.reference = decouple_frame(reference, reference_mask);
    for (int k = 0; k < cfg_.parts; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        out.motion.per_part.push_back(
            part_cross_attention(k, out.target.part_feats[idx], out.reference.part_feats[idx]).output);
    }
    out.motion.assembled = assemble_motion(out.motion.per_part, out.target.masked_parts_pred);
    return out;
}

torch::Tensor mask_parts(const torch::Tensor& gate, const torch::Tensor& assignment)
{
    if (gate.dim() != 4 || assignment.dim() != 4 || gate.size(1) != 1 || gate.size(0) != assignment.size(0) ||
        gate.size(2) != assignment.size(2) || gate.size(3) != assignment.size(3))
        throw std::invalid_argument("mask_parts: gate " + shape_str(gate) + " incompatible with assignment " +
                                    shape_str(assignment));
    return gate * assignment;
}

torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t h, int64_t w)
{
    if (mask.size(2) == h && mask.size(3) == w)
        return mask;
    return torch::adaptive_avg_pool2d(mask, {h, w});
}

torch::Tensor assemble_motion(const std::vector<torch::Tensor>& per_part, const torch::Tensor& masked_parts)
{
    if (per_part.empty() || static_cast<int64_t>(per_part.size()) != masked_parts.size(1))
        throw std::invalid_argument("assemble_motion: " + std::to_string(per_part.size()) +
                                    " motion maps for " + std::to_string(masked_parts.size(1)) + " part masks");
    torch::Tensor sum;
    for (std::size_t k = 0; k < per_part.size(); ++k) {
        const auto term = per_part[k] * masked_parts.narrow(1, static_cast<int64_t>(k), 1);
        sum = sum.defined() ? sum + term : term;
    }
    return sum;
}

} // namespace pdnet
