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

#include "pdnet/losses.hpp"

#include <stdexcept>

#include "pdnet/errors.hpp"

namespace pdnet::losses {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what)
{
    if (a.sizes() != b.sizes())
        throw std::invalid_argument(std::string(what) + ": prediction and target shapes differ");
}

torch::Tensor normalized_axis(int64_t n, const torch::TensorOptions& opts)
{
    if (n <= 1)
        return torch::zeros({n}, opts);
    return torch::arange(n, opts) / static_cast<double>(n - 1);
}

// Per-pixel weights for flattened [B, N] targets: foreground |bg|/N,
// background |fg|/N, all ones for single-class images.
torch::Tensor class_weights(const torch::Tensor& g)
{
    const auto n = static_cast<double>(g.size(1));
    const auto fg = g.sum(1, /*keepdim=*/true);
    const auto bg = n - fg;
    const auto single_class = (fg < 0.5) | (bg < 0.5);
    const auto w_fg = torch::where(single_class, torch::ones_like(fg), bg / n);
    const auto w_bg = torch::where(single_class, torch::ones_like(fg), fg / n);
    return (g * w_fg + (1.0 - g) * w_bg).detach();
}

} // namespace

torch::Tensor weighted_bce(const torch::Tensor& pred, const torch::Tensor& gt)
{
    require_same_shape(pred, gt, "weighted_bce");
    const auto p = pred.flatten(1).clamp(1e-7, 1.0 - 1e-7);
    const auto g = gt.flatten(1).to(pred.dtype());
    const auto w = class_weights(g);
    const auto bce = -(g * torch::log(p) + (1.0 - g) * torch::log(1.0 - p));
    return ((w * bce).sum(1) / w.sum(1)).mean();
}

torch::Tensor weighted_bce_logits(const torch::Tensor& logits, const torch::Tensor& gt)
{
    require_same_shape(logits, gt, "weighted_bce_logits");
    const auto x = logits.flatten(1);
    const auto g = gt.flatten(1).to(logits.dtype());
    const auto w = class_weights(g);
    const auto bce = -(g * torch::log_sigmoid(x) + (1.0 - g) * torch::log_sigmoid(-x));
    return ((w * bce).sum(1) / w.sum(1)).mean();
}

torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& gt)
{
    require_same_shape(pred, gt, "l1_loss");
    return (pred - gt.to(pred.dtype())).abs().mean();
}

torch::Tensor geometric_concentration(const torch::Tensor& parts)
{
    if (parts.dim() != 4)
        throw std::invalid_argument("geometric_concentration: expected [B, p, h, w]");
    const auto opts = parts.options();
    const auto ys = normalized_axis(parts.size(2), opts).view({1, 1, -1, 1});
    const auto xs = normalized_axis(parts.size(3), opts).view({1, 1, 1, -1});

    const auto mass = parts.sum({2, 3}, /*keepdim=*/true).clamp_min(kEps);
    const auto cy = (parts * ys).sum({2, 3}, true) / mass;
    const auto cx = (parts * xs).sum({2, 3}, true) / mass;
    const auto spread = (parts * ((ys - cy).pow(2) + (xs - cx).pow(2))).sum({2, 3}, true) / mass;
    return spread.sum({1, 2, 3}).mean();
}

torch::Tensor semantic_consistency(const torch::Tensor& parts, const torch::Tensor& features,
                                   const torch::Tensor& basis)
{
    if (parts.dim() != 4 || features.dim() != 4)
        throw std::invalid_argument("semantic_consistency: expected 4-d parts and features");
    if (parts.size(0) != features.size(0) || parts.size(2) != features.size(2) || parts.size(3) != features.size(3))
        throw std::invalid_argument("semantic_consistency: part maps and features disagree in batch or size");
    if (basis.dim() != 2 || basis.size(0) != parts.size(1) || basis.size(1) != features.size(1))
        throw std::invalid_argument("semantic_consistency: basis must be [p, d]");

    const auto f = features.detach().to(parts.dtype()).flatten(2);   // [B, d, N]
    const auto x = parts.flatten(2);                                  // [B, p, N]
    const auto mass = x.sum(2, /*keepdim=*/true).clamp_min(kEps);     // [B, p, 1]
    const auto pooled = torch::bmm(x, f.transpose(1, 2)) / mass;      // [B, p, d]
    return (pooled - basis.unsqueeze(0)).pow(2).sum({1, 2}).mean();
}

torch::Tensor area_variance(const torch::Tensor& parts)
{
    if (parts.dim() != 4)
        throw std::invalid_argument("area_variance: expected [B, p, h, w]");
    const auto areas = parts.sum({2, 3});                                      // [B, p]
    const auto norm = areas.pow(2).sum(1, true).sqrt().clamp_min(kEps);
    const auto v = areas / norm;
    return (v - v.mean(1, true)).pow(2).mean(1).mean();
}

PartLoss part_loss(const torch::Tensor& parts, const torch::Tensor& features, const torch::Tensor& basis,
                   const PartLossTerms& terms)
{
    const auto zero = torch::zeros({}, parts.options());
    PartLoss out;
    out.geo = terms.geo ? geometric_concentration(parts) : zero;
    out.sem = terms.sem ? semantic_consistency(parts, features, basis) : zero;
    out.area = terms.area ? area_variance(parts) : zero;
    out.total = out.geo + out.sem + out.area;
    return out;
}

PartLoss total_part_loss(const PartBundle& bundle, const torch::Tensor& features, const torch::Tensor& basis,
                         const PartLossTerms& terms)
{
    if (!bundle.masked_parts_gt)
        throw std::logic_error("total_part_loss: bundle has no ground-truth-gated part maps");
    const auto gt = part_loss(*bundle.masked_parts_gt, features, basis, terms);
    const auto pred = part_loss(bundle.masked_parts_pred, features, basis, terms);
    return {(gt.geo + pred.geo) / 2.0, (gt.sem + pred.sem) / 2.0, (gt.area + pred.area) / 2.0,
            (gt.total + pred.total) / 2.0};
}

void LossWeights::validate() const
{
    for (const auto& [name, w] : {std::pair{"seg_final", seg_final}, std::pair{"seg_aux", seg_aux},
                                  std::pair{"saliency", saliency}, std::pair{"part_total", part_total}}) {
        if (!(w >= 0.0))
            throw ConfigError(std::string("loss weight '") + name + "' must be nonnegative");
    }
}

LossReport grand_total(const LossComponents& components, const LossWeights& weights)
{
    weights.validate();
    LossReport report;
    report.components = components;
    report.weights = weights;
    report.grand_total = weights.seg_final * components.seg_final + weights.seg_aux * components.seg_aux +
                         weights.saliency * components.saliency + weights.part_total * components.part_total;
    return report;
}

nlohmann::json to_json(const LossWeights& w)
{
    return {{"seg_final", w.seg_final}, {"seg_aux", w.seg_aux}, {"saliency", w.saliency}, {"part_total", w.part_total}};
}

nlohmann::json to_json(const LossReport& r)
{
    const auto& c = r.components;
    return {{"seg_final", c.seg_final}, {"seg_aux", c.seg_aux},     {"saliency", c.saliency},
            {"geo", c.geo},             {"sem", c.sem},             {"area", c.area},
            {"part_total", c.part_total}, {"part_skipped", r.part_skipped}, {"grand_total", r.grand_total},
            {"weights", to_json(r.weights)}};
}

SemanticExtractorImpl::SemanticExtractorImpl(const BackboneConfig& cfg)
{
    trunk_ = register_module("trunk", ResNet(cfg, 2));
    for (auto& p : parameters())
        p.set_requires_grad(false);
    torch::nn::Module::train(false);
}

void SemanticExtractorImpl::train(bool /*on*/)
{
    torch::nn::Module::train(false);
}

torch::Tensor SemanticExtractorImpl::forward(const torch::Tensor& frame, int64_t h, int64_t w)
{
    torch::NoGradGuard no_grad;
    auto features = trunk_->forward(frame).back();
    return resize_bilinear(features, {h, w});
}

int SemanticExtractorImpl::feature_dim() const
{
    return stage_channels(trunk_->config(), 1);
}

std::string SemanticExtractorImpl::extractor_id() const
{
    const auto& c = trunk_->config();
    return "resnet" + std::to_string(c.depth) + "-w" + std::to_string(c.base_width) + "-stride8";
}

PartSemanticBasisImpl::PartSemanticBasisImpl(int parts, int dim, std::string id) : extractor_id(std::move(id))
{
    basis = register_parameter("basis", torch::randn({parts, dim}) * 0.1);
}

} // namespace pdnet::losses
