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

#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "pdnet/backbone.hpp"
#include "pdnet/ipda.hpp"

namespace pdnet::losses {

/// Guard for divisions by an area or a norm.
inline constexpr double kEps = 1e-6;

/// Class-balanced binary cross-entropy. Per image, foreground pixels weigh
/// |bg|/N and background pixels |fg|/N; the result is the weight-normalized
/// mean, averaged over the batch. Images containing a single class fall back
/// to plain BCE. `gt` may be soft (downsampled masks).
torch::Tensor weighted_bce(const torch::Tensor& pred, const torch::Tensor& gt);

/// weighted_bce(sigmoid(logits), gt) evaluated in log space, so saturated
/// logits keep a gradient. Training uses this form.
torch::Tensor weighted_bce_logits(const torch::Tensor& logits, const torch::Tensor& gt);

/// Mean absolute deviation.
torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& gt);

/// Sum over parts of the mass-weighted squared distance to the part centroid,
/// on coordinates normalized to [0, 1]. `parts` is [B, p, h, w]; batch mean.
torch::Tensor geometric_concentration(const torch::Tensor& parts);

/// Sum over parts of ||pool(features, X_k) - basis_k||^2 where pool is the
/// X_k-weighted average of `features` [B, d, h, w]; `basis` is [p, d].
/// Features are treated as constants.
torch::Tensor semantic_consistency(const torch::Tensor& parts, const torch::Tensor& features,
                                   const torch::Tensor& basis);

/// Population variance of the L2-normalized soft part areas.
torch::Tensor area_variance(const torch::Tensor& parts);

/// Which self-supervised terms enter the part loss.
struct PartLossTerms {
    bool geo = true;
    bool area = true;
    bool sem = true;

    bool any() const { return geo || area || sem; }
};

struct PartLoss {
    torch::Tensor geo;
    torch::Tensor sem;
    torch::Tensor area;
    torch::Tensor total;
};

/// geo + sem + area over one gated part family (disabled terms are 0).
PartLoss part_loss(const torch::Tensor& parts, const torch::Tensor& features, const torch::Tensor& basis,
                   const PartLossTerms& terms = {});

/// Mean of the part loss on the ground-truth-gated and the saliency-gated
/// families of one frame. Throws std::logic_error when the bundle has no
/// ground-truth-gated maps.
PartLoss total_part_loss(const PartBundle& bundle, const torch::Tensor& features, const torch::Tensor& basis,
                         const PartLossTerms& terms = {});

struct LossWeights {
    double seg_final = 1.0;
    double seg_aux = 0.4;
    double saliency = 1.0;
    double part_total = 0.5;

    void validate() const;
};

struct LossComponents {
    double seg_final = 0.0;
    double seg_aux = 0.0;
    double saliency = 0.0;
    double geo = 0.0;
    double sem = 0.0;
    double area = 0.0;
    double part_total = 0.0;
};

struct LossReport {
    LossComponents components;
    double grand_total = 0.0;
    LossWeights weights;
    bool part_skipped = false;
};

/// Weighted sum of seg_final, seg_aux, saliency and part_total. geo, sem and
/// area are the breakdown of part_total and carry no weight of their own.
LossReport grand_total(const LossComponents& components, const LossWeights& weights);

nlohmann::json to_json(const LossReport& report);
nlohmann::json to_json(const LossWeights& weights);

/// Frozen residual network cut after its second stage (stride 8), used only
/// to supply features for the semantic consistency term.
class SemanticExtractorImpl : public torch::nn::Module {
public:
    explicit SemanticExtractorImpl(const BackboneConfig& cfg);

    /// Features [B, d, h, w] resized to (h, w); never tracks gradients.
    torch::Tensor forward(const torch::Tensor& frame, int64_t h, int64_t w);

    int feature_dim() const;
    std::string extractor_id() const;
    ResNet trunk() const { return trunk_; }

    // Always stays in evaluation mode.
    void train(bool on = true) override;

private:
    ResNet trunk_{nullptr};
};
TORCH_MODULE(SemanticExtractor);

/// Learnable per-part reference vectors [p, d].
class PartSemanticBasisImpl : public torch::nn::Module {
public:
    PartSemanticBasisImpl(int parts, int dim, std::string extractor_id);

    torch::Tensor basis;
    std::string extractor_id;
};
TORCH_MODULE(PartSemanticBasis);

} // namespace pdnet::losses
