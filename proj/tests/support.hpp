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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "pdnet/config.hpp"
#include "temp_dir.hpp"
#include "pdnet/synthetic.hpp"

namespace pdnet::testing {

/// Narrow network and small inputs so a step takes milliseconds.
inline TrainConfig tiny_config(const std::filesystem::path& data_root = {})
{
    TrainConfig cfg;
    cfg.data_root = data_root;
    cfg.batch_size = 2;
    cfg.input_size = 64;
    cfg.backbone_depth = 10;
    cfg.backbone_width = 8;
    cfg.fpn_width = 16;
    cfg.compressed_channels = 8;
    cfg.semantic_depth = 10;
    cfg.semantic_width = 8;
    cfg.parts_p = 3;
    cfg.seed = 11;
    cfg.log_every = 0;
    return cfg;
}

inline synthetic::CorpusConfig tiny_corpus()
{
    synthetic::CorpusConfig c;
    c.clips = 2;
    c.frames = 11;
    c.width = 64;
    c.height = 48;
    c.still_images = 3;
    return c;
}

/// Largest relative error between the autograd gradient of `f` at `x` and
/// central differences with step h, over the coordinates in `coords`
/// (all coordinates when empty). Computed in double.
inline double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                             double h = 1e-3, std::vector<int64_t> coords = {})
{
    x = x.detach().to(torch::kFloat64).clone().requires_grad_(true);
    const auto y = f(x);
    const auto grad = torch::autograd::grad({y}, {x})[0].detach().flatten();
    if (coords.empty())
        for (int64_t i = 0; i < x.numel(); ++i)
            coords.push_back(i);
    double worst = 0.0;
    for (const int64_t i : coords) {
        auto xp = x.detach().clone();
        auto xm = x.detach().clone();
        xp.view(-1)[i] += h;
        xm.view(-1)[i] -= h;
        torch::NoGradGuard no_grad;
        const double numeric = (f(xp).item<double>() - f(xm).item<double>()) / (2.0 * h);
        const double analytic = grad[i].item<double>();
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
    return worst;
}

} // namespace pdnet::testing
