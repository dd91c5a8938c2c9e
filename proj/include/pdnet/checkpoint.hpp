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

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "pdnet/config.hpp"
#include "pdnet/losses.hpp"
#include "pdnet/model.hpp"

namespace pdnet {

/// Checkpoint archive layout (a torch serialization archive, readable from
/// Python with torch.jit.load):
///
///   format_version        int, currently 1
///   config                string, TrainConfig as JSON (all values as strings)
///   epoch, iteration      int
///   metric_history        string, JSON array of per-evaluation records
///   model.<name>          every parameter and buffer of the network, where
///                         <name> is its dotted module path, e.g.
///                         model.encoder.trunk.layer1.0.conv1.weight
///   semantic_basis        [p, d] part reference vectors (training only)
///   optimizer             nested archive with the SGD state (training only)
///
/// The frozen semantic feature network is never stored.
inline constexpr std::int64_t kCheckpointFormatVersion = 1;

struct CheckpointMeta {
    TrainConfig config;
    std::int64_t epoch = 0;
    std::int64_t iteration = 0;
    nlohmann::json metric_history = nlohmann::json::array();
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, PdNet& model,
                     losses::PartSemanticBasis* basis = nullptr, torch::optim::Optimizer* optimizer = nullptr);

/// Reads only the metadata.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Restores parameters and buffers into `model` (and the optional training
/// state); shapes must match exactly.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, PdNet& model,
                               losses::PartSemanticBasis* basis = nullptr,
                               torch::optim::Optimizer* optimizer = nullptr);

/// Builds the network described by the embedded config and loads its weights.
std::pair<PdNet, CheckpointMeta> load_model(const std::filesystem::path& path);

} // namespace pdnet
