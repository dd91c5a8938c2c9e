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
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdnet/dataio.hpp"
#include "pdnet/losses.hpp"
#include "pdnet/model.hpp"

namespace pdnet {

/// Everything a training or evaluation run needs. The config file is plain
/// `key = value` lines ('#' starts a comment); every field below has a key of
/// the same name, listed by TrainConfig::keys().
struct TrainConfig {
    // Optimization
    int epochs = 60;
    int iterations = 0;  // > 0 overrides the epoch-derived step count
    int batch_size = 4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_image_max = 2.5e-4;
    double lr_video_backbone_max = 2.5e-5;
    double lr_video_rest_max = 2.5e-3;
    double lr_power = 0.9;
    double grad_clip_norm = 0.0;  // > 0 rescales the global gradient norm before each update
    int image_iters = 1;
    int video_iters = 2;
    std::uint64_t seed = 0;

    // Model
    int parts_p = 5;
    int input_size = 480;
    bool use_ipda = true;
    int backbone_depth = 50;
    int backbone_width = 64;
    int fpn_width = 256;
    int compressed_channels = 128;
    std::string backbone_weights;
    int semantic_depth = 18;
    int semantic_width = 64;
    std::string semantic_weights;

    // Losses
    losses::LossWeights loss_weights;
    losses::PartLossTerms part_terms;

    // Data
    std::string data_root;
    std::string image_manifest;
    double crop_scale_min = 0.8;
    double crop_scale_max = 1.0;
    double hflip_probability = 0.5;
    Normalization normalization;

    // Bookkeeping
    int checkpoint_every = 0;  // in steps; 0 keeps only the final checkpoint
    int log_every = 1;
    int eval_every = 0;  // in steps; evaluates the test split, 0 disables

    static TrainConfig load(const std::filesystem::path& path);
    static TrainConfig from_json(const nlohmann::json& j);
    static std::vector<std::string> keys();

    /// Sets one field from its textual value; unknown keys and malformed
    /// values raise ConfigError.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;

    /// Applies "key=value".
    void apply_override(const std::string& assignment);

    void validate() const;

    ModelConfig model_config() const;
    BackboneConfig semantic_config() const;
    AugmentConfig augment_config(std::uint64_t sample_seed) const;

    nlohmann::json to_json() const;
    /// `key = value` lines in keys() order; round-trips through load().
    std::string to_text() const;
};

} // namespace pdnet
