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

#include "pdnet/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pdnet/checkpoint.hpp"
#include "pdnet/config.hpp"
#include "pdnet/errors.hpp"
#include "pdnet/inference.hpp"
#include "pdnet/metrics.hpp"
#include "pdnet/synthetic.hpp"
#include "pdnet/train_engine.hpp"

namespace pdnet {
namespace {

namespace fs = std::filesystem;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_dir = "out";
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string data_root;
    std::string split = "test";
    std::vector<std::string> clips;
};

void add_common(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--config", o.config_path, "key = value config file");
    cmd->add_option("--override", o.overrides, "key=value, repeatable")->allow_extra_args(false);
    cmd->add_option("--output-dir", o.output_dir, "output directory");
    cmd->add_option("--seed", o.seed, "global seed");
}

void add_data(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--data-root", o.data_root, "dataset root (defaults to the config's data_root)");
    cmd->add_option("--split", o.split, "train or test")->check(CLI::IsMember({"train", "test"}));
    cmd->add_option("--clip", o.clips, "restrict to these clip ids, repeatable")->allow_extra_args(false);
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream f(path);
    if (!f)
        throw IoError("cannot write " + path.string());
    f << text;
}

/// Base config (file, else checkpoint, else defaults), then --seed, then overrides.
TrainConfig effective_config(const CommonOptions& o, const std::optional<CheckpointMeta>& meta, std::ostream& out)
{
    TrainConfig cfg;
    if (!o.config_path.empty()) {
        if (!fs::exists(o.config_path))
            throw ConfigError("config file not found: " + o.config_path);
        cfg = TrainConfig::load(o.config_path);
    } else if (meta) {
        cfg = meta->config;
    }
    if (o.seed)
        cfg.seed = *o.seed;
    for (const auto& ov : o.overrides)
        cfg.apply_override(ov);
    if (!o.data_root.empty())
        cfg.data_root = o.data_root;
    cfg.validate();
    out << "# effective config\n" << cfg.to_text() << std::flush;
    return cfg;
}

std::vector<ClipDescriptor> select_clips(const TrainConfig& cfg, const CommonOptions& o)
{
    if (cfg.data_root.empty())
        throw ConfigError("no data root: pass --data-root or set data_root");
    auto clips = scan_dataset(cfg.data_root, o.split == "train" ? Split::Train : Split::Test);
    if (o.clips.empty())
        return clips;
    std::vector<ClipDescriptor> chosen;
    for (const auto& id : o.clips) {
        const auto it = std::find_if(clips.begin(), clips.end(), [&](const auto& c) { return c.clip_id == id; });
        if (it == clips.end())
            throw ConfigError("clip '" + id + "' is not in the " + o.split + " split");
        chosen.push_back(*it);
    }
    return chosen;
}

std::pair<PdNet, CheckpointMeta> open_checkpoint(const CommonOptions& o)
{
    if (o.checkpoint.empty())
        throw ConfigError("--checkpoint is required");
    if (!fs::exists(o.checkpoint))
        throw ConfigError("checkpoint not found: " + o.checkpoint);
    return load_model(o.checkpoint);
}

int cmd_train(const CommonOptions& o, std::ostream& out)
{
    if (o.config_path.empty())
        throw ConfigError("train needs --config");
    const auto cfg = effective_config(o, std::nullopt, out);
    fs::create_directories(o.output_dir);
    write_text(fs::path(o.output_dir) / "config.cfg", cfg.to_text());
    Trainer trainer(cfg);
    if (!o.checkpoint.empty())
        trainer.load(o.checkpoint);
    const auto summary = trainer.fit(o.output_dir, &out);
    out << "trained " << summary.steps << " steps (" << summary.video_steps << " video, " << summary.image_steps
        << " image); checkpoint " << summary.final_checkpoint.string() << '\n';
    return kExitOk;
}

void write_report(const metrics::BenchmarkReport& report, const fs::path& dir, std::ostream& out)
{
    fs::create_directories(dir);
    const auto table = metrics::format_table(report);
    write_text(dir / "report.txt", table);
    write_text(dir / "report.json", metrics::to_json(report).dump(2) + "\n");
    for (const auto& w : report.warnings)
        out << "warning: " << w << '\n';
    out << table;
}

int cmd_eval(const CommonOptions& o, const std::string& predictions, std::ostream& out)
{
    if (!predictions.empty()) {
        const auto cfg = effective_config(o, std::nullopt, out);
        write_report(evaluate_predictions(select_clips(cfg, o), predictions), o.output_dir, out);
        return kExitOk;
    }
    auto [model, meta] = open_checkpoint(o);
    const auto cfg = effective_config(o, meta, out);
    Predictor predictor(model, cfg.input_size, cfg.normalization);
    write_report(evaluate_epoch(predictor, select_clips(cfg, o)), o.output_dir, out);
    return kExitOk;
}

int cmd_infer(const CommonOptions& o, std::ostream& out)
{
    auto [model, meta] = open_checkpoint(o);
    const auto cfg = effective_config(o, meta, out);
    Predictor predictor(model, cfg.input_size, cfg.normalization);
    for (const auto& clip : select_clips(cfg, o)) {
        const auto inference = predictor.infer_clip(clip);
        write_masks(inference, clip, o.output_dir);
        for (const auto& w : inference.warnings)
            out << "warning: " << w << '\n';
        out << clip.clip_id << ": " << inference.frames.size() << " masks, " << inference.fps << " FPS\n";
    }
    return kExitOk;
}

int cmd_complexity(const CommonOptions& o, double bin_width, std::ostream& out)
{
    const auto cfg = effective_config(o, std::nullopt, out);
    const metrics::GlcmConfig glcm;
    nlohmann::json per_clip = nlohmann::json::array();
    std::vector<double> means;
    for (const auto& clip : select_clips(cfg, o)) {
        const auto c = metrics::clip_complexity(clip, glcm);
        means.push_back(c.mean_entropy);
        per_clip.push_back({{"clip_id", c.clip_id}, {"mean_entropy", c.mean_entropy},
                            {"frame_entropies", c.frame_entropies}});
        out << c.clip_id << ": " << c.mean_entropy << " bits\n";
    }
    fs::create_directories(o.output_dir);
    metrics::write_histogram_csv(fs::path(o.output_dir) / "complexity_histogram.csv",
                                 metrics::entropy_histogram(means, bin_width));
    nlohmann::json doc{{"glcm", metrics::to_json(glcm)}, {"clips", per_clip}};
    double sum = 0.0;
    for (double m : means)
        sum += m;
    doc["mean_entropy"] = means.empty() ? 0.0 : sum / static_cast<double>(means.size());
    write_text(fs::path(o.output_dir) / "complexity.json", doc.dump(2) + "\n");
    out << "mean entropy " << doc["mean_entropy"].get<double>() << " bits over " << means.size() << " clips\n";
    return kExitOk;
}

int cmd_visualize_parts(const CommonOptions& o, std::ostream& out)
{
    auto [model, meta] = open_checkpoint(o);
    const auto cfg = effective_config(o, meta, out);
    Predictor predictor(model, cfg.input_size, cfg.normalization);
    for (const auto& clip : select_clips(cfg, o)) {
        const fs::path dir = fs::path(o.output_dir) / clip.clip_id;
        fs::create_directories(dir);
        for (const auto& overlay : predictor.visualize_parts(clip)) {
            cv::Mat bgra;
            cv::cvtColor(overlay.rgba, bgra, cv::COLOR_RGBA2BGRA);
            const auto path =
                dir / (clip.frame_paths[static_cast<std::size_t>(overlay.frame_index)].stem().string() + ".png");
            if (!cv::imwrite(path.string(), bgra))
                throw IoError("cannot write " + path.string());
        }
        out << clip.clip_id << ": " << clip.size() << " overlays\n";
    }
    return kExitOk;
}

int cmd_synth(const CommonOptions& o, synthetic::CorpusConfig corpus, std::ostream& out)
{
    if (o.seed)
        corpus.seed = *o.seed;
    const auto ids = synthetic::write_corpus(o.output_dir, corpus);
    out << "wrote " << ids.size() << " clips to " << o.output_dir << '\n';
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Part-decoupled video object segmentation"};
    app.require_subcommand(1);
    CommonOptions o;
    std::string predictions;
    double bin_width = 0.25;
    synthetic::CorpusConfig corpus;

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, o);
    train->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");

    auto* eval = app.add_subcommand("eval", "score a checkpoint or stored predictions");
    add_common(eval, o);
    add_data(eval, o);
    eval->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    eval->add_option("--predictions", predictions, "directory of <clip>/<frame>.png masks to score instead");

    auto* infer = app.add_subcommand("infer", "write binary masks for every frame");
    add_common(infer, o);
    add_data(infer, o);
    infer->add_option("--checkpoint", o.checkpoint, "model checkpoint");

    auto* complexity = app.add_subcommand("complexity", "GLCM entropy per clip and histogram");
    add_common(complexity, o);
    add_data(complexity, o);
    complexity->add_option("--bin-width", bin_width, "histogram bin width in bits")->check(CLI::PositiveNumber);

    auto* visualize = app.add_subcommand("visualize-parts", "part overlay PNGs");
    add_common(visualize, o);
    add_data(visualize, o);
    visualize->add_option("--checkpoint", o.checkpoint, "model checkpoint");

    auto* synth = app.add_subcommand("synth", "write the synthetic articulated-figure corpus");
    add_common(synth, o);
    synth->add_option("--clips", corpus.clips);
    synth->add_option("--frames", corpus.frames);
    synth->add_option("--width", corpus.width);
    synth->add_option("--height", corpus.height);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed())
            return cmd_train(o, out);
        if (eval->parsed())
            return cmd_eval(o, predictions, out);
        if (infer->parsed())
            return cmd_infer(o, out);
        if (complexity->parsed())
            return cmd_complexity(o, bin_width, out);
        if (visualize->parsed())
            return cmd_visualize_parts(o, out);
        return cmd_synth(o, corpus, out);
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DatasetError& e) {
        err << "dataset error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

} // namespace pdnet
