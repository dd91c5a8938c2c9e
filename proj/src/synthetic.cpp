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

#include "pdnet/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pdnet/errors.hpp"

namespace pdnet::synthetic {

namespace {

namespace fs = std::filesystem;

struct ClipStyle {
    cv::Scalar bg_top;
    cv::Scalar bg_bottom;
    cv::Scalar torso;
    cv::Scalar limb;
    cv::Scalar head;
    double drift_phase = 0.0;
    double drift_period = 16.0;
    double swing_phase = 0.0;
    double swing_period = 7.0;
    double swing_amplitude = 1.0;
    double base_x = 0.5;
    bool limb_right = true;
};

cv::Scalar random_color(std::mt19937_64& rng, int lo, int hi)
{
    std::uniform_int_distribution<int> d(lo, hi);
    return {static_cast<double>(d(rng)), static_cast<double>(d(rng)), static_cast<double>(d(rng))};
}

ClipStyle style_for(const CorpusConfig& cfg, int clip_index)
{
    std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(clip_index));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ClipStyle s;
    s.bg_top = random_color(rng, 20, 110);
    s.bg_bottom = random_color(rng, 20, 110);
    s.torso = random_color(rng, 150, 255);
    s.limb = random_color(rng, 120, 255);
    s.head = cv::Scalar(120 + 40 * u(rng), 160 + 40 * u(rng), 200 + 40 * u(rng));
    s.drift_phase = 2.0 * std::numbers::pi * u(rng);
    s.drift_period = 14.0 + 8.0 * u(rng);
    s.swing_phase = 2.0 * std::numbers::pi * u(rng);
    s.swing_period = 5.0 + 4.0 * u(rng);
    s.swing_amplitude = 0.7 + 0.5 * u(rng);
    s.base_x = 0.4 + 0.2 * u(rng);
    s.limb_right = u(rng) < 0.5;
    return s;
}

void draw_background(cv::Mat& img, const ClipStyle& s, std::uint64_t noise_seed)
{
    for (int y = 0; y < img.rows; ++y) {
        const double a = static_cast<double>(y) / std::max(1, img.rows - 1);
        const cv::Scalar c = s.bg_top * (1.0 - a) + s.bg_bottom * a;
        img.row(y).setTo(c);
    }
    cv::Mat noise(img.size(), CV_8UC3);
    cv::RNG rng(noise_seed);
    rng.fill(noise, cv::RNG::UNIFORM, 0, 24);
    img += noise;
}

// Rotated rectangle anchored at `joint`, extending along `angle` (0 = down).
std::vector<cv::Point> limb_polygon(cv::Point2d joint, double angle, double length, double thickness)
{
    const cv::Point2d dir(std::sin(angle), std::cos(angle));
    const cv::Point2d normal(-dir.y, dir.x);
    const cv::Point2d half = normal * (thickness / 2.0);
    const cv::Point2d end = joint + dir * length;
    auto pt = [](cv::Point2d p) { return cv::Point(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))); };
    return {pt(joint + half), pt(end + half), pt(end - half), pt(joint - half)};
}

void draw_figure(cv::Mat& img, cv::Mat& mask, const ClipStyle& s, int t)
{
    const double w = img.cols;
    const double h = img.rows;
    const double drift = std::sin(2.0 * std::numbers::pi * t / s.drift_period + s.drift_phase);
    const double cx = w * (s.base_x + 0.12 * drift);
    const double cy = h * (0.58 + 0.03 * drift);
    const double tw = 0.2 * w;
    const double th = 0.42 * h;

    const cv::Rect torso(static_cast<int>(std::lround(cx - tw / 2)), static_cast<int>(std::lround(cy - th / 2)),
                         static_cast<int>(std::lround(tw)), static_cast<int>(std::lround(th)));
    const cv::Point head(static_cast<int>(std::lround(cx)), static_cast<int>(std::lround(cy - th / 2 - 0.08 * h)));
    const int head_r = static_cast<int>(std::lround(0.09 * h));

    const double side = s.limb_right ? 1.0 : -1.0;
    const cv::Point2d shoulder(cx + side * (tw / 2 - 0.02 * w), cy - th / 2 + 0.06 * h);
    const double swing = s.swing_amplitude * std::sin(2.0 * std::numbers::pi * t / s.swing_period + s.swing_phase);
    const double angle = side * (0.9 + 0.8 * swing);
    const auto limb = limb_polygon(shoulder, angle, 0.36 * h, 0.075 * w);

    cv::rectangle(img, torso, s.torso, cv::FILLED);
    cv::circle(img, head, head_r, s.head, cv::FILLED, cv::LINE_8);
    cv::fillConvexPoly(img, limb, s.limb, cv::LINE_8);

    cv::rectangle(mask, torso, cv::Scalar(255), cv::FILLED);
    cv::circle(mask, head, head_r, cv::Scalar(255), cv::FILLED, cv::LINE_8);
    cv::fillConvexPoly(mask, limb, cv::Scalar(255), cv::LINE_8);
}

void write_image(const fs::path& path, const cv::Mat& img)
{
    if (!cv::imwrite(path.string(), img))
        throw IoError("cannot write " + path.string());
}

std::string frame_name(int i, const char* ext)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05d%s", i, ext);
    return buf;
}

} // namespace

FigureFrame render_figure_frame(const CorpusConfig& cfg, int clip_index, int t)
{
    const ClipStyle style = style_for(cfg, clip_index);
    FigureFrame f;
    f.bgr = cv::Mat(cfg.height, cfg.width, CV_8UC3);
    f.mask = cv::Mat::zeros(cfg.height, cfg.width, CV_8UC1);
    draw_background(f.bgr, style, cfg.seed * 7919ULL + static_cast<std::uint64_t>(clip_index) * 131ULL + static_cast<std::uint64_t>(t));
    draw_figure(f.bgr, f.mask, style, t);
    return f;
}

std::vector<std::string> write_corpus(const fs::path& root, const CorpusConfig& cfg)
{
    std::vector<std::string> ids;
    fs::create_directories(root / "ImageSets");
    for (int c = 0; c < cfg.clips; ++c) {
        char id[32];
        std::snprintf(id, sizeof(id), "figure_%02d", c);
        ids.emplace_back(id);
        const fs::path frames = root / "JPEGImages" / id;
        const fs::path annotations = root / "Annotations" / id;
        fs::create_directories(frames);
        fs::create_directories(annotations);
        for (int t = 0; t < cfg.frames; ++t) {
            const FigureFrame f = render_figure_frame(cfg, c, t);
            write_image(frames / frame_name(t, ".jpg"), f.bgr);
            if (cfg.annotation_interval > 0 && t % cfg.annotation_interval == 0)
                write_image(annotations / frame_name(t, ".png"), f.mask);
        }
    }
    for (const char* split : {"train", "test"}) {
        std::ofstream out(root / "ImageSets" / (std::string(split) + ".txt"));
        for (const auto& id : ids)
            out << id << '\n';
    }

    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    std::ofstream manifest(root / "images.txt");
    for (int i = 0; i < cfg.still_images; ++i) {
        // Stills reuse the clip styles at poses the clips never show.
        const FigureFrame f = render_figure_frame(cfg, cfg.clips + i, 3 * i + 1);
        const std::string name = frame_name(i, "");
        write_image(root / "images" / (name + ".jpg"), f.bgr);
        write_image(root / "masks" / (name + ".png"), f.mask);
        manifest << "images/" << name << ".jpg\tmasks/" << name << ".png\n";
    }
    return ids;
}

cv::Mat texture_frame(std::uint64_t seed, int width, int height, double complexity)
{
    complexity = std::clamp(complexity, 0.0, 1.0);
    cv::Mat img(height, width, CV_32FC1);
    for (int y = 0; y < height; ++y)
        img.row(y).setTo(cv::Scalar(60.0 + 100.0 * y / std::max(1, height - 1)));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, width - 1);
    std::uniform_int_distribution<int> py(0, height - 1);
    std::uniform_real_distribution<double> shade(-1.0, 1.0);
    const int blocks = static_cast<int>(std::lround(200.0 * complexity));
    for (int i = 0; i < blocks; ++i) {
        const cv::Point a(px(rng), py(rng));
        const cv::Point b(std::min(width - 1, a.x + 4 + px(rng) / 8), std::min(height - 1, a.y + 4 + py(rng) / 8));
        cv::Mat roi = img(cv::Rect(a, b + cv::Point(1, 1)));
        roi += cv::Scalar(90.0 * complexity * shade(rng));
    }
    cv::Mat noise(height, width, CV_32FC1);
    cv::RNG cvrng(seed ^ 0x5bd1e995ULL);
    cvrng.fill(noise, cv::RNG::NORMAL, 0.0, 2.0 + 40.0 * complexity);
    img += noise;

    cv::Mat out;
    img.convertTo(out, CV_8UC1);
    return out;
}

} // namespace pdnet::synthetic
