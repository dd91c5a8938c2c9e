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

#include "pdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pdnet/dataio.hpp"
#include "pdnet/errors.hpp"

namespace pdnet::metrics {

namespace {

void require_same_shape(const cv::Mat& a, const cv::Mat& b, const char* what)
{
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                                    std::to_string(b.cols) + ")");
    if (a.type() != CV_8UC1 || b.type() != CV_8UC1)
        throw std::invalid_argument(std::string(what) + ": masks must be CV_8UC1");
}

double mean_of(std::span<const double> v)
{
    if (v.empty())
        return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double recall_of(std::span<const double> v)
{
    if (v.empty())
        return 0.0;
    const auto hits = std::count_if(v.begin(), v.end(), [](double s) { return s > kRecallThreshold; });
    return static_cast<double>(hits) / static_cast<double>(v.size());
}

// Fraction of `boundary` pixels lying within `tolerance` of the other boundary,
// given the distance map to that other boundary.
double matched_fraction(const cv::Mat& boundary, const cv::Mat& distance_to_other, int tolerance)
{
    std::size_t total = 0;
    std::size_t matched = 0;
    for (int y = 0; y < boundary.rows; ++y) {
        const auto* b = boundary.ptr<std::uint8_t>(y);
        const auto* d = distance_to_other.ptr<float>(y);
        for (int x = 0; x < boundary.cols; ++x) {
            if (!b[x])
                continue;
            ++total;
            if (d[x] <= static_cast<float>(tolerance) + 1e-4f)
                ++matched;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
}

cv::Mat distance_to(const cv::Mat& boundary)
{
    // distanceTransform measures distance to the nearest zero pixel.
    cv::Mat inverted = (boundary == 0);
    cv::Mat dist;
    cv::distanceTransform(inverted, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);
    return dist;
}

} // namespace

double jaccard(const cv::Mat& pred, const cv::Mat& gt)
{
    require_same_shape(pred, gt, "jaccard");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (int y = 0; y < pred.rows; ++y) {
        const auto* p = pred.ptr<std::uint8_t>(y);
        const auto* g = gt.ptr<std::uint8_t>(y);
        for (int x = 0; x < pred.cols; ++x) {
            const bool a = p[x] != 0;
            const bool b = g[x] != 0;
            inter += (a && b);
            uni += (a || b);
        }
    }
    if (uni == 0)
        return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

int default_boundary_tolerance(cv::Size size)
{
    const double diag = std::hypot(static_cast<double>(size.width), static_cast<double>(size.height));
    return static_cast<int>(std::ceil(0.008 * diag));
}

cv::Mat mask_boundary(const cv::Mat& mask)
{
    cv::Mat out = cv::Mat::zeros(mask.size(), CV_8UC1);
    const int h = mask.rows;
    const int w = mask.cols;
    auto fg = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && mask.at<std::uint8_t>(y, x) != 0; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!fg(y, x))
                continue;
            const bool interior = fg(y - 1, x) && fg(y + 1, x) && fg(y, x - 1) && fg(y, x + 1);
            if (!interior)
                out.at<std::uint8_t>(y, x) = 1;
        }
    }
    return out;
}

double contour_f(const cv::Mat& pred, const cv::Mat& gt, int tolerance_px)
{
    require_same_shape(pred, gt, "contour_f");
    const int tolerance = tolerance_px < 0 ? default_boundary_tolerance(pred.size()) : tolerance_px;

    const cv::Mat pred_b = mask_boundary(pred);
    const cv::Mat gt_b = mask_boundary(gt);
    const bool pred_empty = cv::countNonZero(pred_b) == 0;
    const bool gt_empty = cv::countNonZero(gt_b) == 0;
    if (pred_empty && gt_empty)
        return 1.0;
    if (pred_empty || gt_empty)
        return 0.0;

    const double precision = matched_fraction(pred_b, distance_to(gt_b), tolerance);
    const double recall = matched_fraction(gt_b, distance_to(pred_b), tolerance);
    if (precision + recall <= 0.0)
        return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::array<std::size_t, 5> quartile_bounds(std::size_t n)
{
    std::array<std::size_t, 4> sizes;
    sizes.fill(n / 4);
    constexpr std::array<std::size_t, 3> extra_order{1, 2, 0};
    for (std::size_t i = 0; i < n % 4; ++i)
        ++sizes[extra_order[i]];
    std::array<std::size_t, 5> bounds{};
    for (std::size_t i = 0; i < 4; ++i)
        bounds[i + 1] = bounds[i] + sizes[i];
    return bounds;
}

double decay(std::span<const double> ordered_scores)
{
    if (ordered_scores.size() < kMinFramesForDecay)
        throw std::invalid_argument("decay needs at least 4 scores");
    const auto b = quartile_bounds(ordered_scores.size());
    // Offsets from the first score keep constant sequences at exactly zero;
    // plain sums of 0.1 and friends do not round back to the same mean.
    const double anchor = ordered_scores[0];
    auto offset_mean = [&](std::size_t lo, std::size_t hi) {
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            sum += ordered_scores[i] - anchor;
        return sum / static_cast<double>(hi - lo);
    };
    return offset_mean(b[0], b[1]) - offset_mean(b[3], b[4]);
}

BenchmarkReport aggregate(std::span<const FrameScore> scores)
{
    BenchmarkReport report;
    std::map<std::string, std::vector<FrameScore>> by_clip;
    for (const auto& s : scores)
        by_clip[s.clip_id].push_back(s);

    std::vector<double> all_j;
    std::vector<double> all_f;
    std::vector<double> j_decays;
    std::vector<double> f_decays;
    for (auto& [clip_id, frames] : by_clip) {
        std::stable_sort(frames.begin(), frames.end(),
                         [](const FrameScore& a, const FrameScore& b) { return a.frame_index < b.frame_index; });
        std::vector<double> js;
        std::vector<double> fs;
        for (const auto& s : frames) {
            js.push_back(s.j);
            fs.push_back(s.f);
        }
        all_j.insert(all_j.end(), js.begin(), js.end());
        all_f.insert(all_f.end(), fs.begin(), fs.end());

        ClipBreakdown clip;
        clip.clip_id = clip_id;
        clip.frames = frames.size();
        clip.j_mean = mean_of(js);
        clip.f_mean = mean_of(fs);
        if (frames.size() >= kMinFramesForDecay) {
            clip.j_decay = decay(js);
            clip.f_decay = decay(fs);
            clip.decay_valid = true;
            j_decays.push_back(clip.j_decay);
            f_decays.push_back(clip.f_decay);
        } else {
            report.warnings.push_back("clip '" + clip_id + "' has " + std::to_string(frames.size()) +
                                      " scored frames; excluded from decay");
        }
        report.clips.push_back(std::move(clip));
    }

    report.j = {mean_of(all_j), recall_of(all_j), mean_of(j_decays)};
    report.f = {mean_of(all_f), recall_of(all_f), mean_of(f_decays)};
    report.jf_mean = (report.j.mean + report.f.mean) / 2.0;
    return report;
}

std::string format_table(const BenchmarkReport& report, const std::string& method)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << std::left << std::setw(12) << "Method" << std::right << std::setw(10) << "J&F Mean" << std::setw(9)
       << "J Mean" << std::setw(10) << "J Recall" << std::setw(9) << "J Decay" << std::setw(9) << "F Mean"
       << std::setw(10) << "F Recall" << std::setw(9) << "F Decay" << std::setw(8) << "FPS" << '\n';
    os << std::left << std::setw(12) << method << std::right << std::setw(10) << 100.0 * report.jf_mean
       << std::setw(9) << 100.0 * report.j.mean << std::setw(10) << 100.0 * report.j.recall << std::setw(9)
       << 100.0 * report.j.decay << std::setw(9) << 100.0 * report.f.mean << std::setw(10)
       << 100.0 * report.f.recall << std::setw(9) << 100.0 * report.f.decay << std::setw(8) << report.fps
       << '\n';
    return os.str();
}

nlohmann::json to_json(const BenchmarkReport& report)
{
    auto stats = [](const MetricStats& s) {
        return nlohmann::json{{"mean", s.mean}, {"recall", s.recall}, {"decay", s.decay}};
    };
    nlohmann::json clips = nlohmann::json::array();
    for (const auto& c : report.clips) {
        nlohmann::json entry{{"clip_id", c.clip_id}, {"frames", c.frames}, {"j_mean", c.j_mean},
                             {"f_mean", c.f_mean}};
        if (c.decay_valid) {
            entry["j_decay"] = c.j_decay;
            entry["f_decay"] = c.f_decay;
        }
        clips.push_back(std::move(entry));
    }
    return {{"jf_mean", report.jf_mean}, {"J", stats(report.j)}, {"F", stats(report.f)},
            {"fps", report.fps},         {"clips", clips},       {"warnings", report.warnings}};
}

// ---------------------------------------------------------------------------

double glcm_entropy(const cv::Mat& gray, int levels, std::span<const GlcmOffset> offsets)
{
    if (gray.type() != CV_8UC1)
        throw std::invalid_argument("glcm_entropy: expected an 8-bit single-channel image");
    if (levels < 2 || levels > 256)
        throw std::invalid_argument("glcm_entropy: levels must be in [2, 256]");
    if (offsets.empty())
        throw std::invalid_argument("glcm_entropy: offsets must be nonempty");
    for (const auto& o : offsets) {
        if (std::abs(o.dx) >= gray.cols || std::abs(o.dy) >= gray.rows)
            throw std::invalid_argument("glcm_entropy: image " + std::to_string(gray.cols) + "x" +
                                        std::to_string(gray.rows) + " smaller than offset (" +
                                        std::to_string(o.dx) + "," + std::to_string(o.dy) + ")");
    }

    cv::Mat quantized(gray.size(), CV_32SC1);
    for (int y = 0; y < gray.rows; ++y) {
        const auto* src = gray.ptr<std::uint8_t>(y);
        auto* dst = quantized.ptr<int>(y);
        for (int x = 0; x < gray.cols; ++x)
            dst[x] = (static_cast<int>(src[x]) * levels) >> 8;
    }

    std::vector<double> counts(static_cast<std::size_t>(levels * levels), 0.0);
    double total = 0.0;
    for (const auto& o : offsets) {
        const int y0 = std::max(0, -o.dy);
        const int y1 = std::min(gray.rows, gray.rows - o.dy);
        const int x0 = std::max(0, -o.dx);
        const int x1 = std::min(gray.cols, gray.cols - o.dx);
        for (int y = y0; y < y1; ++y) {
            const int* row = quantized.ptr<int>(y);
            const int* other = quantized.ptr<int>(y + o.dy);
            for (int x = x0; x < x1; ++x) {
                const int a = row[x];
                const int b = other[x + o.dx];
                counts[static_cast<std::size_t>(a * levels + b)] += 1.0;
                counts[static_cast<std::size_t>(b * levels + a)] += 1.0;
                total += 2.0;
            }
        }
    }
    if (total == 0.0)
        return 0.0;

    double entropy = 0.0;
    for (double c : counts) {
        if (c <= 0.0)
            continue;
        const double p = c / total;
        entropy -= p * std::log2(p);
    }
    return entropy;
}

cv::Mat analysis_luminance(const cv::Mat& frame, const GlcmConfig& cfg)
{
    cv::Mat gray;
    if (frame.channels() == 3)
        cv::cvtColor(frame, gray, cv::COLOR_BGR2GRAY);
    else if (frame.channels() == 1)
        gray = frame;
    else
        throw std::invalid_argument("analysis_luminance: expected 1 or 3 channels");
    if (gray.depth() != CV_8U)
        throw std::invalid_argument("analysis_luminance: expected an 8-bit frame");

    if (cfg.analysis_height > 0 && gray.rows != cfg.analysis_height) {
        const double scale = static_cast<double>(cfg.analysis_height) / gray.rows;
        const int width = std::max(1, static_cast<int>(std::lround(gray.cols * scale)));
        cv::Mat resized;
        cv::resize(gray, resized, cv::Size(width, cfg.analysis_height), 0, 0,
                   scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
        return resized;
    }
    return gray;
}

ClipComplexity clip_complexity(const ClipDescriptor& clip, const GlcmConfig& cfg)
{
    ClipComplexity out;
    out.clip_id = clip.clip_id;
    for (const auto& path : clip.frame_paths) {
        const cv::Mat frame = cv::imread(path.string(), cv::IMREAD_COLOR);
        if (frame.empty())
            throw IoError("cannot read frame " + path.string());
        const cv::Mat gray = analysis_luminance(frame, cfg);
        out.frame_entropies.push_back(glcm_entropy(gray, cfg.levels, cfg.offsets));
    }
    out.mean_entropy = mean_of(out.frame_entropies);
    return out;
}

std::vector<HistogramBin> entropy_histogram(std::span<const double> values, double bin_width)
{
    if (bin_width <= 0.0)
        throw std::invalid_argument("entropy_histogram: bin_width must be positive");
    if (values.empty())
        return {};
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = std::floor(*lo_it / bin_width) * bin_width;
    const auto bins = static_cast<std::size_t>(std::floor((*hi_it - lo) / bin_width)) + 1;
    std::vector<HistogramBin> hist(bins);
    for (std::size_t i = 0; i < bins; ++i)
        hist[i].center = lo + (static_cast<double>(i) + 0.5) * bin_width;
    const double weight = 1.0 / static_cast<double>(values.size());
    for (double v : values) {
        auto i = static_cast<std::size_t>(std::floor((v - lo) / bin_width));
        hist[std::min(i, bins - 1)].frequency += weight;
    }
    return hist;
}

void write_histogram_csv(const std::filesystem::path& path, std::span<const HistogramBin> bins)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "bin_center,frequency\n";
    out << std::setprecision(10);
    for (const auto& b : bins)
        out << b.center << ',' << b.frequency << '\n';
}

nlohmann::json to_json(const GlcmConfig& cfg)
{
    nlohmann::json offsets = nlohmann::json::array();
    for (const auto& o : cfg.offsets)
        offsets.push_back({o.dx, o.dy});
    return {{"levels", cfg.levels},
            {"offsets", offsets},
            {"analysis_height", cfg.analysis_height},
            {"symmetric", true},
            {"channel", "luminance"}};
}

} // namespace pdnet::metrics
