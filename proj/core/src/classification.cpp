#include "smearscope/classification.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "json_util.hpp"
#include "smearscope/imaging.hpp"
#include "smearscope/rng.hpp"

namespace smearscope {

using nlohmann::json;

// ============================================================================
// Labels
// ============================================================================

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"healthy", "ring", "trophozoite",
                                                   "schizont", "gametocyte"};
    return names;
}

const std::string& stage_name(StageLabel label) {
    return stage_names()[static_cast<std::size_t>(label)];
}

StageLabel stage_from_string(const std::string& name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto& names = stage_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (lower == names[i]) return static_cast<StageLabel>(i);
    throw std::invalid_argument("unknown stage label: " + name);
}

// ============================================================================
// Crops
// ============================================================================

CellCrop extract_crop(const RgbImage& img, const BoundingBox& box, double margin,
                      const std::string& source_image_id) {
    if (box.w < 1 || box.h < 1) throw std::invalid_argument("extract_crop: degenerate box");
    if (!img.bounds().contains(box))
        throw std::invalid_argument("extract_crop: box outside image bounds");

    // Pixel-center coordinates of the margin-expanded box, clamped to the
    // image.
    const double mx = margin * box.w;
    const double my = margin * box.h;
    const double x0 = std::max(0.0, box.x - mx);
    const double y0 = std::max(0.0, box.y - my);
    const double x1 = std::min(static_cast<double>(img.width - 1), box.x + box.w - 1 + mx);
    const double y1 = std::min(static_cast<double>(img.height - 1), box.y + box.h - 1 + my);

    CellCrop crop;
    crop.pixels = RgbImage(kCropSize, kCropSize);
    crop.source_box = box;
    crop.source_image_id = source_image_id;

    // Corner-aligned sampling: output corners land on the expanded-box
    // corners exactly.
    const double sx = (x1 - x0) / (kCropSize - 1);
    const double sy = (y1 - y0) / (kCropSize - 1);
    for (int j = 0; j < kCropSize; ++j) {
        const double v = y0 + sy * j;
        const int iy = static_cast<int>(v);
        const double fy = v - iy;
        const int iy1 = std::min(iy + 1, img.height - 1);
        for (int i = 0; i < kCropSize; ++i) {
            const double u = x0 + sx * i;
            const int ix = static_cast<int>(u);
            const double fx = u - ix;
            const int ix1 = std::min(ix + 1, img.width - 1);
            const std::uint8_t* p00 = img.pixel(ix, iy);
            const std::uint8_t* p10 = img.pixel(ix1, iy);
            const std::uint8_t* p01 = img.pixel(ix, iy1);
            const std::uint8_t* p11 = img.pixel(ix1, iy1);
            std::uint8_t* out = crop.pixels.pixel(i, j);
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] + fx * (p10[c] - p00[c]);
                const double bot = p01[c] + fx * (p11[c] - p01[c]);
                const long rounded = std::lround(top + fy * (bot - top));
                out[c] = static_cast<std::uint8_t>(std::clamp(rounded, 0L, 255L));
            }
        }
    }
    return crop;
}

// ============================================================================
// Features
// ============================================================================

FeatureVector extract_features(const CellCrop& crop) {
    const RgbImage& px = crop.pixels;
    if (px.width != kCropSize || px.height != kCropSize)
        throw std::invalid_argument("extract_features: crop must be 64x64");
    const double n_pixels = static_cast<double>(kCropSize) * kCropSize;

    FeatureVector f;

    // 8-bin normalized histogram per channel.
    for (int c = 0; c < 3; ++c) {
        std::array<int, 8> bins{};
        for (int y = 0; y < kCropSize; ++y)
            for (int x = 0; x < kCropSize; ++x) ++bins[px.pixel(x, y)[c] >> 5];
        for (int b = 0; b < 8; ++b) f.values[c * 8 + b] = bins[b] / n_pixels;
    }

    const GrayImage gray = to_grayscale(px);

    // Cell mask: dark side of the crop's own Otsu split. A constant crop has
    // no split, so the mask stays empty and the shape features are zero.
    const OtsuResult otsu = otsu_threshold(gray);
    BinaryMask mask(kCropSize, kCropSize);
    if (!otsu.degenerate)
        for (int y = 0; y < kCropSize; ++y)
            for (int x = 0; x < kCropSize; ++x) mask.set(x, y, gray.at(x, y) <= otsu.threshold);

    std::int64_t area = 0;
    std::int64_t perimeter = 0;
    for (int y = 0; y < kCropSize; ++y)
        for (int x = 0; x < kCropSize; ++x) {
            if (!mask.at(x, y)) continue;
            ++area;
            const bool boundary = x == 0 || x == kCropSize - 1 || y == 0 ||
                                  y == kCropSize - 1 || !mask.at(x - 1, y) ||
                                  !mask.at(x + 1, y) || !mask.at(x, y - 1) || !mask.at(x, y + 1);
            if (boundary) ++perimeter;
        }
    constexpr double kPi = 3.14159265358979323846;
    f.values[24] = static_cast<double>(area) / n_pixels;
    f.values[25] = area > 0 ? static_cast<double>(perimeter) / static_cast<double>(area) : 0.0;
    f.values[26] = perimeter > 0 ? 4.0 * kPi * static_cast<double>(area) /
                                       (static_cast<double>(perimeter) * perimeter)
                                 : 0.0;

    // Central 32x32 statistics, scaled to [0,1].
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int y = kCropSize / 4; y < 3 * kCropSize / 4; ++y)
        for (int x = kCropSize / 4; x < 3 * kCropSize / 4; ++x) {
            const double v = gray.at(x, y);
            sum += v;
            sum_sq += v * v;
        }
    const double n_central = static_cast<double>(kCropSize / 2) * (kCropSize / 2);
    const double mean = sum / n_central;
    const double var = std::max(0.0, sum_sq / n_central - mean * mean);
    f.values[27] = mean / 255.0;
    f.values[28] = std::sqrt(var) / 255.0;

    std::int64_t dark = 0;
    for (auto v : gray.data)
        if (v < 100) ++dark;
    f.values[29] = static_cast<double>(dark) / n_pixels;

    return f;
}

// ============================================================================
// Softmax classifier
// ============================================================================

void SoftmaxClassifier::validate() const {
    if (num_classes < 2) throw std::invalid_argument("SoftmaxClassifier: need >= 2 classes");
    if (class_names.size() != static_cast<std::size_t>(num_classes))
        throw std::invalid_argument("SoftmaxClassifier: class_names length mismatch");
    if (weights.size() != static_cast<std::size_t>(num_classes) * kFeatureDim)
        throw std::invalid_argument("SoftmaxClassifier: weights dimension mismatch");
    if (bias.size() != static_cast<std::size_t>(num_classes))
        throw std::invalid_argument("SoftmaxClassifier: bias dimension mismatch");
    for (double v : weights)
        if (!std::isfinite(v)) throw std::invalid_argument("SoftmaxClassifier: non-finite weight");
    for (double v : bias)
        if (!std::isfinite(v)) throw std::invalid_argument("SoftmaxClassifier: non-finite bias");
}

namespace {

std::vector<double> logits_of(const SoftmaxClassifier& clf, const FeatureVector& f) {
    std::vector<double> z(clf.num_classes);
    for (int c = 0; c < clf.num_classes; ++c) {
        double acc = clf.bias[c];
        for (int j = 0; j < kFeatureDim; ++j) acc += clf.weight(c, j) * f.values[j];
        z[c] = acc;
    }
    return z;
}

void softmax_inplace(std::vector<double>& z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

std::vector<double> predict(const SoftmaxClassifier& clf, const FeatureVector& f) {
    clf.validate();
    std::vector<double> z = logits_of(clf, f);
    softmax_inplace(z);
    return z;
}

double training_loss(const SoftmaxClassifier& clf, const std::vector<TrainExample>& data,
                     double l2) {
    double loss = 0.0;
    for (const auto& ex : data) {
        std::vector<double> z = logits_of(clf, ex.features);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        loss -= z[ex.label] - zmax - std::log(sum);
    }
    loss /= static_cast<double>(data.size());
    double wnorm = 0.0;
    for (double w : clf.weights) wnorm += w * w;
    return loss + 0.5 * l2 * wnorm;
}

void training_gradient(const SoftmaxClassifier& clf, const std::vector<TrainExample>& data,
                       double l2, std::vector<double>& grad_weights,
                       std::vector<double>& grad_bias) {
    const int k = clf.num_classes;
    grad_weights.assign(static_cast<std::size_t>(k) * kFeatureDim, 0.0);
    grad_bias.assign(k, 0.0);
    std::vector<double> p;
    for (const auto& ex : data) {
        p = logits_of(clf, ex.features);
        softmax_inplace(p);
        p[ex.label] -= 1.0;
        for (int c = 0; c < k; ++c) {
            grad_bias[c] += p[c];
            double* gw = grad_weights.data() + static_cast<std::size_t>(c) * kFeatureDim;
            for (int j = 0; j < kFeatureDim; ++j) gw[j] += p[c] * ex.features.values[j];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (auto& g : grad_bias) g *= inv_n;
    for (std::size_t i = 0; i < grad_weights.size(); ++i)
        grad_weights[i] = grad_weights[i] * inv_n + l2 * clf.weights[i];
}

SoftmaxClassifier train(int num_classes, const std::vector<std::string>& class_names,
                        const std::vector<TrainExample>& data, const TrainConfig& cfg) {
    if (num_classes < 2) throw std::invalid_argument("train: need >= 2 classes");
    if (class_names.size() != static_cast<std::size_t>(num_classes))
        throw std::invalid_argument("train: class_names length mismatch");
    if (data.empty()) throw std::runtime_error("train: empty class");

    std::vector<std::int64_t> counts(num_classes, 0);
    for (const auto& ex : data) {
        if (ex.label < 0 || ex.label >= num_classes)
            throw std::invalid_argument("train: label out of range");
        ++counts[ex.label];
    }
    for (int c = 0; c < num_classes; ++c)
        if (counts[c] == 0) throw std::runtime_error("train: empty class: " + class_names[c]);

    SoftmaxClassifier clf;
    clf.num_classes = num_classes;
    clf.class_names = class_names;
    clf.weights.resize(static_cast<std::size_t>(num_classes) * kFeatureDim);
    clf.bias.assign(num_classes, 0.0);
    Rng rng(cfg.seed);
    for (auto& w : clf.weights) w = 0.01 * rng.next_gaussian();

    std::vector<double> grad_w;
    std::vector<double> grad_b;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        training_gradient(clf, data, cfg.l2, grad_w, grad_b);
        for (std::size_t i = 0; i < clf.weights.size(); ++i)
            clf.weights[i] -= cfg.learning_rate * grad_w[i];
        for (int c = 0; c < num_classes; ++c) clf.bias[c] -= cfg.learning_rate * grad_b[c];
    }
    return clf;
}

// ============================================================================
// Cascade
// ============================================================================

void CascadeModel::validate() const {
    stage1.validate();
    stage2.validate();
    if (stage1.num_classes != 2)
        throw std::invalid_argument("CascadeModel: stage1 must be binary");
    if (stage2.num_classes != kNumStages)
        throw std::invalid_argument("CascadeModel: stage2 must cover all stages");
    if (std::find(stage2.class_names.begin(), stage2.class_names.end(), "healthy") ==
        stage2.class_names.end())
        throw std::invalid_argument("CascadeModel: stage2 must include healthy");
}

std::vector<LabeledCell> balanced_stage2_subset(const std::vector<LabeledCell>& data,
                                                std::uint64_t seed) {
    std::array<std::int64_t, kNumStages> counts{};
    for (const auto& cell : data) ++counts[static_cast<int>(cell.label)];
    for (int c = 1; c < kNumStages; ++c)
        if (counts[c] == 0)
            throw std::runtime_error("balanced_stage2_subset: empty class: " +
                                     stage_names()[c]);

    const double mean_infected =
        static_cast<double>(counts[1] + counts[2] + counts[3] + counts[4]) / 4.0;
    const std::int64_t target = std::lround(mean_infected);

    std::vector<std::size_t> healthy_indices;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i].label == StageLabel::Healthy) healthy_indices.push_back(i);

    std::vector<std::size_t> chosen;
    if (static_cast<std::int64_t>(healthy_indices.size()) <= target) {
        chosen = healthy_indices;
    } else {
        Rng rng(seed);
        rng.shuffle(healthy_indices);
        chosen.assign(healthy_indices.begin(), healthy_indices.begin() + target);
        std::sort(chosen.begin(), chosen.end());
    }

    std::vector<std::uint8_t> keep(data.size(), 0);
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i].label != StageLabel::Healthy) keep[i] = 1;
    for (auto i : chosen) keep[i] = 1;

    std::vector<LabeledCell> out;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (keep[i]) out.push_back(data[i]);
    return out;
}

SscResult classify_ssc(const SoftmaxClassifier& model, const FeatureVector& f) {
    if (model.num_classes != kNumStages)
        throw std::invalid_argument("classify_ssc: model must have 5 classes");
    SscResult r;
    r.probs = predict(model, f);
    r.label = static_cast<StageLabel>(argmax_lowest(r.probs));
    return r;
}

SscResult classify_ssc(const SoftmaxClassifier& model, const CellCrop& crop) {
    return classify_ssc(model, extract_features(crop));
}

TscResult classify_tsc(const CascadeModel& model, const FeatureVector& f) {
    model.validate();
    TscResult r;
    r.stage1_probs = predict(model.stage1, f);
    if (argmax_lowest(r.stage1_probs) == 0) {
        // Stage-1 healthy: short-circuit, stage 2 never runs.
        r.label = StageLabel::Healthy;
        return r;
    }
    r.stage2_probs = predict(model.stage2, f);
    r.label = static_cast<StageLabel>(argmax_lowest(*r.stage2_probs));
    return r;
}

TscResult classify_tsc(const CascadeModel& model, const CellCrop& crop) {
    return classify_tsc(model, extract_features(crop));
}

Model train_model(ModelKind kind, const std::vector<LabeledCell>& cells,
                  const TrainConfig& cfg, std::uint64_t balance_seed) {
    std::vector<TrainExample> five_way;
    five_way.reserve(cells.size());
    for (const auto& cell : cells)
        five_way.push_back({cell.features, static_cast<int>(cell.label)});

    Model model;
    if (kind == ModelKind::Ssc) {
        model.impl = train(kNumStages, stage_names(), five_way, cfg);
        return model;
    }

    std::vector<TrainExample> binary;
    binary.reserve(cells.size());
    for (const auto& cell : cells)
        binary.push_back({cell.features, cell.label == StageLabel::Healthy ? 0 : 1});
    SoftmaxClassifier stage1 = train(2, {"healthy", "infected"}, binary, cfg);

    const auto balanced = balanced_stage2_subset(cells, balance_seed);
    std::vector<TrainExample> stage2_data;
    stage2_data.reserve(balanced.size());
    for (const auto& cell : balanced)
        stage2_data.push_back({cell.features, static_cast<int>(cell.label)});
    TrainConfig s2cfg = cfg;
    s2cfg.seed = cfg.seed + 1;
    SoftmaxClassifier stage2 = train(kNumStages, stage_names(), stage2_data, s2cfg);

    CascadeModel cascade{std::move(stage1), std::move(stage2)};
    cascade.validate();
    model.impl = std::move(cascade);
    return model;
}

// ============================================================================
// Persistence
// ============================================================================

namespace {

constexpr const char* kModelFormat = "smearscope-model-v1";

json classifier_to_json(const SoftmaxClassifier& clf) {
    json j;
    j["format"] = kModelFormat;
    j["num_classes"] = clf.num_classes;
    j["class_names"] = clf.class_names;
    json rows = json::array();
    for (int c = 0; c < clf.num_classes; ++c) {
        json row = json::array();
        for (int k = 0; k < kFeatureDim; ++k) row.push_back(clf.weight(c, k));
        rows.push_back(std::move(row));
    }
    j["weights"] = std::move(rows);
    j["bias"] = clf.bias;
    j["feature_spec"] = kFeatureSpec;
    return j;
}

SoftmaxClassifier classifier_from_json(const json& j) {
    if (j.value("format", "") != kModelFormat)
        throw std::runtime_error("model: unknown format");
    if (j.value("feature_spec", "") != kFeatureSpec)
        throw std::runtime_error("model: unsupported feature_spec");
    SoftmaxClassifier clf;
    clf.num_classes = j.at("num_classes").get<int>();
    clf.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& row : j.at("weights"))
        for (const auto& v : row) clf.weights.push_back(v.get<double>());
    clf.bias = j.at("bias").get<std::vector<double>>();
    clf.validate();
    return clf;
}

}  // namespace

std::string model_to_json(const Model& model) {
    json j;
    if (model.is_tsc()) {
        j["format"] = kModelFormat;
        j["arch"] = "tsc";
        j["stage1"] = classifier_to_json(model.tsc().stage1);
        j["stage2"] = classifier_to_json(model.tsc().stage2);
    } else {
        j = classifier_to_json(model.ssc());
        j["arch"] = "ssc";
    }
    return j.dump(2);
}

Model model_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("model: malformed JSON: ") + e.what());
    }
    const std::string arch = j.value("arch", "ssc");
    Model model;
    if (arch == "tsc") {
        CascadeModel cascade;
        cascade.stage1 = classifier_from_json(j.at("stage1"));
        cascade.stage2 = classifier_from_json(j.at("stage2"));
        cascade.validate();
        model.impl = std::move(cascade);
    } else if (arch == "ssc") {
        model.impl = classifier_from_json(j);
    } else {
        throw std::runtime_error("model: unknown arch: " + arch);
    }
    return model;
}

void save_model(const std::string& path, const Model& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << model_to_json(model) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

std::string model_hash(const Model& model) {
    return detail::to_hex16(detail::fnv1a64(model_to_json(model)));
}

}  // namespace smearscope
