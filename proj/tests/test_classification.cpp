#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "smearscope/classification.hpp"
#include "smearscope/rng.hpp"

using namespace smearscope;

namespace {

RgbImage gradient_image(int w, int h) {
    RgbImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.set_pixel(x, y, static_cast<std::uint8_t>((x * 7) % 256),
                          static_cast<std::uint8_t>((y * 11) % 256),
                          static_cast<std::uint8_t>((x + y) % 256));
    return img;
}

FeatureVector random_features(Rng& rng) {
    FeatureVector f;
    for (auto& v : f.values) v = rng.next_double();
    return f;
}

SoftmaxClassifier random_classifier(int k, Rng& rng) {
    SoftmaxClassifier clf;
    clf.num_classes = k;
    for (int c = 0; c < k; ++c) clf.class_names.push_back("class" + std::to_string(c));
    clf.weights.resize(static_cast<std::size_t>(k) * kFeatureDim);
    clf.bias.resize(k);
    for (auto& w : clf.weights) w = rng.next_gaussian();
    for (auto& b : clf.bias) b = rng.next_gaussian();
    return clf;
}

/// Linearly separable toy set: feature 0 carries the class, the rest is
/// small noise.
std::vector<TrainExample> separable_toy_set(int n_per_class, int k, Rng& rng) {
    std::vector<TrainExample> data;
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < n_per_class; ++i) {
            TrainExample ex;
            ex.label = c;
            ex.features.values[0] = static_cast<double>(c);
            for (int j = 1; j < kFeatureDim; ++j)
                ex.features.values[j] = 0.05 * rng.next_double();
            data.push_back(ex);
        }
    return data;
}

}  // namespace

TEST_CASE("extract_crop: zero-margin 64x64 box is pixel-identical") {
    const RgbImage img = gradient_image(128, 128);
    const BoundingBox box{20, 30, 64, 64};
    const CellCrop crop = extract_crop(img, box, 0.0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(crop.pixels.pixel(x, y)[c] == img.pixel(box.x + x, box.y + y)[c]);
}

TEST_CASE("extract_crop: corners map to expanded-box corners") {
    const RgbImage img = gradient_image(96, 96);
    const BoundingBox box{10, 14, 32, 32};
    // With zero margin the sample corners are the box corners exactly.
    const CellCrop crop = extract_crop(img, box, 0.0);
    for (int c = 0; c < 3; ++c) {
        CHECK(crop.pixels.pixel(0, 0)[c] == img.pixel(10, 14)[c]);
        CHECK(crop.pixels.pixel(63, 0)[c] == img.pixel(10 + 31, 14)[c]);
        CHECK(crop.pixels.pixel(0, 63)[c] == img.pixel(10, 14 + 31)[c]);
        CHECK(crop.pixels.pixel(63, 63)[c] == img.pixel(10 + 31, 14 + 31)[c]);
    }
}

TEST_CASE("extract_crop: margin clamps at image edges") {
    const RgbImage img = gradient_image(64, 64);
    const BoundingBox box{0, 0, 20, 20};
    const CellCrop crop = extract_crop(img, box, 0.10);
    // Clamped top-left corner stays at (0, 0).
    for (int c = 0; c < 3; ++c) CHECK(crop.pixels.pixel(0, 0)[c] == img.pixel(0, 0)[c]);
    CHECK(crop.pixels.width == kCropSize);
}

TEST_CASE("extract_crop: degenerate and out-of-bounds boxes are rejected") {
    const RgbImage img = gradient_image(32, 32);
    CHECK_THROWS_AS(extract_crop(img, {4, 4, 0, 5}), std::invalid_argument);
    CHECK_THROWS_AS(extract_crop(img, {30, 30, 10, 10}), std::invalid_argument);
}

TEST_CASE("extract_features: constant crops") {
    CellCrop white;
    white.pixels = RgbImage(kCropSize, kCropSize, 255, 255, 255);
    const FeatureVector fw = extract_features(white);
    for (int c = 0; c < 3; ++c) {
        for (int b = 0; b < 7; ++b) CHECK(fw.values[c * 8 + b] == 0.0);
        CHECK(fw.values[c * 8 + 7] == 1.0);
    }
    CHECK(fw.values[29] == 0.0);  // dark fraction
    CHECK(fw.values[24] == 0.0);  // degenerate Otsu -> empty mask

    CellCrop black;
    black.pixels = RgbImage(kCropSize, kCropSize, 0, 0, 0);
    const FeatureVector fb = extract_features(black);
    for (int c = 0; c < 3; ++c) CHECK(fb.values[c * 8] == 1.0);
    CHECK(fb.values[29] == 1.0);
}

TEST_CASE("extract_features: histograms sum to one per channel") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        CellCrop crop;
        crop.pixels = RgbImage(kCropSize, kCropSize);
        for (auto& v : crop.pixels.data) v = static_cast<std::uint8_t>(rng.next_below(256));
        const FeatureVector f = extract_features(crop);
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0;
            for (int b = 0; b < 8; ++b) sum += f.values[c * 8 + b];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
        for (double v : f.values) CHECK(std::isfinite(v));
    }
}

TEST_CASE("predict: zero model gives the uniform distribution") {
    SoftmaxClassifier clf;
    clf.num_classes = 5;
    clf.class_names = stage_names();
    clf.weights.assign(5 * kFeatureDim, 0.0);
    clf.bias.assign(5, 0.0);
    Rng rng(1);
    const auto p = predict(clf, random_features(rng));
    for (double v : p) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("predict: outputs live on the probability simplex") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto clf = random_classifier(2 + static_cast<int>(rng.next_below(4)), rng);
        const auto p = predict(clf, random_features(rng));
        double sum = 0.0;
        for (double v : p) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("predict: bias shift leaves the argmax unchanged") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto clf = random_classifier(5, rng);
        const auto f = random_features(rng);
        const auto p0 = predict(clf, f);

        auto shifted = clf;
        const double c = 10.0 * rng.next_gaussian();
        for (auto& b : shifted.bias) b += c;
        const auto p1 = predict(shifted, f);

        const auto argmax = [](const std::vector<double>& v) {
            return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
        };
        CHECK(argmax(p0) == argmax(p1));
        for (std::size_t i = 0; i < p0.size(); ++i)
            CHECK(p0[i] == doctest::Approx(p1[i]).epsilon(1e-12));
    }
}

TEST_CASE("predict: dimension mismatch is an error") {
    SoftmaxClassifier clf;
    clf.num_classes = 3;
    clf.class_names = {"a", "b", "c"};
    clf.weights.assign(2 * kFeatureDim, 0.0);  // wrong
    clf.bias.assign(3, 0.0);
    FeatureVector f;
    CHECK_THROWS_AS(predict(clf, f), std::invalid_argument);
}

TEST_CASE("train: separable two-class toy set reaches training accuracy 1.0") {
    Rng rng(17);
    const auto data = separable_toy_set(10, 2, rng);
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.learning_rate = 1.0;
    cfg.l2 = 0.0;
    cfg.seed = 4;
    const auto clf = train(2, {"neg", "pos"}, data, cfg);
    for (const auto& ex : data) {
        const auto p = predict(clf, ex.features);
        const int pred = p[1] > p[0] ? 1 : 0;
        CHECK(pred == ex.label);
    }
}

TEST_CASE("train: identical seeds give bit-identical parameters") {
    Rng rng(18);
    const auto data = separable_toy_set(8, 3, rng);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.seed = 9;
    const auto a = train(3, {"a", "b", "c"}, data, cfg);
    const auto b = train(3, {"a", "b", "c"}, data, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);

    cfg.seed = 10;
    const auto c = train(3, {"a", "b", "c"}, data, cfg);
    CHECK(a.weights != c.weights);
}

TEST_CASE("train: a class with no examples is an error") {
    Rng rng(19);
    auto data = separable_toy_set(5, 2, rng);  // labels 0 and 1 only
    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(train(3, {"a", "b", "c"}, data, cfg), "train: empty class: c",
                         std::runtime_error);
}

TEST_CASE("training gradient matches central finite differences") {
    Rng rng(23);
    double max_rel = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + static_cast<int>(rng.next_below(4));
        std::vector<TrainExample> data;
        for (int i = 0; i < 8; ++i) {
            TrainExample ex;
            ex.features = random_features(rng);
            ex.label = i % k;  // every class present
            data.push_back(ex);
        }
        auto clf = random_classifier(k, rng);
        const double l2 = 0.01;

        std::vector<double> grad_w, grad_b;
        training_gradient(clf, data, l2, grad_w, grad_b);

        const auto loss = [&] { return training_loss(clf, data, l2); };
        constexpr double h = 1e-5;
        for (std::size_t i = 0; i < clf.weights.size(); ++i) {
            const double numeric = oracle::central_difference(loss, clf.weights[i], h);
            const double rel = std::abs(grad_w[i] - numeric) /
                               std::max(1e-6, std::abs(grad_w[i]) + std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
        for (std::size_t i = 0; i < clf.bias.size(); ++i) {
            const double numeric = oracle::central_difference(loss, clf.bias[i], h);
            const double rel = std::abs(grad_b[i] - numeric) /
                               std::max(1e-6, std::abs(grad_b[i]) + std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("balanced_stage2_subset: healthy target is the mean infected count") {
    // counts: ring 100, troph 20, schizont 5, gametocyte 30, healthy 5000
    // mean infected = 38.75 -> healthy kept = 39
    std::vector<LabeledCell> data;
    const auto add = [&](StageLabel label, int n) {
        for (int i = 0; i < n; ++i) data.push_back({FeatureVector{}, label});
    };
    add(StageLabel::Ring, 100);
    add(StageLabel::Trophozoite, 20);
    add(StageLabel::Schizont, 5);
    add(StageLabel::Gametocyte, 30);
    add(StageLabel::Healthy, 5000);

    const auto subset = balanced_stage2_subset(data, 42);
    std::array<int, kNumStages> counts{};
    for (const auto& cell : subset) ++counts[static_cast<int>(cell.label)];
    CHECK(counts[0] == 39);
    CHECK(counts[1] == 100);  // never drops an infected cell
    CHECK(counts[2] == 20);
    CHECK(counts[3] == 5);
    CHECK(counts[4] == 30);
}

TEST_CASE("balanced_stage2_subset: keeps all healthy when below the target") {
    std::vector<LabeledCell> data;
    for (int c = 1; c < kNumStages; ++c)
        for (int i = 0; i < 40; ++i) data.push_back({FeatureVector{}, static_cast<StageLabel>(c)});
    for (int i = 0; i < 10; ++i) data.push_back({FeatureVector{}, StageLabel::Healthy});
    const auto subset = balanced_stage2_subset(data, 1);
    int healthy = 0;
    for (const auto& cell : subset) healthy += cell.label == StageLabel::Healthy;
    CHECK(healthy == 10);
    CHECK(subset.size() == data.size());
}

TEST_CASE("balanced_stage2_subset: deterministic per seed, error on empty infected class") {
    std::vector<LabeledCell> data;
    for (int i = 0; i < 50; ++i) {
        LabeledCell cell;
        cell.features.values[0] = i;
        cell.label = StageLabel::Healthy;
        data.push_back(cell);
    }
    for (int c = 1; c < kNumStages; ++c)
        for (int i = 0; i < 4; ++i) data.push_back({FeatureVector{}, static_cast<StageLabel>(c)});

    const auto a = balanced_stage2_subset(data, 7);
    const auto b = balanced_stage2_subset(data, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].features.values[0] == b[i].features.values[0]);

    std::vector<LabeledCell> missing = {{FeatureVector{}, StageLabel::Healthy},
                                        {FeatureVector{}, StageLabel::Ring}};
    CHECK_THROWS_AS(balanced_stage2_subset(missing, 1), std::runtime_error);
}

namespace {

SoftmaxClassifier bias_only(int k, const std::vector<double>& bias,
                            const std::vector<std::string>& names) {
    SoftmaxClassifier clf;
    clf.num_classes = k;
    clf.class_names = names;
    clf.weights.assign(static_cast<std::size_t>(k) * kFeatureDim, 0.0);
    clf.bias = bias;
    return clf;
}

}  // namespace

TEST_CASE("classify_ssc: argmax with lowest-id tie-break") {
    FeatureVector f;

    const auto healthy_model =
        bias_only(5, {3.0, 0.0, 0.0, 0.0, 0.0}, stage_names());
    CHECK(classify_ssc(healthy_model, f).label == StageLabel::Healthy);

    // Exact tie between Ring and Schizont resolves to Ring.
    const auto tied = bias_only(5, {0.0, 5.0, 0.0, 5.0, 0.0}, stage_names());
    const auto r = classify_ssc(tied, f);
    CHECK(r.label == StageLabel::Ring);

    // Returned label's probability is the max of the vector.
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto clf = random_classifier(5, rng);
        const auto res = classify_ssc(clf, random_features(rng));
        CHECK(res.probs[static_cast<int>(res.label)] ==
              *std::max_element(res.probs.begin(), res.probs.end()));
    }
}

TEST_CASE("classify_tsc: routing contract") {
    FeatureVector f;
    const std::vector<std::string> s1_names = {"healthy", "infected"};

    CascadeModel gate_healthy;
    gate_healthy.stage1 = bias_only(2, {2.0, 0.0}, s1_names);
    gate_healthy.stage2 = bias_only(5, {0.0, 9.0, 0.0, 0.0, 0.0}, stage_names());
    const auto r1 = classify_tsc(gate_healthy, f);
    CHECK(r1.label == StageLabel::Healthy);
    CHECK_FALSE(r1.stage2_probs.has_value());  // stage 2 never ran

    CascadeModel gate_infected;
    gate_infected.stage1 = bias_only(2, {0.0, 2.0}, s1_names);
    gate_infected.stage2 = bias_only(5, {0.0, 9.0, 0.0, 0.0, 0.0}, stage_names());
    const auto r2 = classify_tsc(gate_infected, f);
    CHECK(r2.label == StageLabel::Ring);
    REQUIRE(r2.stage2_probs.has_value());

    // Stage 2 may overturn the gate and call the cell healthy anyway.
    CascadeModel rescue;
    rescue.stage1 = bias_only(2, {0.0, 2.0}, s1_names);
    rescue.stage2 = bias_only(5, {9.0, 0.0, 0.0, 0.0, 0.0}, stage_names());
    const auto r3 = classify_tsc(rescue, f);
    CHECK(r3.label == StageLabel::Healthy);
    CHECK(r3.stage2_probs.has_value());
}

TEST_CASE("classify_tsc: stage-2 evaluations equal stage-1 infected verdicts") {
    Rng rng(37);
    CascadeModel model;
    model.stage1 = random_classifier(2, rng);
    model.stage1.class_names = {"healthy", "infected"};
    model.stage2 = random_classifier(5, rng);
    model.stage2.class_names = stage_names();

    int stage1_infected = 0;
    int stage2_ran = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto f = random_features(rng);
        const auto r = classify_tsc(model, f);
        const auto s1 = predict(model.stage1, f);
        const bool infected = s1[1] > s1[0];
        stage1_infected += infected;
        stage2_ran += r.stage2_probs.has_value();
        if (!infected) CHECK(r.label == StageLabel::Healthy);
    }
    CHECK(stage1_infected == stage2_ran);
}

TEST_CASE("model persistence: JSON round-trip is bit-exact") {
    Rng rng(41);
    Model ssc;
    auto clf = random_classifier(5, rng);
    clf.class_names = stage_names();
    ssc.impl = clf;
    const Model ssc_back = model_from_json(model_to_json(ssc));
    CHECK_FALSE(ssc_back.is_tsc());
    CHECK(ssc_back.ssc().weights == ssc.ssc().weights);
    CHECK(ssc_back.ssc().bias == ssc.ssc().bias);
    CHECK(model_hash(ssc_back) == model_hash(ssc));

    Model tsc;
    CascadeModel cascade;
    cascade.stage1 = random_classifier(2, rng);
    cascade.stage1.class_names = {"healthy", "infected"};
    cascade.stage2 = clf;
    tsc.impl = cascade;
    const Model tsc_back = model_from_json(model_to_json(tsc));
    REQUIRE(tsc_back.is_tsc());
    CHECK(tsc_back.tsc().stage1.weights == tsc.tsc().stage1.weights);
    CHECK(tsc_back.tsc().stage2.weights == tsc.tsc().stage2.weights);

    const auto dir = std::filesystem::temp_directory_path() / "smearscope-model-test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.json").string();
    save_model(path, tsc);
    const Model loaded = load_model(path);
    CHECK(loaded.tsc().stage1.bias == tsc.tsc().stage1.bias);
    std::filesystem::remove_all(dir);
}

TEST_CASE("model persistence: malformed inputs are rejected") {
    CHECK_THROWS_AS(model_from_json("{broken"), std::runtime_error);
    CHECK_THROWS_AS(model_from_json(R"({"format":"other-v9"})"), std::runtime_error);
    CHECK_THROWS_AS(model_from_json(R"({"format":"smearscope-model-v1","arch":"cnn"})"),
                    std::runtime_error);
}
