#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "smearscope/dataset.hpp"
#include "smearscope/evaluation.hpp"
#include "smearscope/imaging.hpp"
#include "smearscope/segmentation.hpp"
#include "test_helpers.hpp"

using namespace smearscope;

TEST_CASE("make_markers: one convex component yields one marker") {
    const BinaryMask mask = helpers::single_disk_fixture();
    const DistanceMap dist = distance_transform(mask);
    CHECK(make_markers(mask, dist, 0.5).num_labels == 1);
}

TEST_CASE("make_markers: merged disk pair yields two markers") {
    const BinaryMask mask = helpers::merged_disks_fixture();
    CHECK(connected_components(mask, Connectivity::Eight).num_labels == 1);
    const DistanceMap dist = distance_transform(mask);
    CHECK(make_markers(mask, dist, 0.5).num_labels == 2);
}

TEST_CASE("make_markers: empty mask yields zero markers") {
    BinaryMask mask(16, 16);
    const DistanceMap dist = distance_transform(mask);
    CHECK(make_markers(mask, dist, 0.5).num_labels == 0);
}

TEST_CASE("watershed: single blob with a single marker floods completely") {
    const BinaryMask mask = helpers::single_disk_fixture();
    const DistanceMap dist = distance_transform(mask);
    const LabelMap markers = make_markers(mask, dist, 0.5);
    const LabelMap labels = watershed(mask, markers, dist);
    CHECK(labels.num_labels == 1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            CHECK(labels.at(x, y) == (mask.at(x, y) ? 1 : 0));
}

TEST_CASE("watershed: flooding never crosses background between blobs") {
    BinaryMask mask(40, 20);
    helpers::stamp_disk(mask, 10, 10, 6);
    helpers::stamp_disk(mask, 30, 10, 6);
    const DistanceMap dist = distance_transform(mask);
    const LabelMap markers = make_markers(mask, dist, 0.5);
    REQUIRE(markers.num_labels == 2);
    const LabelMap labels = watershed(mask, markers, dist);

    const LabelMap components = connected_components(mask, Connectivity::Eight);
    std::map<std::int32_t, std::set<std::int32_t>> by_component;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                CHECK(labels.at(x, y) > 0);  // every foreground pixel labeled
                by_component[components.at(x, y)].insert(labels.at(x, y));
            }
    REQUIRE(by_component.size() == 2);
    for (const auto& [comp, lbls] : by_component) CHECK(lbls.size() == 1);
}

TEST_CASE("watershed: merged disk pair splits near the perpendicular bisector") {
    const BinaryMask mask = helpers::merged_disks_fixture();  // centers x=17 and x=31
    const DistanceMap dist = distance_transform(mask);
    const LabelMap markers = make_markers(mask, dist, 0.5);
    REQUIRE(markers.num_labels == 2);
    const LabelMap labels = watershed(mask, markers, dist);
    CHECK(labels.num_labels == 2);

    const std::int32_t left_label = labels.at(17, 16);
    const std::int32_t right_label = labels.at(31, 16);
    REQUIRE(left_label > 0);
    REQUIRE(right_label > 0);
    CHECK(left_label != right_label);

    std::int64_t left_count = 0, right_count = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) {
                CHECK(labels.at(x, y) == 0);
                continue;
            }
            CHECK(labels.at(x, y) > 0);
            if (labels.at(x, y) == left_label) ++left_count;
            else ++right_count;
            // Bisector is x = 24; the assignment may waver by one pixel.
            if (x <= 23) CHECK(labels.at(x, y) == left_label);
            if (x >= 25) CHECK(labels.at(x, y) == right_label);
        }
    // Pixel counts differ by < 10%.
    const double diff = std::abs(static_cast<double>(left_count - right_count));
    CHECK(diff / static_cast<double>(std::max(left_count, right_count)) < 0.10);
}

TEST_CASE("watershed: no markers is an error") {
    BinaryMask mask(8, 8, true);
    const DistanceMap dist = distance_transform(mask);
    LabelMap empty_markers(8, 8);
    CHECK_THROWS_WITH_AS(watershed(mask, empty_markers, dist), "watershed: no seeds",
                         std::runtime_error);
}

TEST_CASE("watershed: marker on background is rejected") {
    BinaryMask mask(8, 8);
    mask.set(2, 2, true);
    const DistanceMap dist = distance_transform(mask);
    LabelMap markers(8, 8);
    markers.at(5, 5) = 1;
    markers.num_labels = 1;
    CHECK_THROWS_AS(watershed(mask, markers, dist), std::invalid_argument);
}

TEST_CASE("localize_cells: blank image yields no detections") {
    RgbImage img(128, 128, 245, 230, 235);
    CHECK(localize_cells(img).empty());
}

TEST_CASE("localize_cells: recovers non-overlapping synthetic cells") {
    SynthConfig cfg;
    cfg.image_width = 900;
    cfg.image_height = 700;
    cfg.min_cells = 50;
    cfg.max_cells = 50;
    cfg.overlap_fraction = 0.0;
    cfg.seed = 2024;
    auto [img, cells] = generate_smear(cfg);
    REQUIRE(cells.size() == 50);

    const auto detections = localize_cells(img);
    CHECK(detections.size() == cells.size());

    std::vector<BoundingBox> gt, pred;
    for (const auto& c : cells) gt.push_back(c.box);
    for (const auto& d : detections) pred.push_back(d.box);
    const auto match = match_detections(gt, pred, 0.5);
    CHECK(match.tp == static_cast<int>(cells.size()));
    for (const auto& m : match.matches) CHECK(m.iou >= 0.5);
}

TEST_CASE("localize_cells: detection count stays close under touching pairs") {
    SynthConfig cfg;
    cfg.image_width = 640;
    cfg.image_height = 640;
    cfg.min_cells = 60;
    cfg.max_cells = 60;
    cfg.overlap_fraction = 0.10;  // allows grazing overlaps -> merged blobs
    cfg.seed = 516;
    auto [img, cells] = generate_smear(cfg);

    // The fixture must actually contain touching pairs.
    int touching = 0;
    for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t j = i + 1; j < cells.size(); ++j)
            if (iou(cells[i].box, cells[j].box) > 0.0) ++touching;
    CHECK(touching > 0);

    const auto detections = localize_cells(img);
    const double count = static_cast<double>(detections.size());
    const double expected = static_cast<double>(cells.size());
    CHECK(count >= 0.95 * expected);
    CHECK(count <= 1.05 * expected);
}

TEST_CASE("localize_cells: watershed reduces to connected components when cells are disjoint") {
    SynthConfig cfg;
    cfg.image_width = 700;
    cfg.image_height = 500;
    cfg.min_cells = 30;
    cfg.max_cells = 30;
    cfg.overlap_fraction = 0.0;
    cfg.noise_std = 0.0;
    cfg.seed = 88;
    auto [img, cells] = generate_smear(cfg);

    SegmentationConfig seg;
    const auto detections = localize_cells(img, seg);

    // Recompute the post-morphology mask the same way the pipeline does.
    const GrayImage eq = equalize_histogram(to_grayscale(img));
    BinaryMask mask = tiled_otsu(eq, seg.grid_rows, seg.grid_cols);
    mask = open(mask, seg.open_se);
    for (int i = 0; i < seg.erode_iters; ++i) mask = erode(mask, seg.erode_se);
    const int n_components = connected_components(mask, Connectivity::Eight).num_labels;
    CHECK(static_cast<int>(detections.size()) == n_components);
}

TEST_CASE("localize_cells: bit-exact determinism across runs") {
    SynthConfig cfg;
    cfg.image_width = 512;
    cfg.image_height = 384;
    cfg.min_cells = 25;
    cfg.max_cells = 25;
    cfg.seed = 9;
    auto [img, cells] = generate_smear(cfg);

    const auto a = localize_cells(img);
    const auto b = localize_cells(img);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].box == b[i].box);
        CHECK(a[i].label_id == b[i].label_id);
        CHECK(a[i].area == b[i].area);
    }
    // Sorted by (y, x).
    for (std::size_t i = 1; i < a.size(); ++i) {
        const bool ordered = a[i - 1].box.y < a[i].box.y ||
                             (a[i - 1].box.y == a[i].box.y && a[i - 1].box.x <= a[i].box.x);
        CHECK(ordered);
    }
}

TEST_CASE("SegmentationConfig validation") {
    SegmentationConfig cfg;
    cfg.marker_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.erode_iters = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
