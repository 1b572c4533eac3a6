#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "oul/dataset.hpp"
#include "oul/error.hpp"

using namespace oul;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    static int counter = 0;
    return fs::temp_directory_path() / ("oul_dataset_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++) + "_" + name);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
}

// tiny IDX pair: n images of rows x cols, pixel = (i + j) % 256
std::pair<fs::path, fs::path> write_idx_fixture(int n, int rows, int cols,
                                                const std::vector<unsigned char>& labels,
                                                std::uint32_t images_magic = 0x00000803) {
    const fs::path img = temp_file("images.idx");
    const fs::path lab = temp_file("labels.idx");
    {
        std::ofstream out(img, std::ios::binary);
        write_be32(out, images_magic);
        write_be32(out, n);
        write_be32(out, rows);
        write_be32(out, cols);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < rows * cols; ++j)
                out.put(static_cast<char>((i + j) % 256));
    }
    {
        std::ofstream out(lab, std::ios::binary);
        write_be32(out, 0x00000801);
        write_be32(out, n);
        for (int i = 0; i < n; ++i) out.put(static_cast<char>(labels[i]));
    }
    return {img, lab};
}

} // namespace

TEST_CASE("load_idx reads a well-formed pair") {
    auto [img, lab] = write_idx_fixture(4, 3, 2, {0, 1, 9, 3});
    const auto set = dataset::load_idx(img, lab);
    CHECK(set.size() == 4);
    CHECK(set.dim() == 6);
    CHECK(set.n_classes == 10);
    CHECK(set.labels == std::vector<int>{0, 1, 9, 3});
    CHECK(set.features(0, 0) == 0.0);
    CHECK(set.features(1, 2) == doctest::Approx(3.0 / 255.0));
    fs::remove(img);
    fs::remove(lab);
}

TEST_CASE("load_idx rejects a bad magic number") {
    auto [img, lab] = write_idx_fixture(2, 2, 2, {0, 1}, 0x00000903);
    CHECK_THROWS_WITH_AS(dataset::load_idx(img, lab), doctest::Contains("magic"), data_error);
    fs::remove(img);
    fs::remove(lab);
}

TEST_CASE("load_idx rejects truncated labels") {
    auto [img, lab] = write_idx_fixture(4, 2, 2, {0, 1, 2, 3});
    fs::resize_file(lab, 5);
    CHECK_THROWS_WITH_AS(dataset::load_idx(img, lab), doctest::Contains("truncated"), data_error);
    fs::remove(img);
    fs::remove(lab);
}

TEST_CASE("load_idx rejects image/label count mismatch") {
    auto [img, lab] = write_idx_fixture(3, 2, 2, {0, 1, 2});
    auto [img2, lab2] = write_idx_fixture(4, 2, 2, {0, 1, 2, 3});
    CHECK_THROWS_WITH_AS(dataset::load_idx(img, lab2), doctest::Contains("match"), data_error);
    fs::remove(img);
    fs::remove(lab);
    fs::remove(img2);
    fs::remove(lab2);
}

TEST_CASE("synth_clusters shape, balance, determinism") {
    const auto set = dataset::synth_clusters(4, 8, 50, 8.0, 7);
    CHECK(set.size() == 200);
    CHECK(set.dim() == 8);
    std::vector<int> counts(4, 0);
    for (int label : set.labels) counts[label]++;
    for (int c : counts) CHECK(c == 50);

    const auto again = dataset::synth_clusters(4, 8, 50, 8.0, 7);
    CHECK(set.features == again.features);
    CHECK(set.labels == again.labels);
}

TEST_CASE("synth_clusters separable: nearest-centroid oracle >= 99%") {
    const auto set = dataset::synth_clusters(6, 16, 80, 8.0, 21);
    // centroid per class
    Matrix centroids(6, 16);
    std::vector<int> counts(6, 0);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const int c = set.labels[i];
        counts[c]++;
        for (std::size_t j = 0; j < 16; ++j) centroids(c, j) += set.features(i, j);
    }
    for (int c = 0; c < 6; ++c)
        for (std::size_t j = 0; j < 16; ++j) centroids(c, j) /= counts[c];

    std::size_t correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        int best = -1;
        double best_d = 0.0;
        for (int c = 0; c < 6; ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < 16; ++j) {
                const double diff = set.features(i, j) - centroids(c, j);
                d += diff * diff;
            }
            if (best < 0 || d < best_d) {
                best = c;
                best_d = d;
            }
        }
        if (best == set.labels[i]) correct++;
    }
    CHECK(static_cast<double>(correct) / set.size() >= 0.99);
}

TEST_CASE("synth_clusters rejects d_in < n_classes") {
    CHECK_THROWS_AS(dataset::synth_clusters(10, 4, 5, 8.0, 1), std::invalid_argument);
}

TEST_CASE("synth_feature_clusters basic shape and determinism") {
    const auto set = dataset::synth_feature_clusters(10, 16, 8, 3);
    CHECK(set.size() == 80);
    CHECK(set.dim() == 16);
    const auto again = dataset::synth_feature_clusters(10, 16, 8, 3);
    CHECK(set.features == again.features);
}

TEST_CASE("FEAT1 header-driven load") {
    const auto set = dataset::synth_feature_clusters(100, 64, 4, 5);
    const fs::path path = temp_file("f.feat");
    dataset::save_features(set, path);
    const auto loaded = dataset::load_features(path);
    CHECK(loaded.size() == 400);
    CHECK(loaded.dim() == 64);
    CHECK(loaded.n_classes == 100);
    fs::remove(path);
}

TEST_CASE("FEAT1 round-trip is bit-identical for f32-exact features") {
    // random set quantized to f32 (the storage precision)
    dataset::LabeledSet set;
    set.n_classes = 5;
    set.features = oracles::random_matrix(20, 7, 99);
    for (double& v : set.features.data()) v = static_cast<float>(v);
    oul::Rng rng(3);
    for (int i = 0; i < 20; ++i) set.labels.push_back(static_cast<int>(rng.index(5)));

    const fs::path path = temp_file("rt.feat");
    dataset::save_features(set, path);
    const auto loaded = dataset::load_features(path);
    CHECK(loaded.features == set.features);
    CHECK(loaded.labels == set.labels);
    CHECK(loaded.n_classes == set.n_classes);

    // and the file itself round-trips byte-for-byte
    const fs::path path2 = temp_file("rt2.feat");
    dataset::save_features(loaded, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("FEAT1 rejects truncated payload") {
    const auto set = dataset::synth_feature_clusters(4, 8, 4, 5);
    const fs::path path = temp_file("trunc.feat");
    dataset::save_features(set, path);
    fs::resize_file(path, fs::file_size(path) - 7);
    CHECK_THROWS_WITH_AS(dataset::load_features(path), doctest::Contains("truncated"), data_error);
    fs::remove(path);
}

TEST_CASE("FEAT1 rejects bad magic") {
    const fs::path path = temp_file("badmagic.feat");
    std::ofstream out(path, std::ios::binary);
    out.write("NOTFEAT1", 8);
    out.close();
    CHECK_THROWS_WITH_AS(dataset::load_features(path), doctest::Contains("magic"), data_error);
    fs::remove(path);
}

TEST_CASE("split partitions by task, Fig. 2 sequence 9,5,3") {
    const auto set = dataset::synth_clusters(10, 12, 6, 8.0, 17);
    const dataset::SplitSpec spec{{9, 5, 3}, 0};

    const auto t0 = dataset::split(set, spec, 0);
    CHECK(t0.forget_task.size() == 6);
    for (int label : t0.forget_task.labels) CHECK(label == 9);
    CHECK(t0.retain.size() == 54);
    for (int label : t0.retain.labels) CHECK(label != 9);
    CHECK(t0.forgotten_so_far.size() == 6);

    const auto t2 = dataset::split(set, spec, 2);
    std::set<int> forgotten(t2.forgotten_so_far.labels.begin(), t2.forgotten_so_far.labels.end());
    CHECK(forgotten == std::set<int>{9, 5, 3});
    std::set<int> retained(t2.retain.labels.begin(), t2.retain.labels.end());
    CHECK(retained.size() == 7);
    CHECK(retained.count(9) == 0);
    CHECK(retained.count(5) == 0);
    CHECK(retained.count(3) == 0);

    // counting: retain + forgotten cover the whole set exactly once
    CHECK(t2.retain.size() + t2.forgotten_so_far.size() == set.size());
    CHECK(t2.forget_task.size() == 6);
}

TEST_CASE("split partition property on random specs") {
    const auto set = dataset::synth_clusters(8, 10, 5, 6.0, 23);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        oul::Rng rng(seed);
        std::vector<int> classes(8);
        std::iota(classes.begin(), classes.end(), 0);
        oul::shuffle(classes, rng);
        classes.resize(1 + rng.index(7));
        const dataset::SplitSpec spec{classes, seed};
        for (int k = 0; k < static_cast<int>(classes.size()); ++k) {
            const auto parts = dataset::split(set, spec, k);
            // no overlap between retain and forgotten label sets
            std::set<int> retained(parts.retain.labels.begin(), parts.retain.labels.end());
            for (int label : parts.forgotten_so_far.labels) CHECK(retained.count(label) == 0);
            // forget_task is contained in forgotten_so_far
            std::size_t hits = 0;
            for (int label : parts.forgotten_so_far.labels)
                if (label == classes[k]) hits++;
            CHECK(hits == parts.forget_task.size());
            CHECK(parts.retain.size() + parts.forgotten_so_far.size() == set.size());
        }
    }
}

TEST_CASE("split rejects a class absent from the set") {
    const auto set = dataset::synth_clusters(4, 6, 5, 6.0, 2);
    const dataset::SplitSpec spec{{7}, 0};
    CHECK_THROWS_AS(dataset::split(set, spec, 0), data_error);
}

TEST_CASE("holdout_split is stratified, disjoint and deterministic") {
    const auto set = dataset::synth_clusters(5, 8, 20, 8.0, 31);
    const auto [train, eval] = dataset::holdout_split(set, 0.2, 77);
    CHECK(train.size() + eval.size() == set.size());
    std::vector<int> eval_counts(5, 0);
    for (int label : eval.labels) eval_counts[label]++;
    for (int c : eval_counts) CHECK(c == 4);

    const auto [train2, eval2] = dataset::holdout_split(set, 0.2, 77);
    CHECK(train.features == train2.features);
    CHECK(eval.features == eval2.features);
}
