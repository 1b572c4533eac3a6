#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "oul/matrix.hpp"

namespace oul::dataset {

/// Labeled examples: one feature row per example.
struct LabeledSet {
    Matrix features;          // n x d_in
    std::vector<int> labels;  // values in [0, n_classes)
    int n_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
};

/// The task sequence: which classes get forgotten, in order.
struct SplitSpec {
    std::vector<int> forget_classes;
    std::uint64_t seed = 0;
};

struct TaskSplit {
    LabeledSet forget_task;       // rows of forget_classes[k]
    LabeledSet retain;            // rows of classes not yet forgotten
    LabeledSet forgotten_so_far;  // rows of forget_classes[0..k]
};

/// Throws data_error if labels are out of range or counts disagree.
void validate(const LabeledSet& set);

/// MNIST-style IDX pair. Pixels scaled to [0,1]; order preserved.
LabeledSet load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path);

/// Gaussian clusters with mutually orthonormal center directions
/// (requires d_in >= n_classes). Rows are class-major; deterministic.
LabeledSet synth_clusters(int n_classes, int d_in, int per_class, double spread,
                          std::uint64_t seed);

/// The bundled stand-in for frozen-backbone features: 100-class/64-dim by
/// default, with a shared offset direction, confusable group structure and
/// four sub-modes per class so the desk-scale protocol exhibits the
/// interference the full-scale experiments show. Deterministic.
LabeledSet synth_feature_clusters(int n_classes, int d_in, int per_class, std::uint64_t seed);

/// FEAT1 precomputed-feature file.
LabeledSet load_features(const std::filesystem::path& path);
void save_features(const LabeledSet& set, const std::filesystem::path& path);

/// Partition at task k of the sequence.
TaskSplit split(const LabeledSet& set, const SplitSpec& spec, int k);

/// Deterministic stratified train/eval split (per-class seeded shuffle).
std::pair<LabeledSet, LabeledSet> holdout_split(const LabeledSet& set, double eval_fraction,
                                                std::uint64_t seed);

} // namespace oul::dataset
