#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oul/dataset.hpp"
#include "oul/model.hpp"
#include "oul/unlearn.hpp"

namespace oul::harness {

struct DatasetSpec {
    enum class Kind { kMnist, kSynthetic, kFeatures } kind = Kind::kSynthetic;
    // mnist
    std::filesystem::path mnist_images;
    std::filesystem::path mnist_labels;
    // synthetic (orthonormal-center clusters)
    int classes = 10;
    int dim = 16;
    int per_class = 100;
    double spread = 8.0;
    std::uint64_t seed = 1;
    // features
    std::filesystem::path features_path;
};

struct PretrainConfig {
    int hidden = 128;
    int epochs = 30;
    double learning_rate = 0.2;
    int batch_size = 256;
};

struct GateConfig {
    int epochs = 30;
    double learning_rate = 0.2;
    int batch_size = 256;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    unlearn::Strategy strategy = unlearn::Strategy::kInTraining;
    std::vector<int> forget_classes;
    std::vector<double> lambdas = {0.0, 0.25, 0.5, 1.0, 2.0};
    int rank = 4;
    unlearn::TrainConfig train;
    double sv_threshold = 1e-3;
    std::filesystem::path output_dir = "out";
    PretrainConfig pretrain;
    GateConfig gate;
    double eval_fraction = 0.2;
    bool wall_clock = true;
};

/// Flat key = value file; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

struct TaskRecord {
    int task_index = 0;  // 0 is the pre-unlearning baseline row
    int class_id = -1;
    double retain_acc = 0.0;
    double forget_acc_cum = 0.0;
    double forget_acc_task = 0.0;
    int free_dims = 0;
    int effective_rank = 0;
    std::uint64_t wall_ms = 0;
    double retain_acc_base = 0.0;  // base model on the same retain split
    bool saturated = false;
};

struct UnlearnRun {
    std::string strategy;
    double lambda = 0.0;
    double baseline_retain_acc = 0.0;   // base model on the final retain split
    double baseline_overall_acc = 0.0;  // base model on the whole eval split
    std::uint64_t split_hash = 0;
    std::vector<TaskRecord> records;  // index 0 is the baseline row (when N > 0)
};

struct Baseline {
    model::Backbone backbone;
    model::FrozenHead head;
    double holdout_acc = 0.0;
};

/// Trains (or for feature datasets, fits the head over) the baseline model,
/// persists the checkpoint under output_dir and returns the model reloaded
/// from that checkpoint so later runs see identical f32 weights.
Baseline pretrain_baseline(const ExperimentConfig& config);

/// Executes the sequential unlearning protocol under the configured
/// strategy, one trajectory per lambda. Adapters are trained once and
/// shared across the sweep (training does not depend on lambda).
std::vector<UnlearnRun> run_sequence(const ExperimentConfig& config);

/// Writes results.csv, results.json and one subspace_*.csv per run.
void emit_results(std::span<const UnlearnRun> runs, const ExperimentConfig& config,
                  const std::filesystem::path& output_dir);

/// Parses a results.json back into runs (round-trip of emit_results).
std::vector<UnlearnRun> parse_results_json(const std::filesystem::path& path);

/// Built-in invariant suite; prints one line per check. Returns 0 or 4.
int selftest(std::ostream& out);

std::string version_string();

/// CLI entry: pretrain | run | selftest | gen-features. Returns the process
/// exit code (0 ok, 2 config, 3 dataset, 4 numerical).
int run_cli(const std::vector<std::string>& args);

} // namespace oul::harness
