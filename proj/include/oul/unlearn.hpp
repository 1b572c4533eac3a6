#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oul/dataset.hpp"
#include "oul/matrix.hpp"
#include "oul/model.hpp"

namespace oul::unlearn {

/// Cumulative projector P onto the complement of all subspaces claimed by
/// earlier tasks, together with the accumulated orthonormal basis it
/// encodes. States are immutable; updates return a new state.
struct ProjectionState {
    Matrix p;             // d_in x d_in
    Matrix basis;         // d_in x m accumulated orthonormal columns
    double sv_threshold;  // relative singular-value cutoff for task bases

    static ProjectionState initial(std::size_t d_in, double sv_threshold);
    std::size_t d_in() const noexcept { return p.rows(); }
};

struct TrainConfig {
    int epochs = 1;
    double learning_rate = 0.1;
    int batch_size = 0;  // 0 = full batch
    std::uint64_t seed = 0;
    double init_scale = 0.01;
};

/// Outcome of one task: the final adapter (projection folded into `a`), how
/// many subspace columns it claimed, the capture model's accuracy on the
/// forget set and the final training loss.
struct TaskResult {
    model::LoraAdapter adapter;
    int effective_rank = 0;
    double forget_acc_during = 0.0;
    double final_loss = 0.0;
};

enum class Strategy { kStatic, kPosthoc, kInTraining, kMoe };

Strategy strategy_from_name(const std::string& name);
std::string strategy_name(Strategy s);

/// Trains an adapter on the forget set without structural constraints.
model::LoraAdapter train_unconstrained(const model::FrozenHead& head,
                                       const model::Backbone& backbone,
                                       const dataset::LabeledSet& forget, const TrainConfig& cfg,
                                       int rank);

/// Applies the geometric constraint after training: a := P a.
model::LoraAdapter posthoc_project(const ProjectionState& state, model::LoraAdapter adapter);

/// Trains with the cumulative projector embedded in the forward pass; every
/// gradient step stays in Range(P). The returned adapter has the projection
/// folded into `a`.
model::LoraAdapter train_constrained(const model::FrozenHead& head,
                                     const model::Backbone& backbone, const ProjectionState& state,
                                     const dataset::LabeledSet& forget, const TrainConfig& cfg,
                                     int rank);

/// Top left singular vectors of the adapter's update whose singular values
/// exceed sv_threshold * s_max, at most `rank` columns, re-orthonormalized
/// against the accumulated basis. May return zero columns.
Matrix extract_task_basis(const ProjectionState& state, const model::LoraAdapter& adapter);

/// Appends the task basis and rebuilds P = I - QQ^T, cross-checking the
/// literal recursion P - UU^T to 1e-8.
ProjectionState update_projection(const ProjectionState& state, const Matrix& task_basis);

/// W_fused = w_base - lambda * sum_k delta_k, summed in task order.
Matrix fuse(const model::FrozenHead& head, std::span<const model::LoraAdapter> adapters,
            double lambda);

/// round(trace(P)) = d_in - claimed columns.
int free_subspace_dim(const ProjectionState& state);

/// max |(I - P) grad_a|; asserted <= 1e-10 inside constrained training.
double gradient_feasibility_residual(const ProjectionState& state, const Matrix& grad_a);

/// The per-task pipeline the experiment runner drives: train per strategy,
/// extract the claimed basis, and (posthoc / in_training) advance the
/// projection state. Static and MoE leave the state untouched.
struct TaskOutcome {
    TaskResult result;
    Matrix task_basis;
    ProjectionState state;
    bool saturated = false;  // task claimed no new directions
};
TaskOutcome execute_task(Strategy strategy, const model::FrozenHead& head,
                         const model::Backbone& backbone, const ProjectionState& state,
                         const dataset::LabeledSet& forget, const TrainConfig& cfg, int rank);

/// Adapter archive (magic OULA1): one entry per task, f32 payload.
struct ArchiveEntry {
    model::LoraAdapter adapter;
    Matrix task_basis;
    int effective_rank = 0;
};

void save_archive(std::span<const ArchiveEntry> entries, std::size_t d_in, std::size_t d_out,
                  int rank, const std::filesystem::path& path);
std::vector<ArchiveEntry> load_archive(const std::filesystem::path& path);

/// Rebuilds a ProjectionState from archived task bases. Stored columns are
/// f32-rounded, so they are re-orthonormalized before P is formed.
ProjectionState rebuild_state(std::span<const ArchiveEntry> entries, std::size_t d_in,
                              double sv_threshold);

} // namespace oul::unlearn
