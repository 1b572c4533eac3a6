#include "oul/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "oul/error.hpp"
#include "oul/linalg.hpp"
#include "oul/rng.hpp"

namespace oul::unlearn {

namespace {

constexpr char kArchiveMagic[9] = "OULA1\0\0\0";
constexpr double kFeasibilityTol = 1e-10;
constexpr double kOrthoCheckTol = 1e-8;
constexpr double kDropTol = 1e-8;       // residual norm below which a claimed column is discarded
constexpr double kZeroDeltaFloor = 1e-12;

void validate_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (cfg.learning_rate < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
    if (cfg.batch_size < 0) throw std::invalid_argument("TrainConfig: negative batch size");
    if (cfg.init_scale < 0.0) throw std::invalid_argument("TrainConfig: negative init scale");
}

model::LoraAdapter init_adapter(std::size_t d_in, std::size_t d_out, int rank,
                                const TrainConfig& cfg) {
    if (rank < 1 || static_cast<std::size_t>(rank) > std::min(d_in, d_out)) {
        throw std::invalid_argument("adapter rank must satisfy 1 <= r <= min(d_in, d_out)");
    }
    Rng rng(cfg.seed);
    Matrix a(d_in, rank);
    for (double& v : a.data()) v = cfg.init_scale * rng.normal();
    // b starts at zero so the update starts at zero and the fused model
    // starts at the baseline
    return model::LoraAdapter{std::move(a), Matrix(rank, d_out), rank};
}

struct Batch {
    Matrix feats;
    std::vector<int> labels;
};

std::vector<Batch> make_batches(const Matrix& feats, std::span<const int> labels, int batch_size) {
    const std::size_t n = feats.rows();
    const std::size_t step = batch_size == 0 ? n : static_cast<std::size_t>(batch_size);
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < n; start += step) {
        const std::size_t count = std::min(step, n - start);
        Batch b;
        b.feats = Matrix(count, feats.cols());
        for (std::size_t i = 0; i < count; ++i) {
            const auto src = feats.row(start + i);
            std::copy(src.begin(), src.end(), b.feats.data().begin() + i * feats.cols());
            b.labels.push_back(labels[start + i]);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

// Shared descent loop; `projector` null for unconstrained training.
model::LoraAdapter descend(const model::FrozenHead& head, const model::Backbone& backbone,
                           const ProjectionState* state, const dataset::LabeledSet& forget,
                           const TrainConfig& cfg, int rank) {
    validate_config(cfg);
    if (forget.size() == 0) throw std::invalid_argument("adapter training: empty forget set");

    const Matrix feats = model::features(backbone, forget.features);
    if (feats.cols() != head.d_in()) {
        throw std::invalid_argument("adapter training: backbone output does not match head d_in");
    }
    model::LoraAdapter adapter = init_adapter(head.d_in(), head.d_out(), rank, cfg);
    const Matrix* projector = state ? &state->p : nullptr;
    const auto batches = make_batches(feats, forget.labels, cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const Batch& batch : batches) {
            const auto lg = model::ce_loss_and_grads(head, adapter, projector, batch.feats,
                                                     batch.labels);
            if (!std::isfinite(lg.loss)) {
                throw numeric_error("adapter training diverged at epoch " + std::to_string(epoch));
            }
            if (state) {
                const double residual = gradient_feasibility_residual(*state, lg.grad_a);
                if (residual > kFeasibilityTol) {
                    throw numeric_error("gradient feasibility violated at epoch " +
                                        std::to_string(epoch) + ": residual " +
                                        std::to_string(residual));
                }
            }
            adapter.a = adapter.a - cfg.learning_rate * lg.grad_a;
            adapter.b = adapter.b - cfg.learning_rate * lg.grad_b;
        }
    }
    return adapter;
}

} // namespace

ProjectionState ProjectionState::initial(std::size_t d_in, double sv_threshold) {
    return ProjectionState{Matrix::identity(d_in), Matrix(d_in, 0), sv_threshold};
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "static") return Strategy::kStatic;
    if (name == "posthoc") return Strategy::kPosthoc;
    if (name == "in_training") return Strategy::kInTraining;
    if (name == "moe") return Strategy::kMoe;
    throw config_error("unknown strategy '" + name + "'");
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::kStatic: return "static";
        case Strategy::kPosthoc: return "posthoc";
        case Strategy::kInTraining: return "in_training";
        case Strategy::kMoe: return "moe";
    }
    return "?";
}

model::LoraAdapter train_unconstrained(const model::FrozenHead& head,
                                       const model::Backbone& backbone,
                                       const dataset::LabeledSet& forget, const TrainConfig& cfg,
                                       int rank) {
    return descend(head, backbone, nullptr, forget, cfg, rank);
}

model::LoraAdapter posthoc_project(const ProjectionState& state, model::LoraAdapter adapter) {
    adapter.a = matmul(state.p, adapter.a);
    return adapter;
}

model::LoraAdapter train_constrained(const model::FrozenHead& head,
                                     const model::Backbone& backbone, const ProjectionState& state,
                                     const dataset::LabeledSet& forget, const TrainConfig& cfg,
                                     int rank) {
    model::LoraAdapter adapter = descend(head, backbone, &state, forget, cfg, rank);
    // fold the projection in so delta() is final without the projector
    adapter.a = matmul(state.p, adapter.a);
    return adapter;
}

Matrix extract_task_basis(const ProjectionState& state, const model::LoraAdapter& adapter) {
    const Matrix dw = adapter.delta();
    if (dw.rows() != state.d_in()) {
        throw std::invalid_argument("extract_task_basis: adapter does not match state dimension");
    }
    if (max_abs(dw) == 0.0) return Matrix(state.d_in(), 0);

    const auto decomposition = linalg::svd(dw);
    const double s_max = decomposition.s[0];
    if (s_max <= kZeroDeltaFloor) return Matrix(state.d_in(), 0);

    std::size_t keep = 0;
    const std::size_t cap = std::min<std::size_t>(adapter.rank, decomposition.s.size());
    while (keep < cap && decomposition.s[keep] > state.sv_threshold * s_max) ++keep;
    if (keep == 0) return Matrix(state.d_in(), 0);

    const Matrix kept = take_columns(decomposition.u, 0, keep);
    return linalg::orthonormalize_against(kept, state.basis, kDropTol);
}

ProjectionState update_projection(const ProjectionState& state, const Matrix& task_basis) {
    if (task_basis.empty()) {
        return ProjectionState{state.p, state.basis, state.sv_threshold};
    }
    if (task_basis.rows() != state.d_in()) {
        throw std::invalid_argument("update_projection: basis rows do not match state dimension");
    }
    const Matrix gram = matmul(transpose(task_basis), task_basis);
    if (max_abs(gram - Matrix::identity(task_basis.cols())) > kOrthoCheckTol) {
        throw std::invalid_argument("update_projection: task basis is not orthonormal");
    }
    if (!state.basis.empty() &&
        max_abs(matmul(transpose(state.basis), task_basis)) > kOrthoCheckTol) {
        throw std::invalid_argument("update_projection: task basis overlaps the accumulated basis");
    }

    const Matrix new_basis = hcat(state.basis, task_basis);
    const Matrix p_closed = linalg::projector_from_basis(new_basis, state.d_in());
    const Matrix p_literal = state.p - matmul(task_basis, transpose(task_basis));
    if (max_abs(p_closed - p_literal) > 1e-8) {
        throw numeric_error("update_projection: closed form and literal recursion disagree");
    }
    return ProjectionState{p_closed, new_basis, state.sv_threshold};
}

Matrix fuse(const model::FrozenHead& head, std::span<const model::LoraAdapter> adapters,
            double lambda) {
    if (adapters.empty()) return head.w_base();
    Matrix sum(head.d_in(), head.d_out());
    for (const auto& adapter : adapters) {
        const Matrix dw = adapter.delta();
        if (dw.rows() != head.d_in() || dw.cols() != head.d_out()) {
            throw std::invalid_argument("fuse: adapter shape does not match head");
        }
        sum = sum + dw;
    }
    return head.w_base() - lambda * sum;
}

int free_subspace_dim(const ProjectionState& state) {
    return static_cast<int>(std::llround(trace(state.p)));
}

double gradient_feasibility_residual(const ProjectionState& state, const Matrix& grad_a) {
    if (grad_a.rows() != state.d_in()) {
        throw std::invalid_argument("gradient_feasibility_residual: shape mismatch");
    }
    const Matrix complement = Matrix::identity(state.d_in()) - state.p;
    return max_abs(matmul(complement, grad_a));
}

TaskOutcome execute_task(Strategy strategy, const model::FrozenHead& head,
                         const model::Backbone& backbone, const ProjectionState& state,
                         const dataset::LabeledSet& forget, const TrainConfig& cfg, int rank) {
    model::LoraAdapter adapter;
    switch (strategy) {
        case Strategy::kStatic:
        case Strategy::kMoe:
            adapter = train_unconstrained(head, backbone, forget, cfg, rank);
            break;
        case Strategy::kPosthoc:
            adapter = posthoc_project(state, train_unconstrained(head, backbone, forget, cfg, rank));
            break;
        case Strategy::kInTraining:
            adapter = train_constrained(head, backbone, state, forget, cfg, rank);
            break;
    }

    TaskOutcome out;
    out.task_basis = extract_task_basis(state, adapter);
    out.saturated = out.task_basis.cols() == 0;
    const bool advances_state =
        strategy == Strategy::kPosthoc || strategy == Strategy::kInTraining;
    out.state = advances_state ? update_projection(state, out.task_basis) : state;

    const Matrix capture = adapter.delta();
    out.result.adapter = std::move(adapter);
    out.result.effective_rank = static_cast<int>(out.task_basis.cols());
    out.result.forget_acc_during = model::accuracy(head, backbone, &capture, forget);
    const Matrix feats = model::features(backbone, forget.features);
    out.result.final_loss =
        model::ce_loss_and_grads(head, out.result.adapter, nullptr, feats, forget.labels).loss;
    return out;
}

void save_archive(std::span<const ArchiveEntry> entries, std::size_t d_in, std::size_t d_out,
                  int rank, const std::filesystem::path& path) {
    auto out = io::open_for_write(path, "adapter archive");
    io::write_magic(out, kArchiveMagic);
    io::write_u32_le(out, static_cast<std::uint32_t>(entries.size()));
    io::write_u32_le(out, static_cast<std::uint32_t>(d_in));
    io::write_u32_le(out, static_cast<std::uint32_t>(d_out));
    io::write_u32_le(out, static_cast<std::uint32_t>(rank));
    for (const ArchiveEntry& entry : entries) {
        io::write_u32_le(out, static_cast<std::uint32_t>(entry.effective_rank));
        for (double v : entry.adapter.a.data()) io::write_f32_le(out, static_cast<float>(v));
        for (double v : entry.adapter.b.data()) io::write_f32_le(out, static_cast<float>(v));
        for (double v : entry.task_basis.data()) io::write_f32_le(out, static_cast<float>(v));
    }
    if (!out) throw data_error("adapter archive: write failed for " + path.string());
}

std::vector<ArchiveEntry> load_archive(const std::filesystem::path& path) {
    auto in = io::open_for_read(path, "adapter archive");
    const std::string what = "adapter archive " + path.string();
    io::read_magic(in, kArchiveMagic, what);
    const std::uint32_t n_tasks = io::read_u32_le(in, what);
    const std::uint32_t d_in = io::read_u32_le(in, what);
    const std::uint32_t d_out = io::read_u32_le(in, what);
    const std::uint32_t rank = io::read_u32_le(in, what);

    std::vector<ArchiveEntry> entries;
    entries.reserve(n_tasks);
    for (std::uint32_t t = 0; t < n_tasks; ++t) {
        ArchiveEntry entry;
        entry.effective_rank = static_cast<int>(io::read_u32_le(in, what));
        entry.adapter.rank = static_cast<int>(rank);
        entry.adapter.a = Matrix(d_in, rank);
        for (double& v : entry.adapter.a.data()) v = io::read_f32_le(in, what);
        entry.adapter.b = Matrix(rank, d_out);
        for (double& v : entry.adapter.b.data()) v = io::read_f32_le(in, what);
        entry.task_basis = Matrix(d_in, entry.effective_rank);
        for (double& v : entry.task_basis.data()) v = io::read_f32_le(in, what);
        entries.push_back(std::move(entry));
    }
    return entries;
}

ProjectionState rebuild_state(std::span<const ArchiveEntry> entries, std::size_t d_in,
                              double sv_threshold) {
    ProjectionState state = ProjectionState::initial(d_in, sv_threshold);
    for (const ArchiveEntry& entry : entries) {
        if (entry.task_basis.empty()) continue;
        // archived columns are f32-rounded; restore orthonormality first
        const Matrix cleaned =
            linalg::orthonormalize_against(entry.task_basis, state.basis, 1e-6);
        state = update_projection(state, cleaned);
    }
    return state;
}

} // namespace oul::unlearn
