#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "oul/dataset.hpp"
#include "oul/matrix.hpp"
#include "oul/model.hpp"
#include "oul/unlearn.hpp"

namespace oul::router {

/// Affine gate over frozen features. When trained by train_gate the last
/// expert index is the null expert that receives retained data (so the
/// adapter mixture vanishes on it).
struct Gate {
    Matrix theta_g;            // d_in x n_experts
    std::vector<double> bias;  // n_experts

    static Gate zeros(std::size_t d_in, std::size_t n_experts);
    std::size_t n_experts() const noexcept { return bias.size(); }
    std::size_t d_in() const noexcept { return theta_g.rows(); }
};

/// Per-row softmax expert weights, n x n_experts, rows sum to one.
Matrix route(const Gate& gate, const Matrix& feats);

/// Dynamically weighted unlearning forward pass:
/// logits_i = feats_i w_base + bias - lambda * sum_k alpha_k(i) feats_i delta_k.
/// The gate may carry one extra (null) expert beyond the adapters.
Matrix moe_forward(const model::FrozenHead& head, std::span<const model::LoraAdapter> adapters,
                   const Gate& gate, const Matrix& feats, double lambda);

/// Routing objective: rows of forget set k target expert k, retained rows
/// target the appended null expert. Plain seeded gradient descent.
Gate train_gate(const model::FrozenHead& head, const model::Backbone& backbone,
                std::span<const model::LoraAdapter> adapters,
                std::span<const dataset::LabeledSet> forget_sets,
                const dataset::LabeledSet& retain, const unlearn::TrainConfig& cfg);

/// Gate checkpoint (magic OULG1) appended to an adapter archive.
void append_gate(const std::filesystem::path& archive_path, const Gate& gate);
Gate load_gate(const std::filesystem::path& archive_path);

} // namespace oul::router
