#include "oul/router.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "oul/error.hpp"

namespace oul::router {

namespace {

constexpr char kGateMagic[9] = "OULG1\0\0\0";
constexpr char kArchiveMagic[9] = "OULA1\0\0\0";

} // namespace

Gate Gate::zeros(std::size_t d_in, std::size_t n_experts) {
    return Gate{Matrix(d_in, n_experts), std::vector<double>(n_experts, 0.0)};
}

Matrix route(const Gate& gate, const Matrix& feats) {
    if (feats.cols() != gate.d_in()) {
        throw std::invalid_argument("route: feature dim does not match gate");
    }
    Matrix z = matmul(feats, gate.theta_g);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += gate.bias[j];
    return model::softmax_rows(z);
}

Matrix moe_forward(const model::FrozenHead& head, std::span<const model::LoraAdapter> adapters,
                   const Gate& gate, const Matrix& feats, double lambda) {
    if (gate.n_experts() != adapters.size() && gate.n_experts() != adapters.size() + 1) {
        throw std::invalid_argument("moe_forward: gate must score the adapters plus at most one null expert");
    }
    const Matrix alpha = route(gate, feats);
    Matrix z = model::logits(head, feats);
    for (std::size_t k = 0; k < adapters.size(); ++k) {
        const Matrix contribution = matmul(feats, adapters[k].delta());
        for (std::size_t i = 0; i < z.rows(); ++i) {
            const double weight = lambda * alpha(i, k);
            for (std::size_t j = 0; j < z.cols(); ++j) {
                z(i, j) -= weight * contribution(i, j);
            }
        }
    }
    ensure_finite(z, "moe_forward");
    return z;
}

Gate train_gate(const model::FrozenHead& head, const model::Backbone& backbone,
                std::span<const model::LoraAdapter> adapters,
                std::span<const dataset::LabeledSet> forget_sets,
                const dataset::LabeledSet& retain, const unlearn::TrainConfig& cfg) {
    if (forget_sets.size() != adapters.size()) {
        throw std::invalid_argument("train_gate: one forget set per adapter required");
    }
    if (retain.size() == 0) throw std::invalid_argument("train_gate: empty retain set");
    if (cfg.epochs < 1) throw std::invalid_argument("train_gate: epochs must be >= 1");

    const std::size_t n_experts = adapters.size() + 1;  // + null expert
    std::size_t n_rows = retain.size();
    for (const auto& set : forget_sets) n_rows += set.size();

    const Matrix retain_feats = model::features(backbone, retain.features);
    const std::size_t d_in = retain_feats.cols();
    if (d_in != head.d_in()) {
        throw std::invalid_argument("train_gate: feature dim does not match head");
    }

    Matrix x(n_rows, d_in);
    std::vector<int> targets;
    targets.reserve(n_rows);
    std::size_t row = 0;
    for (std::size_t k = 0; k < forget_sets.size(); ++k) {
        const Matrix feats = model::features(backbone, forget_sets[k].features);
        for (std::size_t i = 0; i < feats.rows(); ++i, ++row) {
            const auto src = feats.row(i);
            std::copy(src.begin(), src.end(), x.data().begin() + row * d_in);
            targets.push_back(static_cast<int>(k));
        }
    }
    for (std::size_t i = 0; i < retain_feats.rows(); ++i, ++row) {
        const auto src = retain_feats.row(i);
        std::copy(src.begin(), src.end(), x.data().begin() + row * d_in);
        targets.push_back(static_cast<int>(n_experts - 1));
    }

    Gate gate = Gate::zeros(d_in, n_experts);
    const std::size_t step = cfg.batch_size == 0 ? n_rows : static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < n_rows; start += step) {
            const std::size_t count = std::min(step, n_rows - start);
            Matrix xb(count, d_in);
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto src = x.row(start + i);
                std::copy(src.begin(), src.end(), xb.data().begin() + i * d_in);
                yb[i] = targets[start + i];
            }
            const auto lg = model::linear_softmax_grad(xb, yb, gate.theta_g, gate.bias);
            if (!std::isfinite(lg.loss)) {
                throw numeric_error("gate training diverged at epoch " + std::to_string(epoch));
            }
            gate.theta_g = gate.theta_g - cfg.learning_rate * lg.grad_w;
            for (std::size_t j = 0; j < gate.bias.size(); ++j) {
                gate.bias[j] -= cfg.learning_rate * lg.grad_b[j];
            }
        }
    }
    return gate;
}

void append_gate(const std::filesystem::path& archive_path, const Gate& gate) {
    std::ofstream out(archive_path, std::ios::binary | std::ios::app);
    if (!out) throw data_error("gate: cannot append to " + archive_path.string());
    io::write_magic(out, kGateMagic);
    io::write_u32_le(out, static_cast<std::uint32_t>(gate.d_in()));
    io::write_u32_le(out, static_cast<std::uint32_t>(gate.n_experts()));
    for (double v : gate.theta_g.data()) io::write_f32_le(out, static_cast<float>(v));
    for (double v : gate.bias) io::write_f32_le(out, static_cast<float>(v));
    if (!out) throw data_error("gate: write failed for " + archive_path.string());
}

Gate load_gate(const std::filesystem::path& archive_path) {
    auto in = io::open_for_read(archive_path, "gate");
    const std::string what = "gate " + archive_path.string();
    // skip the adapter archive block
    io::read_magic(in, kArchiveMagic, what);
    const std::uint32_t n_tasks = io::read_u32_le(in, what);
    const std::uint32_t d_in = io::read_u32_le(in, what);
    const std::uint32_t d_out = io::read_u32_le(in, what);
    const std::uint32_t rank = io::read_u32_le(in, what);
    for (std::uint32_t t = 0; t < n_tasks; ++t) {
        const std::uint32_t eff = io::read_u32_le(in, what);
        const std::streamoff payload =
            static_cast<std::streamoff>(4) *
            (static_cast<std::streamoff>(d_in) * rank + static_cast<std::streamoff>(rank) * d_out +
             static_cast<std::streamoff>(d_in) * eff);
        if (!in.seekg(payload, std::ios::cur)) throw data_error(what + ": truncated file");
    }
    io::read_magic(in, kGateMagic, what);
    const std::uint32_t gate_d_in = io::read_u32_le(in, what);
    const std::uint32_t n_experts = io::read_u32_le(in, what);
    Gate gate = Gate::zeros(gate_d_in, n_experts);
    for (double& v : gate.theta_g.data()) v = io::read_f32_le(in, what);
    for (double& v : gate.bias) v = io::read_f32_le(in, what);
    return gate;
}

} // namespace oul::router
