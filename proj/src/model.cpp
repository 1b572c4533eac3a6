#include "oul/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "oul/error.hpp"

namespace oul::model {

namespace {

constexpr char kCheckpointMagic[9] = "OULM1\0\0\0";

void add_bias_rows(Matrix& m, const std::vector<double>& bias) {
    if (m.cols() != bias.size()) throw std::invalid_argument("bias length does not match columns");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += bias[j];
}

} // namespace

Backbone::Backbone(std::vector<Stage> stages) : stages_(std::move(stages)) {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        if (stages_[i].w.cols() != stages_[i].bias.size()) {
            throw std::invalid_argument("Backbone: stage bias length mismatch");
        }
        if (i > 0 && stages_[i - 1].w.cols() != stages_[i].w.rows()) {
            throw std::invalid_argument("Backbone: stage dimension chain broken");
        }
    }
}

FrozenHead::FrozenHead(Matrix w_base, std::vector<double> bias)
    : w_base_(std::move(w_base)), bias_(std::move(bias)) {
    if (w_base_.cols() != bias_.size()) {
        throw std::invalid_argument("FrozenHead: bias length does not match d_out");
    }
}

Matrix features(const Backbone& backbone, const Matrix& x) {
    if (backbone.is_identity()) return x;
    Matrix h = x;
    for (const Stage& stage : backbone.stages()) {
        h = matmul(h, stage.w);
        add_bias_rows(h, stage.bias);
        for (double& v : h.data()) v = std::max(0.0, v);
    }
    return h;
}

Matrix logits(const FrozenHead& head, const Matrix& feats, const Matrix* effective_delta) {
    if (feats.cols() != head.d_in()) {
        throw std::invalid_argument("logits: feature dim " + std::to_string(feats.cols()) +
                                    " does not match head d_in " + std::to_string(head.d_in()));
    }
    Matrix z = effective_delta ? matmul(feats, head.w_base() + *effective_delta)
                               : matmul(feats, head.w_base());
    add_bias_rows(z, head.bias());
    return z;
}

Matrix softmax_rows(const Matrix& z) {
    Matrix p = z;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double row_max = p(i, 0);
        for (std::size_t j = 1; j < p.cols(); ++j) row_max = std::max(row_max, p(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            p(i, j) = std::exp(p(i, j) - row_max);
            sum += p(i, j);
        }
        for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) /= sum;
    }
    return p;
}

Matrix delta(const LoraAdapter& adapter, const Matrix* projector) {
    const Matrix pa = projector ? matmul(*projector, adapter.a) : adapter.a;
    return matmul(pa, adapter.b);
}

LossGrad ce_loss_and_grads(const FrozenHead& head, const LoraAdapter& adapter,
                           const Matrix* projector, const Matrix& feats,
                           std::span<const int> labels) {
    if (labels.empty()) throw std::invalid_argument("ce_loss_and_grads: empty batch");
    if (feats.rows() != labels.size()) {
        throw std::invalid_argument("ce_loss_and_grads: rows do not match labels");
    }
    const Matrix pa = projector ? matmul(*projector, adapter.a) : adapter.a;
    const Matrix effective = matmul(pa, adapter.b);
    const Matrix z = logits(head, feats, &effective);
    Matrix resid = softmax_rows(z);

    const double n = static_cast<double>(labels.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < resid.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= resid.cols()) {
            throw std::invalid_argument("ce_loss_and_grads: label out of range");
        }
        loss -= std::log(resid(i, y));
        resid(i, y) -= 1.0;
    }
    loss /= n;
    for (double& v : resid.data()) v /= n;

    const Matrix g = matmul(transpose(feats), resid);
    LossGrad out;
    out.loss = loss;
    out.grad_b = matmul(transpose(pa), g);
    const Matrix gbt = matmul(g, transpose(adapter.b));
    out.grad_a = projector ? matmul(*projector, gbt) : gbt;
    return out;
}

double accuracy(const FrozenHead& head, const Backbone& backbone, const Matrix* effective_delta,
                const dataset::LabeledSet& set) {
    if (set.size() == 0) throw std::invalid_argument("accuracy: empty set");
    const Matrix feats = features(backbone, set.features);
    const Matrix z = logits(head, feats, effective_delta);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < z.cols(); ++j) {
            if (z(i, j) > z(i, arg)) arg = j;
        }
        if (static_cast<int>(arg) == set.labels[i]) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(z.rows());
}

LinearGrad linear_softmax_grad(const Matrix& x, std::span<const int> labels, const Matrix& w,
                               const std::vector<double>& bias) {
    if (labels.empty()) throw std::invalid_argument("linear_softmax_grad: empty batch");
    if (x.rows() != labels.size() || x.cols() != w.rows() || w.cols() != bias.size()) {
        throw std::invalid_argument("linear_softmax_grad: shape mismatch");
    }
    Matrix z = matmul(x, w);
    add_bias_rows(z, bias);
    Matrix resid = softmax_rows(z);

    const double n = static_cast<double>(labels.size());
    LinearGrad out;
    for (std::size_t i = 0; i < resid.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= resid.cols()) {
            throw std::invalid_argument("linear_softmax_grad: label out of range");
        }
        out.loss -= std::log(resid(i, y));
        resid(i, y) -= 1.0;
    }
    out.loss /= n;
    for (double& v : resid.data()) v /= n;
    out.grad_w = matmul(transpose(x), resid);
    out.grad_b.assign(w.cols(), 0.0);
    for (std::size_t i = 0; i < resid.rows(); ++i)
        for (std::size_t j = 0; j < resid.cols(); ++j) out.grad_b[j] += resid(i, j);
    return out;
}

namespace {

void write_f32_matrix(std::ostream& out, const Matrix& m) {
    for (double v : m.data()) io::write_f32_le(out, static_cast<float>(v));
}

void write_f32_vector(std::ostream& out, const std::vector<double>& v) {
    for (double x : v) io::write_f32_le(out, static_cast<float>(x));
}

Matrix read_f32_matrix(std::istream& in, std::size_t rows, std::size_t cols,
                       const std::string& what) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = io::read_f32_le(in, what);
    ensure_finite(m, "checkpoint matrix");
    return m;
}

std::vector<double> read_f32_vector(std::istream& in, std::size_t n, const std::string& what) {
    std::vector<double> v(n);
    for (double& x : v) x = io::read_f32_le(in, what);
    return v;
}

} // namespace

void save_checkpoint(const Backbone& backbone, const FrozenHead& head,
                     const std::filesystem::path& path) {
    auto out = io::open_for_write(path, "checkpoint");
    io::write_magic(out, kCheckpointMagic);
    io::write_u32_le(out, static_cast<std::uint32_t>(head.d_in()));
    io::write_u32_le(out, static_cast<std::uint32_t>(head.d_out()));
    io::write_u32_le(out, static_cast<std::uint32_t>(backbone.stages().size()));
    for (const Stage& stage : backbone.stages()) {
        io::write_u32_le(out, static_cast<std::uint32_t>(stage.w.rows()));
        io::write_u32_le(out, static_cast<std::uint32_t>(stage.w.cols()));
        write_f32_matrix(out, stage.w);
        write_f32_vector(out, stage.bias);
    }
    write_f32_matrix(out, head.w_base());
    write_f32_vector(out, head.bias());
    if (!out) throw data_error("checkpoint: write failed for " + path.string());
}

std::pair<Backbone, FrozenHead> load_checkpoint(const std::filesystem::path& path) {
    auto in = io::open_for_read(path, "checkpoint");
    const std::string what = "checkpoint " + path.string();
    io::read_magic(in, kCheckpointMagic, what);
    const std::uint32_t d_in = io::read_u32_le(in, what);
    const std::uint32_t d_out = io::read_u32_le(in, what);
    const std::uint32_t n_stages = io::read_u32_le(in, what);
    std::vector<Stage> stages;
    stages.reserve(n_stages);
    for (std::uint32_t i = 0; i < n_stages; ++i) {
        const std::uint32_t in_dim = io::read_u32_le(in, what);
        const std::uint32_t out_dim = io::read_u32_le(in, what);
        Stage stage;
        stage.w = read_f32_matrix(in, in_dim, out_dim, what);
        stage.bias = read_f32_vector(in, out_dim, what);
        stages.push_back(std::move(stage));
    }
    Matrix w = read_f32_matrix(in, d_in, d_out, what);
    std::vector<double> bias = read_f32_vector(in, d_out, what);
    return {Backbone(std::move(stages)), FrozenHead(std::move(w), std::move(bias))};
}

} // namespace oul::model
