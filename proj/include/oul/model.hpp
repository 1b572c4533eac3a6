#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "oul/dataset.hpp"
#include "oul/matrix.hpp"

namespace oul::model {

/// One frozen affine+ReLU stage of the feature map.
struct Stage {
    Matrix w;                  // in x out
    std::vector<double> bias;  // out
};

/// Frozen feature map from raw input to head features. No stages means the
/// identity (precomputed features are fed straight to the head).
class Backbone {
public:
    Backbone() = default;
    explicit Backbone(std::vector<Stage> stages);

    const std::vector<Stage>& stages() const noexcept { return stages_; }
    bool is_identity() const noexcept { return stages_.empty(); }

private:
    std::vector<Stage> stages_;
};

/// Frozen weights of the adapted layer. Immutable after construction.
class FrozenHead {
public:
    FrozenHead(Matrix w_base, std::vector<double> bias);

    const Matrix& w_base() const noexcept { return w_base_; }
    const std::vector<double>& bias() const noexcept { return bias_; }
    std::size_t d_in() const noexcept { return w_base_.rows(); }
    std::size_t d_out() const noexcept { return w_base_.cols(); }

private:
    Matrix w_base_;
    std::vector<double> bias_;
};

/// Per-task trainable low-rank pair; the task update is a*b.
struct LoraAdapter {
    Matrix a;  // d_in x r
    Matrix b;  // r x d_out
    int rank = 0;

    Matrix delta() const { return matmul(a, b); }
};

struct LossGrad {
    double loss = 0.0;
    Matrix grad_a;
    Matrix grad_b;
};

/// Loss and gradient of a plain affine softmax classifier; shared by the
/// head pretraining and the gate.
struct LinearGrad {
    double loss = 0.0;
    Matrix grad_w;
    std::vector<double> grad_b;
};

/// Maps raw inputs through the frozen stages (ReLU after each affine).
Matrix features(const Backbone& backbone, const Matrix& x);

/// feats * (w_base + effective_delta) + bias; null delta means base forward.
Matrix logits(const FrozenHead& head, const Matrix& feats, const Matrix* effective_delta = nullptr);

/// Row-stable softmax.
Matrix softmax_rows(const Matrix& z);

/// Mean cross-entropy of softmax(logits) with effective delta
/// (projector ? projector*a : a) * b, and the exact analytic gradients:
/// with G = feats^T (softmax - onehot)/n, grad_b = (projector*a)^T G and
/// grad_a = projector * G * b^T (projector = I when null).
LossGrad ce_loss_and_grads(const FrozenHead& head, const LoraAdapter& adapter,
                           const Matrix* projector, const Matrix& feats,
                           std::span<const int> labels);

/// (projector ? projector*a : a) * b.
Matrix delta(const LoraAdapter& adapter, const Matrix* projector = nullptr);

/// Fraction of rows whose argmax logit matches the label; ties go to the
/// lowest class index.
double accuracy(const FrozenHead& head, const Backbone& backbone, const Matrix* effective_delta,
                const dataset::LabeledSet& set);

LinearGrad linear_softmax_grad(const Matrix& x, std::span<const int> labels, const Matrix& w,
                               const std::vector<double>& bias);

/// Model checkpoint (magic OULM1), f32 payload.
void save_checkpoint(const Backbone& backbone, const FrozenHead& head,
                     const std::filesystem::path& path);
std::pair<Backbone, FrozenHead> load_checkpoint(const std::filesystem::path& path);

} // namespace oul::model
