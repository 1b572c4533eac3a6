#include "oul/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "oul/error.hpp"
#include "oul/linalg.hpp"
#include "oul/rng.hpp"
#include "oul/router.hpp"

namespace oul::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSplitSalt = 0xD5;
constexpr std::uint64_t kPretrainSalt = 77;
constexpr std::uint64_t kTaskSalt = 1000;
constexpr std::uint64_t kGateSalt = 5000;

// ---------------------------------------------------------------- config

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw config_error("config: bad numeric value '" + value + "' for " + key);
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw config_error("config: bad integer value '" + value + "' for " + key);
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "dataset") {
        if (value == "mnist") cfg.dataset.kind = DatasetSpec::Kind::kMnist;
        else if (value == "synthetic") cfg.dataset.kind = DatasetSpec::Kind::kSynthetic;
        else if (value == "features") cfg.dataset.kind = DatasetSpec::Kind::kFeatures;
        else throw config_error("config: unknown dataset '" + value + "'");
    } else if (key == "mnist.images") cfg.dataset.mnist_images = value;
    else if (key == "mnist.labels") cfg.dataset.mnist_labels = value;
    else if (key == "synthetic.classes") cfg.dataset.classes = static_cast<int>(parse_int(key, value));
    else if (key == "synthetic.dim") cfg.dataset.dim = static_cast<int>(parse_int(key, value));
    else if (key == "synthetic.per_class") cfg.dataset.per_class = static_cast<int>(parse_int(key, value));
    else if (key == "synthetic.spread") cfg.dataset.spread = parse_double(key, value);
    else if (key == "synthetic.seed") cfg.dataset.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "features.path") cfg.dataset.features_path = value;
    else if (key == "strategy") cfg.strategy = unlearn::strategy_from_name(value);
    else if (key == "forget_classes") {
        cfg.forget_classes.clear();
        for (const auto& item : split_list(value)) {
            cfg.forget_classes.push_back(static_cast<int>(parse_int(key, item)));
        }
    } else if (key == "lambdas") {
        cfg.lambdas.clear();
        for (const auto& item : split_list(value)) cfg.lambdas.push_back(parse_double(key, item));
    } else if (key == "rank") cfg.rank = static_cast<int>(parse_int(key, value));
    else if (key == "sv_threshold") cfg.sv_threshold = parse_double(key, value);
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "eval_fraction") cfg.eval_fraction = parse_double(key, value);
    else if (key == "wall_clock") {
        if (value == "on" || value == "true") cfg.wall_clock = true;
        else if (value == "off" || value == "false") cfg.wall_clock = false;
        else throw config_error("config: wall_clock must be on or off");
    } else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "train.learning_rate") cfg.train.learning_rate = parse_double(key, value);
    else if (key == "train.batch_size") {
        cfg.train.batch_size = value == "full" ? 0 : static_cast<int>(parse_int(key, value));
    } else if (key == "train.seed") cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "train.init_scale") cfg.train.init_scale = parse_double(key, value);
    else if (key == "pretrain.hidden") cfg.pretrain.hidden = static_cast<int>(parse_int(key, value));
    else if (key == "pretrain.epochs") cfg.pretrain.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "pretrain.learning_rate") cfg.pretrain.learning_rate = parse_double(key, value);
    else if (key == "pretrain.batch_size") {
        cfg.pretrain.batch_size = value == "full" ? 0 : static_cast<int>(parse_int(key, value));
    } else if (key == "gate.epochs") cfg.gate.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "gate.learning_rate") cfg.gate.learning_rate = parse_double(key, value);
    else if (key == "gate.batch_size") {
        cfg.gate.batch_size = value == "full" ? 0 : static_cast<int>(parse_int(key, value));
    } else {
        throw config_error("config: unknown key '" + key + "'");
    }
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.lambdas.empty()) throw config_error("config: lambdas must not be empty");
    if (cfg.rank < 1) throw config_error("config: rank must be >= 1");
    if (cfg.sv_threshold < 0.0) throw config_error("config: sv_threshold must be >= 0");
    if (cfg.eval_fraction <= 0.0 || cfg.eval_fraction >= 1.0) {
        throw config_error("config: eval_fraction must be in (0,1)");
    }
    if (cfg.train.epochs < 1 || cfg.pretrain.epochs < 1 || cfg.gate.epochs < 1) {
        throw config_error("config: epochs must be >= 1");
    }
    for (std::size_t i = 0; i < cfg.forget_classes.size(); ++i) {
        for (std::size_t j = i + 1; j < cfg.forget_classes.size(); ++j) {
            if (cfg.forget_classes[i] == cfg.forget_classes[j]) {
                throw config_error("config: duplicate forget class " +
                                   std::to_string(cfg.forget_classes[i]));
            }
        }
    }
    if (cfg.dataset.kind == DatasetSpec::Kind::kMnist &&
        (cfg.dataset.mnist_images.empty() || cfg.dataset.mnist_labels.empty())) {
        throw config_error("config: mnist dataset needs mnist.images and mnist.labels");
    }
    if (cfg.dataset.kind == DatasetSpec::Kind::kFeatures && cfg.dataset.features_path.empty()) {
        throw config_error("config: features dataset needs features.path");
    }
}

// ------------------------------------------------------------- training

dataset::LabeledSet load_dataset(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetSpec::Kind::kMnist:
            return dataset::load_idx(spec.mnist_images, spec.mnist_labels);
        case DatasetSpec::Kind::kSynthetic:
            return dataset::synth_clusters(spec.classes, spec.dim, spec.per_class, spec.spread,
                                           spec.seed);
        case DatasetSpec::Kind::kFeatures:
            return dataset::load_features(spec.features_path);
    }
    throw config_error("config: unknown dataset kind");
}

struct EvalSplit {
    dataset::LabeledSet train;
    dataset::LabeledSet eval;
};

EvalSplit load_and_split(const ExperimentConfig& cfg) {
    const auto full = load_dataset(cfg.dataset);
    for (int c : cfg.forget_classes) {
        if (c < 0 || c >= full.n_classes) {
            throw config_error("config: forget class " + std::to_string(c) +
                               " outside dataset classes");
        }
    }
    if (cfg.forget_classes.size() >= static_cast<std::size_t>(full.n_classes)) {
        throw config_error("config: cannot forget every class");
    }
    auto [train, eval] = dataset::holdout_split(full, cfg.eval_fraction,
                                                Rng::mix(cfg.train.seed, kSplitSalt));
    return EvalSplit{std::move(train), std::move(eval)};
}

model::FrozenHead fit_linear_head(const dataset::LabeledSet& train, const PretrainConfig& cfg) {
    Matrix w(train.dim(), train.n_classes);
    std::vector<double> bias(train.n_classes, 0.0);
    const std::size_t n = train.size();
    const std::size_t step = cfg.batch_size == 0 ? n : static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < n; start += step) {
            const std::size_t count = std::min(step, n - start);
            Matrix xb(count, train.dim());
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto src = train.features.row(start + i);
                std::copy(src.begin(), src.end(), xb.data().begin() + i * train.dim());
                yb[i] = train.labels[start + i];
            }
            const auto lg = model::linear_softmax_grad(xb, yb, w, bias);
            if (!std::isfinite(lg.loss)) {
                throw numeric_error("head pretraining diverged at epoch " + std::to_string(epoch));
            }
            w = w - cfg.learning_rate * lg.grad_w;
            for (std::size_t j = 0; j < bias.size(); ++j) {
                bias[j] -= cfg.learning_rate * lg.grad_b[j];
            }
        }
    }
    return model::FrozenHead(std::move(w), std::move(bias));
}

std::pair<model::Backbone, model::FrozenHead> fit_mlp(const dataset::LabeledSet& train,
                                                      const PretrainConfig& cfg,
                                                      std::uint64_t seed) {
    const std::size_t d_in = train.dim();
    const std::size_t hidden = static_cast<std::size_t>(cfg.hidden);
    const std::size_t classes = static_cast<std::size_t>(train.n_classes);
    Rng rng(seed);
    Matrix w1(d_in, hidden);
    for (double& v : w1.data()) v = rng.normal() * std::sqrt(2.0 / static_cast<double>(d_in));
    std::vector<double> b1(hidden, 0.0);
    Matrix w2(hidden, classes);
    for (double& v : w2.data()) v = rng.normal() * std::sqrt(2.0 / static_cast<double>(hidden));
    std::vector<double> b2(classes, 0.0);

    const std::size_t n = train.size();
    const std::size_t step = cfg.batch_size == 0 ? n : static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < n; start += step) {
            const std::size_t count = std::min(step, n - start);
            Matrix xb(count, d_in);
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto src = train.features.row(start + i);
                std::copy(src.begin(), src.end(), xb.data().begin() + i * d_in);
                yb[i] = train.labels[start + i];
            }

            Matrix pre = matmul(xb, w1);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < hidden; ++j) pre(i, j) += b1[j];
            Matrix h = pre;
            for (double& v : h.data()) v = std::max(0.0, v);

            Matrix z = matmul(h, w2);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < classes; ++j) z(i, j) += b2[j];
            Matrix resid = model::softmax_rows(z);
            double loss = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
                loss -= std::log(resid(i, yb[i]));
                resid(i, yb[i]) -= 1.0;
            }
            loss /= static_cast<double>(count);
            if (!std::isfinite(loss)) {
                throw numeric_error("mlp pretraining diverged at epoch " + std::to_string(epoch));
            }
            for (double& v : resid.data()) v /= static_cast<double>(count);

            const Matrix grad_w2 = matmul(transpose(h), resid);
            std::vector<double> grad_b2(classes, 0.0);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < classes; ++j) grad_b2[j] += resid(i, j);

            Matrix dh = matmul(resid, transpose(w2));
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < hidden; ++j)
                    if (pre(i, j) <= 0.0) dh(i, j) = 0.0;
            const Matrix grad_w1 = matmul(transpose(xb), dh);
            std::vector<double> grad_b1(hidden, 0.0);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < hidden; ++j) grad_b1[j] += dh(i, j);

            w1 = w1 - cfg.learning_rate * grad_w1;
            w2 = w2 - cfg.learning_rate * grad_w2;
            for (std::size_t j = 0; j < hidden; ++j) b1[j] -= cfg.learning_rate * grad_b1[j];
            for (std::size_t j = 0; j < classes; ++j) b2[j] -= cfg.learning_rate * grad_b2[j];
        }
    }
    model::Backbone backbone({model::Stage{std::move(w1), std::move(b1)}});
    return {std::move(backbone), model::FrozenHead(std::move(w2), std::move(b2))};
}

fs::path checkpoint_path(const ExperimentConfig& cfg) {
    return cfg.output_dir / "baseline.oulm";
}

void ensure_output_dir(const ExperimentConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec && !fs::is_directory(cfg.output_dir)) {
        throw config_error("output_dir not writable: " + cfg.output_dir.string());
    }
}

// ----------------------------------------------------------------- eval

double accuracy_from_logits(const Matrix& z, std::span<const int> labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < z.cols(); ++j)
            if (z(i, j) > z(i, arg)) arg = j;
        if (static_cast<int>(arg) == labels[i]) correct++;
    }
    return z.rows() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(z.rows());
}

// lambda-independent part of the routed forward pass:
// mixture(i,j) = sum_k alpha_k(i) * (feats delta_k)(i,j)
Matrix moe_mixture(std::span<const model::LoraAdapter> adapters, const router::Gate& gate,
                   const Matrix& feats) {
    const Matrix alpha = router::route(gate, feats);
    Matrix mix(feats.rows(), adapters.empty() ? 0 : adapters[0].b.cols());
    for (std::size_t k = 0; k < adapters.size(); ++k) {
        const Matrix contribution = matmul(feats, adapters[k].delta());
        for (std::size_t i = 0; i < mix.rows(); ++i) {
            const double weight = alpha(i, k);
            for (std::size_t j = 0; j < mix.cols(); ++j) mix(i, j) += weight * contribution(i, j);
        }
    }
    return mix;
}

std::uint64_t fnv1a(std::uint64_t hash, std::uint64_t value) {
    for (int byte = 0; byte < 8; ++byte) {
        hash ^= (value >> (8 * byte)) & 0xff;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string format_lambda(double lambda) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", lambda);
    return buf;
}

std::string format_acc(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

json record_to_json(const TaskRecord& r) {
    return json{{"task_index", r.task_index},
                {"class_id", r.class_id},
                {"retain_acc", r.retain_acc},
                {"forget_acc_cum", r.forget_acc_cum},
                {"forget_acc_task", r.forget_acc_task},
                {"free_dims", r.free_dims},
                {"effective_rank", r.effective_rank},
                {"wall_ms", r.wall_ms},
                {"retain_acc_base", r.retain_acc_base},
                {"saturated", r.saturated}};
}

TaskRecord record_from_json(const json& j) {
    TaskRecord r;
    r.task_index = j.at("task_index").get<int>();
    r.class_id = j.at("class_id").get<int>();
    r.retain_acc = j.at("retain_acc").get<double>();
    r.forget_acc_cum = j.at("forget_acc_cum").get<double>();
    r.forget_acc_task = j.at("forget_acc_task").get<double>();
    r.free_dims = j.at("free_dims").get<int>();
    r.effective_rank = j.at("effective_rank").get<int>();
    r.wall_ms = j.at("wall_ms").get<std::uint64_t>();
    r.retain_acc_base = j.at("retain_acc_base").get<double>();
    r.saturated = j.at("saturated").get<bool>();
    return r;
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
        }
        apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

Baseline pretrain_baseline(const ExperimentConfig& cfg) {
    const auto splits = load_and_split(cfg);
    ensure_output_dir(cfg);

    if (cfg.dataset.kind == DatasetSpec::Kind::kFeatures) {
        model::FrozenHead head = fit_linear_head(splits.train, cfg.pretrain);
        model::save_checkpoint(model::Backbone{}, head, checkpoint_path(cfg));
    } else {
        auto [backbone, head] = fit_mlp(splits.train, cfg.pretrain, Rng::mix(cfg.train.seed, kPretrainSalt));
        model::save_checkpoint(backbone, head, checkpoint_path(cfg));
    }
    // evaluate the reloaded f32 model so every later run sees the same weights
    auto [backbone, head] = model::load_checkpoint(checkpoint_path(cfg));
    Baseline out{std::move(backbone), std::move(head), 0.0};
    out.holdout_acc = model::accuracy(out.head, out.backbone, nullptr, splits.eval);
    return out;
}

std::vector<UnlearnRun> run_sequence(const ExperimentConfig& cfg) {
    const auto splits = load_and_split(cfg);
    ensure_output_dir(cfg);

    Baseline baseline = fs::exists(checkpoint_path(cfg))
                            ? [&] {
                                  auto [bb, hh] = model::load_checkpoint(checkpoint_path(cfg));
                                  Baseline b{std::move(bb), std::move(hh), 0.0};
                                  b.holdout_acc = model::accuracy(b.head, b.backbone, nullptr, splits.eval);
                                  return b;
                              }()
                            : pretrain_baseline(cfg);
    const model::FrozenHead& head = baseline.head;
    const std::size_t d_in = head.d_in();

    // freeze the feature map once; everything downstream lives in feature space
    dataset::LabeledSet feats_train{model::features(baseline.backbone, splits.train.features),
                                    splits.train.labels, splits.train.n_classes};
    dataset::LabeledSet feats_eval{model::features(baseline.backbone, splits.eval.features),
                                   splits.eval.labels, splits.eval.n_classes};
    const model::Backbone identity;

    const int n_tasks = static_cast<int>(cfg.forget_classes.size());
    const dataset::SplitSpec spec{cfg.forget_classes, cfg.train.seed};

    const double baseline_overall = model::accuracy(head, identity, nullptr, feats_eval);
    double baseline_retain = baseline_overall;
    if (n_tasks > 0) {
        const auto final_split = dataset::split(feats_eval, spec, n_tasks - 1);
        baseline_retain = model::accuracy(head, identity, nullptr, final_split.retain);
    }

    std::vector<UnlearnRun> runs;
    for (double lambda : cfg.lambdas) {
        UnlearnRun run;
        run.strategy = unlearn::strategy_name(cfg.strategy);
        run.lambda = lambda;
        run.baseline_retain_acc = baseline_retain;
        run.baseline_overall_acc = baseline_overall;
        runs.push_back(std::move(run));
    }

    if (n_tasks > 0) {
        const auto planned = dataset::split(feats_eval, spec, n_tasks - 1);
        TaskRecord base_row;
        base_row.task_index = 0;
        base_row.class_id = -1;
        base_row.retain_acc = baseline_overall;
        base_row.retain_acc_base = baseline_overall;
        const double planned_acc = model::accuracy(head, identity, nullptr, planned.forgotten_so_far);
        base_row.forget_acc_cum = planned_acc;
        base_row.forget_acc_task = planned_acc;
        base_row.free_dims = static_cast<int>(d_in);
        for (auto& run : runs) run.records.push_back(base_row);
    }

    auto state = unlearn::ProjectionState::initial(d_in, cfg.sv_threshold);
    std::vector<model::LoraAdapter> adapters;
    std::vector<dataset::LabeledSet> forget_sets;
    std::vector<unlearn::ArchiveEntry> entries;
    Matrix delta_sum(d_in, head.d_out());
    router::Gate gate = router::Gate::zeros(d_in, 1);
    std::uint64_t split_hash = 0xcbf29ce484222325ULL;

    for (int k = 0; k < n_tasks; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto sp_train = dataset::split(feats_train, spec, k);
        const auto sp_eval = dataset::split(feats_eval, spec, k);

        unlearn::TrainConfig task_cfg = cfg.train;
        task_cfg.seed = Rng::mix(cfg.train.seed, kTaskSalt + static_cast<std::uint64_t>(k));
        split_hash = fnv1a(split_hash, static_cast<std::uint64_t>(k));
        split_hash = fnv1a(split_hash, static_cast<std::uint64_t>(cfg.forget_classes[k]));
        split_hash = fnv1a(split_hash, sp_train.forget_task.size());
        split_hash = fnv1a(split_hash, sp_train.retain.size());
        split_hash = fnv1a(split_hash, sp_eval.forget_task.size());
        split_hash = fnv1a(split_hash, sp_eval.retain.size());
        split_hash = fnv1a(split_hash, task_cfg.seed);

        auto outcome = unlearn::execute_task(cfg.strategy, head, identity, state,
                                             sp_train.forget_task, task_cfg, cfg.rank);
        state = std::move(outcome.state);
        delta_sum = delta_sum + outcome.result.adapter.delta();
        entries.push_back(unlearn::ArchiveEntry{outcome.result.adapter, outcome.task_basis,
                                                outcome.result.effective_rank});
        adapters.push_back(std::move(outcome.result.adapter));
        forget_sets.push_back(sp_train.forget_task);

        if (cfg.strategy == unlearn::Strategy::kMoe) {
            unlearn::TrainConfig gate_cfg;
            gate_cfg.epochs = cfg.gate.epochs;
            gate_cfg.learning_rate = cfg.gate.learning_rate;
            gate_cfg.batch_size = cfg.gate.batch_size;
            gate_cfg.seed = Rng::mix(cfg.train.seed, kGateSalt + static_cast<std::uint64_t>(k));
            gate = router::train_gate(head, identity, adapters, forget_sets, sp_train.retain,
                                      gate_cfg);
        }

        const int free_dims = cfg.strategy == unlearn::Strategy::kStatic ||
                                      cfg.strategy == unlearn::Strategy::kMoe
                                  ? static_cast<int>(d_in)
                                  : unlearn::free_subspace_dim(state);
        const double retain_base = model::accuracy(head, identity, nullptr, sp_eval.retain);

        // lambda-independent pieces of the routed forward pass
        Matrix mix_retain, mix_cum, mix_task;
        Matrix base_retain_z, base_cum_z, base_task_z;
        if (cfg.strategy == unlearn::Strategy::kMoe) {
            base_retain_z = model::logits(head, sp_eval.retain.features);
            base_cum_z = model::logits(head, sp_eval.forgotten_so_far.features);
            base_task_z = model::logits(head, sp_eval.forget_task.features);
            mix_retain = moe_mixture(adapters, gate, sp_eval.retain.features);
            mix_cum = moe_mixture(adapters, gate, sp_eval.forgotten_so_far.features);
            mix_task = moe_mixture(adapters, gate, sp_eval.forget_task.features);
        }

        for (std::size_t li = 0; li < cfg.lambdas.size(); ++li) {
            const double lambda = cfg.lambdas[li];
            TaskRecord rec;
            rec.task_index = k + 1;
            rec.class_id = cfg.forget_classes[k];
            rec.free_dims = free_dims;
            rec.effective_rank = entries.back().effective_rank;
            rec.retain_acc_base = retain_base;
            rec.saturated = outcome.saturated;

            if (cfg.strategy == unlearn::Strategy::kMoe) {
                rec.retain_acc = accuracy_from_logits(base_retain_z - lambda * mix_retain,
                                                      sp_eval.retain.labels);
                rec.forget_acc_cum = accuracy_from_logits(base_cum_z - lambda * mix_cum,
                                                          sp_eval.forgotten_so_far.labels);
                rec.forget_acc_task = accuracy_from_logits(base_task_z - lambda * mix_task,
                                                           sp_eval.forget_task.labels);
            } else {
                const model::FrozenHead fused(head.w_base() - lambda * delta_sum, head.bias());
                rec.retain_acc = model::accuracy(fused, identity, nullptr, sp_eval.retain);
                rec.forget_acc_cum =
                    model::accuracy(fused, identity, nullptr, sp_eval.forgotten_so_far);
                rec.forget_acc_task =
                    model::accuracy(fused, identity, nullptr, sp_eval.forget_task);
            }
            runs[li].records.push_back(rec);
        }

        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
        const std::uint64_t wall = cfg.wall_clock ? static_cast<std::uint64_t>(elapsed) : 0;
        for (auto& run : runs) run.records.back().wall_ms = wall;
        if (outcome.saturated) {
            std::cerr << "[task " << (k + 1) << "] subspace saturated; update vanished\n";
        }
        std::cerr << "[task " << (k + 1) << "/" << n_tasks << "] class "
                  << cfg.forget_classes[k] << " rank " << entries.back().effective_rank
                  << " free " << free_dims << " (" << wall << " ms)\n";
    }

    for (auto& run : runs) run.split_hash = split_hash;

    const fs::path archive =
        cfg.output_dir / ("adapters_" + unlearn::strategy_name(cfg.strategy) + ".oula");
    unlearn::save_archive(entries, d_in, head.d_out(), cfg.rank, archive);
    if (cfg.strategy == unlearn::Strategy::kMoe && n_tasks > 0) {
        router::append_gate(archive, gate);
    }
    return runs;
}

void emit_results(std::span<const UnlearnRun> runs, const ExperimentConfig& cfg,
                  const fs::path& output_dir) {
    if (runs.empty()) throw std::invalid_argument("emit_results: no runs");
    std::error_code ec;
    fs::create_directories(output_dir, ec);
    if (ec && !fs::is_directory(output_dir)) {
        throw config_error("output_dir not writable: " + output_dir.string());
    }

    std::ofstream csv(output_dir / "results.csv", std::ios::trunc);
    if (!csv) throw config_error("output_dir not writable: " + output_dir.string());
    csv << "strategy,lambda,task_index,class_id,retain_acc,forget_acc_cum,forget_acc_task,"
           "free_dims,effective_rank,wall_ms\n";
    for (const auto& run : runs) {
        for (const auto& rec : run.records) {
            if (rec.task_index == 0) continue;  // baseline row lives in the JSON trajectory
            csv << run.strategy << ',' << format_lambda(run.lambda) << ',' << rec.task_index << ','
                << rec.class_id << ',' << format_acc(rec.retain_acc) << ','
                << format_acc(rec.forget_acc_cum) << ',' << format_acc(rec.forget_acc_task) << ','
                << rec.free_dims << ',' << rec.effective_rank << ',' << rec.wall_ms << '\n';
        }
    }
    csv.close();

    json doc;
    doc["version"] = version_string();
    json cfg_echo;
    cfg_echo["strategy"] = unlearn::strategy_name(cfg.strategy);
    cfg_echo["forget_classes"] = cfg.forget_classes;
    cfg_echo["lambdas"] = cfg.lambdas;
    cfg_echo["rank"] = cfg.rank;
    cfg_echo["sv_threshold"] = cfg.sv_threshold;
    cfg_echo["eval_fraction"] = cfg.eval_fraction;
    cfg_echo["seed"] = cfg.train.seed;
    cfg_echo["epochs"] = cfg.train.epochs;
    cfg_echo["learning_rate"] = cfg.train.learning_rate;
    cfg_echo["batch_size"] = cfg.train.batch_size;
    cfg_echo["init_scale"] = cfg.train.init_scale;
    switch (cfg.dataset.kind) {
        case DatasetSpec::Kind::kMnist: cfg_echo["dataset"] = "mnist"; break;
        case DatasetSpec::Kind::kSynthetic: cfg_echo["dataset"] = "synthetic"; break;
        case DatasetSpec::Kind::kFeatures: cfg_echo["dataset"] = "features"; break;
    }
    doc["config"] = cfg_echo;
    json jruns = json::array();
    for (const auto& run : runs) {
        json jrun;
        jrun["strategy"] = run.strategy;
        jrun["lambda"] = run.lambda;
        jrun["baseline_retain_acc"] = run.baseline_retain_acc;
        jrun["baseline_overall_acc"] = run.baseline_overall_acc;
        jrun["split_hash"] = run.split_hash;
        json jrecords = json::array();
        for (const auto& rec : run.records) jrecords.push_back(record_to_json(rec));
        jrun["records"] = std::move(jrecords);
        jruns.push_back(std::move(jrun));
    }
    doc["runs"] = std::move(jruns);
    std::ofstream jf(output_dir / "results.json", std::ios::trunc);
    if (!jf) throw config_error("output_dir not writable: " + output_dir.string());
    jf << doc.dump(2) << '\n';
    jf.close();

    for (const auto& run : runs) {
        const fs::path path =
            output_dir / ("subspace_" + run.strategy + "_lambda" + format_lambda(run.lambda) + ".csv");
        std::ofstream sf(path, std::ios::trunc);
        if (!sf) throw config_error("output_dir not writable: " + output_dir.string());
        sf << "k,free_dims\n";
        for (const auto& rec : run.records) sf << rec.task_index << ',' << rec.free_dims << '\n';
    }
}

std::vector<UnlearnRun> parse_results_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("results: cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw data_error("results: bad json in " + path.string() + ": " + e.what());
    }
    std::vector<UnlearnRun> runs;
    for (const auto& jrun : doc.at("runs")) {
        UnlearnRun run;
        run.strategy = jrun.at("strategy").get<std::string>();
        run.lambda = jrun.at("lambda").get<double>();
        run.baseline_retain_acc = jrun.at("baseline_retain_acc").get<double>();
        run.baseline_overall_acc = jrun.at("baseline_overall_acc").get<double>();
        run.split_hash = jrun.at("split_hash").get<std::uint64_t>();
        for (const auto& jrec : jrun.at("records")) run.records.push_back(record_from_json(jrec));
        runs.push_back(std::move(run));
    }
    return runs;
}

std::string version_string() { return "ortho-unlearn 0.1.0"; }

namespace {

bool report(std::ostream& out, const std::string& name, bool ok) {
    out << (ok ? "[ok]   " : "[FAIL] ") << name << '\n';
    return ok;
}

} // namespace

int selftest(std::ostream& out) {
    bool all = true;
    Rng rng(12345);

    {
        bool ok = true;
        for (auto [rows, cols] : {std::pair<int, int>{8, 5}, {5, 8}, {6, 6}}) {
            Matrix m(rows, cols);
            for (double& v : m.data()) v = rng.normal();
            const auto r = linalg::svd(m);
            Matrix us = r.u;
            for (std::size_t i = 0; i < us.rows(); ++i)
                for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= r.s[j];
            ok = ok && max_abs(matmul(us, transpose(r.v)) - m) <= 1e-8 * std::max(1.0, max_abs(m));
            ok = ok && max_abs(matmul(transpose(r.u), r.u) - Matrix::identity(r.u.cols())) <= 1e-10;
        }
        all = report(out, "svd reconstruction and orthonormality", ok) && all;
    }
    {
        bool ok = true;
        for (int trial = 0; trial < 10; ++trial) {
            auto state = unlearn::ProjectionState::initial(32, 1e-3);
            Matrix literal = Matrix::identity(32);
            for (int task = 0; task < 6 && ok; ++task) {
                Matrix cand(32, 2);
                for (double& v : cand.data()) v = rng.normal();
                const Matrix basis = linalg::orthonormalize_against(cand, state.basis, 1e-8);
                state = unlearn::update_projection(state, basis);
                literal = literal - matmul(basis, transpose(basis));
                ok = ok && max_abs(state.p - transpose(state.p)) <= 1e-9;
                ok = ok && max_abs(matmul(state.p, state.p) - state.p) <= 1e-9;
                ok = ok && std::abs(trace(state.p) -
                                    static_cast<double>(32 - state.basis.cols())) <= 1e-9;
                ok = ok && max_abs(state.p - literal) <= 1e-8;
            }
        }
        all = report(out, "projector algebra and recursion agreement", ok) && all;
    }
    {
        bool ok = true;
        for (int trial = 0; trial < 3 && ok; ++trial) {
            const std::size_t d_in = 8, d_out = 5, n = 6;
            const int r = 2;
            Matrix w(d_in, d_out), feats(n, d_in);
            for (double& v : w.data()) v = rng.normal();
            for (double& v : feats.data()) v = rng.normal();
            const model::FrozenHead head(w, std::vector<double>(d_out, 0.0));
            model::LoraAdapter adapter{Matrix(d_in, r), Matrix(r, d_out), r};
            for (double& v : adapter.a.data()) v = 0.5 * rng.normal();
            for (double& v : adapter.b.data()) v = 0.5 * rng.normal();
            std::vector<int> labels;
            for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.index(d_out)));

            const auto lg = model::ce_loss_and_grads(head, adapter, nullptr, feats, labels);
            const double h = 1e-5;
            double worst = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < d_in; ++i) {
                for (int j = 0; j < r; ++j) {
                    model::LoraAdapter plus = adapter, minus = adapter;
                    plus.a(i, j) += h;
                    minus.a(i, j) -= h;
                    const double fd =
                        (model::ce_loss_and_grads(head, plus, nullptr, feats, labels).loss -
                         model::ce_loss_and_grads(head, minus, nullptr, feats, labels).loss) /
                        (2 * h);
                    worst = std::max(worst, std::abs(fd - lg.grad_a(i, j)));
                    scale = std::max(scale, std::abs(fd));
                }
            }
            ok = worst <= 1e-6 * std::max(1e-12, scale);
        }
        all = report(out, "analytic gradients vs finite differences", ok) && all;
    }
    {
        bool ok = true;
        for (int trial = 0; trial < 10 && ok; ++trial) {
            const std::size_t d_in = 16;
            Matrix cand(d_in, 4);
            for (double& v : cand.data()) v = rng.normal();
            const Matrix basis = linalg::orthonormalize_against(cand, Matrix(d_in, 0), 1e-8);
            auto state = unlearn::ProjectionState::initial(d_in, 1e-3);
            state = unlearn::update_projection(state, basis);

            Matrix w(d_in, 6), feats(8, d_in);
            for (double& v : w.data()) v = rng.normal();
            for (double& v : feats.data()) v = rng.normal();
            const model::FrozenHead head(w, std::vector<double>(6, 0.0));
            model::LoraAdapter adapter{Matrix(d_in, 3), Matrix(3, 6), 3};
            for (double& v : adapter.a.data()) v = 0.3 * rng.normal();
            for (double& v : adapter.b.data()) v = 0.3 * rng.normal();
            std::vector<int> labels;
            for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.index(6)));
            const auto lg = model::ce_loss_and_grads(head, adapter, &state.p, feats, labels);
            ok = unlearn::gradient_feasibility_residual(state, lg.grad_a) <= 1e-10;
        }
        all = report(out, "gradient feasibility inside the claimed-complement", ok) && all;
    }
    out << (all ? "selftest passed" : "selftest FAILED") << '\n';
    return all ? 0 : 4;
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"orthogonal-subspace continual unlearning experiments"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    std::string config_path;
    std::string strategy_override;
    double lambda_override = 0.0;
    std::string out_override;

    auto* pretrain = app.add_subcommand("pretrain", "train and persist the baseline model");
    pretrain->add_option("--config", config_path, "experiment config file")->required();

    auto* run = app.add_subcommand("run", "execute the sequential unlearning protocol");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--strategy", strategy_override, "override: static|posthoc|in_training|moe");
    auto* lambda_opt = run->add_option("--lambda", lambda_override, "override: single lambda");
    run->add_option("--out", out_override, "override: output directory");

    auto* self = app.add_subcommand("selftest", "run the built-in invariant suite");

    auto* gen = app.add_subcommand("gen-features", "write a synthetic FEAT1 feature file");
    std::string gen_out;
    int gen_classes = 100, gen_dim = 64, gen_per_class = 500;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output path")->required();
    gen->add_option("--classes", gen_classes, "number of classes");
    gen->add_option("--dim", gen_dim, "feature dimension");
    gen->add_option("--per-class", gen_per_class, "examples per class");
    gen->add_option("--seed", gen_seed, "generator seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (pretrain->parsed()) {
            const auto cfg = load_config(config_path);
            const auto baseline = pretrain_baseline(cfg);
            std::cout << "baseline holdout accuracy " << format_acc(baseline.holdout_acc)
                      << "; checkpoint " << (cfg.output_dir / "baseline.oulm").string() << '\n';
        } else if (run->parsed()) {
            auto cfg = load_config(config_path);
            if (!strategy_override.empty()) {
                cfg.strategy = unlearn::strategy_from_name(strategy_override);
            }
            if (lambda_opt->count() > 0) cfg.lambdas = {lambda_override};
            if (!out_override.empty()) cfg.output_dir = out_override;

            const auto runs = run_sequence(cfg);
            emit_results(runs, cfg, cfg.output_dir);
            for (const auto& r : runs) {
                if (r.records.empty()) {
                    std::cout << r.strategy << " lambda=" << format_lambda(r.lambda)
                              << " (no tasks)\n";
                    continue;
                }
                const auto& last = r.records.back();
                std::cout << r.strategy << " lambda=" << format_lambda(r.lambda)
                          << " retain=" << format_acc(last.retain_acc)
                          << " forget=" << format_acc(last.forget_acc_cum)
                          << " free_dims=" << last.free_dims << '\n';
            }
            std::cout << "wrote " << (cfg.output_dir / "results.csv").string() << '\n';
        } else if (self->parsed()) {
            return selftest(std::cout);
        } else if (gen->parsed()) {
            const auto set =
                dataset::synth_feature_clusters(gen_classes, gen_dim, gen_per_class, gen_seed);
            dataset::save_features(set, gen_out);
            std::cout << "wrote " << gen_out << " (" << set.size() << " rows, dim " << set.dim()
                      << ", " << set.n_classes << " classes)\n";
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const data_error& e) {
        std::cerr << "dataset error: " << e.what() << '\n';
        return 3;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace oul::harness
