#include "oul/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "binary_io.hpp"
#include "oul/error.hpp"
#include "oul/rng.hpp"

namespace oul::dataset {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr char kFeatMagic[9] = "FEAT1\0\0\0";

std::vector<double> unit_normal_vector(Rng& rng, int d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    return v;
}

// random unit vector orthogonal to `g`
std::vector<double> unit_perp(Rng& rng, const std::vector<double>& g) {
    std::vector<double> v = unit_normal_vector(rng, static_cast<int>(g.size()));
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * g[i];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * g[i];
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

LabeledSet gather_rows(const LabeledSet& set, const std::vector<std::size_t>& rows) {
    LabeledSet out;
    out.n_classes = set.n_classes;
    out.features = Matrix(rows.size(), set.features.cols());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = set.features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.features.data().begin() + i * set.features.cols());
        out.labels.push_back(set.labels[rows[i]]);
    }
    return out;
}

} // namespace

void validate(const LabeledSet& set) {
    if (set.features.rows() != set.labels.size()) {
        throw data_error("LabeledSet: feature rows do not match label count");
    }
    for (int label : set.labels) {
        if (label < 0 || label >= set.n_classes) {
            throw data_error("LabeledSet: label " + std::to_string(label) +
                             " outside [0, " + std::to_string(set.n_classes) + ")");
        }
    }
}

LabeledSet load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path) {
    auto img = io::open_for_read(images_path, "idx images");
    const std::uint32_t img_magic = io::read_u32_be(img, "idx images " + images_path.string());
    if (img_magic != kIdxImagesMagic) {
        throw data_error("idx images " + images_path.string() + ": bad magic number");
    }
    const std::uint32_t n = io::read_u32_be(img, "idx images " + images_path.string());
    const std::uint32_t rows = io::read_u32_be(img, "idx images " + images_path.string());
    const std::uint32_t cols = io::read_u32_be(img, "idx images " + images_path.string());
    const std::size_t d = static_cast<std::size_t>(rows) * cols;

    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * d);
    if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw data_error("idx images " + images_path.string() + ": truncated file");
    }

    auto lab = io::open_for_read(labels_path, "idx labels");
    const std::uint32_t lab_magic = io::read_u32_be(lab, "idx labels " + labels_path.string());
    if (lab_magic != kIdxLabelsMagic) {
        throw data_error("idx labels " + labels_path.string() + ": bad magic number");
    }
    const std::uint32_t n_lab = io::read_u32_be(lab, "idx labels " + labels_path.string());
    if (n_lab != n) {
        throw data_error("idx: image count " + std::to_string(n) + " in " + images_path.string() +
                         " does not match label count " + std::to_string(n_lab) + " in " +
                         labels_path.string());
    }
    std::vector<unsigned char> raw_labels(n);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), n)) {
        throw data_error("idx labels " + labels_path.string() + ": truncated file");
    }

    LabeledSet set;
    set.n_classes = 10;
    set.features = Matrix(n, d);
    set.labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            set.features(i, j) = pixels[i * d + j] / 255.0;
        }
        set.labels.push_back(raw_labels[i]);
    }
    validate(set);
    return set;
}

LabeledSet synth_clusters(int n_classes, int d_in, int per_class, double spread,
                          std::uint64_t seed) {
    if (n_classes < 2) throw std::invalid_argument("synth_clusters: need at least 2 classes");
    if (d_in < n_classes) throw std::invalid_argument("synth_clusters: d_in must be >= n_classes");
    if (per_class < 1) throw std::invalid_argument("synth_clusters: per_class must be positive");

    Rng rng(seed);
    // orthonormal center directions by Gram-Schmidt over random draws
    Matrix dirs(d_in, n_classes);
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> v = unit_normal_vector(rng, d_in);
        for (int pass = 0; pass < 2; ++pass) {
            for (int p = 0; p < c; ++p) {
                double dot = 0.0;
                for (int k = 0; k < d_in; ++k) dot += dirs(k, p) * v[k];
                for (int k = 0; k < d_in; ++k) v[k] -= dot * dirs(k, p);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (int k = 0; k < d_in; ++k) dirs(k, c) = v[k] / norm;
    }

    LabeledSet set;
    set.n_classes = n_classes;
    set.features = Matrix(static_cast<std::size_t>(n_classes) * per_class, d_in);
    set.labels.reserve(set.features.rows());
    std::size_t row = 0;
    for (int c = 0; c < n_classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            for (int k = 0; k < d_in; ++k) {
                set.features(row, k) = spread * dirs(k, c) + rng.normal();
            }
            set.labels.push_back(c);
        }
    }
    return set;
}

LabeledSet synth_feature_clusters(int n_classes, int d_in, int per_class, std::uint64_t seed) {
    if (n_classes < 2) throw std::invalid_argument("synth_feature_clusters: need at least 2 classes");
    if (d_in < 8) throw std::invalid_argument("synth_feature_clusters: d_in must be >= 8");
    if (per_class < 4) throw std::invalid_argument("synth_feature_clusters: per_class must be >= 4");

    constexpr double kOffset = 7.5;
    constexpr double kGroupScale = 3.0;
    constexpr double kClassScale = 2.7;
    constexpr double kModeScale = 3.5;
    constexpr int kModes = 4;

    const int n_groups = std::clamp(n_classes / 5, 1, 20);
    Rng rng(seed);

    std::vector<double> g(d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
    std::vector<std::vector<double>> group_dirs;
    group_dirs.reserve(n_groups);
    for (int i = 0; i < n_groups; ++i) group_dirs.push_back(unit_perp(rng, g));

    LabeledSet set;
    set.n_classes = n_classes;
    set.features = Matrix(static_cast<std::size_t>(n_classes) * per_class, d_in);
    set.labels.reserve(set.features.rows());

    const int per_mode = per_class / kModes;
    std::size_t row = 0;
    for (int c = 0; c < n_classes; ++c) {
        const std::vector<double> u_c = unit_perp(rng, g);
        std::vector<double> base(d_in);
        for (int k = 0; k < d_in; ++k) {
            base[k] = kOffset * g[k] + kGroupScale * group_dirs[c % n_groups][k] +
                      kClassScale * u_c[k];
        }
        // classes 16..29 are strongly entangled with a fixed set of victim
        // groups; the first 16 only lean mildly on rotating partners
        const bool heavy = c >= 16 && c < 30 && n_groups >= 6;
        const double lean = (c < 16) ? 0.3 : (heavy ? 0.9 : 0.5);
        const double mode_scale = heavy ? kModeScale * 1.2 : kModeScale;
        for (int j = 0; j < kModes; ++j) {
            const int partner = heavy ? (n_groups - 5 + (c + j) % 5)
                                      : (c % n_groups + 1 + j) % n_groups;
            const std::vector<double> own = unit_perp(rng, g);
            std::vector<double> mode(d_in);
            const double own_coef = std::sqrt(1.0 - lean * lean);
            for (int k = 0; k < d_in; ++k) {
                mode[k] = lean * group_dirs[partner][k] + own_coef * own[k];
            }
            const int n_rows = (j < kModes - 1) ? per_mode : per_class - per_mode * (kModes - 1);
            for (int i = 0; i < n_rows; ++i, ++row) {
                for (int k = 0; k < d_in; ++k) {
                    set.features(row, k) = base[k] + mode_scale * mode[k] + rng.normal();
                }
                set.labels.push_back(c);
            }
        }
    }
    return set;
}

LabeledSet load_features(const std::filesystem::path& path) {
    auto in = io::open_for_read(path, "features");
    const std::string what = "features " + path.string();
    io::read_magic(in, kFeatMagic, what);
    const std::uint32_t d_in = io::read_u32_le(in, what);
    const std::uint32_t n = io::read_u32_le(in, what);
    const std::uint32_t n_classes = io::read_u32_le(in, what);

    LabeledSet set;
    set.n_classes = static_cast<int>(n_classes);
    set.labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        set.labels.push_back(io::read_u16_le(in, what));
    }
    set.features = Matrix(n, d_in);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < d_in; ++j) {
            set.features(i, j) = io::read_f32_le(in, what);
        }
    }
    validate(set);
    return set;
}

void save_features(const LabeledSet& set, const std::filesystem::path& path) {
    validate(set);
    if (set.size() > 0xffffffffu || set.dim() > 0xffffffffu) {
        throw data_error("features: set too large for FEAT1");
    }
    for (int label : set.labels) {
        if (label > 0xffff) throw data_error("features: label exceeds u16 range");
    }
    auto out = io::open_for_write(path, "features");
    io::write_magic(out, kFeatMagic);
    io::write_u32_le(out, static_cast<std::uint32_t>(set.dim()));
    io::write_u32_le(out, static_cast<std::uint32_t>(set.size()));
    io::write_u32_le(out, static_cast<std::uint32_t>(set.n_classes));
    for (int label : set.labels) {
        io::write_u16_le(out, static_cast<std::uint16_t>(label));
    }
    for (double v : set.features.data()) {
        io::write_f32_le(out, static_cast<float>(v));
    }
    if (!out) throw data_error("features: write failed for " + path.string());
}

TaskSplit split(const LabeledSet& set, const SplitSpec& spec, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= spec.forget_classes.size()) {
        throw std::invalid_argument("split: task index out of range");
    }
    std::vector<bool> seen(set.n_classes, false);
    for (std::size_t i = 0; i < spec.forget_classes.size(); ++i) {
        const int c = spec.forget_classes[i];
        if (c < 0 || c >= set.n_classes) {
            throw data_error("split: forget class " + std::to_string(c) + " not in the set");
        }
        for (std::size_t j = i + 1; j < spec.forget_classes.size(); ++j) {
            if (spec.forget_classes[j] == c) {
                throw data_error("split: duplicate forget class " + std::to_string(c));
            }
        }
    }
    for (int label : set.labels) seen[label] = true;
    for (int c : spec.forget_classes) {
        if (!seen[c]) throw data_error("split: forget class " + std::to_string(c) + " has no rows");
    }

    std::vector<bool> forgotten(set.n_classes, false);
    for (int i = 0; i <= k; ++i) forgotten[spec.forget_classes[i]] = true;
    const int task_class = spec.forget_classes[k];

    std::vector<std::size_t> task_rows, retain_rows, forgotten_rows;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const int label = set.labels[i];
        if (label == task_class) task_rows.push_back(i);
        if (forgotten[label]) {
            forgotten_rows.push_back(i);
        } else {
            retain_rows.push_back(i);
        }
    }
    return TaskSplit{gather_rows(set, task_rows), gather_rows(set, retain_rows),
                     gather_rows(set, forgotten_rows)};
}

std::pair<LabeledSet, LabeledSet> holdout_split(const LabeledSet& set, double eval_fraction,
                                                std::uint64_t seed) {
    if (eval_fraction <= 0.0 || eval_fraction >= 1.0) {
        throw std::invalid_argument("holdout_split: eval_fraction must be in (0,1)");
    }
    std::vector<std::vector<std::size_t>> by_class(set.n_classes);
    for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);

    std::vector<std::size_t> train_rows, eval_rows;
    for (int c = 0; c < set.n_classes; ++c) {
        auto& rows = by_class[c];
        if (rows.empty()) continue;
        if (rows.size() < 2) {
            throw data_error("holdout_split: class " + std::to_string(c) +
                             " needs at least 2 rows");
        }
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(c)));
        shuffle(rows, rng);
        std::size_t n_eval = static_cast<std::size_t>(
            std::llround(eval_fraction * static_cast<double>(rows.size())));
        n_eval = std::clamp<std::size_t>(n_eval, 1, rows.size() - 1);
        eval_rows.insert(eval_rows.end(), rows.begin(), rows.begin() + n_eval);
        train_rows.insert(train_rows.end(), rows.begin() + n_eval, rows.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(eval_rows.begin(), eval_rows.end());
    return {gather_rows(set, train_rows), gather_rows(set, eval_rows)};
}

} // namespace oul::dataset
