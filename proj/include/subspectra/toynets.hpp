#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dense_matrix.hpp"
#include "error.hpp"
#include "fmat.hpp"
#include "hash.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "subspace.hpp"

namespace subspectra {

//
// datasets
//

struct ToyDataset
{
    DenseMatrix X;
    std::optional<std::vector<int>> labels;
    std::size_t num_classes = 0;
    std::string dataset_id;
    Split split = Split::train;
    std::optional<std::string> augmentation_of;

    std::size_t size() const noexcept { return X.rows(); }
    std::size_t dim() const noexcept { return X.cols(); }
};

/// Content hash over shape, values and labels.
inline std::string dataset_content_id(const DenseMatrix & x, const std::optional<std::vector<int>> & labels)
{
    Fnv1a h;
    h.u64(x.rows());
    h.u64(x.cols());
    h.f64s(x.values());
    if (labels) {
        h.text("labels");
        for (int l : *labels)
            h.u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(l)));
    }
    return h.hex();
}

/// The raw data matrix as a feature matrix with split=raw.
inline FeatureMatrix raw_features(const ToyDataset & ds)
{
    Provenance p;
    p.dataset_id = ds.dataset_id;
    p.split = Split::raw;
    return FeatureMatrix(ds.X, std::move(p));
}

/// K means uniform on the sphere of radius `spread` (shared by all splits of
/// a seed), labels i mod K, samples = mean + N(0, I). Values are rounded to
/// f32 so a dataset survives an FMAT round trip unchanged.
inline ToyDataset gen_gaussian_mixture(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t k, double spread,
                                       Split split = Split::train)
{
    detail::require(k >= 2 && n >= k, "gen_gaussian_mixture: need n >= K >= 2");
    detail::require(d >= 2, "gen_gaussian_mixture: need d >= 2");
    detail::require(spread > 0.0 && std::isfinite(spread), "gen_gaussian_mixture: spread must be positive");
    detail::require(split != Split::raw, "gen_gaussian_mixture: split must be train or test");

    Rng mrng(derive_seed(seed, 0));
    std::vector<double> means(k * d);
    for (std::size_t c = 0; c < k; ++c) {
        double nn = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            means[c * d + j] = mrng.gaussian();
            nn += means[c * d + j] * means[c * d + j];
        }
        const double s = spread / std::sqrt(nn);
        for (std::size_t j = 0; j < d; ++j)
            means[c * d + j] *= s;
    }

    Rng srng(derive_seed(seed, split == Split::train ? 1 : 2));
    DenseMatrix x(n, d);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % k;
        labels[i] = static_cast<int>(c);
        for (std::size_t j = 0; j < d; ++j)
            x(i, j) = static_cast<float>(means[c * d + j] + srng.gaussian());
    }
    ToyDataset ds{std::move(x), std::move(labels), k, {}, split, std::nullopt};
    ds.dataset_id = dataset_content_id(ds.X, ds.labels);
    return ds;
}

inline std::vector<int> read_labels_file(const std::filesystem::path & path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open labels file " + path.string());
    std::vector<int> out;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        long v = 0;
        try {
            v = std::stol(tok, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used != tok.size() || v < 0 || v > std::numeric_limits<int>::max())
            throw FormatError(path.string() + ": bad label '" + tok + "' at entry " + std::to_string(out.size()));
        out.push_back(static_cast<int>(v));
    }
    return out;
}

inline void write_labels_file(const std::vector<int> & labels, const std::filesystem::path & path)
{
    std::string s;
    for (int l : labels)
        s += std::to_string(l) + "\n";
    write_file_atomic(path, s);
}

/// FMAT raw matrix plus an optional whitespace-separated labels file.
inline ToyDataset load_raw_matrix(const std::filesystem::path & path,
                                  const std::optional<std::filesystem::path> & labels_path = std::nullopt)
{
    auto c = read_fmat_contents(path);
    ToyDataset ds{std::move(c.data), std::nullopt, 0, {}, Split::train, std::nullopt};
    if (c.metadata.is_object() && c.metadata.value("split", std::string()) == "test")
        ds.split = Split::test;
    if (labels_path) {
        auto labels = read_labels_file(*labels_path);
        detail::require(labels.size() == ds.size(), "labels file has " + std::to_string(labels.size()) +
                                                        " entries but the matrix has " + std::to_string(ds.size()) +
                                                        " rows");
        ds.num_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
        detail::require(ds.num_classes >= 2, "labels must cover at least 2 classes");
        ds.labels = std::move(labels);
    }
    ds.dataset_id = dataset_content_id(ds.X, ds.labels);
    return ds;
}

struct AugmentPolicy
{
    double noise_sigma = 0.0;
    double mask_prob = 0.0;
    double scale_jitter = 0.0;

    bool operator==(const AugmentPolicy &) const = default;
};

/// Pseudo-validation default.
inline constexpr AugmentPolicy default_augment_policy{0.1, 0.1, 0.2};

namespace detail {

inline void validate_policy(const AugmentPolicy & p)
{
    require(p.noise_sigma >= 0.0 && std::isfinite(p.noise_sigma), "augment: noise_sigma must be >= 0");
    require(p.mask_prob >= 0.0 && p.mask_prob <= 1.0, "augment: mask_prob must lie in [0, 1]");
    require(p.scale_jitter >= 0.0 && p.scale_jitter <= 1.0, "augment: scale_jitter must lie in [0, 1]");
}

/// Per row: scale s ~ U[1−j, 1+j]; per coordinate x ← s·m·(x + σ·g) with
/// m = 0 at probability mask_prob.
inline void augment_rows(DenseMatrix & x, const AugmentPolicy & p, Rng & rng)
{
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double s = 1.0 + p.scale_jitter * (2.0 * rng.uniform() - 1.0);
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double g = rng.gaussian();
            const bool masked = rng.uniform() < p.mask_prob;
            x(i, j) = masked ? 0.0 : s * (x(i, j) + p.noise_sigma * g);
        }
    }
}

} // namespace detail

inline ToyDataset augment(const ToyDataset & ds, const AugmentPolicy & policy, std::uint64_t seed)
{
    detail::validate_policy(policy);
    ToyDataset out = ds;
    Rng rng(seed);
    detail::augment_rows(out.X, policy, rng);
    out.augmentation_of = ds.dataset_id;
    out.dataset_id = dataset_content_id(out.X, out.labels);
    return out;
}

//
// models
//

enum class ModelKind { mlp_classifier, autoencoder, denoise_autoencoder, contrastive };

inline const char * to_string(ModelKind k)
{
    switch (k) {
    case ModelKind::mlp_classifier: return "mlp_classifier";
    case ModelKind::autoencoder: return "autoencoder";
    case ModelKind::denoise_autoencoder: return "denoise_autoencoder";
    case ModelKind::contrastive: return "contrastive";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string & s)
{
    for (auto k : {ModelKind::mlp_classifier, ModelKind::autoencoder, ModelKind::denoise_autoencoder,
                   ModelKind::contrastive})
        if (s == to_string(k))
            return k;
    throw ValidationError("unknown model kind '" + s +
                          "' (expected mlp_classifier|autoencoder|denoise_autoencoder|contrastive)");
}

inline bool is_autoencoder(ModelKind k) { return k == ModelKind::autoencoder || k == ModelKind::denoise_autoencoder; }

/// Hidden layers are numbered in forward order from 0. The encoder's last
/// hidden layer (index widths.size()−1) is the default feature layer for all
/// kinds: the classifier's penultimate layer, the AE bottleneck, and the
/// contrastive encoder output before the projection head.
struct ModelSpec
{
    ModelKind kind = ModelKind::mlp_classifier;
    std::vector<std::size_t> layer_widths;
    std::string activation = "relu";
    std::optional<std::size_t> feature_layer;
    /// 0 = taken from the dataset at train time.
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::size_t projection_dim = 16;
    bool bias = true;
    /// AE bottleneck without ReLU.
    bool linear_bottleneck = true;

    bool operator==(const ModelSpec &) const = default;
};

struct TrainConfig
{
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
    double denoise_sigma = 0.5;
    double contrastive_temperature = 0.5;
    AugmentPolicy view_policy = default_augment_policy;
    bool per_epoch = true;
    bool per_iteration_in_epoch0 = true;

    bool operator==(const TrainConfig &) const = default;
};

inline json spec_to_json(const ModelSpec & s)
{
    json j;
    j["kind"] = to_string(s.kind);
    j["layer_widths"] = s.layer_widths;
    j["activation"] = s.activation;
    j["feature_layer"] = s.feature_layer ? json(*s.feature_layer) : json(nullptr);
    j["input_dim"] = s.input_dim;
    j["num_classes"] = s.num_classes;
    j["projection_dim"] = s.projection_dim;
    j["bias"] = s.bias;
    j["linear_bottleneck"] = s.linear_bottleneck;
    return j;
}

inline ModelSpec spec_from_json(const json & j)
{
    ModelSpec s;
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
    s.activation = j.value("activation", std::string("relu"));
    if (j.contains("feature_layer") && !j["feature_layer"].is_null())
        s.feature_layer = j["feature_layer"].get<std::size_t>();
    s.input_dim = j.value("input_dim", std::size_t{0});
    s.num_classes = j.value("num_classes", std::size_t{0});
    s.projection_dim = j.value("projection_dim", std::size_t{16});
    s.bias = j.value("bias", true);
    s.linear_bottleneck = j.value("linear_bottleneck", true);
    return s;
}

inline json policy_to_json(const AugmentPolicy & p)
{
    return {{"noise_sigma", p.noise_sigma}, {"mask_prob", p.mask_prob}, {"scale_jitter", p.scale_jitter}};
}

inline AugmentPolicy policy_from_json(const json & j)
{
    return {j.value("noise_sigma", 0.0), j.value("mask_prob", 0.0), j.value("scale_jitter", 0.0)};
}

inline json config_to_json(const TrainConfig & c)
{
    json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["weight_decay"] = c.weight_decay;
    j["seed"] = c.seed;
    j["denoise_sigma"] = c.denoise_sigma;
    j["contrastive_temperature"] = c.contrastive_temperature;
    j["view_policy"] = policy_to_json(c.view_policy);
    j["checkpoint_policy"] = {{"per_epoch", c.per_epoch}, {"per_iteration_in_epoch0", c.per_iteration_in_epoch0}};
    return j;
}

inline TrainConfig config_from_json(const json & j)
{
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.denoise_sigma = j.value("denoise_sigma", 0.5);
    c.contrastive_temperature = j.value("contrastive_temperature", 0.5);
    if (j.contains("view_policy"))
        c.view_policy = policy_from_json(j["view_policy"]);
    if (j.contains("checkpoint_policy")) {
        c.per_epoch = j["checkpoint_policy"].value("per_epoch", true);
        c.per_iteration_in_epoch0 = j["checkpoint_policy"].value("per_iteration_in_epoch0", true);
    }
    return c;
}

inline std::string compute_run_id(const ModelSpec & s, const TrainConfig & c, const std::string & dataset_id)
{
    const json j = {{"spec", spec_to_json(s)}, {"config", config_to_json(c)}, {"dataset_id", dataset_id}};
    return fnv1a_hex(j.dump());
}

/// Fully connected feed-forward stack described by a ModelSpec. Parameters
/// live in one flat array: per layer, W (out × in, row-major) then b.
class Network
{
public:
    struct Layer
    {
        std::size_t in = 0, out = 0;
        bool relu = true;
        std::size_t w = 0;
        std::optional<std::size_t> b;
    };

    explicit Network(ModelSpec spec) : spec_(std::move(spec))
    {
        const auto & w = spec_.layer_widths;
        detail::require(!w.empty(), "ModelSpec: layer_widths must be non-empty");
        for (std::size_t x : w)
            detail::require(x >= 1, "ModelSpec: layer widths must be >= 1");
        detail::require(spec_.activation == "relu", "ModelSpec: only activation=relu is supported");
        detail::require(spec_.input_dim >= 1, "ModelSpec: input_dim must be set");

        std::size_t prev = spec_.input_dim;
        auto add = [&](std::size_t out, bool relu) {
            layers_.push_back(Layer{prev, out, relu, 0, std::nullopt});
            prev = out;
        };
        for (std::size_t i = 0; i < w.size(); ++i)
            add(w[i], !(is_autoencoder(spec_.kind) && spec_.linear_bottleneck && i + 1 == w.size()));
        switch (spec_.kind) {
        case ModelKind::mlp_classifier:
            detail::require(spec_.num_classes >= 2, "ModelSpec: classifier needs num_classes >= 2");
            add(spec_.num_classes, false);
            break;
        case ModelKind::autoencoder:
        case ModelKind::denoise_autoencoder:
            for (std::size_t i = w.size() - 1; i-- > 0;)
                add(w[i], true);
            add(spec_.input_dim, false);
            break;
        case ModelKind::contrastive:
            detail::require(spec_.projection_dim >= 1, "ModelSpec: projection_dim must be >= 1");
            add(w.back(), true);
            add(spec_.projection_dim, false);
            break;
        }
        std::size_t off = 0;
        for (auto & l : layers_) {
            l.w = off;
            off += l.in * l.out;
            if (spec_.bias) {
                l.b = off;
                off += l.out;
            }
        }
        params_ = off;
        detail::require(feature_layer() < hidden_layers(), "ModelSpec: feature_layer " +
                                                               std::to_string(feature_layer()) + " out of range [0, " +
                                                               std::to_string(hidden_layers()) + ")");
    }

    const ModelSpec & spec() const noexcept { return spec_; }
    const std::vector<Layer> & layers() const noexcept { return layers_; }
    std::size_t parameter_count() const noexcept { return params_; }
    std::size_t hidden_layers() const noexcept { return layers_.size() - 1; }
    std::size_t feature_layer() const { return spec_.feature_layer.value_or(spec_.layer_widths.size() - 1); }
    std::size_t output_dim() const noexcept { return layers_.back().out; }

    /// He-scaled Gaussian weights, zero biases.
    std::vector<double> init(Rng & rng) const
    {
        std::vector<double> p(params_, 0.0);
        for (const auto & l : layers_) {
            const double sd = std::sqrt(2.0 / static_cast<double>(l.in));
            for (std::size_t i = 0; i < l.in * l.out; ++i)
                p[l.w + i] = sd * rng.gaussian();
        }
        return p;
    }

    /// Output of layer `last` (post-activation) for every row of x.
    DenseMatrix forward(std::span<const double> p, const DenseMatrix & x, std::size_t last) const
    {
        check_params(p);
        detail::require(x.cols() == spec_.input_dim, "input has " + std::to_string(x.cols()) + " columns, model expects " +
                                                         std::to_string(spec_.input_dim));
        DenseMatrix a = x;
        for (std::size_t l = 0; l <= last; ++l)
            a = apply(p, layers_[l], a);
        return a;
    }

    DenseMatrix output(std::span<const double> p, const DenseMatrix & x) const
    {
        return forward(p, x, layers_.size() - 1);
    }

    /// Post-activation values of every layer; acts[0] is the input.
    std::vector<DenseMatrix> trace(std::span<const double> p, const DenseMatrix & x) const
    {
        check_params(p);
        std::vector<DenseMatrix> acts;
        acts.reserve(layers_.size() + 1);
        acts.push_back(x);
        for (const auto & l : layers_)
            acts.push_back(apply(p, l, acts.back()));
        return acts;
    }

    /// Adds ∂loss/∂θ to `grad` given ∂loss/∂output.
    void backward(std::span<const double> p, const std::vector<DenseMatrix> & acts, DenseMatrix d_out,
                  std::span<double> grad) const
    {
        DenseMatrix d = std::move(d_out);
        for (std::size_t li = layers_.size(); li-- > 0;) {
            const Layer & l = layers_[li];
            const DenseMatrix & in = acts[li];
            const DenseMatrix & out = acts[li + 1];
            const std::size_t batch = in.rows();
            if (l.relu)
                for (std::size_t i = 0; i < d.values().size(); ++i)
                    if (!(out.values()[i] > 0.0))
                        d.data()[i] = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double * xr = in.values().data() + b * l.in;
                const double * dr = d.values().data() + b * l.out;
                for (std::size_t o = 0; o < l.out; ++o) {
                    const double g = dr[o];
                    if (g == 0.0)
                        continue;
                    double * gw = grad.data() + l.w + o * l.in;
                    for (std::size_t i = 0; i < l.in; ++i)
                        gw[i] += g * xr[i];
                    if (l.b)
                        grad[*l.b + o] += g;
                }
            }
            if (li == 0)
                break;
            DenseMatrix dx(batch, l.in);
            for (std::size_t b = 0; b < batch; ++b) {
                const double * dr = d.values().data() + b * l.out;
                double * xr = dx.data().data() + b * l.in;
                for (std::size_t o = 0; o < l.out; ++o) {
                    const double g = dr[o];
                    if (g == 0.0)
                        continue;
                    const double * wr = p.data() + l.w + o * l.in;
                    for (std::size_t i = 0; i < l.in; ++i)
                        xr[i] += g * wr[i];
                }
            }
            d = std::move(dx);
        }
    }

private:
    void check_params(std::span<const double> p) const
    {
        detail::require(p.size() == params_, "parameter count " + std::to_string(p.size()) +
                                                 " does not match the model (" + std::to_string(params_) + ")");
    }

    static DenseMatrix apply(std::span<const double> p, const Layer & l, const DenseMatrix & x)
    {
        DenseMatrix y(x.rows(), l.out);
        for (std::size_t b = 0; b < x.rows(); ++b) {
            const double * xr = x.values().data() + b * l.in;
            double * yr = y.data().data() + b * l.out;
            for (std::size_t o = 0; o < l.out; ++o) {
                const double * wr = p.data() + l.w + o * l.in;
                double s = l.b ? p[*l.b + o] : 0.0;
                for (std::size_t i = 0; i < l.in; ++i)
                    s += wr[i] * xr[i];
                yr[o] = l.relu ? std::max(s, 0.0) : s;
            }
        }
        return y;
    }

    ModelSpec spec_;
    std::vector<Layer> layers_;
    std::size_t params_ = 0;
};

//
// losses; each returns the mean loss and adds its gradient into `grad`
//

/// Softmax cross-entropy over the batch.
inline double cross_entropy_loss(const Network & net, std::span<const double> p, const DenseMatrix & x,
                                 std::span<const int> labels, std::span<double> grad)
{
    detail::require(labels.size() == x.rows(), "cross_entropy_loss: label count mismatch");
    const auto acts = net.trace(p, x);
    const DenseMatrix & logits = acts.back();
    const std::size_t batch = x.rows(), k = logits.cols();
    DenseMatrix d(batch, k);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto row = logits.row(b);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row)
            z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        const auto y = static_cast<std::size_t>(labels[b]);
        detail::require(y < k, "cross_entropy_loss: label out of range");
        loss += lse - row[y];
        for (std::size_t c = 0; c < k; ++c)
            d(b, c) = (std::exp(row[c] - lse) - (c == y ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
    net.backward(p, acts, std::move(d), grad);
    return loss / static_cast<double>(batch);
}

/// Mean squared error over all output entries.
inline double mse_loss(const Network & net, std::span<const double> p, const DenseMatrix & input,
                       const DenseMatrix & target, std::span<double> grad)
{
    const auto acts = net.trace(p, input);
    const DenseMatrix & out = acts.back();
    detail::require(out.rows() == target.rows() && out.cols() == target.cols(), "mse_loss: target shape mismatch");
    const double count = static_cast<double>(out.values().size());
    DenseMatrix d(out.rows(), out.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        const double r = out.values()[i] - target.values()[i];
        loss += r * r;
        d.data()[i] = 2.0 * r / count;
    }
    net.backward(p, acts, std::move(d), grad);
    return loss / count;
}

/// NT-Xent over two views: rows i and i+B are positives; every other row of
/// the 2B stacked, L2-normalized projections is a negative.
inline double nt_xent_loss(const Network & net, std::span<const double> p, const DenseMatrix & view1,
                           const DenseMatrix & view2, double temperature, std::span<double> grad)
{
    detail::require(view1.rows() == view2.rows() && view1.cols() == view2.cols(), "nt_xent_loss: view shapes differ");
    detail::require(temperature > 0.0, "nt_xent_loss: temperature must be positive");
    const auto a1 = net.trace(p, view1);
    const auto a2 = net.trace(p, view2);
    const std::size_t half = view1.rows(), m = 2 * half, dim = a1.back().cols();

    std::vector<double> zhat(m * dim), norms(m);
    for (std::size_t r = 0; r < m; ++r) {
        const auto src = r < half ? a1.back().row(r) : a2.back().row(r - half);
        const double nr = std::max(norm2(src), 1e-12);
        norms[r] = nr;
        for (std::size_t c = 0; c < dim; ++c)
            zhat[r * dim + c] = src[c] / nr;
    }
    std::vector<double> s(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j)
                s[i * m + j] = dot(std::span<const double>(&zhat[i * dim], dim),
                                   std::span<const double>(&zhat[j * dim], dim)) /
                               temperature;

    std::vector<double> g(m * m, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t t = (i + half) % m;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j)
            if (j != i)
                mx = std::max(mx, s[i * m + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            if (j != i)
                z += std::exp(s[i * m + j] - mx);
        const double lse = mx + std::log(z);
        loss += lse - s[i * m + t];
        for (std::size_t j = 0; j < m; ++j)
            if (j != i)
                g[i * m + j] = (std::exp(s[i * m + j] - lse) - (j == t ? 1.0 : 0.0)) / static_cast<double>(m);
    }

    DenseMatrix d1(half, dim), d2(half, dim);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> dz(dim, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double w = (g[i * m + j] + g[j * m + i]) / temperature;
            if (w == 0.0)
                continue;
            for (std::size_t c = 0; c < dim; ++c)
                dz[c] += w * zhat[j * dim + c];
        }
        const double proj = dot(std::span<const double>(&zhat[i * dim], dim), dz);
        DenseMatrix & target = i < half ? d1 : d2;
        const std::size_t row = i < half ? i : i - half;
        const bool clamped = norms[i] <= 1e-12;
        for (std::size_t c = 0; c < dim; ++c)
            target(row, c) = (clamped ? dz[c] : dz[c] - zhat[i * dim + c] * proj) / norms[i];
    }
    net.backward(p, a1, std::move(d1), grad);
    net.backward(p, a2, std::move(d2), grad);
    return loss / static_cast<double>(m);
}

//
// training
//

struct Checkpoint
{
    std::string run_id;
    std::size_t epoch = 0;
    std::optional<std::size_t> iteration;
    std::vector<double> parameters;
    std::string rng_state;
};

enum class RunStatus { completed, diverged };

inline const char * to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "diverged"; }

struct TrainedRun
{
    std::string run_id;
    std::string dataset_id;
    ModelSpec spec;
    TrainConfig config;
    /// (0,0) is the initialization, (0,i) follows iteration i of the first
    /// epoch, (e) follows epoch e.
    std::vector<Checkpoint> checkpoints;
    std::vector<double> iteration_losses;
    std::vector<double> epoch_losses;
    std::vector<double> train_accuracy;
    RunStatus status = RunStatus::completed;
    std::string diagnostic;

    const Checkpoint & init() const { return checkpoints.front(); }

    /// Final checkpoint of a completed budget.
    const Checkpoint & well_trained() const
    {
        if (status != RunStatus::completed)
            throw NumericalError("run " + run_id + " diverged: " + diagnostic);
        for (auto it = checkpoints.rbegin(); it != checkpoints.rend(); ++it)
            if (it->epoch == config.epochs && !it->iteration)
                return *it;
        throw ValidationError("run " + run_id + " has no final-epoch checkpoint");
    }

    /// Checkpoints of completed epochs (iteration unset).
    std::vector<const Checkpoint *> epoch_checkpoints() const
    {
        std::vector<const Checkpoint *> out;
        for (const auto & c : checkpoints)
            if (!c.iteration)
                out.push_back(&c);
        return out;
    }
};

namespace detail {

inline DenseMatrix gather_rows(const DenseMatrix & x, std::span<const std::size_t> idx)
{
    DenseMatrix out(idx.size(), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.row(idx[r]).begin(), x.cols(), out.data().begin() + static_cast<std::ptrdiff_t>(r * x.cols()));
    return out;
}

inline bool all_finite(std::span<const double> v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace detail

/// Fills input_dim / num_classes from the dataset and validates the pairing.
inline ModelSpec resolve_spec(ModelSpec spec, const ToyDataset & ds)
{
    if (spec.input_dim == 0)
        spec.input_dim = ds.dim();
    detail::require(spec.input_dim == ds.dim(), "ModelSpec input_dim " + std::to_string(spec.input_dim) +
                                                    " does not match dataset dimension " + std::to_string(ds.dim()));
    if (spec.kind == ModelKind::mlp_classifier) {
        detail::require(ds.labels.has_value(), "mlp_classifier requires a labelled dataset");
        if (spec.num_classes == 0)
            spec.num_classes = ds.num_classes;
        detail::require(spec.num_classes >= ds.num_classes, "ModelSpec num_classes smaller than the dataset's");
    }
    Network check(spec);
    return spec;
}

inline TrainedRun train(const ToyDataset & ds, ModelSpec spec_in, const TrainConfig & cfg)
{
    detail::require(cfg.epochs >= 1, "TrainConfig: epochs must be >= 1");
    detail::require(cfg.batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    detail::require(cfg.learning_rate >= 0.0 && std::isfinite(cfg.learning_rate),
                    "TrainConfig: learning_rate must be finite and >= 0");
    detail::require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "TrainConfig: momentum must lie in [0, 1)");
    detail::require(cfg.weight_decay >= 0.0, "TrainConfig: weight_decay must be >= 0");
    detail::require(cfg.contrastive_temperature > 0.0, "TrainConfig: temperature must be positive");
    detail::require(cfg.denoise_sigma >= 0.0, "TrainConfig: denoise_sigma must be >= 0");
    detail::validate_policy(cfg.view_policy);

    const ModelSpec spec = resolve_spec(std::move(spec_in), ds);
    const Network net(spec);

    TrainedRun run;
    run.spec = spec;
    run.config = cfg;
    run.dataset_id = ds.dataset_id;
    run.run_id = compute_run_id(spec, cfg, ds.dataset_id);

    Rng init_rng(derive_seed(cfg.seed, 1));
    Rng order_rng(derive_seed(cfg.seed, 2));
    Rng noise_rng(derive_seed(cfg.seed, 3));
    std::vector<double> theta = net.init(init_rng);
    std::vector<double> velocity(theta.size(), 0.0);
    std::vector<double> grad(theta.size());

    auto snapshot = [&](std::size_t epoch, std::optional<std::size_t> iteration) {
        run.checkpoints.push_back(
            Checkpoint{run.run_id, epoch, iteration, theta, order_rng.state() + "|" + noise_rng.state()});
    };
    snapshot(0, 0);

    const std::size_t n = ds.size();
    const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<std::size_t> order(n);
    bool first_step = true;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        order_rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t it = 0; it < per_epoch; ++it) {
            const std::size_t lo = it * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
            const DenseMatrix xb = detail::gather_rows(ds.X, idx);
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss = 0.0;
            switch (spec.kind) {
            case ModelKind::mlp_classifier: {
                std::vector<int> yb(idx.size());
                for (std::size_t r = 0; r < idx.size(); ++r)
                    yb[r] = (*ds.labels)[idx[r]];
                loss = cross_entropy_loss(net, theta, xb, yb, grad);
                break;
            }
            case ModelKind::autoencoder:
                loss = mse_loss(net, theta, xb, xb, grad);
                break;
            case ModelKind::denoise_autoencoder: {
                DenseMatrix noisy = xb;
                for (double & v : noisy.data())
                    v += cfg.denoise_sigma * noise_rng.gaussian();
                loss = mse_loss(net, theta, noisy, xb, grad);
                break;
            }
            case ModelKind::contrastive: {
                DenseMatrix v1 = xb, v2 = xb;
                detail::augment_rows(v1, cfg.view_policy, noise_rng);
                detail::augment_rows(v2, cfg.view_policy, noise_rng);
                loss = nt_xent_loss(net, theta, v1, v2, cfg.contrastive_temperature, grad);
                break;
            }
            }
            if (!std::isfinite(loss) || !detail::all_finite(grad)) {
                run.status = RunStatus::diverged;
                run.diagnostic = "non-finite loss at epoch " + std::to_string(epoch + 1) + " iteration " +
                                 std::to_string(it + 1);
                return run;
            }
            // SGD with momentum, weight decay folded into the gradient
            for (std::size_t i = 0; i < theta.size(); ++i) {
                const double g = grad[i] + cfg.weight_decay * theta[i];
                velocity[i] = first_step ? g : cfg.momentum * velocity[i] + g;
                theta[i] -= cfg.learning_rate * velocity[i];
            }
            first_step = false;
            if (!detail::all_finite(theta)) {
                run.status = RunStatus::diverged;
                run.diagnostic = "non-finite parameters at epoch " + std::to_string(epoch + 1) + " iteration " +
                                 std::to_string(it + 1);
                return run;
            }
            epoch_loss += loss * static_cast<double>(idx.size());
            if (epoch == 0) {
                run.iteration_losses.push_back(loss);
                if (cfg.per_iteration_in_epoch0)
                    snapshot(0, it + 1);
            }
        }
        run.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
        if (spec.kind == ModelKind::mlp_classifier) {
            const DenseMatrix logits = net.output(theta, ds.X);
            std::size_t hit = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto row = logits.row(i);
                if (static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == (*ds.labels)[i])
                    ++hit;
            }
            run.train_accuracy.push_back(static_cast<double>(hit) / static_cast<double>(n));
        }
        if (cfg.per_epoch || epoch + 1 == cfg.epochs)
            snapshot(epoch + 1, std::nullopt);
    }
    return run;
}

//
// inference
//

namespace detail {

inline void require_compatible(const Network & net, const Checkpoint & ckpt, const ToyDataset & ds)
{
    require(ckpt.parameters.size() == net.parameter_count(),
            "checkpoint has " + std::to_string(ckpt.parameters.size()) + " parameters, spec expects " +
                std::to_string(net.parameter_count()));
    require(ds.dim() == net.spec().input_dim, "dataset dimension " + std::to_string(ds.dim()) +
                                                  " does not match the model input " +
                                                  std::to_string(net.spec().input_dim));
}

/// Forward pass in 1024-row blocks; each block writes only its own rows.
inline DenseMatrix blocked_forward(const Network & net, std::span<const double> p, const DenseMatrix & x,
                                   std::size_t last)
{
    const std::size_t width = net.layers()[last].out;
    DenseMatrix out(x.rows(), width);
    parallel_blocks(block_count(x.rows()), [&](std::size_t b) {
        const std::size_t lo = b * row_block, hi = std::min(x.rows(), lo + row_block);
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        const DenseMatrix y = net.forward(p, gather_rows(x, idx), last);
        std::copy(y.values().begin(), y.values().end(), out.data().begin() + static_cast<std::ptrdiff_t>(lo * width));
    });
    return out;
}

} // namespace detail

/// Hidden-layer activations for every sample, in dataset order.
inline FeatureMatrix extract_features(const ModelSpec & spec, const Checkpoint & ckpt, const ToyDataset & ds,
                                      std::optional<std::size_t> layer = std::nullopt)
{
    const Network net(spec);
    detail::require_compatible(net, ckpt, ds);
    const std::size_t l = layer.value_or(net.feature_layer());
    detail::require(l < net.hidden_layers(), "layer " + std::to_string(l) + " out of range [0, " +
                                                 std::to_string(net.hidden_layers()) + ")");
    Provenance p;
    p.run_id = ckpt.run_id;
    p.epoch = ckpt.epoch;
    p.iteration = ckpt.iteration;
    p.layer = l;
    p.dataset_id = ds.dataset_id;
    p.split = ds.split;
    return FeatureMatrix(detail::blocked_forward(net, ckpt.parameters, ds.X, l), std::move(p));
}

/// Argmax class per sample; ties go to the lowest class index.
inline std::vector<int> predict_labels(const ModelSpec & spec, const Checkpoint & ckpt, const ToyDataset & ds)
{
    detail::require(spec.kind == ModelKind::mlp_classifier,
                    std::string("accuracy needs a classifier, got ") + to_string(spec.kind));
    const Network net(spec);
    detail::require_compatible(net, ckpt, ds);
    const DenseMatrix logits = detail::blocked_forward(net, ckpt.parameters, ds.X, net.layers().size() - 1);
    std::vector<int> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = logits.row(i);
        out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

inline double evaluate_accuracy(const ModelSpec & spec, const Checkpoint & ckpt, const ToyDataset & ds)
{
    detail::require(ds.labels.has_value(), "evaluate_accuracy: dataset has no labels");
    const auto pred = predict_labels(spec, ckpt, ds);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        hit += pred[i] == (*ds.labels)[i];
    return static_cast<double>(hit) / static_cast<double>(ds.size());
}

} // namespace subspectra
