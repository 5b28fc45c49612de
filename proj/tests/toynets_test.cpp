#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include <subspectra/store.hpp>
#include <subspectra/toynets.hpp>

#include "test_support.hpp"

using namespace subspectra;
using namespace subspectra::testing;

namespace {

// Softmax regression by full-batch gradient descent; the separability oracle.
double logistic_fit_accuracy(const ToyDataset & ds, int steps = 300, double lr = 0.5)
{
    const std::size_t n = ds.size(), d = ds.dim(), k = ds.num_classes;
    std::vector<double> w((d + 1) * k, 0.0), g(w.size()), z(k);
    const auto logits = [&](std::size_t i) {
        for (std::size_t c = 0; c < k; ++c) {
            z[c] = w[d * k + c];
            for (std::size_t j = 0; j < d; ++j)
                z[c] += ds.X(i, j) * w[j * k + c];
        }
    };
    for (int s = 0; s < steps; ++s) {
        std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            logits(i);
            const double mx = *std::max_element(z.begin(), z.end());
            double sum = 0;
            for (double & v : z)
                sum += (v = std::exp(v - mx));
            for (std::size_t c = 0; c < k; ++c) {
                const double r = z[c] / sum - (static_cast<int>(c) == (*ds.labels)[i] ? 1.0 : 0.0);
                for (std::size_t j = 0; j < d; ++j)
                    g[j * k + c] += r * ds.X(i, j);
                g[d * k + c] += r;
            }
        }
        for (std::size_t q = 0; q < w.size(); ++q)
            w[q] -= lr * g[q] / static_cast<double>(n);
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < n; ++i) {
        logits(i);
        hit += static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()) == (*ds.labels)[i];
    }
    return static_cast<double>(hit) / static_cast<double>(n);
}

ModelSpec spec_of(ModelKind kind, std::vector<std::size_t> widths, std::size_t input, std::size_t classes = 0)
{
    ModelSpec s;
    s.kind = kind;
    s.layer_widths = std::move(widths);
    s.input_dim = input;
    s.num_classes = classes;
    return s;
}

// Central differences against the analytic gradient, entrywise relative
// error with a tiny absolute floor for dead units.
template <typename Loss>
double worst_gradient_error(const Network & net, std::vector<double> theta, Loss loss)
{
    std::vector<double> analytic(theta.size(), 0.0), scratch(theta.size());
    loss(theta, std::span<double>(analytic));
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double up = loss(theta, std::span<double>(scratch));
        theta[i] = keep - h;
        const double down = loss(theta, std::span<double>(scratch));
        theta[i] = keep;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
    }
    EXPECT_LE(net.parameter_count(), 200u);
    return worst;
}

} // namespace

// --- datasets ---

TEST(GaussianMixture, BalancedLabels)
{
    const auto ds = gen_gaussian_mixture(1, 8, 4, 2, 3.0);
    EXPECT_EQ(std::count(ds.labels->begin(), ds.labels->end(), 0), 4);
    EXPECT_EQ(std::count(ds.labels->begin(), ds.labels->end(), 1), 4);
}

TEST(GaussianMixture, Deterministic)
{
    const auto a = gen_gaussian_mixture(3, 100, 8, 3, 2.0), b = gen_gaussian_mixture(3, 100, 8, 3, 2.0);
    EXPECT_EQ(a.X.values(), b.X.values());
    EXPECT_EQ(a.dataset_id, b.dataset_id);
    EXPECT_NE(a.dataset_id, gen_gaussian_mixture(4, 100, 8, 3, 2.0).dataset_id);
}

TEST(GaussianMixture, SplitsShareMeansButNotSamples)
{
    const auto tr = gen_gaussian_mixture(2, 400, 6, 2, 5.0, Split::train);
    const auto te = gen_gaussian_mixture(2, 400, 6, 2, 5.0, Split::test);
    EXPECT_NE(tr.X.values(), te.X.values());
    for (std::size_t j = 0; j < 6; ++j) {
        double a = 0, b = 0;
        for (std::size_t i = 0; i < 400; i += 2) {
            a += tr.X(i, j);
            b += te.X(i, j);
        }
        EXPECT_NEAR(a / 200, b / 200, 0.35);
    }
}

TEST(GaussianMixture, Validation)
{
    EXPECT_THROW(gen_gaussian_mixture(1, 8, 4, 1, 1.0), ValidationError);
    EXPECT_THROW(gen_gaussian_mixture(1, 1, 4, 2, 1.0), ValidationError);
    EXPECT_THROW(gen_gaussian_mixture(1, 8, 1, 2, 1.0), ValidationError);
    EXPECT_THROW(gen_gaussian_mixture(1, 8, 4, 2, 0.0), ValidationError);
}

TEST(GaussianMixture, WideSpreadIsLinearlySeparable)
{
    EXPECT_GT(logistic_fit_accuracy(gen_gaussian_mixture(1, 2000, 32, 4, 10.0)), 0.95);
}

TEST(RawMatrix, FmatRoundTripWithAndWithoutLabels)
{
    const auto dir = std::filesystem::temp_directory_path() / "subspectra_toynets_raw";
    std::filesystem::create_directories(dir);
    const auto ds = gen_gaussian_mixture(5, 50, 6, 3, 2.0);
    write_fmat(raw_features(ds), dir / "x.fmat");
    write_labels_file(*ds.labels, dir / "y.txt");

    const auto bare = load_raw_matrix(dir / "x.fmat");
    EXPECT_FALSE(bare.labels.has_value());
    EXPECT_EQ(bare.X.values(), ds.X.values());

    const auto full = load_raw_matrix(dir / "x.fmat", dir / "y.txt");
    EXPECT_EQ(full.labels, ds.labels);
    EXPECT_EQ(full.dataset_id, ds.dataset_id);

    write_labels_file({0, 1, 2}, dir / "short.txt");
    EXPECT_THROW(load_raw_matrix(dir / "x.fmat", dir / "short.txt"), ValidationError);

    auto bytes = read_file_bytes(dir / "x.fmat");
    bytes[1] = 'X';
    write_file_atomic(dir / "bad.fmat", bytes);
    try {
        load_raw_matrix(dir / "bad.fmat");
        FAIL() << "expected FormatError";
    } catch (const FormatError & e) {
        EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
    }
    std::filesystem::remove_all(dir);
}

// --- augmentation ---

TEST(Augment, ZeroPolicyIsIdentity)
{
    const auto ds = gen_gaussian_mixture(1, 64, 5, 2, 2.0);
    const auto out = augment(ds, AugmentPolicy{}, 9);
    EXPECT_EQ(out.X.values(), ds.X.values());
    EXPECT_EQ(out.augmentation_of, ds.dataset_id);
}

TEST(Augment, FullMaskZeroesInputsKeepsLabels)
{
    const auto ds = gen_gaussian_mixture(1, 64, 5, 2, 2.0);
    const auto out = augment(ds, AugmentPolicy{0.0, 1.0, 0.0}, 9);
    for (double x : out.X.values())
        EXPECT_EQ(x, 0.0);
    EXPECT_EQ(out.labels, ds.labels);
}

TEST(Augment, NoiseStandardDeviation)
{
    const auto ds = gen_gaussian_mixture(1, 1000, 10, 2, 2.0);
    const auto out = augment(ds, AugmentPolicy{0.1, 0.0, 0.0}, 4);
    double s = 0, ss = 0;
    const std::size_t n = ds.X.values().size();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = out.X.values()[i] - ds.X.values()[i];
        s += r;
        ss += r * r;
    }
    const double sd = std::sqrt((ss - s * s / static_cast<double>(n)) / static_cast<double>(n - 1));
    EXPECT_NEAR(sd, 0.1, 0.01);
}

TEST(Augment, ScaleJitterBounded)
{
    const auto ds = gen_gaussian_mixture(1, 200, 4, 2, 2.0);
    const auto out = augment(ds, AugmentPolicy{0.0, 0.0, 0.2}, 4);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double r = out.X(i, 0) / ds.X(i, 0);
        EXPECT_GE(r, 0.8 - 1e-12);
        EXPECT_LE(r, 1.2 + 1e-12);
        for (std::size_t j = 1; j < ds.dim(); ++j)
            EXPECT_NEAR(out.X(i, j), r * ds.X(i, j), 1e-9);
    }
}

TEST(Augment, Validation)
{
    const auto ds = gen_gaussian_mixture(1, 8, 4, 2, 2.0);
    EXPECT_THROW(augment(ds, AugmentPolicy{-0.1, 0.0, 0.0}, 1), ValidationError);
    EXPECT_THROW(augment(ds, AugmentPolicy{0.0, 1.5, 0.0}, 1), ValidationError);
}

// --- architecture ---

TEST(Network, AutoencoderDecoderMirrorsEncoder)
{
    for (auto kind : {ModelKind::autoencoder, ModelKind::denoise_autoencoder}) {
        const Network net(spec_of(kind, {12, 7, 3}, 20));
        std::vector<std::size_t> outs;
        for (const auto & l : net.layers())
            outs.push_back(l.out);
        EXPECT_EQ(outs, (std::vector<std::size_t>{12, 7, 3, 7, 12, 20}));
        EXPECT_EQ(net.feature_layer(), 2u);
        EXPECT_FALSE(net.layers()[2].relu);
    }
}

TEST(Network, FeatureLayerDefaults)
{
    EXPECT_EQ(Network(spec_of(ModelKind::mlp_classifier, {8, 6}, 4, 3)).feature_layer(), 1u);
    const Network c(spec_of(ModelKind::contrastive, {8, 6}, 4));
    EXPECT_EQ(c.feature_layer(), 1u);
    EXPECT_EQ(c.hidden_layers(), 3u);
    EXPECT_EQ(c.output_dim(), 16u);
}

TEST(Network, SpecValidation)
{
    EXPECT_THROW(Network(spec_of(ModelKind::mlp_classifier, {}, 4, 3)), ValidationError);
    EXPECT_THROW(Network(spec_of(ModelKind::mlp_classifier, {0}, 4, 3)), ValidationError);
    EXPECT_THROW(Network(spec_of(ModelKind::mlp_classifier, {4}, 4, 1)), ValidationError);
    auto s = spec_of(ModelKind::mlp_classifier, {4, 4}, 4, 3);
    s.feature_layer = 2;
    EXPECT_THROW(Network{s}, ValidationError);
    s.feature_layer.reset();
    s.activation = "tanh";
    EXPECT_THROW(Network{s}, ValidationError);
}

TEST(Network, SpecJsonRoundTrip)
{
    auto s = spec_of(ModelKind::contrastive, {9, 5}, 7);
    s.projection_dim = 3;
    s.bias = false;
    s.feature_layer = 0;
    EXPECT_EQ(spec_to_json(spec_from_json(spec_to_json(s))), spec_to_json(s));
    TrainConfig c;
    c.seed = 77;
    c.learning_rate = 0.125;
    EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
}

// --- gradients ---

TEST(Gradient, CrossEntropy)
{
    const Network net(spec_of(ModelKind::mlp_classifier, {6, 5}, 4, 3));
    Rng rng(1);
    const auto theta = net.init(rng);
    const auto x = gaussian_matrix(7, 4, 2);
    const std::vector<int> y{0, 1, 2, 0, 1, 2, 1};
    const double err = worst_gradient_error(net, theta, [&](std::span<const double> p, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
        return cross_entropy_loss(net, p, x, y, g);
    });
    EXPECT_LT(err, 1e-4);
}

TEST(Gradient, MeanSquaredReconstruction)
{
    const Network net(spec_of(ModelKind::denoise_autoencoder, {6, 3}, 5));
    Rng rng(2);
    const auto theta = net.init(rng);
    const auto target = gaussian_matrix(6, 5, 3);
    auto noisy = target;
    for (double & v : noisy.data())
        v += 0.3 * rng.gaussian();
    const double err = worst_gradient_error(net, theta, [&](std::span<const double> p, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
        return mse_loss(net, p, noisy, target, g);
    });
    EXPECT_LT(err, 1e-4);
}

TEST(Gradient, NtXent)
{
    auto s = spec_of(ModelKind::contrastive, {6, 4}, 4);
    s.projection_dim = 3;
    const Network net(s);
    Rng rng(3);
    auto theta = net.init(rng);
    for (const auto & l : net.layers())
        for (std::size_t i = 0; i < l.out; ++i)
            theta[*l.b + i] = 0.1;
    const auto v1 = gaussian_matrix(5, 4, 4);
    auto v2 = v1;
    for (double & v : v2.data())
        v += 0.2 * rng.gaussian();
    const double err = worst_gradient_error(net, theta, [&](std::span<const double> p, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
        return nt_xent_loss(net, p, v1, v2, 0.5, g);
    });
    EXPECT_LT(err, 1e-4);
}

TEST(Gradient, AccumulatesIntoBuffer)
{
    const Network net(spec_of(ModelKind::autoencoder, {3}, 4));
    Rng rng(5);
    const auto theta = net.init(rng);
    const auto x = gaussian_matrix(4, 4, 6);
    std::vector<double> once(theta.size(), 0.0), twice(theta.size(), 0.0);
    mse_loss(net, theta, x, x, once);
    mse_loss(net, theta, x, x, twice);
    mse_loss(net, theta, x, x, twice);
    for (std::size_t i = 0; i < once.size(); ++i)
        EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

// --- training ---

TEST(Train, ZeroLearningRateKeepsInitialParameters)
{
    const auto ds = gen_gaussian_mixture(1, 64, 6, 2, 3.0);
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 64;
    c.learning_rate = 0.0;
    c.weight_decay = 0.0;
    const auto run = train(ds, spec_of(ModelKind::mlp_classifier, {8}, 0), c);
    EXPECT_EQ(run.well_trained().parameters, run.init().parameters);
}

TEST(Train, DeterministicCheckpointBytes)
{
    const auto ds = gen_gaussian_mixture(1, 200, 6, 2, 3.0);
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 50;
    for (auto kind : {ModelKind::mlp_classifier, ModelKind::autoencoder, ModelKind::denoise_autoencoder,
                      ModelKind::contrastive}) {
        const auto a = train(ds, spec_of(kind, {8, 4}, 0), c);
        const auto b = train(ds, spec_of(kind, {8, 4}, 0), c);
        ASSERT_EQ(a.checkpoints.size(), b.checkpoints.size());
        EXPECT_EQ(a.run_id, b.run_id);
        for (std::size_t i = 0; i < a.checkpoints.size(); ++i)
            EXPECT_EQ(encode_checkpoint(a.checkpoints[i]), encode_checkpoint(b.checkpoints[i]));
    }
}

TEST(Train, CheckpointCoverage)
{
    const auto ds = gen_gaussian_mixture(1, 250, 6, 2, 3.0);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 64;
    const auto run = train(ds, spec_of(ModelKind::autoencoder, {5}, 0), c);
    // 4 iterations per epoch: init, 4 per-iteration, 3 per-epoch
    ASSERT_EQ(run.checkpoints.size(), 8u);
    for (std::size_t i = 0; i <= 4; ++i) {
        EXPECT_EQ(run.checkpoints[i].epoch, 0u);
        EXPECT_EQ(run.checkpoints[i].iteration, std::optional<std::size_t>(i));
    }
    for (std::size_t e = 1; e <= 3; ++e) {
        EXPECT_EQ(run.checkpoints[4 + e].epoch, e);
        EXPECT_FALSE(run.checkpoints[4 + e].iteration.has_value());
    }
    EXPECT_EQ(run.iteration_losses.size(), 4u);
    EXPECT_EQ(run.epoch_losses.size(), 3u);
    EXPECT_EQ(&run.well_trained(), &run.checkpoints.back());
    EXPECT_EQ(run.epoch_checkpoints().size(), 3u);
}

TEST(Train, ConfigAndLabelValidation)
{
    const auto ds = gen_gaussian_mixture(1, 16, 4, 2, 3.0);
    TrainConfig c;
    c.epochs = 0;
    EXPECT_THROW(train(ds, spec_of(ModelKind::autoencoder, {3}, 0), c), ValidationError);
    c.epochs = 1;
    c.contrastive_temperature = 0;
    EXPECT_THROW(train(ds, spec_of(ModelKind::contrastive, {3}, 0), c), ValidationError);
    auto unlabelled = ds;
    unlabelled.labels.reset();
    EXPECT_THROW(train(unlabelled, spec_of(ModelKind::mlp_classifier, {3}, 0), TrainConfig{}), ValidationError);
    EXPECT_THROW(train(ds, spec_of(ModelKind::autoencoder, {3}, 5), TrainConfig{}), ValidationError);
}

TEST(Train, DivergenceKeepsPartialCheckpoints)
{
    const auto ds = gen_gaussian_mixture(1, 64, 4, 2, 3.0);
    TrainConfig c;
    c.epochs = 5;
    c.batch_size = 16;
    c.learning_rate = 1e30;
    const auto run = train(ds, spec_of(ModelKind::autoencoder, {4}, 0), c);
    EXPECT_EQ(run.status, RunStatus::diverged);
    EXPECT_FALSE(run.diagnostic.empty());
    EXPECT_FALSE(run.checkpoints.empty());
    EXPECT_THROW(run.well_trained(), NumericalError);
}

TEST(Train, ClassifierReachesHighAccuracyOnSeparableData)
{
    const auto ds = gen_gaussian_mixture(1, 2000, 32, 4, 10.0);
    TrainConfig c;
    c.epochs = 30;
    c.learning_rate = 0.05;
    c.per_iteration_in_epoch0 = false;
    const auto run = train(ds, spec_of(ModelKind::mlp_classifier, {64, 32}, 0), c);
    ASSERT_EQ(run.status, RunStatus::completed);
    EXPECT_GE(evaluate_accuracy(run.spec, run.well_trained(), ds), 0.95);
    EXPECT_NEAR(run.train_accuracy.back(), evaluate_accuracy(run.spec, run.well_trained(), ds), 1e-12);
}

TEST(Train, WideNetworkMemorizesSmallSet)
{
    const auto ds = gen_gaussian_mixture(3, 32, 8, 2, 0.5);
    TrainConfig c;
    c.epochs = 300;
    c.batch_size = 32;
    c.weight_decay = 0;
    c.per_iteration_in_epoch0 = false;
    c.per_epoch = false;
    const auto run = train(ds, spec_of(ModelKind::mlp_classifier, {256, 256}, 0), c);
    EXPECT_DOUBLE_EQ(evaluate_accuracy(run.spec, run.well_trained(), ds), 1.0);
}

// --- extraction / evaluation ---

TEST(Extract, IdentityLinearLayerReturnsInputs)
{
    const auto ds = gen_gaussian_mixture(1, 30, 5, 2, 1.0);
    auto s = spec_of(ModelKind::autoencoder, {5}, 5);
    const Network net(s);
    Checkpoint ck;
    ck.parameters.assign(net.parameter_count(), 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        ck.parameters[net.layers()[0].w + i * 5 + i] = 1.0;
    const auto f = extract_features(s, ck, ds);
    EXPECT_EQ(f.data.values(), ds.X.values());
    EXPECT_EQ(f.source.layer, std::optional<std::size_t>(0));
}

TEST(Extract, DeadReluGivesDegeneratePVector)
{
    const auto ds = gen_gaussian_mixture(1, 30, 5, 2, 1.0);
    const auto s = spec_of(ModelKind::mlp_classifier, {4}, 5, 2);
    const Network net(s);
    Checkpoint ck;
    ck.parameters.assign(net.parameter_count(), 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        ck.parameters[*net.layers()[0].b + i] = -1.0;
    const auto f = extract_features(s, ck, ds);
    for (double x : f.data.values())
        EXPECT_EQ(x, 0.0);
    EXPECT_THROW(pvector(f), NumericalError);
}

TEST(Extract, InvalidLayerAndMismatchedData)
{
    const auto ds = gen_gaussian_mixture(1, 30, 5, 2, 1.0);
    const auto s = spec_of(ModelKind::mlp_classifier, {4}, 5, 2);
    Checkpoint ck;
    ck.parameters.assign(Network(s).parameter_count(), 0.1);
    EXPECT_THROW(extract_features(s, ck, ds, 1), ValidationError);
    EXPECT_THROW(extract_features(s, ck, gen_gaussian_mixture(1, 30, 6, 2, 1.0)), ValidationError);
    ck.parameters.pop_back();
    EXPECT_THROW(extract_features(s, ck, ds), ValidationError);
}

TEST(Extract, StableAcrossRepeatsAndThreadCounts)
{
    const auto ds = gen_gaussian_mixture(2, 3000, 8, 3, 2.0);
    const auto s = spec_of(ModelKind::mlp_classifier, {16, 12}, 8, 3);
    Rng rng(3);
    Checkpoint ck;
    ck.parameters = Network(s).init(rng);
    const auto hash = [&] { return fnv1a_hex(encode_fmat(extract_features(s, ck, ds).data, json::object())); };
    const std::string one = hash();
    EXPECT_EQ(hash(), one);
    setenv("SUBSPECTRA_THREADS", "1", 1);
    const std::string serial = hash();
    setenv("SUBSPECTRA_THREADS", "4", 1);
    const std::string four = hash();
    unsetenv("SUBSPECTRA_THREADS");
    EXPECT_EQ(serial, one);
    EXPECT_EQ(four, one);
}

TEST(Accuracy, ZeroFinalLayerPredictsClassZero)
{
    const auto ds = gen_gaussian_mixture(1, 400, 6, 4, 3.0);
    const auto s = spec_of(ModelKind::mlp_classifier, {8}, 6, 4);
    const Network net(s);
    Rng rng(1);
    Checkpoint ck;
    ck.parameters = net.init(rng);
    const auto & last = net.layers().back();
    std::fill_n(ck.parameters.begin() + static_cast<std::ptrdiff_t>(last.w), last.in * last.out, 0.0);
    EXPECT_DOUBLE_EQ(evaluate_accuracy(s, ck, ds), 0.25);
}

TEST(Accuracy, PermutationInvariantAndClassifierOnly)
{
    auto ds = gen_gaussian_mixture(1, 300, 6, 3, 2.0);
    const auto s = spec_of(ModelKind::mlp_classifier, {8}, 6, 3);
    Rng rng(2);
    Checkpoint ck;
    ck.parameters = Network(s).init(rng);
    const double a = evaluate_accuracy(s, ck, ds);
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    auto shuffled = ds;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j)
            shuffled.X(i, j) = ds.X(perm[i], j);
        (*shuffled.labels)[i] = (*ds.labels)[perm[i]];
    }
    EXPECT_DOUBLE_EQ(evaluate_accuracy(s, ck, shuffled), a);

    const auto ae = spec_of(ModelKind::autoencoder, {4}, 6);
    Checkpoint ack;
    ack.parameters.assign(Network(ae).parameter_count(), 0.0);
    EXPECT_THROW(evaluate_accuracy(ae, ack, ds), ValidationError);
}

TEST(ToyRunProperties, PVectorEntriesNotConstant)
{
    const auto ds = gen_gaussian_mixture(1, 300, 8, 3, 3.0);
    TrainConfig c;
    c.epochs = 3;
    c.per_iteration_in_epoch0 = false;
    for (auto kind : {ModelKind::mlp_classifier, ModelKind::autoencoder, ModelKind::contrastive}) {
        const auto run = train(ds, spec_of(kind, {16, 8}, 0), c);
        const auto p = pvector(extract_features(run.spec, run.well_trained(), ds));
        const double mean = std::accumulate(p.values.begin(), p.values.end(), 0.0) / 300.0;
        double var = 0;
        for (double v : p.values)
            var += (v - mean) * (v - mean);
        EXPECT_GT(var, 0.0) << to_string(kind);
    }
}
