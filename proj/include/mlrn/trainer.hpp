#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mlrn/augment.hpp"
#include "mlrn/checkpoint.hpp"
#include "mlrn/cifar.hpp"
#include "mlrn/config.hpp"
#include "mlrn/model.hpp"
#include "mlrn/optim.hpp"

namespace mlrn {

// lr0 * decay^floor(epoch / step): 0.01 -> 0.001 at epoch 100 and so on.
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw Error("lr_schedule: epoch must be >= 0");
    return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_step_epochs);
}

struct MetricsRow {
    int epoch = 0;
    double lr = 0, train_loss = 0, train_acc = 0, test_loss = 0, test_acc = 0, wall_seconds = 0;
};

inline std::string metrics_header() {
    return "epoch,lr,train_loss,train_acc,test_loss,test_acc,wall_seconds";
}

inline std::string format_metrics_row(const MetricsRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.8g,%.6f,%.6f,%.6f,%.6f,%.3f", r.epoch, r.lr, r.train_loss,
                  r.train_acc, r.test_loss, r.test_acc, r.wall_seconds);
    return buf;
}

// Ties in the argmax resolve to the lowest class index.
template <typename T>
int argmax_row(const T* row, int m) {
    int best = 0;
    for (int i = 1; i < m; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

struct EvalResult {
    double loss = 0, accuracy = 0;
};

// BN in eval mode, no augmentation; top-1 accuracy.
template <typename T>
EvalResult evaluate(Model<T>& model, const Dataset& ds, int batch_size, bool apply_normalize,
                    const std::array<float, 3>& mean, const std::array<float, 3>& stddev) {
    Rng unused(0);
    BatchStream<T> stream(ds, batch_size, unused, /*shuffle=*/false, /*augment=*/false,
                          apply_normalize, mean, stddev);
    Batch<T> batch;
    double loss_sum = 0;
    std::int64_t correct = 0, total = 0;
    const int m = ds.class_count();
    while (stream.next(batch)) {
        const int n = batch.images.dim(0);
        auto logits = model.forward(batch.images, BnMode::eval);
        auto loss = softmax_cross_entropy(logits, batch.labels);
        loss_sum += static_cast<double>(loss.at(0)) * n;
        for (int i = 0; i < n; ++i)
            if (argmax_row(logits.data() + static_cast<std::int64_t>(i) * m, m) == batch.labels[i])
                ++correct;
        total += n;
    }
    if (total == 0) throw Error("evaluate: empty dataset");
    return {loss_sum / static_cast<double>(total),
            static_cast<double>(correct) / static_cast<double>(total)};
}

template <typename T>
EvalResult evaluate(Model<T>& model, const Dataset& ds, int batch_size = 100,
                    bool apply_normalize = true) {
    return evaluate(model, ds, batch_size, apply_normalize, ds.mean, ds.stddev);
}

namespace detail {

struct LoadedData {
    Dataset train, test;
};

inline std::string resolve_data_path(const TrainConfig& cfg) {
    if (!cfg.data_path.empty()) return cfg.data_path;
    if (const char* env = std::getenv("MLRN_DATA_ROOT")) return env;
    throw Error("no dataset path: set data_path or $MLRN_DATA_ROOT");
}

inline LoadedData load_for_config(const TrainConfig& cfg) {
    const std::string path = resolve_data_path(cfg);
    const CifarVariant variant = cfg.data == "cifar10" ? CifarVariant::cifar10 : CifarVariant::cifar100;
    LoadedData d{load_cifar(path, variant, Split::train), load_cifar(path, variant, Split::test)};
    // evaluation uses the train split statistics
    d.test.mean = d.train.mean;
    d.test.stddev = d.train.stddev;
    if (cfg.train_subset > 0) d.train = d.train.subset(static_cast<std::size_t>(cfg.train_subset));
    if (cfg.test_subset > 0) d.test = d.test.subset(static_cast<std::size_t>(cfg.test_subset));
    return d;
}

}  // namespace detail

// One full training run: per epoch a shuffled, augmented pass with SGD +
// momentum under the step schedule, periodic evaluation in BN eval mode,
// metrics appended as whole rows, checkpoints at the best test accuracy and
// at the end. Deterministic for a fixed seed, precision and thread count.
template <typename T>
MetricsRow train_with_data(const TrainConfig& cfg, const Dataset& train_ds, const Dataset& test_ds,
                           const std::string& resume_path = "") {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    ArchSpec arch = cfg.arch;
    arch.classes = train_ds.class_count();
    NetworkGraph graph = build_arch(arch);
    if (graph.class_count != train_ds.class_count())
        throw Error("model '" + graph.name + "' has " + std::to_string(graph.class_count) +
                    " classes but dataset has " + std::to_string(train_ds.class_count()));

    Model<T> model = Model<T>(std::move(graph), cfg.seed);
    std::vector<std::vector<T>> velocities(model.parameters().size());
    Rng data_rng(mix_seed(cfg.seed, 1));
    int start_epoch = 0;
    if (!resume_path.empty()) {
        TrainState<T> st = load_checkpoint<T>(resume_path);
        model = std::move(st.model);
        velocities = std::move(st.velocities);
        start_epoch = static_cast<int>(st.epoch);
        data_rng.restore(st.rng_state);
        if (model.graph().class_count != train_ds.class_count())
            throw Error("checkpoint classes do not match dataset");
    }

    const std::string metrics_path = cfg.out_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path, start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("cannot write metrics '" + metrics_path + "'");
    if (start_epoch == 0) metrics << metrics_header() << "\n";

    const auto t0 = std::chrono::steady_clock::now();
    const int eval_every = cfg.resolved_eval_every();
    double best_acc = -1.0;
    MetricsRow last_row;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        BatchStream<T> stream(train_ds, cfg.batch_size, data_rng, /*shuffle=*/true, cfg.augment,
                              cfg.normalize, train_ds.mean, train_ds.stddev);
        Batch<T> batch;
        double loss_sum = 0;
        std::int64_t correct = 0, total = 0;
        int batch_index = 0;
        const int m = train_ds.class_count();
        while (stream.next(batch)) {
            Tape<T> tape;
            auto logits = model.forward(batch.images, BnMode::train, &tape);
            auto loss = softmax_cross_entropy(logits, batch.labels, &tape);
            const double loss_value = static_cast<double>(loss.at(0));
            if (!std::isfinite(loss_value))
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index) + " lr " + std::to_string(lr));
            backward(loss, tape);
            auto params = model.parameters();
            sgd_momentum_step(params, velocities, static_cast<T>(lr), static_cast<T>(cfg.momentum),
                              static_cast<T>(cfg.weight_decay));
            const int n = batch.images.dim(0);
            loss_sum += loss_value * n;
            for (int i = 0; i < n; ++i)
                if (argmax_row(logits.data() + static_cast<std::int64_t>(i) * m, m) == batch.labels[i])
                    ++correct;
            total += n;
            ++batch_index;
        }

        const bool last = epoch + 1 == cfg.epochs;
        if ((epoch + 1) % eval_every == 0 || last) {
            const int eval_batch = std::max(cfg.batch_size, 100);
            const EvalResult ev =
                evaluate(model, test_ds, eval_batch, cfg.normalize, train_ds.mean, train_ds.stddev);
            MetricsRow row;
            row.epoch = epoch;
            row.lr = lr;
            row.train_loss = loss_sum / static_cast<double>(total);
            row.train_acc = static_cast<double>(correct) / static_cast<double>(total);
            row.test_loss = ev.loss;
            row.test_acc = ev.accuracy;
            row.wall_seconds =
                cfg.log_wall_time
                    ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                    : 0.0;
            metrics << format_metrics_row(row) << "\n";
            metrics.flush();
            if (!metrics) throw IoError("failed writing metrics '" + metrics_path + "'");
            last_row = row;
            if (ev.accuracy > best_acc) {  // ties keep the earliest epoch
                best_acc = ev.accuracy;
                save_checkpoint(model, velocities, static_cast<std::uint64_t>(epoch) + 1,
                                data_rng.state(), cfg.out_dir + "/best.ckpt");
            }
        }
    }
    save_checkpoint(model, velocities, static_cast<std::uint64_t>(cfg.epochs), data_rng.state(),
                    cfg.out_dir + "/last.ckpt");
    return last_row;
}

inline MetricsRow train(const TrainConfig& cfg, const std::string& resume_path = "") {
    cfg.validate();
    auto data = detail::load_for_config(cfg);
    if (cfg.precision == "double")
        return train_with_data<double>(cfg, data.train, data.test, resume_path);
    return train_with_data<float>(cfg, data.train, data.test, resume_path);
}

}  // namespace mlrn
