// Command-line front end: model summaries, the multi-level graph transform,
// training, evaluation, gradient checking and metric plots.
//
// Exit codes: 0 success, 1 usage, 2 I/O error, 3 invalid input or graph,
// 4 training aborted.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mlrn/checkpoint.hpp"
#include "mlrn/config.hpp"
#include "mlrn/gradcheck.hpp"
#include "mlrn/graph_json.hpp"
#include "mlrn/shape_infer.hpp"
#include "mlrn/svg_plot.hpp"
#include "mlrn/trainer.hpp"
#include "mlrn/transform.hpp"

namespace {

struct ArchFlags {
    mlrn::ArchSpec spec;
    std::string combine = "add";
    std::string pool = "channel_mean";

    void attach(CLI::App* cmd) {
        cmd->add_option("--arch", spec.name, "resnetN | newnet | wrnD-K")->capture_default_str();
        cmd->add_option("--spec", spec.spec_path, "graph spec JSON (overrides --arch)");
        cmd->add_option("--classes", spec.classes, "class count")->capture_default_str();
        cmd->add_option("--width", spec.width_mult, "width multiplier")->capture_default_str();
        cmd->add_option("--combine", combine, "add | max")
            ->check(CLI::IsMember({"add", "max"}))
            ->capture_default_str();
        cmd->add_flag("--transform", spec.transform, "apply the multi-level transform");
        cmd->add_option("--pool", pool, "channel_mean | per_channel_gap")
            ->check(CLI::IsMember({"channel_mean", "per_channel_gap"}))
            ->capture_default_str();
    }

    mlrn::ArchSpec resolve() {
        if (!spec.spec_path.empty()) spec.name = "spec";
        spec.combine = combine == "max" ? mlrn::CombineMode::max : mlrn::CombineMode::add;
        spec.pool_mode =
            pool == "per_channel_gap" ? mlrn::PoolMode::per_channel_gap : mlrn::PoolMode::channel_mean;
        return spec;
    }
};

std::string shape_or_dash(const std::map<int, mlrn::Shape>& shapes, int id) {
    auto it = shapes.find(id);
    if (it == shapes.end()) return "-";
    std::string s;
    for (std::size_t i = 0; i < it->second.size(); ++i)
        s += (i ? "x" : "") + std::to_string(it->second[i]);
    return s;
}

int cmd_summary(ArchFlags& flags) {
    const auto g = mlrn::build_arch(flags.resolve());
    const auto& in_attrs = std::get<mlrn::InputAttrs>(g.node(g.input_id()).attrs);
    const auto shapes = mlrn::infer_shapes(g, {1, in_attrs.channels, in_attrs.height, in_attrs.width});
    const auto pc = mlrn::count_params(g);

    std::printf("model: %s (classes=%d)\n", g.name.c_str(), g.class_count);
    std::printf("%4s  %-16s %-14s %12s\n", "id", "kind", "output", "params");
    std::map<int, std::int64_t> per_node(pc.per_node.begin(), pc.per_node.end());
    for (int id : g.topo_order()) {
        const auto& n = g.node(id);
        const auto it = per_node.find(id);
        std::printf("%4d  %-16s %-14s %12s\n", id, mlrn::node_kind_name(n.kind),
                    shape_or_dash(shapes, id).c_str(),
                    it == per_node.end() ? "-" : std::to_string(it->second).c_str());
    }
    const int fc_id = g.in_edges(g.output_id())[0].src;
    std::printf("learnable params: %lld\n", static_cast<long long>(pc.learnable));
    std::printf("bn running stats: %lld\n", static_cast<long long>(pc.non_learnable));
    if (g.node(fc_id).kind == mlrn::NodeKind::linear)
        std::printf("classifier input width: %d\n",
                    std::get<mlrn::LinearAttrs>(g.node(fc_id).attrs).in_features);
    return 0;
}

int cmd_transform(const std::string& in_path, const std::string& out_path, const std::string& pool) {
    const auto g = mlrn::load_graph_file(in_path);
    const auto mode =
        pool == "per_channel_gap" ? mlrn::PoolMode::per_channel_gap : mlrn::PoolMode::channel_mean;
    const auto t = mlrn::apply_multilevel_transform(g, mode);
    mlrn::save_graph_file(t, out_path);
    std::printf("%s -> %s (%zu taps, classifier width %d)\n", g.name.c_str(), t.name.c_str(),
                mlrn::find_tap_points(g).size(),
                std::get<mlrn::LinearAttrs>(t.node(t.in_edges(t.output_id())[0].src).attrs).in_features);
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& resume) {
    mlrn::TrainConfig cfg =
        config_path.empty() ? mlrn::TrainConfig{} : mlrn::load_config_file(config_path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw mlrn::ParseError("--set expects key=value, got '" + kv + "'");
        mlrn::apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    const auto row = mlrn::train(cfg, resume);
    std::printf("done: epoch %d train_acc %.4f test_acc %.4f (metrics in %s/metrics.csv)\n", row.epoch,
                row.train_acc, row.test_acc, cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& path,
             const std::string& precision, int batch, int subset) {
    mlrn::TrainConfig probe;
    probe.data = data;
    probe.data_path = path;
    const auto dir = mlrn::detail::resolve_data_path(probe);
    const auto variant = data == "cifar10" ? mlrn::CifarVariant::cifar10 : mlrn::CifarVariant::cifar100;
    auto train_ds = mlrn::load_cifar(dir, variant, mlrn::Split::train);
    auto test_ds = mlrn::load_cifar(dir, variant, mlrn::Split::test);
    test_ds.mean = train_ds.mean;
    test_ds.stddev = train_ds.stddev;
    if (subset > 0) test_ds = test_ds.subset(static_cast<std::size_t>(subset));

    mlrn::EvalResult ev;
    if (precision == "double") {
        auto st = mlrn::load_checkpoint<double>(ckpt);
        ev = mlrn::evaluate(st.model, test_ds, batch);
    } else {
        auto st = mlrn::load_checkpoint<float>(ckpt);
        ev = mlrn::evaluate(st.model, test_ds, batch);
    }
    std::printf("loss %.6f accuracy %.4f\n", ev.loss, ev.accuracy);
    return 0;
}

int cmd_gradcheck(ArchFlags& flags, double tolerance, std::uint64_t seed) {
    const auto report = mlrn::gradcheck(flags.resolve(), tolerance, seed);
    std::printf("gradcheck %s: %lld values, max relative error %.3g (tolerance %.3g) -> %s\n",
                report.arch.c_str(), static_cast<long long>(report.values_checked),
                report.max_rel_err, report.tolerance, report.pass ? "pass" : "FAIL");
    return report.pass ? 0 : 3;
}

int cmd_plot(const std::string& metrics_path, const std::string& out_path) {
    const auto table = mlrn::read_metrics_csv(metrics_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw mlrn::IoError("cannot write '" + out_path + "'");
    out << mlrn::metrics_to_svg(table);
    if (!out) throw mlrn::IoError("failed writing '" + out_path + "'");
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-level residual network toolkit"};
    app.require_subcommand(1);

    auto* summary = app.add_subcommand("summary", "per-node shapes and parameter counts");
    ArchFlags summary_flags;
    summary_flags.attach(summary);

    auto* transform = app.add_subcommand("transform", "rewrite a graph spec with multi-level taps");
    std::string tf_in, tf_out, tf_pool = "channel_mean";
    transform->add_option("--in", tf_in, "input graph spec")->required();
    transform->add_option("--out", tf_out, "output graph spec")->required();
    transform->add_option("--pool", tf_pool, "channel_mean | per_channel_gap")
        ->check(CLI::IsMember({"channel_mean", "per_channel_gap"}))
        ->capture_default_str();

    auto* train = app.add_subcommand("train", "run a training experiment");
    std::string train_config, train_resume;
    std::vector<std::string> train_sets;
    train->add_option("--config", train_config, "key=value config file");
    train->add_option("--set", train_sets, "override a config key (key=value, repeatable)");
    train->add_option("--resume", train_resume, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string ev_ckpt, ev_data = "cifar10", ev_path, ev_precision = "float";
    int ev_batch = 100, ev_subset = 0;
    eval->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    eval->add_option("--data", ev_data, "cifar10 | cifar100")
        ->check(CLI::IsMember({"cifar10", "cifar100"}))
        ->capture_default_str();
    eval->add_option("--path", ev_path, "dataset directory (default $MLRN_DATA_ROOT)");
    eval->add_option("--precision", ev_precision, "float | double")
        ->check(CLI::IsMember({"float", "double"}))
        ->capture_default_str();
    eval->add_option("--batch", ev_batch, "evaluation batch size")->capture_default_str();
    eval->add_option("--subset", ev_subset, "evaluate only the first k test images");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    ArchFlags gc_flags;
    gc_flags.attach(gradcheck);
    double gc_tolerance = 1e-4;
    std::uint64_t gc_seed = 1;
    gradcheck->add_option("--tolerance", gc_tolerance, "max relative error")->capture_default_str();
    gradcheck->add_option("--seed", gc_seed, "instance seed")->capture_default_str();

    auto* plot = app.add_subcommand("plot", "render metrics CSV as SVG curves");
    std::string plot_metrics, plot_out = "curves.svg";
    plot->add_option("--metrics", plot_metrics, "metrics CSV")->required();
    plot->add_option("--out", plot_out, "output SVG")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (summary->parsed()) return cmd_summary(summary_flags);
        if (transform->parsed()) return cmd_transform(tf_in, tf_out, tf_pool);
        if (train->parsed()) return cmd_train(train_config, train_sets, train_resume);
        if (eval->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_path, ev_precision, ev_batch, ev_subset);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_flags, gc_tolerance, gc_seed);
        if (plot->parsed()) return cmd_plot(plot_metrics, plot_out);
    } catch (const mlrn::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const mlrn::TrainError& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        return 4;
    } catch (const mlrn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
