// Writes a deterministic synthetic dataset in the CIFAR binary layout, for
// running the training pipeline on machines without the real archives.

#include <cstdio>

#include <CLI11.hpp>

#include "mlrn/synth_data.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic CIFAR-format dataset generator"};
    std::string out = "synth_data";
    std::string variant = "cifar10";
    std::uint64_t seed = 1;
    app.add_option("--out", out, "output root directory")->capture_default_str();
    app.add_option("--data", variant, "cifar10 | cifar100")
        ->check(CLI::IsMember({"cifar10", "cifar100"}))
        ->capture_default_str();
    app.add_option("--seed", seed, "generator seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const auto v = variant == "cifar10" ? mlrn::CifarVariant::cifar10 : mlrn::CifarVariant::cifar100;
        const auto dir = mlrn::ensure_synth_dataset(out, v, seed);
        std::printf("%s dataset ready in %s\n", variant.c_str(), dir.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
