#include "comfed/error.hpp"
#include "comfed/experiment.hpp"

namespace comfed {
namespace {

ClientGroupConfig group(std::size_t count, std::vector<std::string> modalities, std::size_t encoder_width,
                        std::size_t tap_dim) {
    ClientGroupConfig g;
    g.count = count;
    g.modalities = std::move(modalities);
    for (const auto& m : g.modalities) g.encoder_widths[m] = {encoder_width};
    g.trunk_widths = {tap_dim};
    return g;
}

// 14 wearable-style clients: 3 ACC-only, 3 GYR-only, 8 with both. Few samples
// per client, half held out; the noise level sets the input scale and with it
// how strongly the latent pull competes with the task loss.
ExperimentConfig usc_shape() {
    ExperimentConfig cfg;
    cfg.name = "usc_shape";
    cfg.data.num_classes = 12;
    cfg.data.modalities = {{"acc", 24}, {"gyr", 24}};
    cfg.data.noise_std = 4.0;
    cfg.data.samples_per_class = 2;
    cfg.data.skew = 1.0;
    cfg.data.test_fraction = 0.5;
    cfg.clients = {group(3, {"acc"}, 64, 128), group(3, {"gyr"}, 64, 128), group(8, {"acc", "gyr"}, 64, 128)};
    cfg.topology = {TopologyKind::complete, 0.5};
    cfg.train.rounds = 250;
    cfg.train.eta_w = 4e-2;
    cfg.train.eta_p = 1e-3;
    cfg.train.lambda = 0.4;
    cfg.train.projection_steps = 10;
    cfg.train.batch_size = 32;
    cfg.train.latent_dim = 8;
    cfg.train.eval_every = 1;
    cfg.runs = 5;
    cfg.base_seed = 1;
    cfg.thresholds = {0.4, 0.5, 0.58};
    cfg.output_dir = "runs/usc_shape";
    return cfg;
}

// 6 clients: 2 mmWave-only, 2 LiDAR-only, 2 with both; 4 classes.
ExperimentConfig deepsense_shape() {
    ExperimentConfig cfg = usc_shape();
    cfg.name = "deepsense_shape";
    cfg.data.num_classes = 4;
    cfg.data.modalities = {{"mmwave", 16}, {"lidar", 32}};
    cfg.data.samples_per_class = 20;
    cfg.clients = {group(2, {"mmwave"}, 64, 128), group(2, {"lidar"}, 64, 128),
                   group(2, {"mmwave", "lidar"}, 64, 128)};
    cfg.thresholds = {0.5, 0.6, 0.7};
    cfg.output_dir = "runs/deepsense_shape";
    return cfg;
}

ExperimentConfig dim_sweep() {
    ExperimentConfig cfg = usc_shape();
    cfg.name = "dim_sweep";
    cfg.sweep_latent_dims = {4, 8, 16, 32};
    cfg.output_dir = "runs/dim_sweep";
    return cfg;
}

ExperimentConfig minimal() {
    ExperimentConfig cfg;
    cfg.name = "minimal";
    cfg.data.num_classes = 3;
    cfg.data.modalities = {{"acc", 6}, {"gyr", 6}};
    cfg.data.noise_std = 0.5;
    cfg.data.samples_per_class = 10;
    cfg.clients = {group(1, {"acc"}, 16, 16), group(1, {"gyr"}, 16, 12)};
    cfg.topology = {TopologyKind::complete, 0.5};
    cfg.train.rounds = 20;
    cfg.train.batch_size = 8;
    cfg.train.latent_dim = 4;
    cfg.runs = 1;
    cfg.thresholds = {0.5};
    cfg.output_dir = "runs/minimal";
    return cfg;
}

}  // namespace

std::vector<std::string> preset_names() { return {"usc_shape", "deepsense_shape", "dim_sweep", "minimal"}; }

ExperimentConfig make_preset(const std::string& name) {
    if (name == "usc_shape") return usc_shape();
    if (name == "deepsense_shape") return deepsense_shape();
    if (name == "dim_sweep") return dim_sweep();
    if (name == "minimal") return minimal();
    throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace comfed
