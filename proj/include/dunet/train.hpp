#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dunet/data.hpp"
#include "dunet/metrics.hpp"
#include "dunet/net.hpp"

namespace dunet {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 10;
    double lr = 1e-4;
    double rms_decay = 0.99;
    double rms_eps = 1e-8;
    std::uint64_t seed = 0;
    int eval_every = 1; // epochs between validation passes
    double threshold = 0.5;

    void validate(std::size_t train_size) const;
};

struct TrainLogRow {
    int epoch = 0;
    std::int64_t step = 0;
    double mean_loss = 0.0;
    bool has_val = false;
    double val_miou = 0.0;
    bool has_ksums = false;
    std::array<double, 3> kernel_sums{};
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    double best_val_miou = 0.0; // maxIoU of the run
    std::int64_t steps = 0;
    std::vector<Tensor<float>> best_params; // snapshot at the best validation pass
};

// Epoch loop with seed-deterministic shuffling; the last incomplete batch of
// each epoch is dropped. Losses are averaged over the batch before backward, so
// RMSprop sees mean gradients. dvsfn side inputs are precomputed once per set.
TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg);

void restore_params(Model& model, const std::vector<Tensor<float>>& params);

void write_train_log(const TrainResult& result, const TrainConfig& cfg, const DUNetConfig& mcfg,
                     std::int64_t param_count, const std::filesystem::path& path);

// Binary little-endian checkpoint: magic, format version, config, parameter
// tensors in build order (rank/dims-prefixed 32-bit reals), step counter, seed.
void save_checkpoint(const std::filesystem::path& path, Model& model, std::uint64_t step,
                     std::uint64_t seed);
Model load_checkpoint(const std::filesystem::path& path, std::uint64_t* step = nullptr,
                      std::uint64_t* seed = nullptr);

} // namespace dunet
