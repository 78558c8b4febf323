#ifndef CELLCONTRAST_TRAINER_HPP
#define CELLCONTRAST_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "augment.hpp"
#include "image.hpp"
#include "model.hpp"
#include "nd/adam.hpp"

namespace cellcontrast::contrastive {

struct ContrastiveConfig {
    std::size_t batch_size = 256;
    double temperature = 0.5;
    std::size_t epochs = 1;

    /// Stop after this many optimizer steps; 0 means run every epoch to the end.
    std::size_t max_steps = 0;

    nd::AdamOptions optimizer;
    augment::TransformSpec augment;

    void validate() const;
};

struct LossRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
};

template<typename T>
struct TrainResult {
    model::ModelParams<T> params;
    std::vector<LossRecord> history;
    std::vector<std::string> warnings;
};

/**
 * Contrastive training from `initial` parameters.
 *
 * Each epoch shuffles the cells, cuts them into batches of `batch_size` (the
 * last one may be smaller), draws two views per cell from streams keyed by
 * (seed, cell index, epoch, view), runs encoder and head on all 2N views,
 * and takes one Adam step on the NT-Xent loss. `on_step` sees every step's
 * loss as it happens.
 */
template<typename T>
TrainResult<T> train(std::span<const CellImage> cells, const model::ModelConfig& model_config,
                     const ContrastiveConfig& config, std::uint64_t seed, model::ModelParams<T> initial,
                     const std::function<void(const LossRecord&)>& on_step = {});

/// One training step's loss and parameter gradients, without updating anything.
template<typename T>
std::pair<double, std::vector<nd::Tensor<T>>> loss_and_gradients(const model::ModelConfig& model_config,
                                                                 const model::ModelParams<T>& params,
                                                                 std::span<const CellImage> views_i,
                                                                 std::span<const CellImage> views_j,
                                                                 double temperature);

/// CSV with header `step,epoch,loss`.
void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history);

std::vector<LossRecord> read_loss_history(const std::filesystem::path& path);

}

#endif
