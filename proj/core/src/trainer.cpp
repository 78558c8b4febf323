#include "cellcontrast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cellcontrast/contrastive.hpp"
#include "cellcontrast/errors.hpp"
#include "cellcontrast/nd/ops.hpp"
#include "cellcontrast/parallel.hpp"

namespace cellcontrast::contrastive {

void ContrastiveConfig::validate() const {
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be at least 1");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("temperature must be positive");
    }
    if (!(optimizer.learning_rate > 0.0) || optimizer.weight_decay < 0.0) {
        throw std::invalid_argument("learning rate must be positive and weight decay non-negative");
    }
    augment.validate();
}

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Stream stream(derive_key({seed, 0x73687566ULL, epoch}));
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(stream.below(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

}

template<typename T>
std::pair<double, std::vector<nd::Tensor<T>>> loss_and_gradients(const model::ModelConfig& model_config,
                                                                 const model::ModelParams<T>& params,
                                                                 std::span<const CellImage> views_i,
                                                                 std::span<const CellImage> views_j,
                                                                 double temperature) {
    if (views_i.size() != views_j.size() || views_i.empty()) {
        throw std::invalid_argument("training step needs the same nonzero number of views on both sides");
    }
    std::vector<CellImage> all(views_i.begin(), views_i.end());
    all.insert(all.end(), views_j.begin(), views_j.end());

    nd::Tape<T> tape;
    model::BoundParams<T> bound(tape, params, true);
    auto x = tape.constant(model::stack_images<T>(all));
    auto h = model::encode(model_config.encoder, bound, x);
    auto z = model::project(model_config.head, bound, h);
    auto loss = ntxent_loss(z, temperature);
    const double value = static_cast<double>(loss.value().item());
    if (!std::isfinite(value)) {
        throw NumericError("training loss became non-finite");
    }
    auto grads = tape.backward(loss);
    std::vector<nd::Tensor<T>> out;
    out.reserve(bound.vars().size());
    for (const auto& v : bound.vars()) {
        out.push_back(grads[v]);
    }
    return {value, std::move(out)};
}

template<typename T>
TrainResult<T> train(std::span<const CellImage> cells, const model::ModelConfig& model_config,
                     const ContrastiveConfig& config, std::uint64_t seed, model::ModelParams<T> initial,
                     const std::function<void(const LossRecord&)>& on_step) {
    config.validate();
    if (cells.empty()) {
        throw std::invalid_argument("train: empty dataset");
    }
    TrainResult<T> result{std::move(initial), {}, {}};
    const auto n = cells.size();
    const auto batch = std::min(config.batch_size, n);
    if (n < config.batch_size) {
        std::ostringstream msg;
        msg << "dataset has " << n << " cells, fewer than batch size " << config.batch_size << "; training on batches of " << n;
        result.warnings.push_back(msg.str());
    }

    auto state = nd::make_adam_state<T>(result.params.tensors(), config.optimizer);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = shuffled_order(n, seed, epoch);
        for (std::size_t start = 0; start < n; start += batch) {
            if (config.max_steps != 0 && step >= config.max_steps) {
                return result;
            }
            const auto count = std::min(batch, n - start);
            std::vector<CellImage> views_i(count), views_j(count);
            parallel_for(count, [&](std::size_t k) {
                const auto cell = order[start + k];
                auto streams = augment::view_streams(seed, cell, epoch);
                auto pair = augment::make_view_pair(cells[cell], config.augment, streams[0], streams[1], cell);
                views_i[k] = std::move(pair.view_i);
                views_j[k] = std::move(pair.view_j);
            });

            auto [loss, grads] = loss_and_gradients<T>(model_config, result.params, views_i, views_j, config.temperature);
            nd::adam_step<T>(result.params.tensors(), grads, state);

            LossRecord rec{step, epoch, loss};
            result.history.push_back(rec);
            if (on_step) {
                on_step(rec);
            }
            ++step;
        }
    }
    return result;
}

void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open loss history for writing: " + path.string());
    }
    out << "step,epoch,loss\n";
    out << std::setprecision(17);
    for (const auto& r : history) {
        out << r.step << ',' << r.epoch << ',' << r.loss << '\n';
    }
    if (!out) {
        throw IoError("failed writing loss history: " + path.string());
    }
}

std::vector<LossRecord> read_loss_history(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open loss history: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "step,epoch,loss") {
        throw IoError("loss history: expected header step,epoch,loss");
    }
    std::vector<LossRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream fields(line);
        LossRecord r;
        char c1 = 0, c2 = 0;
        if (!(fields >> r.step >> c1 >> r.epoch >> c2 >> r.loss) || c1 != ',' || c2 != ',') {
            throw IoError("loss history: malformed line '" + line + "'");
        }
        out.push_back(r);
    }
    return out;
}

template TrainResult<float> train(std::span<const CellImage>, const model::ModelConfig&, const ContrastiveConfig&, std::uint64_t,
                                  model::ModelParams<float>, const std::function<void(const LossRecord&)>&);
template TrainResult<double> train(std::span<const CellImage>, const model::ModelConfig&, const ContrastiveConfig&, std::uint64_t,
                                   model::ModelParams<double>, const std::function<void(const LossRecord&)>&);
template std::pair<double, std::vector<nd::Tensor<float>>> loss_and_gradients(const model::ModelConfig&, const model::ModelParams<float>&,
                                                                              std::span<const CellImage>, std::span<const CellImage>, double);
template std::pair<double, std::vector<nd::Tensor<double>>> loss_and_gradients(const model::ModelConfig&, const model::ModelParams<double>&,
                                                                               std::span<const CellImage>, std::span<const CellImage>, double);

}
