#include "cellcontrast/pipeline.hpp"

#include <fstream>
#include <ostream>

#include "cellcontrast/checkpoint.hpp"
#include "cellcontrast/dataio.hpp"
#include "cellcontrast/errors.hpp"
#include "cellcontrast/model.hpp"
#include "cellcontrast/profiles.hpp"
#include "cellcontrast/trainer.hpp"

namespace cellcontrast::pipeline {

namespace {

void require_input(const std::filesystem::path& path, std::string_view producer) {
    if (!std::filesystem::exists(path)) {
        throw IoError("missing input " + path.string() + " (produced by the " + std::string(producer) + " stage)");
    }
}

struct Dataset {
    dataio::CellBlock cells;
    dataio::Manifest manifest;
};

Dataset load_dataset(const RunConfig& config) {
    require_input(config.paths.cells, "synth");
    require_input(config.paths.manifest, "synth");
    Dataset d{dataio::read_cell_block(config.paths.cells), dataio::read_manifest(config.paths.manifest)};
    if (d.cells.count != d.manifest.rows.size()) {
        throw IoError("cell block holds " + std::to_string(d.cells.count) + " images but the manifest lists " +
            std::to_string(d.manifest.rows.size()) + " cells");
    }
    return d;
}

template<typename T>
void train_impl(const RunConfig& config, std::ostream& log) {
    const auto data = load_dataset(config);
    const auto cells = data.cells.images();
    const auto model_config = config.model_config();
    auto initial = model::init_params<T>(model_config, config.seed);
    log << "train: " << cells.size() << " cells, " << initial.scalar_count() << " parameters\n";
    auto result = contrastive::train<T>(cells, model_config, config.train, config.seed, std::move(initial),
                                        [&log](const contrastive::LossRecord& r) {
                                            if (r.step % 25 == 0) {
                                                log << "  step " << r.step << " epoch " << r.epoch << " loss " << r.loss << '\n';
                                            }
                                        });
    for (const auto& w : result.warnings) {
        log << "warning: " << w << '\n';
    }
    model::save_checkpoint(config.paths.checkpoint, result.params);
    contrastive::write_loss_history(config.paths.loss_history, result.history);
    log << "train: " << result.history.size() << " steps, checkpoint " << config.paths.checkpoint.string() << '\n';
}

template<typename T>
void embed_impl(const RunConfig& config, std::ostream& log) {
    const auto data = load_dataset(config);
    require_input(config.paths.checkpoint, "train");
    const auto model_config = config.model_config();
    const auto params = model::load_checkpoint<T>(config.paths.checkpoint);
    model::check_compatible(params, model_config);

    profiles::EmbeddingMatrix m;
    m.rows = data.cells.count;
    m.cols = model_config.encoder.representation_dim();
    m.values.reserve(m.rows * m.cols);
    for (const auto& r : data.manifest.rows) {
        m.cell_ids.push_back(r.cell_id);
    }
    const auto images = data.cells.images();
    for (std::size_t start = 0; start < images.size(); start += config.embed_batch_size) {
        const auto count = std::min(config.embed_batch_size, images.size() - start);
        const auto batch = model::stack_images<T>(std::span(images).subspan(start, count));
        const auto h = model::encode(model_config, params, batch);
        for (auto v : h.data()) {
            m.values.push_back(static_cast<float>(v));
        }
    }
    profiles::write_embeddings(config.paths.embeddings, m);
    log << "embed: " << m.rows << " x " << m.cols << " representations -> " << config.paths.embeddings.string() << '\n';
}

}

void run_synth(const RunConfig& config, std::ostream& log) {
    auto spec = config.synth;
    spec.seed = config.seed;
    const auto data = dataio::generate_synthetic(spec);
    dataio::write_cell_block(config.paths.cells, data.cells);
    dataio::write_manifest(config.paths.manifest, data.manifest);
    log << "synth: " << data.cells.count << " cells -> " << config.paths.cells.string() << '\n';
}

void run_train(const RunConfig& config, std::ostream& log) {
    config.precision == nd::Precision::f32 ? train_impl<float>(config, log) : train_impl<double>(config, log);
}

void run_embed(const RunConfig& config, std::ostream& log) {
    config.precision == nd::Precision::f32 ? embed_impl<float>(config, log) : embed_impl<double>(config, log);
}

void run_aggregate(const RunConfig& config, std::ostream& log) {
    require_input(config.paths.embeddings, "embed");
    require_input(config.paths.manifest, "synth");
    const auto embeddings = profiles::read_embeddings(config.paths.embeddings);
    const auto manifest = dataio::read_manifest(config.paths.manifest);
    const auto set = profiles::aggregate(embeddings, manifest, config.aggregation);
    profiles::write_profile_set(config.paths.profiles, set);
    log << "aggregate: " << set.treatments.size() << " treatment and " << set.controls.size() << " control profiles -> "
        << config.paths.profiles.string() << '\n';
}

void run_postprocess(const RunConfig& config, std::ostream& log) {
    require_input(config.paths.profiles, "aggregate");
    const auto set = profiles::read_profile_set(config.paths.profiles);
    std::vector<std::string> warnings;
    const auto out = profiles::postprocess(set, config.postprocess, config.eps_rel, &warnings);
    for (const auto& w : warnings) {
        log << "warning: " << w << '\n';
    }
    profiles::write_profile_set(config.paths.postprocessed, out);
    log << "postprocess: mode " << profiles::to_string(config.postprocess) << " -> " << config.paths.postprocessed.string() << '\n';
}

evalmoa::EvalReport run_evaluate(const RunConfig& config, std::ostream& log) {
    require_input(config.paths.postprocessed, "postprocess");
    const auto set = profiles::read_profile_set(config.paths.postprocessed);
    const auto report = evalmoa::evaluate(set.treatments);
    std::ofstream out(config.paths.report);
    if (!out) {
        throw IoError("cannot open report for writing: " + config.paths.report.string());
    }
    out << evalmoa::to_json(report);
    if (!out) {
        throw IoError("failed writing report: " + config.paths.report.string());
    }
    for (const auto& w : report.warnings) {
        log << "warning: " << w << '\n';
    }
    log << evalmoa::format_table(report);
    return report;
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"synth", "train", "embed", "aggregate", "postprocess", "evaluate"};
    return names;
}

void run_stage(std::string_view stage, const RunConfig& config, std::ostream& log) {
    if (stage == "synth") {
        run_synth(config, log);
    } else if (stage == "train") {
        run_train(config, log);
    } else if (stage == "embed") {
        run_embed(config, log);
    } else if (stage == "aggregate") {
        run_aggregate(config, log);
    } else if (stage == "postprocess") {
        run_postprocess(config, log);
    } else if (stage == "evaluate") {
        run_evaluate(config, log);
    } else {
        throw ConfigError("unknown stage '" + std::string(stage) + "'");
    }
}

evalmoa::EvalReport run_pipeline(const RunConfig& config, std::ostream& log) {
    for (const auto& stage : stage_names()) {
        if (stage != "evaluate") {
            run_stage(stage, config, log);
        }
    }
    return run_evaluate(config, log);
}

}
