#ifndef CELLCONTRAST_PIPELINE_HPP
#define CELLCONTRAST_PIPELINE_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "config.hpp"
#include "evalmoa.hpp"

namespace cellcontrast::pipeline {

/// synth: writes the synthetic cell block and manifest.
void run_synth(const RunConfig& config, std::ostream& log);

/// train: writes the checkpoint and the loss history. epochs = 0 saves the initialization.
void run_train(const RunConfig& config, std::ostream& log);

/// embed: writes encoder representations h of every cell; the projection head is never run.
void run_embed(const RunConfig& config, std::ostream& log);

/// aggregate: writes treatment and control profiles.
void run_aggregate(const RunConfig& config, std::ostream& log);

/// postprocess: writes profiles transformed by the configured mode.
void run_postprocess(const RunConfig& config, std::ostream& log);

/// evaluate: writes the JSON report and prints the table to `log`.
evalmoa::EvalReport run_evaluate(const RunConfig& config, std::ostream& log);

/// Stage names in pipeline order.
const std::vector<std::string>& stage_names();

/// Runs one stage by name; throws `ConfigError` for an unknown name.
void run_stage(std::string_view stage, const RunConfig& config, std::ostream& log);

/// Every stage in order.
evalmoa::EvalReport run_pipeline(const RunConfig& config, std::ostream& log);

}

#endif
