#include "cellcontrast/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cellcontrast/errors.hpp"

namespace cellcontrast {

using nlohmann::json;

model::ModelConfig RunConfig::model_config() const {
    return {model::EncoderConfig::preset(encoder), head};
}

namespace {

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (const auto& s : items) {
        out += (out.empty() ? "" : std::string(sep)) + s;
    }
    return out;
}

template<typename F>
void collect(std::vector<std::string>& errors, const std::string& where, F&& check) {
    try {
        check();
    } catch (const std::exception& e) {
        errors.push_back(where + ": " + e.what());
    }
}

std::vector<std::string> validation_errors(const RunConfig& c) {
    std::vector<std::string> errors;
    collect(errors, "synth", [&] { c.synth.validate(); });
    collect(errors, "train", [&] { c.train.validate(); });
    collect(errors, "model", [&] {
        c.model_config().encoder.validate();
        if (c.head.kind == model::HeadKind::mlp2 && (c.head.hidden == 0 || c.head.output == 0)) {
            throw std::invalid_argument("head.hidden and head.output must be positive");
        }
        if (c.head.kind == model::HeadKind::linear && c.head.output == 0) {
            throw std::invalid_argument("head.output must be positive");
        }
    });
    if (c.embed_batch_size == 0) {
        errors.push_back("embed.batch_size must be positive");
    }
    if (!(c.eps_rel > 0.0)) {
        errors.push_back("profiles.eps_rel must be positive");
    }
    return errors;
}

}

void RunConfig::validate() const {
    const auto errors = validation_errors(*this);
    if (!errors.empty()) {
        throw ConfigError("invalid configuration: " + join(errors, "; "));
    }
}

std::vector<std::string> preset_names() {
    return {"paper-final", "desk"};
}

namespace {

RunConfig preset_config(std::string_view name) {
    RunConfig c;
    c.preset = std::string(name);
    if (name == "paper-final") {
        return c;
    }
    if (name == "desk") {
        // Final-model choices at laptop scale: same head kind, augmentations and temperature.
        c.synth.image_size = 32;
        c.train.batch_size = 32;
        c.train.epochs = 1000;
        c.train.max_steps = 300;
        c.train.optimizer.learning_rate = 1e-3;
        return c;
    }
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected " + join(preset_names(), " or ") + ")");
}

std::string precision_name(nd::Precision p) {
    return p == nd::Precision::f32 ? "f32" : "f64";
}

json to_document(const RunConfig& c) {
    const auto& a = c.train.augment;
    return {
        {"preset", c.preset},
        {"seed", c.seed},
        {"precision", precision_name(c.precision)},
        {"paths",
         {{"cells", c.paths.cells.string()},
          {"manifest", c.paths.manifest.string()},
          {"checkpoint", c.paths.checkpoint.string()},
          {"loss_history", c.paths.loss_history.string()},
          {"embeddings", c.paths.embeddings.string()},
          {"profiles", c.paths.profiles.string()},
          {"postprocessed", c.paths.postprocessed.string()},
          {"report", c.paths.report.string()}}},
        {"synth",
         {{"n_moas", c.synth.n_moas},
          {"compounds_per_moa", c.synth.compounds_per_moa},
          {"concentrations_per_compound", c.synth.concentrations_per_compound},
          {"batches", c.synth.batches},
          {"cells_per_treatment", c.synth.cells_per_treatment},
          {"control_wells_per_batch", c.synth.control_wells_per_batch},
          {"cells_per_control_well", c.synth.cells_per_control_well},
          {"image_size", c.synth.image_size},
          {"noise", c.synth.noise},
          {"batch_offset", c.synth.batch_offset}}},
        {"model",
         {{"encoder", model::to_string(c.encoder)},
          {"head", {{"kind", model::to_string(c.head.kind)}, {"hidden", c.head.hidden}, {"output", c.head.output}}}}},
        {"augment",
         {{"crop",
           {{"enabled", a.crop.enabled},
            {"scale_min", a.crop.scale_min},
            {"scale_max", a.crop.scale_max},
            {"aspect_min", a.crop.aspect_min},
            {"aspect_max", a.crop.aspect_max}}},
          {"flip", {{"enabled", a.flip.enabled}, {"p_horizontal", a.flip.p_horizontal}, {"p_vertical", a.flip.p_vertical}}},
          {"rot90", {{"enabled", a.rot90.enabled}}},
          {"jitter", {{"enabled", a.jitter.enabled}, {"brightness", a.jitter.brightness}, {"contrast", a.jitter.contrast}}},
          {"grey", {{"enabled", a.grey.enabled}, {"probability", a.grey.probability}}},
          {"blur",
           {{"enabled", a.blur.enabled},
            {"probability", a.blur.probability},
            {"sigma_min", a.blur.sigma_min},
            {"sigma_max", a.blur.sigma_max},
            {"kernel_size", a.blur.kernel_size}}}}},
        {"train",
         {{"batch_size", c.train.batch_size},
          {"temperature", c.train.temperature},
          {"epochs", c.train.epochs},
          {"max_steps", c.train.max_steps},
          {"lr", c.train.optimizer.learning_rate},
          {"weight_decay", c.train.optimizer.weight_decay},
          {"decoupled_weight_decay", c.train.optimizer.decoupled_weight_decay}}},
        {"embed", {{"batch_size", c.embed_batch_size}}},
        {"profiles",
         {{"aggregation", profiles::to_string(c.aggregation)},
          {"postprocess", profiles::to_string(c.postprocess)},
          {"eps_rel", c.eps_rel}}},
    };
}

bool compatible(const json& base, const json& value) {
    if (base.is_number_unsigned()) {
        return value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
    }
    if (base.is_number_float()) {
        return value.is_number();
    }
    return base.type() == value.type();
}

std::string type_name(const json& base) {
    if (base.is_number_unsigned()) {
        return "a non-negative integer";
    }
    if (base.is_number()) {
        return "a number";
    }
    if (base.is_boolean()) {
        return "a boolean";
    }
    if (base.is_string()) {
        return "a string";
    }
    return "an object";
}

void overlay(json& base, const json& user, const std::string& prefix, std::vector<std::string>& errors) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        const auto key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) {
            errors.push_back("unknown key '" + key + "'");
            continue;
        }
        auto& slot = base[it.key()];
        if (slot.is_object()) {
            if (!it->is_object()) {
                errors.push_back("key '" + key + "' must be an object");
                continue;
            }
            overlay(slot, *it, key, errors);
            continue;
        }
        if (!compatible(slot, *it)) {
            errors.push_back("key '" + key + "' must be " + type_name(slot));
            continue;
        }
        slot = *it;
    }
}

// Expands "a.b.c=v" into {"a":{"b":{"c":v}}}.
json override_document(const std::string& assignment, std::vector<std::string>& errors) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        errors.push_back("override '" + assignment + "' is not of the form key=value");
        return json::object();
    }
    const auto key = assignment.substr(0, eq);
    const auto text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    std::vector<std::string> parts;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.')) {
        parts.push_back(part);
    }
    for (auto p = parts.rbegin(); p != parts.rend(); ++p) {
        value = json{{*p, value}};
    }
    return value;
}

template<typename F>
auto convert(std::vector<std::string>& errors, const std::string& key, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::exception& e) {
        errors.push_back("key '" + key + "': " + e.what());
        return {};
    }
}

RunConfig from_document(const json& d, std::vector<std::string>& errors) {
    RunConfig c = preset_config(d.at("preset").get<std::string>());
    c.seed = d.at("seed").get<std::uint64_t>();
    const auto precision = d.at("precision").get<std::string>();
    if (precision == "f32" || precision == "f64") {
        c.precision = precision == "f32" ? nd::Precision::f32 : nd::Precision::f64;
    } else {
        errors.push_back("key 'precision': expected f32 or f64, got '" + precision + "'");
    }

    const auto& p = d.at("paths");
    c.paths.cells = p.at("cells").get<std::string>();
    c.paths.manifest = p.at("manifest").get<std::string>();
    c.paths.checkpoint = p.at("checkpoint").get<std::string>();
    c.paths.loss_history = p.at("loss_history").get<std::string>();
    c.paths.embeddings = p.at("embeddings").get<std::string>();
    c.paths.profiles = p.at("profiles").get<std::string>();
    c.paths.postprocessed = p.at("postprocessed").get<std::string>();
    c.paths.report = p.at("report").get<std::string>();

    const auto& s = d.at("synth");
    c.synth.n_moas = s.at("n_moas").get<std::size_t>();
    c.synth.compounds_per_moa = s.at("compounds_per_moa").get<std::size_t>();
    c.synth.concentrations_per_compound = s.at("concentrations_per_compound").get<std::size_t>();
    c.synth.batches = s.at("batches").get<std::size_t>();
    c.synth.cells_per_treatment = s.at("cells_per_treatment").get<std::size_t>();
    c.synth.control_wells_per_batch = s.at("control_wells_per_batch").get<std::size_t>();
    c.synth.cells_per_control_well = s.at("cells_per_control_well").get<std::size_t>();
    c.synth.image_size = s.at("image_size").get<std::size_t>();
    c.synth.noise = s.at("noise").get<double>();
    c.synth.batch_offset = s.at("batch_offset").get<double>();
    c.synth.seed = c.seed;

    const auto& m = d.at("model");
    c.encoder = convert(errors, "model.encoder", [&] { return model::parse_encoder_preset(m.at("encoder").get<std::string>()); });
    const auto& h = m.at("head");
    c.head.kind = convert(errors, "model.head.kind", [&] { return model::parse_head_kind(h.at("kind").get<std::string>()); });
    c.head.hidden = h.at("hidden").get<std::size_t>();
    c.head.output = h.at("output").get<std::size_t>();

    const auto& a = d.at("augment");
    auto& spec = c.train.augment;
    spec.crop.enabled = a.at("crop").at("enabled").get<bool>();
    spec.crop.scale_min = a.at("crop").at("scale_min").get<double>();
    spec.crop.scale_max = a.at("crop").at("scale_max").get<double>();
    spec.crop.aspect_min = a.at("crop").at("aspect_min").get<double>();
    spec.crop.aspect_max = a.at("crop").at("aspect_max").get<double>();
    spec.flip.enabled = a.at("flip").at("enabled").get<bool>();
    spec.flip.p_horizontal = a.at("flip").at("p_horizontal").get<double>();
    spec.flip.p_vertical = a.at("flip").at("p_vertical").get<double>();
    spec.rot90.enabled = a.at("rot90").at("enabled").get<bool>();
    spec.jitter.enabled = a.at("jitter").at("enabled").get<bool>();
    spec.jitter.brightness = a.at("jitter").at("brightness").get<double>();
    spec.jitter.contrast = a.at("jitter").at("contrast").get<double>();
    spec.grey.enabled = a.at("grey").at("enabled").get<bool>();
    spec.grey.probability = a.at("grey").at("probability").get<double>();
    spec.blur.enabled = a.at("blur").at("enabled").get<bool>();
    spec.blur.probability = a.at("blur").at("probability").get<double>();
    spec.blur.sigma_min = a.at("blur").at("sigma_min").get<double>();
    spec.blur.sigma_max = a.at("blur").at("sigma_max").get<double>();
    spec.blur.kernel_size = a.at("blur").at("kernel_size").get<std::size_t>();

    const auto& t = d.at("train");
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.temperature = t.at("temperature").get<double>();
    c.train.epochs = t.at("epochs").get<std::size_t>();
    c.train.max_steps = t.at("max_steps").get<std::size_t>();
    c.train.optimizer.learning_rate = t.at("lr").get<double>();
    c.train.optimizer.weight_decay = t.at("weight_decay").get<double>();
    c.train.optimizer.decoupled_weight_decay = t.at("decoupled_weight_decay").get<bool>();

    c.embed_batch_size = d.at("embed").at("batch_size").get<std::size_t>();

    const auto& pr = d.at("profiles");
    c.aggregation = convert(errors, "profiles.aggregation", [&] { return profiles::parse_aggregation(pr.at("aggregation").get<std::string>()); });
    c.postprocess = convert(errors, "profiles.postprocess", [&] { return profiles::parse_postprocess_mode(pr.at("postprocess").get<std::string>()); });
    c.eps_rel = pr.at("eps_rel").get<double>();
    return c;
}

}

std::string default_config_json(std::string_view preset) {
    return to_document(preset_config(preset)).dump(2) + "\n";
}

std::string to_json(const RunConfig& config) {
    return to_document(config).dump(2) + "\n";
}

RunConfig parse_config(std::string_view json_text, std::span<const std::string> overrides) {
    std::vector<std::string> errors;
    json user = json::object();
    if (!json_text.empty()) {
        user = json::parse(json_text, nullptr, false);
        if (user.is_discarded() || !user.is_object()) {
            throw ConfigError("configuration is not a JSON object");
        }
    }
    std::vector<json> layers{user};
    for (const auto& o : overrides) {
        layers.push_back(override_document(o, errors));
    }

    std::string preset = "paper-final";
    for (const auto& layer : layers) {
        if (layer.contains("preset")) {
            if (!layer["preset"].is_string()) {
                throw ConfigError("key 'preset' must be a string");
            }
            preset = layer["preset"].get<std::string>();
        }
    }
    json doc = to_document(preset_config(preset));
    for (const auto& layer : layers) {
        overlay(doc, layer, "", errors);
    }
    if (!errors.empty()) {
        throw ConfigError("invalid configuration: " + join(errors, "; "));
    }
    RunConfig config = from_document(doc, errors);
    const auto invalid = validation_errors(config);
    errors.insert(errors.end(), invalid.begin(), invalid.end());
    if (!errors.empty()) {
        throw ConfigError("invalid configuration: " + join(errors, "; "));
    }
    return config;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, std::span<const std::string> overrides) {
    std::string text;
    if (path) {
        std::ifstream in(*path);
        if (!in) {
            throw IoError("cannot open config file: " + path->string());
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    return parse_config(text, overrides);
}

}
