#include "cellcontrast/checkpoint.hpp"

#include <fstream>
#include <limits>
#include <type_traits>

#include "binio.hpp"
#include "cellcontrast/errors.hpp"

namespace cellcontrast::model {

namespace {

constexpr std::string_view magic = "CCKPT1";
constexpr std::uint32_t max_name = 1u << 16;
constexpr std::uint32_t max_rank = 8;

}

template<typename T>
void write_checkpoint(std::ostream& out, const ModelParams<T>& params) {
    binio::write_magic(out, magic);
    binio::write_le<std::uint32_t>(out, checkpoint_version);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.name(i);
        const auto& t = params.tensors()[i];
        binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        binio::write_le<std::uint8_t>(out, std::is_same_v<T, double> ? 1 : 0);
        binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) {
            binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        for (auto v : t.data()) {
            if constexpr (std::is_same_v<T, double>) {
                binio::write_f64(out, v);
            } else {
                binio::write_f32(out, v);
            }
        }
    }
}

template<typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open checkpoint for writing: " + path.string());
    }
    write_checkpoint(out, params);
    if (!out) {
        throw IoError("failed writing checkpoint: " + path.string());
    }
}

template<typename T>
ModelParams<T> read_checkpoint(std::istream& in) {
    binio::expect_magic(in, magic, "checkpoint");
    const auto version = binio::read_le<std::uint32_t>(in, "checkpoint version");
    if (version != checkpoint_version) {
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    }
    ModelParams<T> params;
    while (in.peek() != std::char_traits<char>::eof()) {
        const auto len = binio::read_le<std::uint32_t>(in, "record name length");
        if (len == 0 || len > max_name) {
            throw IoError("checkpoint: implausible name length " + std::to_string(len));
        }
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (in.gcount() != static_cast<std::streamsize>(len)) {
            throw IoError("truncated input while reading record name");
        }
        const auto dtype = binio::read_le<std::uint8_t>(in, "dtype of " + name);
        if (dtype > 1) {
            throw IoError("checkpoint: unknown dtype tag " + std::to_string(dtype) + " for " + name);
        }
        const auto rank = binio::read_le<std::uint32_t>(in, "rank of " + name);
        if (rank > max_rank) {
            throw IoError("checkpoint: rank " + std::to_string(rank) + " too large for " + name);
        }
        nd::Shape shape(rank);
        std::uint64_t count = 1;
        for (auto& d : shape) {
            d = binio::read_le<std::uint32_t>(in, "dims of " + name);
            count *= d;
            if (count > (std::uint64_t{1} << 34)) {
                throw IoError("checkpoint: tensor " + name + " is implausibly large");
            }
        }
        std::vector<T> data(count);
        for (auto& v : data) {
            v = dtype == 1 ? static_cast<T>(binio::read_f64(in, "payload of " + name))
                           : static_cast<T>(binio::read_f32(in, "payload of " + name));
        }
        try {
            params.add(std::move(name), nd::Tensor<T>(std::move(shape), std::move(data)));
        } catch (const std::invalid_argument& e) {
            throw IoError(std::string("checkpoint: ") + e.what());
        }
    }
    return params;
}

template<typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path.string());
    }
    return read_checkpoint<T>(in);
}

template<typename T>
void check_compatible(const ModelParams<T>& params, const ModelConfig& config) {
    const auto expected = init_params<T>(config, 0);
    if (expected.size() != params.size()) {
        throw ConfigError("checkpoint has " + std::to_string(params.size()) + " tensors, model config expects " +
            std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& name = expected.name(i);
        if (!params.contains(name)) {
            throw ConfigError("checkpoint is missing parameter " + name);
        }
        if (params.at(name).shape() != expected.tensors()[i].shape()) {
            throw ConfigError("checkpoint parameter " + name + " has shape " + nd::shape_string(params.at(name).shape()) +
                ", model config expects " + nd::shape_string(expected.tensors()[i].shape()));
        }
    }
}

#define CELLCONTRAST_INSTANTIATE_CKPT(T)                                             \
    template void write_checkpoint(std::ostream&, const ModelParams<T>&);            \
    template void save_checkpoint(const std::filesystem::path&, const ModelParams<T>&); \
    template ModelParams<T> read_checkpoint<T>(std::istream&);                       \
    template ModelParams<T> load_checkpoint<T>(const std::filesystem::path&);        \
    template void check_compatible(const ModelParams<T>&, const ModelConfig&);

CELLCONTRAST_INSTANTIATE_CKPT(float)
CELLCONTRAST_INSTANTIATE_CKPT(double)

}
