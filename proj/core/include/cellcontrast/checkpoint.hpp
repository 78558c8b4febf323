#ifndef CELLCONTRAST_CHECKPOINT_HPP
#define CELLCONTRAST_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "model.hpp"

namespace cellcontrast::model {

inline constexpr std::uint32_t checkpoint_version = 1;

/**
 * Checkpoint layout, all integers little-endian:
 *
 *     "CCKPT1" | u32 version
 *     repeated: u32 name_len | name bytes | u8 dtype (0 = f32, 1 = f64)
 *               | u32 rank | rank x u32 dims | payload
 *
 * Records appear in parameter order and run to end of file.
 */
template<typename T>
void write_checkpoint(std::ostream& out, const ModelParams<T>& params);

template<typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& params);

/// Reads any checkpoint, converting payloads to `T` if the stored dtype differs.
template<typename T>
ModelParams<T> read_checkpoint(std::istream& in);

template<typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path);

/// Throws `ConfigError` unless `params` has exactly the names and shapes `config` produces.
template<typename T>
void check_compatible(const ModelParams<T>& params, const ModelConfig& config);

}

#endif
