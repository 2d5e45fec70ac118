#pragma once

// Binary containers.
//
// Dataset file: "SLDA" | u16 version | u32 manifest length | manifest JSON |
// records. Each record: u32 category, u32 sample, three u8 label fields
// (exp 1: geometry code, size, count; exp 2: pair code, n1, n2), 26 f32
// features, then the 160000-byte frame when the manifest says frames are
// kept, then the scene block when scenes are kept (u64 seed, u16 rows,
// u16 cols, u16 particle count, per particle u8 kind, u8 size, u16 row,
// u16 col).
//
// Model file: "SLDM" | u16 version | u32 header length | header JSON |
// f64 parameters | f64 standardizer means | f64 standardizer deviations |
// f64 train curve | f64 validation curve | u8 accepted flags.
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "slda/cascade.hpp"

namespace slda {

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::uint16_t kModelVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
/// Throws FormatError on bad magic, unknown version or truncation.
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_network(const TrainedNetwork& net);
/// Throws FormatError; the decoded network is checked with validate_network.
TrainedNetwork decode_network(std::span<const std::uint8_t> bytes);
void save_network(const std::filesystem::path& path, const TrainedNetwork& net);
TrainedNetwork load_network(const std::filesystem::path& path);

/// exp{N}_{stage}.sldm inside `dir`.
std::filesystem::path network_path(const std::filesystem::path& dir, int experiment, const std::string& stage);
void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle);
/// Loads every stage of `experiment` and validates the chaining.
ModelBundle load_bundle(const std::filesystem::path& dir, int experiment);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace slda
