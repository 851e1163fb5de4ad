// Manifest + raw-array container used for datasets, supervised label sets,
// and network checkpoints: a JSON manifest next to a little-endian raw
// binary array file.
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fas {

using Json = nlohmann::json;

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

// Raw little-endian arrays. The writers assume a little-endian host and
// verify that assumption once at startup.
void write_raw_f32(const std::filesystem::path& path, const float* data, std::size_t count);
void write_raw_f64(const std::filesystem::path& path, const double* data, std::size_t count);
std::vector<float> read_raw_f32(const std::filesystem::path& path, std::size_t expected_count);
std::vector<double> read_raw_f64(const std::filesystem::path& path, std::size_t expected_count);

}  // namespace fas
