#include "fas/io.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

namespace fas {

namespace {

void require_little_endian() {
  static_assert(std::endian::native == std::endian::little,
                "raw-array container assumes a little-endian host");
}

template <typename T>
void write_raw(const std::filesystem::path& path, const T* data, std::size_t count) {
  require_little_endian();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& path, std::size_t expected_count) {
  require_little_endian();
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  const auto bytes = static_cast<std::size_t>(f.tellg());
  if (bytes != expected_count * sizeof(T))
    throw std::runtime_error("unexpected size of " + path.string() + ": got " +
                             std::to_string(bytes) + " bytes, expected " +
                             std::to_string(expected_count * sizeof(T)));
  std::vector<T> out(expected_count);
  f.seekg(0);
  f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("read failed: " + path.string());
  return out;
}

}  // namespace

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  return Json::parse(f);
}

void write_raw_f32(const std::filesystem::path& path, const float* data, std::size_t count) {
  write_raw(path, data, count);
}
void write_raw_f64(const std::filesystem::path& path, const double* data, std::size_t count) {
  write_raw(path, data, count);
}
std::vector<float> read_raw_f32(const std::filesystem::path& path, std::size_t expected_count) {
  return read_raw<float>(path, expected_count);
}
std::vector<double> read_raw_f64(const std::filesystem::path& path, std::size_t expected_count) {
  return read_raw<double>(path, expected_count);
}

}  // namespace fas
