#include "vampire/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "array container I/O assumes a little-endian host");

namespace vampire::io {

namespace {

constexpr char kMagic[4] = {'V', 'A', 'M', 'A'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

const Mat& Container::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw std::runtime_error("container: missing array '" + name + "'");
  return it->second;
}

void write_container(const std::string& path, const json& meta,
                     const std::vector<std::pair<std::string, const Mat*>>& arrays,
                     const std::string& dtype) {
  if (dtype != "f64" && dtype != "f32") {
    throw std::invalid_argument("write_container: dtype must be f64 or f32, got " + dtype);
  }
  json manifest = json::array();
  for (const auto& [name, mat] : arrays) {
    manifest.push_back({{"name", name},
                        {"rows", mat->rows()},
                        {"cols", mat->cols()},
                        {"dtype", dtype}});
  }
  json header = {{"meta", meta}, {"arrays", manifest}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_container: cannot open " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, mat] : arrays) {
    if (dtype == "f64") {
      out.write(reinterpret_cast<const char*>(mat->data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(mat->size())));
    } else {
      std::vector<float> buf(static_cast<std::size_t>(mat->size()));
      for (Index i = 0; i < mat->size(); ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<float>(mat->data()[i]);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(sizeof(float) * buf.size()));
    }
  }
  if (!out) throw std::runtime_error("write_container: short write to " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_container: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("read_container: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("read_container: unsupported version " + std::to_string(version));
  }
  const std::uint32_t header_len = read_u32(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw std::runtime_error("read_container: truncated header in " + path);
  json header = json::parse(header_str);

  Container c;
  c.meta = header.at("meta");
  for (const auto& entry : header.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    const std::string dtype = entry.at("dtype").get<std::string>();
    Mat m(rows, cols);
    if (dtype == "f64") {
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    } else if (dtype == "f32") {
      std::vector<float> buf(static_cast<std::size_t>(m.size()));
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(sizeof(float) * buf.size()));
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
    } else {
      throw std::runtime_error("read_container: unknown dtype " + dtype);
    }
    if (!in) throw std::runtime_error("read_container: truncated payload for '" + name + "'");
    c.order.push_back(name);
    c.arrays.emplace(name, std::move(m));
  }
  return c;
}

std::string fnv1a_hex(const std::vector<std::string>& lines) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto eat = [&h](char ch) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  };
  for (const auto& line : lines) {
    for (char ch : line) eat(ch);
    eat('\n');
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace vampire::io
