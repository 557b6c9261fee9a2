#ifndef VAMPIRE_SERIALIZE_HPP_
#define VAMPIRE_SERIALIZE_HPP_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vampire/types.hpp"

namespace vampire::io {

using json = nlohmann::json;

// Array container: magic "VAMA", u32 version, u32 header length, JSON header,
// then the raw arrays in header order. Arrays are row-major IEEE-754
// little-endian, dtype "f64" or "f32". The header carries caller metadata
// under "meta" and an array manifest under "arrays".
struct Container {
  json meta;
  std::vector<std::string> order;
  std::map<std::string, Mat> arrays;

  const Mat& at(const std::string& name) const;
};

void write_container(const std::string& path, const json& meta,
                     const std::vector<std::pair<std::string, const Mat*>>& arrays,
                     const std::string& dtype = "f64");

Container read_container(const std::string& path);

// FNV-1a 64-bit over the given strings joined by '\n', as a hex string.
std::string fnv1a_hex(const std::vector<std::string>& lines);

}  // namespace vampire::io

#endif  // VAMPIRE_SERIALIZE_HPP_
