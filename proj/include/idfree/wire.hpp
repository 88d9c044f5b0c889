// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "idfree/errors.hpp"

namespace idfree {

/// The wire unit a device uploads: an embedding, features and a label —
/// and deliberately nothing else. No user or device identifier exists in
/// this type or its serialized form.
struct AnonymousRecord {
  std::vector<double> e;
  std::vector<double> x;
  int y = 0;
};

inline bool operator==(const AnonymousRecord& a, const AnonymousRecord& b) {
  return a.y == b.y && a.e == b.e && a.x == b.x;
}

/// One record per line: {"e":[...],"x":[...],"y":k}. UTF-8, newline-delimited.
inline std::string record_to_line(const AnonymousRecord& r) {
  nlohmann::json j;
  j["e"] = r.e;
  j["x"] = r.x;
  j["y"] = r.y;
  return j.dump();
}

inline AnonymousRecord record_from_line(std::string_view line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  if (!j.is_object() || j.size() != 3 || !j.contains("e") || !j.contains("x") ||
      !j.contains("y")) {
    throw ShapeError("record line must hold exactly the keys e, x, y");
  }
  AnonymousRecord r;
  r.e = j.at("e").get<std::vector<double>>();
  r.x = j.at("x").get<std::vector<double>>();
  r.y = j.at("y").get<int>();
  return r;
}

inline std::string session_payload(const std::vector<AnonymousRecord>& records) {
  std::string payload;
  for (const auto& r : records) {
    payload += record_to_line(r);
    payload += '\n';
  }
  return payload;
}

inline std::vector<AnonymousRecord> parse_session_payload(
    std::string_view payload) {
  std::vector<AnonymousRecord> records;
  std::size_t start = 0;
  while (start < payload.size()) {
    std::size_t end = payload.find('\n', start);
    if (end == std::string_view::npos) end = payload.size();
    if (end > start) {
      records.push_back(record_from_line(payload.substr(start, end - start)));
    }
    start = end + 1;
  }
  return records;
}

}  // namespace idfree
