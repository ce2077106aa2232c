#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hitchin/lattice.hpp"

namespace hitchin::io {

nlohmann::json domain_to_json(const lattice::Domain& domain);
lattice::Domain domain_from_json(const nlohmann::json& j);

// A .fld file is one line of JSON followed by raw little-endian float64 (re, im) pairs,
// site-major with components innermost.
struct FieldFile {
  nlohmann::json header;
  std::vector<cd> values;
};

void write_fld(const std::string& path, nlohmann::json header, std::span<const cd> values);
FieldFile read_fld(const std::string& path);

// Convenience wrappers; `kind` is recorded in the header ("form", "endo", "metric", ...).
void write_form_field(const std::string& path, const lattice::FormField& f, const std::string& kind, int rank);
lattice::FormField read_form_field(const std::string& path, int* rank = nullptr);

}  // namespace hitchin::io
