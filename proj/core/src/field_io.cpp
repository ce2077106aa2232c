#include "hitchin/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hitchin::io {

nlohmann::json domain_to_json(const lattice::Domain& domain) {
  return {{"kind", lattice::to_string(domain.kind())},
          {"complex_dimension", domain.complex_dim()},
          {"shape", domain.shape()},
          {"spacing", domain.spacing()},
          {"extent", domain.extent()}};
}

lattice::Domain domain_from_json(const nlohmann::json& j) {
  auto kind = lattice::domain_kind_from_string(j.at("kind").get<std::string>());
  int n = j.at("complex_dimension").get<int>();
  auto shape = j.at("shape").get<std::vector<int>>();
  auto extent = j.at("extent").get<std::vector<double>>();
  if (kind == lattice::DomainKind::PeriodicTorus) return lattice::Domain::torus(n, shape, extent);
  for (auto& e : extent) e *= 0.5;
  return lattice::Domain::patch(n, shape, extent);
}

namespace {

void put_le(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  os.write(buf, 8);
}

double get_le(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  std::uint64_t bits;
  std::memcpy(&bits, buf, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_fld(const std::string& path, nlohmann::json header, std::span<const cd> values) {
  header["format"] = "fld";
  header["version"] = 1;
  header["endianness"] = "little";
  header["scalar"] = "float64-complex-interleaved";
  header["values"] = values.size();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << header.dump() << '\n';
  for (const cd& v : values) {
    put_le(os, v.real());
    put_le(os, v.imag());
  }
  if (!os) throw Error("write to '" + path + "' failed");
}

FieldFile read_fld(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::string line;
  std::getline(is, line);
  FieldFile out;
  out.header = nlohmann::json::parse(line);
  if (out.header.value("endianness", "") != "little") throw Error("unsupported .fld endianness");
  std::size_t count = out.header.at("values").get<std::size_t>();
  out.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    double re = get_le(is);
    double im = get_le(is);
    out.values[i] = {re, im};
  }
  if (!is) throw Error("truncated .fld payload in '" + path + "'");
  return out;
}

void write_form_field(const std::string& path, const lattice::FormField& f, const std::string& kind, int rank) {
  nlohmann::json h = {{"kind", kind},
                      {"domain", domain_to_json(f.domain())},
                      {"bidegree", {f.p(), f.q()}},
                      {"rank", rank},
                      {"components", f.components()},
                      {"fibre", f.fibre()}};
  write_fld(path, h, f.data());
}

lattice::FormField read_form_field(const std::string& path, int* rank) {
  FieldFile ff = read_fld(path);
  auto dom = domain_from_json(ff.header.at("domain"));
  auto deg = ff.header.at("bidegree").get<std::vector<int>>();
  int fibre = ff.header.at("fibre").get<int>();
  lattice::FormField f(dom, deg.at(0), deg.at(1), fibre);
  if (f.data().size() != ff.values.size()) throw ShapeMismatchError("field payload does not match its header");
  f.data() = std::move(ff.values);
  if (rank) *rank = ff.header.value("rank", 1);
  return f;
}

}  // namespace hitchin::io
