#pragma once

// Plain-text QUBO exchange format:
//
//   p qubo <nvars> <nterms> <offset>
//   <p> <q> <coeff>          one line per stored term, p <= q
//
// Numbers are rendered with 17 significant digits so a file read back gives
// the same doubles. The sidecar variable map has one "<var> <role> <i> <j>"
// line per variable; slack rows carry the bit position in the <i> column and
// facility rows carry "-" there.

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "cflqa/qubo.hpp"

namespace cflqa {

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_qubo(const Qubo& q, std::ostream& out) {
  out << "p qubo " << q.nvars() << ' ' << q.terms().size() << ' ' << detail::format_g17(q.offset()) << '\n';
  for (const auto& [key, c] : q.terms()) {
    out << key.first << ' ' << key.second << ' ' << detail::format_g17(c) << '\n';
  }
}

inline void write_varmap(const Qubo& q, std::ostream& out) {
  for (std::size_t p = 0; p < q.roles().size(); ++p) {
    const auto& r = q.roles()[p];
    out << p << ' ' << to_string(r.role) << ' ';
    switch (r.role) {
      case Role::Facility: out << "- " << r.second; break;
      case Role::Free: out << "- -"; break;
      default: out << r.first << ' ' << r.second; break;
    }
    out << '\n';
  }
}

inline Qubo read_qubo(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) { throw ParseError(what, line_no); };

  std::size_t nvars = 0, nterms = 0;
  double offset = 0.0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == 'c' || line[0] == '#') continue;
    std::istringstream hdr(line);
    std::string p, kind;
    if (!(hdr >> p >> kind >> nvars >> nterms >> offset) || p != "p" || kind != "qubo") {
      fail("expected header 'p qubo <nvars> <nterms> <offset>'");
    }
    break;
  }
  if (line_no == 0) fail("empty QUBO file");

  Qubo q(nvars);
  q.add_offset(offset);
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == 'c' || line[0] == '#') continue;
    std::istringstream row(line);
    std::size_t a = 0, b = 0;
    double c = 0.0;
    std::string extra;
    if (!(row >> a >> b >> c) || (row >> extra)) fail("malformed term line");
    if (a > b) fail("term indices must satisfy p <= q");
    if (b >= nvars) fail("term index out of range");
    q.add(a, b, c);
    ++seen;
  }
  if (seen != nterms) fail("header announces " + std::to_string(nterms) + " terms, found " + std::to_string(seen));
  return q;
}

}  // namespace cflqa
