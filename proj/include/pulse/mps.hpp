/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pulse/problem.hpp"

namespace pulse {

class MpsParseError : public std::runtime_error {
 public:
  MpsParseError(const std::string& msg, int line)
      : std::runtime_error("MPS parse error at line " + std::to_string(line) + ": " + msg),
        line_(line)
  {
  }
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line)
{
  std::vector<std::string> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_number(const std::string& tok, int line)
{
  char* end      = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw MpsParseError("expected a number, got '" + tok + "'", line);
  }
  if (v >= kInfThreshold) return kInf;
  if (v <= -kInfThreshold) return -kInf;
  return v;
}

struct RowDecl {
  char type;  // 'N', 'L', 'G', 'E'
  int index;  // constraint index, or -1 for the objective / free N rows
};

}  // namespace detail

// Reads fixed- or free-format MPS. Both formats tokenize identically as long
// as names carry no embedded blanks, which holds for the MIPLIB-style inputs
// this library targets. Supports ROWS/COLUMNS (with integrality markers),
// RHS, RANGES and BOUNDS; OBJSENSE is accepted for minimization only.
inline ProblemDef read_mps(std::istream& in)
{
  enum class Section { None, Name, ObjSense, Rows, Columns, Rhs, Ranges, Bounds, End };

  ProblemBuilder b;
  std::map<std::string, detail::RowDecl> rows;
  std::map<std::string, int> cols;
  std::string obj_row_name;
  std::vector<char> row_type;           // per constraint index
  std::vector<bool> row_has_range;
  std::vector<uint8_t> col_is_int;
  std::vector<bool> col_bound_touched;  // integer default upper resets on first bound
  std::vector<bool> col_lb_explicit;
  std::vector<std::pair<int, double>> pending_obj;  // (col, coeff)

  Section section = Section::None;
  bool in_integer = false;
  bool saw_endata = false;
  std::string line;
  int lineno = 0;

  auto col_index = [&](const std::string& name, int ln) {
    auto it = cols.find(name);
    if (it == cols.end()) throw MpsParseError("unknown column '" + name + "'", ln);
    return it->second;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] == '*') continue;  // comment
    auto toks = detail::tokenize(line);
    if (toks.empty()) continue;

    const bool is_header = !std::isspace(static_cast<unsigned char>(line[0]));
    if (is_header) {
      const std::string& head = toks[0];
      if (head == "NAME") {
        if (toks.size() > 1) b.set_name(toks[1]);
        section = Section::Name;
      } else if (head == "OBJSENSE") {
        section = Section::ObjSense;
        if (toks.size() > 1 && toks[1] != "MIN" && toks[1] != "MINIMIZE") {
          throw MpsParseError("only minimization objectives are supported", lineno);
        }
      } else if (head == "ROWS") {
        section = Section::Rows;
      } else if (head == "COLUMNS") {
        section = Section::Columns;
      } else if (head == "RHS") {
        section = Section::Rhs;
      } else if (head == "RANGES") {
        section = Section::Ranges;
      } else if (head == "BOUNDS") {
        section = Section::Bounds;
      } else if (head == "ENDATA") {
        saw_endata = true;
        break;
      } else {
        throw MpsParseError("unsupported section '" + head + "'", lineno);
      }
      continue;
    }

    switch (section) {
      case Section::ObjSense: {
        if (toks[0] != "MIN" && toks[0] != "MINIMIZE") {
          throw MpsParseError("only minimization objectives are supported", lineno);
        }
        break;
      }
      case Section::Rows: {
        if (toks.size() < 2) throw MpsParseError("row declaration needs a type and a name", lineno);
        const char t = static_cast<char>(std::toupper(static_cast<unsigned char>(toks[0][0])));
        const std::string& rname = toks[1];
        if (rows.count(rname)) throw MpsParseError("duplicate row '" + rname + "'", lineno);
        if (t == 'N') {
          if (obj_row_name.empty()) {
            obj_row_name = rname;
            b.set_objective_name(rname);
            rows[rname] = {t, -1};
          } else {
            // Additional free rows are kept with unbounded sides.
            const int k = b.add_row(rname, -kInf, kInf);
            rows[rname] = {t, k};
            row_type.push_back('N');
            row_has_range.push_back(false);
          }
        } else if (t == 'L' || t == 'G' || t == 'E') {
          const double lo = (t == 'L') ? -kInf : 0.0;
          const double hi = (t == 'G') ? kInf : 0.0;
          const int k     = b.add_row(rname, lo, hi);
          rows[rname]     = {t, k};
          row_type.push_back(t);
          row_has_range.push_back(false);
        } else {
          throw MpsParseError(std::string("unknown row type '") + toks[0] + "'", lineno);
        }
        break;
      }
      case Section::Columns: {
        if (toks.size() >= 3 && toks[1] == "'MARKER'") {
          if (toks[2] == "'INTORG'") {
            in_integer = true;
          } else if (toks[2] == "'INTEND'") {
            in_integer = false;
          } else {
            throw MpsParseError("unknown marker '" + toks[2] + "'", lineno);
          }
          break;
        }
        if (toks.size() < 3 || toks.size() % 2 == 0) {
          throw MpsParseError("column entry needs name and (row, value) pairs", lineno);
        }
        const std::string& cname = toks[0];
        int ci;
        auto it = cols.find(cname);
        if (it == cols.end()) {
          // Historic default for integer columns is [0, 1]; a later BOUNDS
          // entry lifts the upper bound before applying itself.
          const double ub = in_integer ? 1.0 : kInf;
          ci = b.add_var(cname, 0.0, ub, in_integer);
          cols[cname] = ci;
          col_is_int.push_back(in_integer ? 1 : 0);
          col_bound_touched.push_back(false);
          col_lb_explicit.push_back(false);
        } else {
          ci = it->second;
        }
        for (size_t t = 1; t + 1 < toks.size(); t += 2) {
          const std::string& rname = toks[t];
          const double val         = detail::parse_number(toks[t + 1], lineno);
          auto rit = rows.find(rname);
          if (rit == rows.end()) throw MpsParseError("unknown row '" + rname + "'", lineno);
          if (rit->second.index < 0) {
            pending_obj.push_back({ci, val});
          } else if (rows[rname].type != 'N') {
            b.add_entry(rit->second.index, ci, val);
          }
          // Entries on non-objective N rows are dropped: free rows carry no
          // restriction.
        }
        break;
      }
      case Section::Rhs: {
        if (toks.size() < 3 || toks.size() % 2 == 0) {
          throw MpsParseError("RHS entry needs set name and (row, value) pairs", lineno);
        }
        for (size_t t = 1; t + 1 < toks.size(); t += 2) {
          const std::string& rname = toks[t];
          const double val         = detail::parse_number(toks[t + 1], lineno);
          auto rit = rows.find(rname);
          if (rit == rows.end()) throw MpsParseError("unknown row '" + rname + "'", lineno);
          const auto decl = rit->second;
          if (decl.index < 0 || decl.type == 'N') continue;  // objective constants ignored
          if (decl.type == 'L') {
            b.set_row_upper(decl.index, val);
          } else if (decl.type == 'G') {
            b.set_row_lower(decl.index, val);
          } else {  // E
            b.set_row_lower(decl.index, val);
            b.set_row_upper(decl.index, val);
          }
        }
        break;
      }
      case Section::Ranges: {
        if (toks.size() < 3 || toks.size() % 2 == 0) {
          throw MpsParseError("RANGES entry needs set name and (row, value) pairs", lineno);
        }
        for (size_t t = 1; t + 1 < toks.size(); t += 2) {
          const std::string& rname = toks[t];
          const double r           = detail::parse_number(toks[t + 1], lineno);
          auto rit = rows.find(rname);
          if (rit == rows.end()) throw MpsParseError("unknown row '" + rname + "'", lineno);
          const auto decl = rit->second;
          if (decl.index < 0 || decl.type == 'N') {
            throw MpsParseError("RANGES entry on N row '" + rname + "'", lineno);
          }
          if (row_has_range[decl.index]) {
            throw MpsParseError("duplicate RANGES entry for row '" + rname + "'", lineno);
          }
          row_has_range[decl.index] = true;
          const double lo = b.row_lower(decl.index);
          const double hi = b.row_upper(decl.index);
          if (decl.type == 'L') {
            b.set_row_lower(decl.index, hi - std::abs(r));
          } else if (decl.type == 'G') {
            b.set_row_upper(decl.index, lo + std::abs(r));
          } else {  // E: sign of the range picks the side
            if (r >= 0.0) {
              b.set_row_upper(decl.index, lo + r);
            } else {
              b.set_row_lower(decl.index, hi + r);
            }
          }
        }
        break;
      }
      case Section::Bounds: {
        if (toks.size() < 3) throw MpsParseError("bound entry needs type, set and column", lineno);
        const std::string btype = toks[0];
        const bool needs_value = btype == "UP" || btype == "LO" || btype == "FX" ||
                                 btype == "UI" || btype == "LI";
        if (needs_value && toks.size() < 4) {
          throw MpsParseError("bound type " + btype + " needs a value", lineno);
        }
        const std::string& cname = toks[2];
        const int ci             = col_index(cname, lineno);
        if (col_is_int[ci] && !col_bound_touched[ci]) {
          // First bound on an integer column lifts the [0, 1] default upper.
          b.set_var_upper(ci, kInf);
        }
        col_bound_touched[ci] = true;
        const double val = needs_value ? detail::parse_number(toks[3], lineno) : 0.0;
        if (btype == "UP" || btype == "UI") {
          b.set_var_upper(ci, val);
          if (val < 0.0 && !col_lb_explicit[ci]) b.set_var_lower(ci, -kInf);
          if (btype == "UI") b.set_var_integer(ci);
        } else if (btype == "LO" || btype == "LI") {
          b.set_var_lower(ci, val);
          col_lb_explicit[ci] = true;
          if (btype == "LI") b.set_var_integer(ci);
        } else if (btype == "FX") {
          b.set_var_lower(ci, val);
          b.set_var_upper(ci, val);
          col_lb_explicit[ci] = true;
        } else if (btype == "FR") {
          b.set_var_lower(ci, -kInf);
          b.set_var_upper(ci, kInf);
          col_lb_explicit[ci] = true;
        } else if (btype == "MI") {
          b.set_var_lower(ci, -kInf);
          col_lb_explicit[ci] = true;
        } else if (btype == "PL") {
          b.set_var_upper(ci, kInf);
        } else if (btype == "BV") {
          b.set_var_lower(ci, 0.0);
          b.set_var_upper(ci, 1.0);
          b.set_var_integer(ci);
          col_lb_explicit[ci] = true;
        } else {
          throw MpsParseError("unknown bound type '" + btype + "'", lineno);
        }
        break;
      }
      case Section::Name:
      case Section::None:
      case Section::End:
        throw MpsParseError("data outside of a section", lineno);
    }
  }

  if (!saw_endata && section == Section::None) {
    throw MpsParseError("not an MPS file (no sections found)", lineno);
  }
  for (const auto& [ci, coeff] : pending_obj) b.add_to_objective(ci, coeff);
  if (b.n_vars() == 0) throw MpsParseError("empty problem (no columns)", lineno);
  return b.build();
}

inline ProblemDef load_mps(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open MPS file: " + path);
  return read_mps(in);
}

namespace detail {

inline std::string num17(double v)
{
  if (v == kInf) return "1e30";
  if (v == -kInf) return "-1e30";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Emits free-format MPS that round-trips through read_mps to an identical
// ProblemDef (bit-exact numbers via %.17g).
inline void write_mps(const ProblemDef& p, std::ostream& out)
{
  const std::string objname = p.objective_name.empty() ? "OBJ" : p.objective_name;
  out << "NAME " << (p.name.empty() ? "PULSE" : p.name) << "\n";
  out << "ROWS\n";
  out << " N " << objname << "\n";
  for (int k = 0; k < p.n_cons; ++k) {
    const bool lo = is_finite(p.cons_lower[k]);
    const bool hi = is_finite(p.cons_upper[k]);
    char t;
    if (lo && hi) {
      t = (p.cons_lower[k] == p.cons_upper[k]) ? 'E' : 'L';  // ranged rows via RANGES
    } else if (hi) {
      t = 'L';
    } else if (lo) {
      t = 'G';
    } else {
      t = 'N';
    }
    out << " " << t << " " << p.cons_names[k] << "\n";
  }
  out << "COLUMNS\n";
  bool in_int = false;
  int marker  = 0;
  for (int i = 0; i < p.n_vars; ++i) {
    if (p.is_integer[i] && !in_int) {
      out << " MARKER" << marker++ << " 'MARKER' 'INTORG'\n";
      in_int = true;
    } else if (!p.is_integer[i] && in_int) {
      out << " MARKER" << marker++ << " 'MARKER' 'INTEND'\n";
      in_int = false;
    }
    const auto rows = p.col_rows(i);
    const auto vals = p.col_vals(i);
    // Every column must appear; a zero objective entry declares empty ones.
    if (rows.empty() && p.obj_coeffs[i] == 0.0) {
      out << " " << p.var_names[i] << " " << objname << " 0\n";
    }
    if (p.obj_coeffs[i] != 0.0) {
      out << " " << p.var_names[i] << " " << objname << " " << detail::num17(p.obj_coeffs[i])
          << "\n";
    }
    for (size_t e = 0; e < rows.size(); ++e) {
      out << " " << p.var_names[i] << " " << p.cons_names[rows[e]] << " "
          << detail::num17(vals[e]) << "\n";
    }
  }
  if (in_int) out << " MARKER" << marker++ << " 'MARKER' 'INTEND'\n";
  out << "RHS\n";
  for (int k = 0; k < p.n_cons; ++k) {
    const bool lo = is_finite(p.cons_lower[k]);
    const bool hi = is_finite(p.cons_upper[k]);
    if (!lo && !hi) continue;
    const double rhs = hi ? p.cons_upper[k] : p.cons_lower[k];
    if (rhs != 0.0) out << " RHS " << p.cons_names[k] << " " << detail::num17(rhs) << "\n";
  }
  bool any_range = false;
  for (int k = 0; k < p.n_cons; ++k) {
    if (is_finite(p.cons_lower[k]) && is_finite(p.cons_upper[k]) &&
        p.cons_lower[k] != p.cons_upper[k]) {
      if (!any_range) {
        out << "RANGES\n";
        any_range = true;
      }
      out << " RNG " << p.cons_names[k] << " "
          << detail::num17(p.cons_upper[k] - p.cons_lower[k]) << "\n";
    }
  }
  out << "BOUNDS\n";
  for (int i = 0; i < p.n_vars; ++i) {
    const double lo = p.var_lower[i];
    const double hi = p.var_upper[i];
    const bool int_default = p.is_integer[i] && lo == 0.0 && hi == 1.0;
    const bool cont_default = !p.is_integer[i] && lo == 0.0 && hi == kInf;
    if (int_default || cont_default) continue;
    const std::string& n = p.var_names[i];
    if (lo == hi) {
      out << " FX BND " << n << " " << detail::num17(lo) << "\n";
      continue;
    }
    if (lo == -kInf && hi == kInf) {
      out << " FR BND " << n << "\n";
      continue;
    }
    if (lo == -kInf) {
      out << " MI BND " << n << "\n";
    } else {
      out << " LO BND " << n << " " << detail::num17(lo) << "\n";
    }
    if (hi == kInf) {
      if (p.is_integer[i]) out << " PL BND " << n << "\n";
    } else {
      out << " UP BND " << n << " " << detail::num17(hi) << "\n";
    }
  }
  out << "ENDATA\n";
}

inline std::string write_mps_string(const ProblemDef& p)
{
  std::ostringstream out;
  write_mps(p, out);
  return out.str();
}

// Solution file: one "name value" line per variable.
inline void write_solution(const ProblemDef& p, const SolutionVector& s, std::ostream& out)
{
  for (int i = 0; i < p.n_vars; ++i) {
    out << p.var_names[i] << " " << detail::num17(s.values[i]) << "\n";
  }
}

}  // namespace pulse
