#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "rslq/problem.hpp"

namespace rslq {

namespace {

struct RawEntry {
  int line = 0;
  bool ranged = false;
  double t0 = 0.0, t1 = 0.0;
  Eigen::MatrixXd value;
};

struct RawFile {
  std::map<std::string, std::string> meta;  // key -> literal
  std::map<std::string, int> meta_lines;
  // generator sections: (ranged?, t0, t1, rows, line)
  struct GenSection {
    bool ranged = false;
    double t0 = 0.0, t1 = 0.0;
    std::vector<std::vector<double>> rows;
    int line = 0;
  };
  std::vector<GenSection> generator_sections;
  // entries[regime-1][key] -> pieces
  std::vector<std::map<std::string, std::vector<RawEntry>>> regime_entries;
  std::map<std::string, RawEntry> initial;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& tok, int line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw ParseError(line, "bad number '" + tok + "'");
  return v;
}

std::vector<double> parse_row(const std::string& text, int line) {
  std::istringstream iss(text);
  std::vector<double> out;
  std::string tok;
  while (iss >> tok) out.push_back(parse_double(tok, line));
  return out;
}

Eigen::MatrixXd parse_matrix(const std::string& text, int line) {
  std::vector<std::vector<double>> rows;
  std::string part;
  std::istringstream iss(text);
  while (std::getline(iss, part, ';')) {
    auto row = parse_row(trim(part), line);
    if (row.empty()) throw ParseError(line, "empty matrix row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(line, "empty matrix literal");
  const std::size_t cols = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != cols)
      throw ParseError(line, "ragged matrix literal (rows of unequal length)");
  Eigen::MatrixXd m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
  return m;
}

// Splits "key@t0:t1" into the key and the optional range.
void parse_key_range(const std::string& raw, int line, std::string& key,
                     bool& ranged, double& t0, double& t1) {
  const auto at = raw.find('@');
  if (at == std::string::npos) {
    key = raw;
    ranged = false;
    return;
  }
  key = trim(raw.substr(0, at));
  const std::string range = raw.substr(at + 1);
  const auto colon = range.find(':');
  if (colon == std::string::npos)
    throw ParseError(line, "expected @t0:t1 range suffix in '" + raw + "'");
  t0 = parse_double(trim(range.substr(0, colon)), line);
  t1 = parse_double(trim(range.substr(colon + 1)), line);
  if (t1 <= t0) throw ParseError(line, "range end must exceed range start");
  ranged = true;
}

RawFile scan(const std::string& text) {
  RawFile raw;
  enum class Section { none, meta, generator, regime, initial };
  Section section = Section::none;
  int section_regime = 0;
  RawFile::GenSection* gen = nullptr;

  std::istringstream stream(text);
  std::string line_text;
  int line = 0;
  while (std::getline(stream, line_text)) {
    ++line;
    const auto hash = line_text.find('#');
    if (hash != std::string::npos) line_text.erase(hash);
    const std::string s = trim(line_text);
    if (s.empty()) continue;

    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(line, "unterminated section header");
      std::string name = trim(s.substr(1, s.size() - 2));
      if (name == "meta") {
        section = Section::meta;
      } else if (name == "generator" || name.rfind("generator@", 0) == 0) {
        section = Section::generator;
        raw.generator_sections.emplace_back();
        gen = &raw.generator_sections.back();
        gen->line = line;
        std::string key;
        parse_key_range(name, line, key, gen->ranged, gen->t0, gen->t1);
      } else if (name.rfind("regime", 0) == 0) {
        section = Section::regime;
        const std::string idx = trim(name.substr(6));
        if (idx.empty()) throw ParseError(line, "regime section needs an index");
        section_regime = static_cast<int>(parse_double(idx, line));
        if (section_regime < 1)
          throw ParseError(line, "regime index must be positive");
        if (static_cast<int>(raw.regime_entries.size()) < section_regime)
          raw.regime_entries.resize(section_regime);
      } else if (name == "initial") {
        section = Section::initial;
      } else {
        throw ParseError(line, "unknown section [" + name + "]");
      }
      continue;
    }

    if (section == Section::generator) {
      gen->rows.push_back(parse_row(s, line));
      continue;
    }

    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ParseError(line, "expected 'key = value'");
    const std::string raw_key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (raw_key.empty() || value.empty())
      throw ParseError(line, "expected 'key = value'");

    switch (section) {
      case Section::meta:
        raw.meta[raw_key] = value;
        raw.meta_lines[raw_key] = line;
        break;
      case Section::regime: {
        RawEntry e;
        e.line = line;
        std::string key;
        parse_key_range(raw_key, line, key, e.ranged, e.t0, e.t1);
        e.value = parse_matrix(value, line);
        raw.regime_entries[section_regime - 1][key].push_back(std::move(e));
        break;
      }
      case Section::initial: {
        RawEntry e;
        e.line = line;
        e.value = parse_matrix(value, line);
        raw.initial[raw_key] = std::move(e);
        break;
      }
      default:
        throw ParseError(line, "key outside any section");
    }
  }
  return raw;
}

double meta_number(const RawFile& raw, const std::string& key) {
  auto it = raw.meta.find(key);
  if (it == raw.meta.end())
    throw ParseError(1, "missing [meta] key '" + key + "'");
  return parse_double(it->second, raw.meta_lines.at(key));
}

// Column-vector targets accept a single-row literal.
Eigen::MatrixXd shape_fixup(Eigen::MatrixXd v, int rows, int cols) {
  if (cols == 1 && v.rows() == 1 && v.cols() == rows) return v.transpose();
  return v;
}

PwcTable build_table(const RawFile& raw, const std::string& key, int D,
                     int rows, int cols, double horizon) {
  PwcTable table;
  for (int regime = 1; regime <= D; ++regime) {
    const auto& entries = raw.regime_entries[regime - 1];
    auto it = entries.find(key);
    if (it == entries.end()) {
      table.add_piece(regime, 0.0, Eigen::MatrixXd::Zero(rows, cols));
      continue;
    }
    const auto& pieces = it->second;
    const bool any_ranged =
        std::any_of(pieces.begin(), pieces.end(),
                    [](const RawEntry& e) { return e.ranged; });
    if (!any_ranged) {
      if (pieces.size() > 1)
        throw ParseError(pieces[1].line,
                         "duplicate key '" + key + "' in regime " +
                             std::to_string(regime));
      table.add_piece(regime, 0.0, shape_fixup(pieces[0].value, rows, cols));
      continue;
    }
    std::vector<RawEntry> sorted = pieces;
    std::sort(sorted.begin(), sorted.end(),
              [](const RawEntry& a, const RawEntry& b) { return a.t0 < b.t0; });
    double cursor = 0.0;
    for (const auto& e : sorted) {
      if (!e.ranged)
        throw ParseError(e.line, "key '" + key +
                                     "' mixes plain and @t0:t1 entries");
      if (std::abs(e.t0 - cursor) > 1e-12 * std::max(1.0, horizon))
        throw ParseError(e.line, "key '" + key + "' pieces leave a gap at t=" +
                                     std::to_string(cursor));
      table.add_piece(regime, e.t0, shape_fixup(e.value, rows, cols));
      cursor = e.t1;
    }
    if (std::abs(cursor - horizon) > 1e-12 * std::max(1.0, horizon))
      throw ParseError(sorted.back().line,
                       "key '" + key + "' pieces do not reach the horizon");
  }
  table.finalize(horizon);
  return table;
}

Generator build_generator(const RawFile& raw, int D, double horizon) {
  if (raw.generator_sections.empty())
    throw ParseError(1, "missing [generator] section");
  std::vector<std::pair<double, Eigen::MatrixXd>> pieces;
  const bool any_ranged = std::any_of(
      raw.generator_sections.begin(), raw.generator_sections.end(),
      [](const auto& g) { return g.ranged; });
  double cursor = 0.0;
  for (const auto& g : raw.generator_sections) {
    if (any_ranged && !g.ranged)
      throw ParseError(g.line, "[generator] mixes plain and ranged sections");
    if (static_cast<int>(g.rows.size()) != D)
      throw ParseError(g.line, "[generator] expects " + std::to_string(D) +
                                   " rows, got " +
                                   std::to_string(g.rows.size()));
    Eigen::MatrixXd rates(D, D);
    for (int i = 0; i < D; ++i) {
      if (static_cast<int>(g.rows[i].size()) != D)
        throw ParseError(g.line, "[generator] row " + std::to_string(i + 1) +
                                     " has wrong length");
      for (int j = 0; j < D; ++j) rates(i, j) = g.rows[i][j];
    }
    if (any_ranged) {
      if (std::abs(g.t0 - cursor) > 1e-12 * std::max(1.0, horizon))
        throw ParseError(g.line, "[generator] pieces leave a gap");
      cursor = g.t1;
    }
    pieces.emplace_back(any_ranged ? g.t0 : 0.0, std::move(rates));
  }
  if (any_ranged && std::abs(cursor - horizon) > 1e-12 * std::max(1.0, horizon))
    throw ParseError(raw.generator_sections.back().line,
                     "[generator] pieces do not reach the horizon");
  if (!any_ranged && raw.generator_sections.size() > 1)
    throw ParseError(raw.generator_sections[1].line,
                     "duplicate [generator] section");
  return Generator(D, std::move(pieces));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_matrix(const Eigen::MatrixXd& m) {
  std::string out;
  // Column vectors serialize as one row; everything else row by row.
  if (m.cols() == 1 && m.rows() > 1) {
    for (int i = 0; i < m.rows(); ++i) {
      if (i) out += ' ';
      out += fmt(m(i, 0));
    }
    return out;
  }
  for (int i = 0; i < m.rows(); ++i) {
    if (i) out += "; ";
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out += ' ';
      out += fmt(m(i, j));
    }
  }
  return out;
}

void emit_table(std::string& out, const std::string& key, const PwcTable& t,
                int regime, double horizon) {
  const auto& pieces = t.regime_pieces(regime);
  if (pieces.size() == 1) {
    out += key + " = " + fmt_matrix(pieces[0].second) + "\n";
    return;
  }
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const double t0 = pieces[k].first;
    const double t1 = (k + 1 < pieces.size()) ? pieces[k + 1].first : horizon;
    out += key + "@" + fmt(t0) + ":" + fmt(t1) + " = " +
           fmt_matrix(pieces[k].second) + "\n";
  }
}

}  // namespace

ProblemData load_problem(const std::string& text) {
  RawFile raw = scan(text);

  ProblemData p;
  p.horizon = meta_number(raw, "T");
  p.n = static_cast<int>(meta_number(raw, "n"));
  p.m1 = static_cast<int>(meta_number(raw, "m1"));
  p.m2 = static_cast<int>(meta_number(raw, "m2"));
  p.num_regimes = static_cast<int>(meta_number(raw, "D"));
  if (raw.meta.count("grid_steps"))
    p.grid_steps = static_cast<int>(meta_number(raw, "grid_steps"));
  if (raw.meta.count("kind")) {
    const std::string kind = raw.meta.at("kind");
    if (kind == "primal")
      p.kind = ProblemData::Kind::primal;
    else if (kind == "reduced")
      p.kind = ProblemData::Kind::reduced;
    else
      throw ParseError(raw.meta_lines.at("kind"),
                       "kind must be 'primal' or 'reduced'");
  }

  const int D = p.num_regimes;
  if (static_cast<int>(raw.regime_entries.size()) > D)
    throw ParseError(1, "regime section index exceeds D");
  raw.regime_entries.resize(D);

  p.generator = build_generator(raw, D, p.horizon);

  const int n = p.n, m1 = p.m1, m2 = p.m2;
  if (p.kind == ProblemData::Kind::primal) {
    p.A = build_table(raw, "A", D, n, n, p.horizon);
    p.B1 = build_table(raw, "B1", D, n, m1, p.horizon);
    p.B2 = build_table(raw, "B2", D, n, m2, p.horizon);
    p.C = build_table(raw, "C", D, n, n, p.horizon);
    p.D1 = build_table(raw, "D1", D, n, m1, p.horizon);
    p.D2 = build_table(raw, "D2", D, n, m2, p.horizon);
    p.b = build_table(raw, "b", D, n, 1, p.horizon);
    p.sigma = build_table(raw, "sigma", D, n, 1, p.horizon);
    p.Q = build_table(raw, "Q", D, n, n, p.horizon);
    p.R1 = build_table(raw, "R1", D, m1, m1, p.horizon);
    p.R2 = build_table(raw, "R2", D, m2, m2, p.horizon);
  } else {
    p.Ahat = build_table(raw, "Ahat", D, n, n, p.horizon);
    p.Chat = build_table(raw, "Chat", D, n, n, p.horizon);
    p.Hhat = build_table(raw, "Hhat", D, n, m2, p.horizon);
    p.G = build_table(raw, "G", D, n, n, p.horizon);
    p.S1 = build_table(raw, "S1", D, n, n, p.horizon);
    p.S2 = build_table(raw, "S2", D, m2, n, p.horizon);
    p.T11 = build_table(raw, "T11", D, n, n, p.horizon);
    p.T12 = build_table(raw, "T12", D, n, m2, p.horizon);
    p.T22 = build_table(raw, "T22", D, m2, m2, p.horizon);
    p.q = build_table(raw, "q", D, n, 1, p.horizon);
    p.rho1 = build_table(raw, "rho1", D, n, 1, p.horizon);
    p.rho2 = build_table(raw, "rho2", D, m2, 1, p.horizon);
    p.fhat = build_table(raw, "fhat", D, n, 1, p.horizon);
  }

  p.M.assign(D, Eigen::MatrixXd::Zero(n, n));
  p.m_term.assign(D, Eigen::VectorXd::Zero(n));
  for (int regime = 1; regime <= D; ++regime) {
    const auto& entries = raw.regime_entries[regime - 1];
    if (auto it = entries.find("M"); it != entries.end()) {
      if (it->second.size() != 1 || it->second[0].ranged)
        throw ParseError(it->second[0].line,
                         "terminal weight M cannot be time-ranged");
      p.M[regime - 1] = shape_fixup(it->second[0].value, n, n);
    }
    if (auto it = entries.find("m"); it != entries.end()) {
      if (it->second.size() != 1 || it->second[0].ranged)
        throw ParseError(it->second[0].line,
                         "terminal term m cannot be time-ranged");
      p.m_term[regime - 1] = shape_fixup(it->second[0].value, n, 1);
    }
  }

  p.x0 = Eigen::VectorXd::Zero(n);
  if (auto it = raw.initial.find("x"); it != raw.initial.end())
    p.x0 = shape_fixup(it->second.value, n, 1);
  if (auto it = raw.initial.find("i"); it != raw.initial.end()) {
    if (it->second.value.size() != 1)
      throw ParseError(it->second.line, "initial regime i must be a scalar");
    p.i0 = static_cast<int>(it->second.value(0, 0));
  }

  p.validate();
  return p;
}

ProblemData load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError(0, "cannot open problem file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_problem(ss.str());
}

std::string serialize_problem(const ProblemData& p) {
  std::string out;
  out += "[meta]\n";
  out += "T = " + fmt(p.horizon) + "\n";
  out += "n = " + std::to_string(p.n) + "\n";
  out += "m1 = " + std::to_string(p.m1) + "\n";
  out += "m2 = " + std::to_string(p.m2) + "\n";
  out += "D = " + std::to_string(p.num_regimes) + "\n";
  out += "grid_steps = " + std::to_string(p.grid_steps) + "\n";
  out += std::string("kind = ") +
         (p.is_reduced() ? "reduced" : "primal") + "\n\n";

  const auto& gp = p.generator.pieces();
  for (std::size_t k = 0; k < gp.size(); ++k) {
    if (gp.size() == 1) {
      out += "[generator]\n";
    } else {
      const double t0 = gp[k].first;
      const double t1 = (k + 1 < gp.size()) ? gp[k + 1].first : p.horizon;
      out += "[generator@" + fmt(t0) + ":" + fmt(t1) + "]\n";
    }
    for (int i = 0; i < p.num_regimes; ++i) {
      for (int j = 0; j < p.num_regimes; ++j) {
        if (j) out += ' ';
        out += fmt(gp[k].second(i, j));
      }
      out += '\n';
    }
  }
  out += '\n';

  for (int regime = 1; regime <= p.num_regimes; ++regime) {
    out += "[regime " + std::to_string(regime) + "]\n";
    if (!p.is_reduced()) {
      emit_table(out, "A", p.A, regime, p.horizon);
      emit_table(out, "B1", p.B1, regime, p.horizon);
      emit_table(out, "B2", p.B2, regime, p.horizon);
      emit_table(out, "C", p.C, regime, p.horizon);
      emit_table(out, "D1", p.D1, regime, p.horizon);
      emit_table(out, "D2", p.D2, regime, p.horizon);
      emit_table(out, "b", p.b, regime, p.horizon);
      emit_table(out, "sigma", p.sigma, regime, p.horizon);
      emit_table(out, "Q", p.Q, regime, p.horizon);
      emit_table(out, "R1", p.R1, regime, p.horizon);
      emit_table(out, "R2", p.R2, regime, p.horizon);
      out += "M = " + fmt_matrix(p.M[regime - 1]) + "\n";
    } else {
      emit_table(out, "Ahat", p.Ahat, regime, p.horizon);
      emit_table(out, "Chat", p.Chat, regime, p.horizon);
      emit_table(out, "Hhat", p.Hhat, regime, p.horizon);
      emit_table(out, "G", p.G, regime, p.horizon);
      emit_table(out, "S1", p.S1, regime, p.horizon);
      emit_table(out, "S2", p.S2, regime, p.horizon);
      emit_table(out, "T11", p.T11, regime, p.horizon);
      emit_table(out, "T12", p.T12, regime, p.horizon);
      emit_table(out, "T22", p.T22, regime, p.horizon);
      emit_table(out, "q", p.q, regime, p.horizon);
      emit_table(out, "rho1", p.rho1, regime, p.horizon);
      emit_table(out, "rho2", p.rho2, regime, p.horizon);
      emit_table(out, "fhat", p.fhat, regime, p.horizon);
    }
    out += "m = " + fmt_matrix(p.m_term[regime - 1]) + "\n\n";
  }

  out += "[initial]\n";
  out += "x = " + fmt_matrix(p.x0) + "\n";
  out += "i = " + std::to_string(p.i0) + "\n";
  return out;
}

}  // namespace rslq
