#pragma once

// Plain comma-separated files: rating triples in, embedding tables in and out.
// Fields are unquoted; ids and group labels must not contain commas.

#include "expogame/core.hpp"
#include "expogame/io/files.hpp"
#include "expogame/mf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace expogame::io {

/// Error raised for malformed input, carrying the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos
                                                                             : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return v;
}

inline bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

/// Sorted unique ids: numeric order when every id is an integer, byte order otherwise.
inline std::vector<std::string> sorted_ids(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const bool numeric = std::all_of(ids.begin(), ids.end(), [](const auto& s) {
    return is_integer(s) && s.size() < 19;
  });
  if (numeric) {
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  }
  return ids;
}

struct Lines {
  std::vector<std::pair<std::size_t, std::string>> rows;  // (line number, text)
  std::vector<std::string> header;
  std::size_t header_line = 0;
};

inline Lines read_lines(const std::string& text, const std::string& name) {
  Lines out;
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line(text.data() + pos,
                                (nl == std::string::npos ? text.size() : nl) - pos);
    ++lineno;
    if (!trim(line).empty()) {
      if (out.header.empty()) {
        out.header = split_fields(line);
        out.header_line = lineno;
      } else {
        out.rows.emplace_back(lineno, std::string(line));
      }
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  if (out.header.empty()) throw ParseError(name, 1, "file is empty");
  return out;
}

inline std::optional<std::size_t> column(const std::vector<std::string>& header,
                                         const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

/// Records a per-entity label and rejects a conflicting one.
inline void set_group(std::map<std::string, std::string>& groups, const std::string& id,
                      const std::string& g, const std::string& what, const std::string& name,
                      std::size_t line) {
  const auto [it, fresh] = groups.emplace(id, g);
  if (!fresh && it->second != g) {
    throw ParseError(name, line,
                     what + " " + id + " has conflicting groups '" + it->second + "' and '" +
                         g + "'");
  }
}

}  // namespace detail

/// Parses `user_id,item_id,rating[,user_group][,item_group]` (columns located
/// by header name). Ids map to dense indices in sorted order. `lines`, when
/// given, receives the source line of each rating.
inline RatingsDataset parse_ratings_csv(const std::string& text,
                                        const std::string& name = "ratings",
                                        std::vector<std::size_t>* lines_out = nullptr) {
  const auto lines = detail::read_lines(text, name);
  const auto cu = detail::column(lines.header, "user_id");
  const auto ci = detail::column(lines.header, "item_id");
  const auto cr = detail::column(lines.header, "rating");
  if (!cu || !ci || !cr) {
    throw ParseError(name, lines.header_line,
                     "header must contain user_id, item_id and rating columns");
  }
  const auto cug = detail::column(lines.header, "user_group");
  const auto cig = detail::column(lines.header, "item_group");

  struct Raw {
    std::string user, item;
    double value;
  };
  std::vector<Raw> raw;
  if (lines_out) lines_out->clear();
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::map<std::string, std::string> ugroups;
  std::map<std::string, std::string> igroups;
  for (const auto& [lineno, line] : lines.rows) {
    const auto f = detail::split_fields(line);
    if (f.size() != lines.header.size()) {
      throw ParseError(name, lineno,
                       "expected " + std::to_string(lines.header.size()) + " fields, got " +
                           std::to_string(f.size()));
    }
    const auto v = detail::parse_double(f[*cr]);
    if (!v || !std::isfinite(*v)) throw ParseError(name, lineno, "bad rating '" + f[*cr] + "'");
    if (f[*cu].empty() || f[*ci].empty()) throw ParseError(name, lineno, "empty id");
    raw.push_back({f[*cu], f[*ci], *v});
    if (lines_out) lines_out->push_back(lineno);
    users.push_back(f[*cu]);
    items.push_back(f[*ci]);
    if (cug) detail::set_group(ugroups, f[*cu], f[*cug], "user", name, lineno);
    if (cig) detail::set_group(igroups, f[*ci], f[*cig], "item", name, lineno);
  }
  if (raw.empty()) throw ParseError(name, lines.header_line, "no rating rows");

  RatingsDataset d;
  d.user_ids = detail::sorted_ids(std::move(users));
  d.item_ids = detail::sorted_ids(std::move(items));
  std::map<std::string, Index> uidx;
  std::map<std::string, Index> iidx;
  for (Index u = 0; u < d.users(); ++u) uidx[d.user_ids[static_cast<std::size_t>(u)]] = u;
  for (Index v = 0; v < d.items(); ++v) iidx[d.item_ids[static_cast<std::size_t>(v)]] = v;
  for (const auto& r : raw) d.ratings.push_back({uidx[r.user], iidx[r.item], r.value});
  if (cug) {
    for (const auto& id : d.user_ids) d.user_groups.push_back(ugroups[id]);
  }
  if (cig) {
    for (const auto& id : d.item_ids) d.item_groups.push_back(igroups[id]);
  }
  return d;
}

inline RatingsDataset read_ratings_csv(const fs::path& path,
                                       std::vector<std::size_t>* lines = nullptr) {
  return parse_ratings_csv(read_file(path), path.string(), lines);
}

inline std::string ratings_csv(const RatingsDataset& d) {
  const bool ug = !d.user_groups.empty();
  const bool ig = !d.item_groups.empty();
  std::string out = "user_id,item_id,rating";
  if (ug) out += ",user_group";
  if (ig) out += ",item_group";
  out += '\n';
  for (const auto& r : d.ratings) {
    const auto u = static_cast<std::size_t>(r.user);
    const auto v = static_cast<std::size_t>(r.item);
    out += d.user_ids[u] + "," + d.item_ids[v] + "," + format_double(r.value);
    if (ug) out += "," + d.user_groups[u];
    if (ig) out += "," + d.item_groups[v];
    out += '\n';
  }
  return out;
}

/// One row per entity: id, coordinates, optional group label.
struct EmbeddingTable {
  std::vector<std::string> ids;
  Matrix points;
  std::vector<std::string> groups;

  bool has_groups() const { return !groups.empty(); }
};

inline std::string embeddings_csv(const EmbeddingTable& t) {
  const Index d = t.points.cols();
  std::string out = "id";
  for (Index a = 0; a < d; ++a) out += ",x" + std::to_string(a);
  if (t.has_groups()) out += ",group";
  out += '\n';
  for (Index i = 0; i < t.points.rows(); ++i) {
    const auto ii = static_cast<std::size_t>(i);
    out += t.ids.empty() ? std::to_string(i) : t.ids[ii];
    for (Index a = 0; a < d; ++a) out += "," + format_double(t.points(i, a));
    if (t.has_groups()) out += "," + t.groups[ii];
    out += '\n';
  }
  return out;
}

inline EmbeddingTable parse_embeddings_csv(const std::string& text,
                                           const std::string& name = "embeddings") {
  const auto lines = detail::read_lines(text, name);
  const auto& h = lines.header;
  if (h.empty() || h[0] != "id") throw ParseError(name, lines.header_line, "first column must be id");
  const bool grouped = h.back() == "group";
  const std::size_t d = h.size() - 1 - (grouped ? 1 : 0);
  if (d < 1) throw ParseError(name, lines.header_line, "no coordinate columns");
  for (std::size_t a = 0; a < d; ++a) {
    if (h[a + 1] != "x" + std::to_string(a)) {
      throw ParseError(name, lines.header_line,
                       "expected column x" + std::to_string(a) + ", got '" + h[a + 1] + "'");
    }
  }
  EmbeddingTable t;
  t.points.resize(static_cast<Index>(lines.rows.size()), static_cast<Index>(d));
  Index i = 0;
  for (const auto& [lineno, line] : lines.rows) {
    const auto f = detail::split_fields(line);
    if (f.size() != h.size()) {
      throw ParseError(name, lineno,
                       "expected " + std::to_string(h.size()) + " fields, got " +
                           std::to_string(f.size()));
    }
    t.ids.push_back(f[0]);
    for (std::size_t a = 0; a < d; ++a) {
      const auto v = detail::parse_double(f[a + 1]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(name, lineno, "bad coordinate '" + f[a + 1] + "'");
      }
      t.points(i, static_cast<Index>(a)) = *v;
    }
    if (grouped) t.groups.push_back(f.back());
    ++i;
  }
  if (t.points.rows() == 0) throw ParseError(name, lines.header_line, "no rows");
  return t;
}

inline EmbeddingTable read_embeddings_csv(const fs::path& path) {
  return parse_embeddings_csv(read_file(path), path.string());
}

}  // namespace expogame::io
