#include "visim/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace visim {

namespace {

[[noreturn]] void parse_fail(const std::string& origin, int line, const std::string& what) {
  std::ostringstream msg;
  msg << origin << ":" << line << ": " << what;
  throw std::runtime_error(msg.str());
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// strip a # comment that is outside of any quoted string
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

std::vector<std::string> split_dotted(const std::string& key, const std::string& origin,
                                      int line) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key) {
    if (c == '.') {
      if (cur.empty()) parse_fail(origin, line, "empty key segment in '" + key + "'");
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (trim(cur).empty()) parse_fail(origin, line, "empty key segment in '" + key + "'");
  parts.push_back(trim(cur));
  return parts;
}

nlohmann::json parse_scalar(const std::string& raw, const std::string& origin, int line) {
  const std::string v = trim(raw);
  if (v.empty()) parse_fail(origin, line, "missing value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      parse_fail(origin, line, "unterminated string " + v);
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        ++i;
        switch (v[i]) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: parse_fail(origin, line, std::string("unknown escape \\") + v[i]);
        }
      } else {
        out += v[i];
      }
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  // number: integer when it parses fully without . e E
  const bool looks_float = v.find_first_of(".eE") != std::string::npos;
  try {
    std::size_t used = 0;
    if (!looks_float) {
      const long long i = std::stoll(v, &used);
      if (used == v.size()) return i;
    }
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
    // fall through to failure below
  }
  parse_fail(origin, line, "cannot parse value '" + v + "'");
}

nlohmann::json parse_value(const std::string& raw, const std::string& origin, int line) {
  const std::string v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') parse_fail(origin, line, "unterminated array " + v);
    nlohmann::json arr = nlohmann::json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::string cur;
    bool in_string = false;
    for (std::size_t i = 0; i < inner.size(); ++i) {
      const char c = inner[i];
      if (c == '"' && (i == 0 || inner[i - 1] != '\\')) in_string = !in_string;
      if (c == ',' && !in_string) {
        arr.push_back(parse_scalar(cur, origin, line));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) arr.push_back(parse_scalar(cur, origin, line));
    return arr;
  }
  return parse_scalar(v, origin, line);
}

void insert_path(nlohmann::json& root, const std::vector<std::string>& path,
                 nlohmann::json value, const std::string& origin, int line) {
  nlohmann::json* cursor = &root;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    nlohmann::json& next = (*cursor)[path[i]];
    if (!next.is_object() && !next.is_null())
      parse_fail(origin, line, "key '" + path[i] + "' is both a value and a table");
    cursor = &next;
  }
  if (!(*cursor)[path.back()].is_null())
    parse_fail(origin, line, "duplicate key '" + path.back() + "'");
  (*cursor)[path.back()] = std::move(value);
}

}  // namespace

nlohmann::json parse_toml_subset(const std::string& text, const std::string& origin) {
  nlohmann::json root = nlohmann::json::object();
  std::vector<std::string> section;
  std::istringstream stream(text);
  std::string raw_line;
  int line_no = 0;
  while (std::getline(stream, raw_line)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        parse_fail(origin, line_no, "unterminated table header " + line);
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) parse_fail(origin, line_no, "empty table name");
      section = split_dotted(name, origin, line_no);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      parse_fail(origin, line_no, "expected key = value, got '" + line + "'");
    std::vector<std::string> path = section;
    for (auto& part : split_dotted(trim(line.substr(0, eq)), origin, line_no))
      path.push_back(part);
    insert_path(root, path, parse_value(line.substr(eq + 1), origin, line_no), origin,
                line_no);
  }
  return root;
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    try {
      return nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path.string() + ": " + e.what());
    }
  }
  if (ext == ".toml") return parse_toml_subset(buffer.str(), path.string());
  throw std::runtime_error("config file " + path.string() +
                           " must end in .json or .toml");
}

nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides) {
  if (!overrides.is_object() || !base.is_object()) return overrides;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it->is_object()) {
      base[it.key()] = merge_config(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
  return base;
}

}  // namespace visim
