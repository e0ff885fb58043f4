#include "lfd/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <sstream>

#include "lfd/error.hpp"

namespace lfd {
namespace {

void flatten(const boost::property_tree::ptree& tree, const std::string& prefix,
             std::map<std::string, std::string>& out) {
  for (const auto& [key, child] : tree) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (child.empty()) {
      out[full] = child.data();
    } else {
      flatten(child, full, out);
    }
  }
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  ConfigFile cfg;
  flatten(tree, "", cfg.values_);
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ConfigFile cfg = parse(ss.str());
  cfg.source_ = path;
  return cfg;
}

bool ConfigFile::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigError, "key '" + key + "' is not a number: " + it->second);
  }
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    // Accept 1e6-style values as long as they are integral.
    double v = std::stod(it->second);
    auto iv = static_cast<long long>(v);
    if (static_cast<double>(iv) != v) throw std::invalid_argument("not integral");
    return iv;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigError, "key '" + key + "' is not an integer: " + it->second);
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::kConfigError, "key '" + key + "' is not a boolean: " + v);
}

std::vector<double> ConfigFile::get_doubles(const std::string& key,
                                            std::vector<double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string text = it->second;
  for (char& c : text) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(text);
  std::vector<double> out;
  double v = 0.0;
  while (in >> v) out.push_back(v);
  if (!in.eof()) {
    throw Error(ErrorCode::kConfigError, "key '" + key + "' is not a number list: " + it->second);
  }
  return out;
}

}  // namespace lfd
