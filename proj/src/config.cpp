#include "pararec/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pararec/errors.hpp"

namespace pararec {

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(std::stoi(item));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string int_list_str(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

// "2x2,2x1" -> {{2,2},{2,1}}
std::vector<Stride> parse_stride_list(const std::string& s) {
  std::vector<Stride> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos)
      throw std::invalid_argument("stride entry '" + item + "' needs VxH form");
    out.push_back({std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1))});
  }
  if (out.empty()) throw std::invalid_argument("empty stride list");
  return out;
}

std::string stride_list_str(const std::vector<Stride>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i].first) + "x" + std::to_string(v[i].second);
  }
  return s;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + s + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "seed") seed = std::stoull(value);
    else if (key == "precision") precision = value;
    else if (key == "iterations") iterations = std::stoi(value);
    else if (key == "learning_rate") learning_rate = std::stod(value);
    else if (key == "optimizer") optimizer = value;
    else if (key == "batch_size") batch_size = std::stoi(value);
    else if (key == "lambda") lambda = std::stod(value);
    else if (key == "max_line_length") max_line_length = std::stoi(value);
    else if (key == "hidden_size") hidden_size = std::stoi(value);
    else if (key == "att_dim") att_dim = std::stoi(value);
    else if (key == "cov_channels") cov_channels = std::stoi(value);
    else if (key == "cov_kernel") cov_kernel = std::stoi(value);
    else if (key == "cb_channels") cb_channels = parse_int_list(value);
    else if (key == "cb_strides") cb_strides = parse_stride_list(value);
    else if (key == "dscb_channels") dscb_channels = parse_int_list(value);
    else if (key == "gated_placement") gated_placement = value;
    else if (key == "gated_norm") gated_norm = parse_bool(value);
    else if (key == "dropout_prob") dropout_prob = std::stod(value);
    else if (key == "dropout_mix") dropout_mix = std::stod(value);
    else if (key == "dropout") dropout = parse_bool(value);
    else if (key == "augment") augment = parse_bool(value);
    else if (key == "augment_prob") augment_prob = std::stod(value);
    else if (key == "beam_width") beam_width = std::stoi(value);
    else if (key == "wbs_mode") wbs_mode = value;
    else if (key == "pretrain_iterations") pretrain_iterations = std::stoi(value);
    else if (key == "log_file") log_file = value;
    else if (key == "target_height") target_height = std::stoi(value);
    else if (key == "target_width") target_width = std::stoi(value);
    else throw DataError("unknown config key '" + key + "'");
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("bad value for config key '" + key + "': " + e.what());
  }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file " + path.string());
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected key=value, got '" + line + "'");
    try {
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "seed=" << seed << "\n";
  os << "precision=" << precision << "\n";
  os << "iterations=" << iterations << "\n";
  os << "learning_rate=" << learning_rate << "\n";
  os << "optimizer=" << optimizer << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "lambda=" << lambda << "\n";
  os << "max_line_length=" << max_line_length << "\n";
  os << "hidden_size=" << hidden_size << "\n";
  os << "att_dim=" << att_dim << "\n";
  os << "cov_channels=" << cov_channels << "\n";
  os << "cov_kernel=" << cov_kernel << "\n";
  os << "cb_channels=" << int_list_str(cb_channels) << "\n";
  os << "cb_strides=" << stride_list_str(cb_strides) << "\n";
  os << "dscb_channels=" << int_list_str(dscb_channels) << "\n";
  os << "gated_placement=" << gated_placement << "\n";
  os << "gated_norm=" << (gated_norm ? "true" : "false") << "\n";
  os << "dropout_prob=" << dropout_prob << "\n";
  os << "dropout_mix=" << dropout_mix << "\n";
  os << "dropout=" << (dropout ? "true" : "false") << "\n";
  os << "augment=" << (augment ? "true" : "false") << "\n";
  os << "augment_prob=" << augment_prob << "\n";
  os << "beam_width=" << beam_width << "\n";
  os << "wbs_mode=" << wbs_mode << "\n";
  os << "pretrain_iterations=" << pretrain_iterations << "\n";
  os << "log_file=" << log_file << "\n";
  os << "target_height=" << target_height << "\n";
  os << "target_width=" << target_width << "\n";
  return os.str();
}

RunConfig RunConfig::deserialize(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config blob: expected key=value, got '" + line + "'");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig e;
  e.cb_channels = cb_channels;
  e.cb_strides = cb_strides;
  e.dscb_channels = dscb_channels;
  if (gated_placement == "early") e.gated_placement = GatedPlacement::early;
  else if (gated_placement == "late") e.gated_placement = GatedPlacement::late;
  else if (gated_placement == "none") e.gated_placement = GatedPlacement::none;
  else throw DataError("gated_placement must be early|late|none, got '" +
                       gated_placement + "'");
  e.norm_after_gated = gated_norm;
  e.dropout_prob = dropout_prob;
  e.dropout_elementwise_share = dropout_mix;
  return e;
}

AttentionConfig RunConfig::attention_config() const {
  AttentionConfig a;
  a.att_dim = att_dim;
  a.coverage_channels = cov_channels;
  a.coverage_kernel = cov_kernel;
  return a;
}

void RunConfig::validate() const {
  if (precision != "f32" && precision != "f64")
    throw DataError("precision must be f32 or f64, got '" + precision + "'");
  if (optimizer != "sgd" && optimizer != "adam")
    throw DataError("optimizer must be sgd or adam, got '" + optimizer + "'");
  if (wbs_mode != "words" && wbs_mode != "ngrams")
    throw DataError("wbs_mode must be words or ngrams, got '" + wbs_mode + "'");
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  if (max_line_length < 1) throw DataError("max_line_length must be >= 1");
  if (beam_width < 1) throw DataError("beam_width must be >= 1");
  if (!(lambda >= 0)) throw DataError("lambda must be >= 0");
  encoder_config().validate();
}

}  // namespace pararec
