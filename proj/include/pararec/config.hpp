#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pararec/attention.hpp"
#include "pararec/encoder.hpp"

namespace pararec {

// Flat run configuration. Every key has a default; parsing rejects unknown
// keys and names the offending key and line.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string precision = "f64";  // checkpoint blob width: f32 | f64
  int iterations = 1000;
  real learning_rate = 0.01;
  std::string optimizer = "sgd";  // sgd | adam
  int batch_size = 1;
  real lambda = 1.0;
  int max_line_length = 30;
  int hidden_size = 64;
  int att_dim = 32;
  int cov_channels = 8;
  int cov_kernel = 7;
  std::vector<int> cb_channels{8, 16, 32, 64};
  std::vector<Stride> cb_strides{{2, 2}, {2, 2}, {2, 1}, {1, 1}};
  std::vector<int> dscb_channels{64, 64};
  std::string gated_placement = "early";  // early | late | none
  bool gated_norm = false;
  real dropout_prob = 0.25;
  real dropout_mix = 0.5;
  bool dropout = true;
  bool augment = false;
  real augment_prob = 0.2;
  int beam_width = 50;
  std::string wbs_mode = "ngrams";  // words | ngrams
  int pretrain_iterations = 500;
  std::string log_file;
  // Geometry images are preprocessed to; recorded in the checkpoint.
  int target_height = 64;
  int target_width = 256;

  // Applies one key=value assignment; throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  static RunConfig from_file(const std::filesystem::path& path);
  std::string serialize() const;
  static RunConfig deserialize(const std::string& text);

  EncoderConfig encoder_config() const;
  AttentionConfig attention_config() const;
  void validate() const;
};

}  // namespace pararec
