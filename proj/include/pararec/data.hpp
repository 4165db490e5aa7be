#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pararec/param.hpp"
#include "pararec/tensor.hpp"

namespace pararec {

struct ParagraphSample {
  Tensor image;                    // [1,H,W], values in [0,1]
  std::vector<std::string> lines;  // UTF-8, reading order
  std::string id;
};

struct DatasetManifest {
  std::u32string alphabet;  // ordered; class indices 0..N-1, blank excluded
  int height = 64;
  int width = 256;
  std::uint64_t seed = 0;
  std::map<std::string, int> splits;

  void save(const std::filesystem::path& dir) const;
  static DatasetManifest load(const std::filesystem::path& dir);
};

struct SynthConfig {
  std::uint64_t seed = 7;
  std::map<std::string, int> splits{{"train", 10}, {"test", 5}};
  int min_lines = 1, max_lines = 3;
  int min_words = 2, max_words = 3;
  int height = 64, width = 256;
  int glyph_scale = 2;
  std::u32string charset = U"abcdefghijklmnopqrstuvwxyz ";
  std::vector<std::string> vocabulary;  // defaults to a small word list
};

// Renders paragraphs of random vocabulary words with a built-in 5x7 glyph
// font, one directory per split (NNNN.pgm + NNNN.txt), plus the manifest.
// Deterministic per seed.
void synthesize(const std::filesystem::path& dir, const SynthConfig& cfg);

std::vector<ParagraphSample> load_split(const std::filesystem::path& dir,
                                        const std::string& split);

// Characters the built-in font can draw.
const std::set<char32_t>& renderable_glyphs();

// Rendering building block, exposed for tests: draws jittered text lines
// into a fresh [1,h,w] image, intensities quantized to 8-bit levels.
Tensor render_paragraph(const std::vector<std::string>& lines, int h, int w,
                        int glyph_scale, Rng& rng);

// Aspect-preserving bilinear scale into the target box, then zero-pad
// bottom/right to exactly [1,target_h,target_w].
Tensor preprocess(const Tensor& image, int target_h, int target_w);

Tensor bilinear_resize(const Tensor& image, int out_h, int out_w);

struct AugmentConfig {
  real prob = 0.2;  // independent application chance per transform
};

// Fixed transform order: resolution rescale, perspective warp, dilation,
// erosion, brightness, contrast. Output clipped to [0,1]. Train-time only.
Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& cfg);

void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm(const std::filesystem::path& path);

// Label ids under a dataset alphabet.
std::vector<int> encode_text(const std::u32string& alphabet,
                             const std::string& utf8_line);
std::string decode_labels(const std::u32string& alphabet,
                          const std::vector<int>& labels);

}  // namespace pararec
