#include "pararec/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pararec/errors.hpp"
#include "pararec/text.hpp"

namespace pararec {

namespace {

// 5x7 dot-matrix glyphs, one string per row, 'X' marks ink.
struct Glyph {
  char32_t ch;
  const char* rows[7];
};

const Glyph kFont[] = {
    {U' ', {".....", ".....", ".....", ".....", ".....", ".....", "....."}},
    {U'a', {".....", ".....", ".XXX.", "....X", ".XXXX", "X...X", ".XXXX"}},
    {U'b', {"X....", "X....", "X.XX.", "XX..X", "X...X", "X...X", "XXXX."}},
    {U'c', {".....", ".....", ".XXX.", "X....", "X....", "X...X", ".XXX."}},
    {U'd', {"....X", "....X", ".XX.X", "X..XX", "X...X", "X...X", ".XXXX"}},
    {U'e', {".....", ".....", ".XXX.", "X...X", "XXXXX", "X....", ".XXX."}},
    {U'f', {"..XX.", ".X..X", ".X...", "XXX..", ".X...", ".X...", ".X..."}},
    {U'g', {".....", ".XXXX", "X...X", "X...X", ".XXXX", "....X", ".XXX."}},
    {U'h', {"X....", "X....", "X.XX.", "XX..X", "X...X", "X...X", "X...X"}},
    {U'i', {"..X..", ".....", ".XX..", "..X..", "..X..", "..X..", ".XXX."}},
    {U'j', {"...X.", ".....", "..XX.", "...X.", "...X.", "X..X.", ".XX.."}},
    {U'k', {"X....", "X....", "X..X.", "X.X..", "XX...", "X.X..", "X..X."}},
    {U'l', {".XX..", "..X..", "..X..", "..X..", "..X..", "..X..", ".XXX."}},
    {U'm', {".....", ".....", "XX.X.", "X.X.X", "X.X.X", "X.X.X", "X.X.X"}},
    {U'n', {".....", ".....", "X.XX.", "XX..X", "X...X", "X...X", "X...X"}},
    {U'o', {".....", ".....", ".XXX.", "X...X", "X...X", "X...X", ".XXX."}},
    {U'p', {".....", ".....", "XXXX.", "X...X", "XXXX.", "X....", "X...."}},
    {U'q', {".....", ".....", ".XX.X", "X..XX", ".XXXX", "....X", "....X"}},
    {U'r', {".....", ".....", "X.XX.", "XX..X", "X....", "X....", "X...."}},
    {U's', {".....", ".....", ".XXX.", "X....", ".XXX.", "....X", "XXXX."}},
    {U't', {".X...", ".X...", "XXX..", ".X...", ".X...", ".X..X", "..XX."}},
    {U'u', {".....", ".....", "X...X", "X...X", "X...X", "X..XX", ".XX.X"}},
    {U'v', {".....", ".....", "X...X", "X...X", "X...X", ".X.X.", "..X.."}},
    {U'w', {".....", ".....", "X...X", "X...X", "X.X.X", "X.X.X", ".X.X."}},
    {U'x', {".....", ".....", "X...X", ".X.X.", "..X..", ".X.X.", "X...X"}},
    {U'y', {".....", ".....", "X...X", "X...X", ".XXXX", "....X", ".XXX."}},
    {U'z', {".....", ".....", "XXXXX", "...X.", "..X..", ".X...", "XXXXX"}},
    {U'0', {".XXX.", "X...X", "X..XX", "X.X.X", "XX..X", "X...X", ".XXX."}},
    {U'1', {"..X..", ".XX..", "..X..", "..X..", "..X..", "..X..", ".XXX."}},
    {U'2', {".XXX.", "X...X", "....X", "...X.", "..X..", ".X...", "XXXXX"}},
    {U'3', {"XXXXX", "...X.", "..X..", "...X.", "....X", "X...X", ".XXX."}},
    {U'4', {"...X.", "..XX.", ".X.X.", "X..X.", "XXXXX", "...X.", "...X."}},
    {U'5', {"XXXXX", "X....", "XXXX.", "....X", "....X", "X...X", ".XXX."}},
    {U'6', {"..XX.", ".X...", "X....", "XXXX.", "X...X", "X...X", ".XXX."}},
    {U'7', {"XXXXX", "....X", "...X.", "..X..", ".X...", ".X...", ".X..."}},
    {U'8', {".XXX.", "X...X", "X...X", ".XXX.", "X...X", "X...X", ".XXX."}},
    {U'9', {".XXX.", "X...X", "X...X", ".XXXX", "....X", "...X.", ".XX.."}},
    {U'.', {".....", ".....", ".....", ".....", ".....", ".XX..", ".XX.."}},
    {U',', {".....", ".....", ".....", ".....", ".XX..", "..X..", ".X..."}},
    {U'\'', {".XX..", "..X..", ".X...", ".....", ".....", ".....", "....."}},
    {U'-', {".....", ".....", ".....", "XXXXX", ".....", ".....", "....."}},
};

const Glyph* find_glyph(char32_t c) {
  for (const Glyph& g : kFont)
    if (g.ch == c) return &g;
  return nullptr;
}

constexpr int kGlyphW = 5, kGlyphH = 7;
constexpr int kAdvance = 6;   // glyph width + 1 column gap
constexpr int kLeading = 3;   // rows between lines
constexpr int kMargin = 4;

real quantize8(real v) {
  const real q = std::round(std::clamp(v, real(0), real(1)) * 255) / 255;
  return q;
}

const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> words = {
      "the", "and", "cat", "dog", "sun", "sky", "red", "pen", "ink",
      "top", "hat", "map", "net", "owl", "fox", "arm", "leg", "sea",
      "run", "big", "old", "new", "day", "eye", "cup", "toy", "war",
      "zip", "quo", "jam"};
  return words;
}

}  // namespace

const std::set<char32_t>& renderable_glyphs() {
  static const std::set<char32_t> glyphs = [] {
    std::set<char32_t> s;
    for (const Glyph& g : kFont) s.insert(g.ch);
    return s;
  }();
  return glyphs;
}

Tensor render_paragraph(const std::vector<std::string>& lines, int h, int w,
                        int glyph_scale, Rng& rng) {
  Tensor img({1, h, w});
  std::uniform_int_distribution<int> line_jitter(-2, 2);
  std::uniform_int_distribution<int> char_jitter(-1, 1);
  std::uniform_real_distribution<real> ink(0.9, 1.0);

  const int pitch = (kGlyphH + kLeading) * glyph_scale;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::u32string text = utf8_decode(lines[li]);
    const int base_y = kMargin + static_cast<int>(li) * pitch + line_jitter(rng);
    int pen_x = kMargin;
    for (char32_t c : text) {
      const Glyph* g = find_glyph(c);
      if (!g)
        throw DataError("render: no glyph for U+" +
                        std::to_string(static_cast<unsigned>(c)));
      const int dy = char_jitter(rng);
      const real intensity = ink(rng);
      for (int ry = 0; ry < kGlyphH; ++ry) {
        for (int rx = 0; rx < kGlyphW; ++rx) {
          if (g->rows[ry][rx] != 'X') continue;
          for (int sy = 0; sy < glyph_scale; ++sy)
            for (int sx = 0; sx < glyph_scale; ++sx) {
              const int y = base_y + dy + ry * glyph_scale + sy;
              const int x = pen_x + rx * glyph_scale + sx;
              if (y < 0 || y >= h || x < 0 || x >= w) continue;
              img.at(0, y, x) = std::max(img.at(0, y, x), intensity);
            }
        }
      }
      pen_x += kAdvance * glyph_scale;
    }
  }
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = quantize8(img[i]);
  return img;
}

// --------------------------------------------------------------- manifest

namespace {

std::string escape_alphabet(const std::u32string& alphabet) {
  std::string out;
  for (char32_t c : alphabet) {
    if (c == U' ')
      out += "\\s";
    else if (c == U'\\')
      out += "\\\\";
    else
      out += utf8_encode(std::u32string(1, c));
  }
  return out;
}

std::u32string unescape_alphabet(const std::string& s) {
  std::u32string decoded = utf8_decode(s);
  std::u32string out;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    if (decoded[i] == U'\\' && i + 1 < decoded.size()) {
      ++i;
      out.push_back(decoded[i] == U's' ? U' ' : decoded[i]);
    } else {
      out.push_back(decoded[i]);
    }
  }
  return out;
}

}  // namespace

void DatasetManifest::save(const std::filesystem::path& dir) const {
  std::ofstream f(dir / "manifest.txt");
  if (!f) throw DataError("cannot write manifest in " + dir.string());
  f << "alphabet=" << escape_alphabet(alphabet) << "\n";
  f << "height=" << height << "\n";
  f << "width=" << width << "\n";
  f << "seed=" << seed << "\n";
  f << "splits=";
  bool first = true;
  for (const auto& [name, count] : splits) {
    if (!first) f << ",";
    f << name << ":" << count;
    first = false;
  }
  f << "\n";
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.txt");
  if (!f) throw DataError("cannot read manifest in " + dir.string());
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("manifest line " + std::to_string(lineno) +
                      ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "alphabet") {
      m.alphabet = unescape_alphabet(value);
    } else if (key == "height") {
      m.height = std::stoi(value);
    } else if (key == "width") {
      m.width = std::stoi(value);
    } else if (key == "seed") {
      m.seed = std::stoull(value);
    } else if (key == "splits") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
          throw DataError("manifest line " + std::to_string(lineno) +
                          ": bad split entry '" + item + "'");
        m.splits[item.substr(0, colon)] = std::stoi(item.substr(colon + 1));
      }
    } else {
      throw DataError("manifest line " + std::to_string(lineno) +
                      ": unknown key '" + key + "'");
    }
  }
  std::set<char32_t> seen;
  for (char32_t c : m.alphabet)
    if (!seen.insert(c).second)
      throw DataError("manifest alphabet has duplicate characters");
  return m;
}

// -------------------------------------------------------------------- pgm

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw std::invalid_argument("write_pgm: image must be [1,H,W]");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  const int h = image.dim(1), w = image.dim(2);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const real v = std::clamp(image.at(0, y, x), real(0), real(1));
      row[static_cast<size_t>(x)] =
          static_cast<unsigned char>(std::lround(v * 255));
    }
    f.write(reinterpret_cast<const char*>(row.data()), w);
  }
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P5") throw DataError(path.string() + ": not a binary PGM");
  auto next_int = [&]() {
    int v;
    while (true) {
      f >> std::ws;
      if (f.peek() == '#') {
        std::string comment;
        std::getline(f, comment);
        continue;
      }
      if (!(f >> v)) throw DataError(path.string() + ": bad PGM header");
      return v;
    }
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255)
    throw DataError(path.string() + ": unsupported PGM geometry");
  f.get();  // single whitespace after header
  Tensor img({1, h, w});
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), w);
    if (!f) throw DataError(path.string() + ": truncated PGM data");
    for (int x = 0; x < w; ++x)
      img.at(0, y, x) = static_cast<real>(row[static_cast<size_t>(x)]) / 255;
  }
  return img;
}

// ------------------------------------------------------------- synthesize

void synthesize(const std::filesystem::path& dir, const SynthConfig& cfg) {
  // Every charset character must be drawable before any file is written.
  std::u32string offenders;
  for (char32_t c : cfg.charset)
    if (!renderable_glyphs().count(c)) offenders.push_back(c);
  if (!offenders.empty())
    throw DataError("synthesize: unrenderable characters: '" +
                    utf8_encode(offenders) + "'");
  if (cfg.min_lines < 1 || cfg.max_lines < cfg.min_lines)
    throw std::invalid_argument("synthesize: bad lines_per_paragraph range");

  const std::vector<std::string>& vocab =
      cfg.vocabulary.empty() ? default_vocabulary() : cfg.vocabulary;
  for (const std::string& word : vocab)
    for (char32_t c : utf8_decode(word))
      if (cfg.charset.find(c) == std::u32string::npos)
        throw DataError("synthesize: vocabulary word '" + word +
                        "' uses characters outside the charset");

  std::filesystem::create_directories(dir);
  DatasetManifest manifest;
  manifest.alphabet = cfg.charset;
  manifest.height = cfg.height;
  manifest.width = cfg.width;
  manifest.seed = cfg.seed;
  manifest.splits = cfg.splits;
  manifest.save(dir);

  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> line_count(cfg.min_lines, cfg.max_lines);
  std::uniform_int_distribution<int> word_count(cfg.min_words, cfg.max_words);
  std::uniform_int_distribution<std::size_t> word_pick(0, vocab.size() - 1);

  for (const auto& [split, count] : cfg.splits) {
    const std::filesystem::path split_dir = dir / split;
    std::filesystem::create_directories(split_dir);
    for (int s = 0; s < count; ++s) {
      std::vector<std::string> lines;
      const int n_lines = line_count(rng);
      for (int li = 0; li < n_lines; ++li) {
        std::string line;
        const int n_words = word_count(rng);
        for (int wi = 0; wi < n_words; ++wi) {
          if (wi) line += " ";
          line += vocab[word_pick(rng)];
        }
        lines.push_back(line);
      }
      const Tensor img =
          render_paragraph(lines, cfg.height, cfg.width, cfg.glyph_scale, rng);
      char name[16];
      std::snprintf(name, sizeof name, "%04d", s);
      write_pgm(split_dir / (std::string(name) + ".pgm"), img);
      std::ofstream txt(split_dir / (std::string(name) + ".txt"));
      for (const std::string& line : lines) txt << line << "\n";
    }
  }
}

std::vector<ParagraphSample> load_split(const std::filesystem::path& dir,
                                        const std::string& split) {
  const DatasetManifest manifest = DatasetManifest::load(dir);
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end())
    throw DataError("dataset has no split '" + split + "'");
  std::vector<ParagraphSample> samples;
  for (int s = 0; s < it->second; ++s) {
    char name[16];
    std::snprintf(name, sizeof name, "%04d", s);
    ParagraphSample sample;
    sample.id = split + "/" + name;
    sample.image = read_pgm(dir / split / (std::string(name) + ".pgm"));
    std::ifstream txt(dir / split / (std::string(name) + ".txt"));
    if (!txt) throw DataError("missing transcript for " + sample.id);
    std::string line;
    while (std::getline(txt, line)) sample.lines.push_back(line);
    while (!sample.lines.empty() && sample.lines.back().empty())
      sample.lines.pop_back();
    if (sample.lines.empty())
      throw DataError(sample.id + ": paragraph has no lines");
    for (const std::string& l : sample.lines)
      for (char32_t c : utf8_decode(l))
        if (manifest.alphabet.find(c) == std::u32string::npos)
          throw DataError(sample.id + ": transcript character outside alphabet");
    samples.push_back(std::move(sample));
  }
  return samples;
}

// ------------------------------------------------------------- preprocess

Tensor bilinear_resize(const Tensor& image, int out_h, int out_w) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw std::invalid_argument("bilinear_resize: image must be [1,H,W]");
  const int h = image.dim(1), w = image.dim(2);
  if (out_h == h && out_w == w) return image;
  Tensor out({1, out_h, out_w});
  const real sy = static_cast<real>(h) / out_h;
  const real sx = static_cast<real>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    real fy = (y + real(0.5)) * sy - real(0.5);
    fy = std::clamp(fy, real(0), static_cast<real>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const real wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      real fx = (x + real(0.5)) * sx - real(0.5);
      fx = std::clamp(fx, real(0), static_cast<real>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const real wx = fx - x0;
      out.at(0, y, x) = (1 - wy) * ((1 - wx) * image.at(0, y0, x0) +
                                    wx * image.at(0, y0, x1)) +
                        wy * ((1 - wx) * image.at(0, y1, x0) +
                              wx * image.at(0, y1, x1));
    }
  }
  return out;
}

Tensor preprocess(const Tensor& image, int target_h, int target_w) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw std::invalid_argument("preprocess: image must be [1,H,W]");
  const int h = image.dim(1), w = image.dim(2);
  if (h <= 0 || w <= 0)
    throw std::invalid_argument("preprocess: zero-area image");
  const real scale = std::min(static_cast<real>(target_h) / h,
                              static_cast<real>(target_w) / w);
  const int new_h = std::max(1, std::min(target_h, static_cast<int>(std::lround(h * scale))));
  const int new_w = std::max(1, std::min(target_w, static_cast<int>(std::lround(w * scale))));
  const Tensor scaled = bilinear_resize(image, new_h, new_w);
  Tensor out({1, target_h, target_w});
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x) out.at(0, y, x) = scaled.at(0, y, x);
  return out;
}

// ---------------------------------------------------------------- augment

namespace {

Tensor morphology3x3(const Tensor& img, bool dilate) {
  const int h = img.dim(1), w = img.dim(2);
  Tensor out({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      real v = img.at(0, y, x);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          v = dilate ? std::max(v, img.at(0, yy, xx))
                     : std::min(v, img.at(0, yy, xx));
        }
      out.at(0, y, x) = v;
    }
  return out;
}

// Displaces the four corners and samples with the induced bilinear warp.
Tensor corner_warp(const Tensor& img, Rng& rng) {
  const int h = img.dim(1), w = img.dim(2);
  std::uniform_real_distribution<real> d(-0.04, 0.04);
  real ox[4], oy[4];
  for (int i = 0; i < 4; ++i) {
    ox[i] = d(rng) * w;
    oy[i] = d(rng) * h;
  }
  Tensor out({1, h, w});
  for (int y = 0; y < h; ++y) {
    const real v = h > 1 ? static_cast<real>(y) / (h - 1) : 0;
    for (int x = 0; x < w; ++x) {
      const real u = w > 1 ? static_cast<real>(x) / (w - 1) : 0;
      const real dx = (1 - u) * (1 - v) * ox[0] + u * (1 - v) * ox[1] +
                      (1 - u) * v * ox[2] + u * v * ox[3];
      const real dy = (1 - u) * (1 - v) * oy[0] + u * (1 - v) * oy[1] +
                      (1 - u) * v * oy[2] + u * v * oy[3];
      real fy = std::clamp(y + dy, real(0), static_cast<real>(h - 1));
      real fx = std::clamp(x + dx, real(0), static_cast<real>(w - 1));
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const real wy = fy - y0, wx = fx - x0;
      out.at(0, y, x) =
          (1 - wy) * ((1 - wx) * img.at(0, y0, x0) + wx * img.at(0, y0, x1)) +
          wy * ((1 - wx) * img.at(0, y1, x0) + wx * img.at(0, y1, x1));
    }
  }
  return out;
}

}  // namespace

Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& cfg) {
  std::uniform_real_distribution<real> unif(0, 1);
  Tensor img = image;
  const int h = img.dim(1), w = img.dim(2);

  if (unif(rng) < cfg.prob) {  // resolution rescale (down then up)
    std::uniform_real_distribution<real> f(0.5, 0.9);
    const real factor = f(rng);
    const int small_h = std::max(1, static_cast<int>(std::lround(h * factor)));
    const int small_w = std::max(1, static_cast<int>(std::lround(w * factor)));
    img = bilinear_resize(bilinear_resize(img, small_h, small_w), h, w);
  }
  if (unif(rng) < cfg.prob) img = corner_warp(img, rng);
  if (unif(rng) < cfg.prob) img = morphology3x3(img, /*dilate=*/true);
  if (unif(rng) < cfg.prob) img = morphology3x3(img, /*dilate=*/false);
  if (unif(rng) < cfg.prob) {  // brightness
    std::uniform_real_distribution<real> b(-0.15, 0.15);
    const real shift = b(rng);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += shift;
  }
  if (unif(rng) < cfg.prob) {  // contrast around mid-gray
    std::uniform_real_distribution<real> c(0.7, 1.3);
    const real gain = c(rng);
    for (std::size_t i = 0; i < img.size(); ++i)
      img[i] = (img[i] - real(0.5)) * gain + real(0.5);
  }
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = std::clamp(img[i], real(0), real(1));
  return img;
}

// ----------------------------------------------------------------- labels

std::vector<int> encode_text(const std::u32string& alphabet,
                             const std::string& utf8_line) {
  std::vector<int> out;
  for (char32_t c : utf8_decode(utf8_line)) {
    const std::size_t idx = alphabet.find(c);
    if (idx == std::u32string::npos)
      throw DataError("character U+" + std::to_string(static_cast<unsigned>(c)) +
                      " not in alphabet");
    out.push_back(static_cast<int>(idx));
  }
  return out;
}

std::string decode_labels(const std::u32string& alphabet,
                          const std::vector<int>& labels) {
  std::u32string s;
  for (int l : labels) {
    if (l < 0 || l >= static_cast<int>(alphabet.size()))
      throw std::invalid_argument("decode_labels: label out of range");
    s.push_back(alphabet[static_cast<size_t>(l)]);
  }
  return utf8_encode(s);
}

}  // namespace pararec
