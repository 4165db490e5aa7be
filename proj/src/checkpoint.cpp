#include "pararec/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pararec/errors.hpp"
#include "pararec/text.hpp"

namespace pararec {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'C', 'K'};

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw DataError("checkpoint: unexpected end of file");
  return v;
}

void write_string(std::ofstream& f, const std::string& s) {
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& f) {
  const auto len = read_pod<std::uint32_t>(f);
  std::string s(len, '\0');
  f.read(s.data(), len);
  if (!f) throw DataError("checkpoint: unexpected end of file");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg,
                     const std::u32string& alphabet,
                     std::uint64_t iterations_done, const ParamSet& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(kMagic, 4);
  write_pod<std::uint32_t>(f, kCheckpointVersion);

  std::string manifest = cfg.serialize();
  manifest += "alphabet_utf8=" + utf8_encode(alphabet) + "\n";
  manifest += "iterations_done=" + std::to_string(iterations_done) + "\n";
  write_string(f, manifest);

  const bool f32 = cfg.precision == "f32";
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& p : params.items()) {
    write_string(f, p.name);
    write_pod<std::uint8_t>(f, f32 ? 4 : 8);
    write_pod<std::uint8_t>(f, static_cast<std::uint8_t>(p.value->rank()));
    for (int d : p.value->shape()) write_pod<std::int32_t>(f, d);
    if (f32) {
      std::vector<float> buf(p.value->size());
      for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<float>((*p.value)[i]);
      f.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
      f.write(reinterpret_cast<const char*>(p.value->data()),
              static_cast<std::streamsize>(p.value->size() * sizeof(double)));
    }
  }
  if (!f) throw DataError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path.string() + ": not a checkpoint file");
  const auto version = read_pod<std::uint32_t>(f);
  if (version != kCheckpointVersion)
    throw DataError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(version));

  LoadedCheckpoint out;
  std::string config_text;
  for (const std::string& line : split_lines(read_string(f))) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(path.string() + ": malformed manifest line '" + line + "'");
    const std::string key = line.substr(0, eq);
    if (key == "alphabet_utf8")
      out.alphabet = utf8_decode(line.substr(eq + 1));
    else if (key == "iterations_done")
      out.iterations_done = std::stoull(line.substr(eq + 1));
    else
      config_text += line + "\n";
  }
  out.config = RunConfig::deserialize(config_text);

  const auto count = read_pod<std::uint32_t>(f);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(f);
    const auto dtype = read_pod<std::uint8_t>(f);
    if (dtype != 4 && dtype != 8)
      throw DataError(path.string() + ": blob '" + name + "' has bad dtype");
    const auto rank = read_pod<std::uint8_t>(f);
    std::vector<int> shape;
    for (int d = 0; d < rank; ++d) shape.push_back(read_pod<std::int32_t>(f));
    Tensor t(shape);
    if (dtype == 4) {
      std::vector<float> buf(t.size());
      f.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
      for (std::size_t k = 0; k < buf.size(); ++k) t[k] = buf[k];
    } else {
      f.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!f) throw DataError(path.string() + ": truncated blob '" + name + "'");
    out.params.emplace(name, std::move(t));
  }
  return out;
}

void restore_params(const LoadedCheckpoint& ckpt, ParamSet& params) {
  for (const auto& p : params.items()) {
    auto it = ckpt.params.find(p.name);
    if (it == ckpt.params.end())
      throw DataError("checkpoint is missing parameter '" + p.name + "'");
    if (!it->second.same_shape(*p.value))
      throw DataError("checkpoint parameter '" + p.name + "' has shape " +
                      it->second.shape_str() + ", expected " +
                      p.value->shape_str());
    *p.value = it->second;
  }
}

}  // namespace pararec
