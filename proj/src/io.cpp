#include "rtrecon/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rtrecon/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "payloads are little-endian and read back with memcpy");

namespace rtrecon {
namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw IoError("bad number for " + what + ": '" + s + "'");
  return v;
}

int64_t parse_int(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw IoError("bad integer for " + what + ": '" + s + "'");
  return v;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// ordered key=value lines; repeated keys allowed (param=, kernel=, ...)
struct Header {
  std::string path;
  std::vector<std::pair<std::string, std::string>> lines;

  const std::string& get(const std::string& key) const {
    const std::string* found = nullptr;
    for (const auto& [k, v] : lines) {
      if (k != key) continue;
      if (found) throw IoError(path + ": duplicate header key '" + key + "'");
      found = &v;
    }
    if (!found) throw IoError(path + ": missing header key '" + key + "'");
    return *found;
  }
  std::vector<std::string> all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : lines)
      if (k == key) out.push_back(v);
    return out;
  }
};

Header parse_header(const std::string& text, const std::string& path) {
  Header h;
  h.path = path;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw IoError(path + ": malformed header line '" + line + "'");
    h.lines.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return h;
}

Header read_header(const std::string& path, const std::string& format) {
  const Header h = parse_header(read_file_bytes(path), path);
  if (h.get("format") != format)
    throw IoError(path + ": expected format '" + format + "', found '" + h.get("format") + "'");
  if (parse_int(h.get("version"), "version") != 1)
    throw IoError(path + ": unsupported version " + h.get("version"));
  return h;
}

std::string payload_path(const std::string& header_path, const Header& h) {
  return (fs::path(header_path).parent_path() / h.get("payload")).string();
}

void append_le(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

std::string doubles_to_bytes(const double* p, size_t n) {
  std::string out;
  out.reserve(n * sizeof(double));
  append_le(out, p, n * sizeof(double));
  return out;
}

// payload bytes -> doubles honoring the header dtype (one scalar per entry;
// complex dtypes are handled by the callers as interleaved re/im pairs)
std::vector<double> payload_to_doubles(const std::string& bytes, size_t count,
                                       const std::string& dtype, const std::string& path) {
  size_t scalar = 0;
  bool single = false;
  if (dtype == "float64" || dtype == "complex128") {
    scalar = 8;
  } else if (dtype == "float32" || dtype == "complex64") {
    scalar = 4;
    single = true;
  } else {
    throw IoError(path + ": unknown dtype '" + dtype + "'");
  }
  const size_t expected = count * scalar;
  if (bytes.size() < expected)
    throw IoError(path + ": payload truncated, " + std::to_string(bytes.size()) + " bytes but " +
                  std::to_string(expected) + " expected");
  if (bytes.size() > expected)
    throw IoError(path + ": payload size mismatch, " + std::to_string(bytes.size()) +
                  " bytes but " + std::to_string(expected) + " expected");
  std::vector<double> out(count);
  if (single) {
    for (size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + i * 4, 4);
      out[i] = f;
    }
  } else {
    std::memcpy(out.data(), bytes.data(), expected);
  }
  return out;
}

void write_header_and_payload(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& lines,
                              const std::string& payload) {
  const std::string raw_name = fs::path(path).filename().string() + ".raw";
  std::string text;
  for (const auto& [k, v] : lines) text += k + "=" + v + "\n";
  text += "payload=" + raw_name + "\n";
  write_file_bytes(path, text);
  write_file_bytes(path + ".raw", payload);
}

struct GridHeader {
  std::string kind, dtype;
  int coils = 1, rows = 0, cols = 0;
  LineAxis axis = kDefaultLineAxis;
  std::vector<double> scalars;
};

GridHeader read_grid_file(const std::string& path, const std::string& want_kind) {
  const Header h = read_header(path, "rtrecon-grid");
  GridHeader g;
  g.kind = h.get("kind");
  if (g.kind != want_kind)
    throw IoError(path + ": kind '" + g.kind + "' cannot be read as " + want_kind);
  g.dtype = h.get("dtype");
  if (g.dtype != "float64" && g.dtype != "float32" && g.dtype != "complex128" &&
      g.dtype != "complex64")
    throw IoError(path + ": unknown dtype '" + g.dtype + "'");
  g.rows = static_cast<int>(parse_int(h.get("rows"), "rows"));
  g.cols = static_cast<int>(parse_int(h.get("cols"), "cols"));
  if (g.rows < 1 || g.cols < 1) throw IoError(path + ": non-positive dimensions");
  const bool complex = want_kind != "image";
  if (complex) {
    g.coils = static_cast<int>(parse_int(h.get("coils"), "coils"));
    if (g.coils < 1) throw IoError(path + ": non-positive coil count");
    const std::string axis = h.get("line_axis");
    if (axis == "rows")
      g.axis = LineAxis::kRows;
    else if (axis == "cols")
      g.axis = LineAxis::kCols;
    else
      throw IoError(path + ": unknown line_axis '" + axis + "'");
    if (g.dtype != "complex128" && g.dtype != "complex64")
      throw IoError(path + ": real payload dtype '" + g.dtype + "' cannot be read as " +
                    want_kind);
  } else if (g.dtype != "float64" && g.dtype != "float32") {
    throw IoError(path + ": complex payload dtype '" + g.dtype +
                  "' cannot be read as a real image");
  }
  const size_t count = static_cast<size_t>(g.coils) * g.rows * g.cols * (complex ? 2 : 1);
  g.scalars = payload_to_doubles(read_file_bytes(payload_path(path, h)), count, g.dtype, path);
  return g;
}

template <typename Stack>
void write_complex_grid(const Stack& s, const std::string& path, const std::string& kind) {
  std::vector<std::pair<std::string, std::string>> lines = {
      {"format", "rtrecon-grid"},
      {"version", "1"},
      {"kind", kind},
      {"dtype", "complex128"},
      {"coils", std::to_string(s.n_coils())},
      {"rows", std::to_string(s.rows())},
      {"cols", std::to_string(s.cols())},
      {"line_axis", s.line_axis() == LineAxis::kCols ? "cols" : "rows"},
  };
  // std::complex<double> is layout-compatible with double[2] (re, im)
  write_header_and_payload(
      path, lines,
      doubles_to_bytes(reinterpret_cast<const double*>(s.data().data()), s.size() * 2));
}

template <typename Stack>
Stack read_complex_grid(const std::string& path, const std::string& kind) {
  const GridHeader g = read_grid_file(path, kind);
  Stack out(g.coils, g.rows, g.cols, g.axis);
  for (size_t i = 0; i < out.size(); ++i)
    out.data()[i] = cplx(g.scalars[2 * i], g.scalars[2 * i + 1]);
  return out;
}

uint32_t crc_of(const std::string& type, const std::string& data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type.data()), type.size());
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()), data.size());
  return static_cast<uint32_t>(crc);
}

void append_u32be(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

uint32_t read_u32be(const std::string& bytes, size_t at) {
  return (static_cast<uint32_t>(static_cast<uint8_t>(bytes[at])) << 24) |
         (static_cast<uint32_t>(static_cast<uint8_t>(bytes[at + 1])) << 16) |
         (static_cast<uint32_t>(static_cast<uint8_t>(bytes[at + 2])) << 8) |
         static_cast<uint32_t>(static_cast<uint8_t>(bytes[at + 3]));
}

void append_chunk(std::string& out, const std::string& type, const std::string& data) {
  append_u32be(out, static_cast<uint32_t>(data.size()));
  out += type;
  out += data;
  append_u32be(out, crc_of(type, data));
}

const char kPngSignature[9] = "\x89PNG\r\n\x1a\n";

std::string scale_csv(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

std::vector<double> parse_csv_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(parse_double(trim(tok), what));
  return out;
}

nlohmann::ordered_json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return std::strtod(format_number(v).c_str(), nullptr);
}

nlohmann::ordered_json json_stat(const Stat& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n;
  j["mean"] = s.n ? json_number(s.mean) : nlohmann::ordered_json(nullptr);
  j["std"] = s.n ? json_number(s.stddev) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  return buf.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

void write_grid(const KSpaceGrid& grid, const std::string& path) {
  write_complex_grid(grid, path, "kspace");
}

void write_grid(const CoilImageStack& images, const std::string& path) {
  write_complex_grid(images, path, "coil_images");
}

void write_image(const RealImage& image, const std::string& path) {
  std::vector<std::pair<std::string, std::string>> lines = {
      {"format", "rtrecon-grid"}, {"version", "1"},
      {"kind", "image"},          {"dtype", "float64"},
      {"rows", std::to_string(image.rows())},
      {"cols", std::to_string(image.cols())},
  };
  write_header_and_payload(path, lines,
                           doubles_to_bytes(image.data().data(), image.size()));
}

void write_tensor(const Tensor& tensor, const std::string& path) {
  if (tensor.ndim() != 3)
    throw ValidationError("write_tensor: expected [channels][rows][cols], got " +
                          std::to_string(tensor.ndim()) + " axes");
  std::vector<std::pair<std::string, std::string>> lines = {
      {"format", "rtrecon-grid"}, {"version", "1"},
      {"kind", "tensor"},         {"dtype", "float64"},
      {"channels", std::to_string(tensor.dim(0))},
      {"rows", std::to_string(tensor.dim(1))},
      {"cols", std::to_string(tensor.dim(2))},
  };
  write_header_and_payload(path, lines, doubles_to_bytes(tensor.data.data(), tensor.size()));
}

Tensor read_tensor(const std::string& path) {
  const Header h = read_header(path, "rtrecon-grid");
  if (h.get("kind") != "tensor")
    throw IoError(path + ": kind '" + h.get("kind") + "' cannot be read as tensor");
  const std::string dtype = h.get("dtype");
  if (dtype != "float64" && dtype != "float32" && dtype != "complex128" && dtype != "complex64")
    throw IoError(path + ": unknown dtype '" + dtype + "'");
  if (dtype != "float64" && dtype != "float32")
    throw IoError(path + ": complex payload dtype '" + dtype + "' cannot be read as a tensor");
  const int channels = static_cast<int>(parse_int(h.get("channels"), "channels"));
  const int rows = static_cast<int>(parse_int(h.get("rows"), "rows"));
  const int cols = static_cast<int>(parse_int(h.get("cols"), "cols"));
  if (channels < 1 || rows < 1 || cols < 1) throw IoError(path + ": non-positive dimensions");
  Tensor out({channels, rows, cols});
  out.data = payload_to_doubles(read_file_bytes(payload_path(path, h)), out.size(), dtype, path);
  return out;
}

KSpaceGrid read_kspace(const std::string& path) {
  return read_complex_grid<KSpaceGrid>(path, "kspace");
}

CoilImageStack read_coil_images(const std::string& path) {
  return read_complex_grid<CoilImageStack>(path, "coil_images");
}

RealImage read_image(const std::string& path) {
  const GridHeader g = read_grid_file(path, "image");
  RealImage out(g.rows, g.cols);
  out.data() = g.scalars;
  return out;
}

void write_mask(const SamplingMask& mask, const std::string& path) {
  std::string text;
  text += "format=rtrecon-mask\nversion=1\n";
  text += "profile=" + to_string(mask.profile) + "\n";
  text += "seed=" + std::to_string(mask.seed) + "\n";
  text += "n_lines=" + std::to_string(mask.n_lines) + "\n";
  text += "lines=";
  for (uint8_t v : mask.lines) text += v ? '1' : '0';
  text += "\n";
  write_file_bytes(path, text);
}

SamplingMask read_mask(const std::string& path) {
  const Header h = read_header(path, "rtrecon-mask");
  SamplingMask mask;
  mask.profile = mask_profile_from_string(h.get("profile"));
  mask.seed = static_cast<uint64_t>(parse_int(h.get("seed"), "seed"));
  mask.n_lines = static_cast<int>(parse_int(h.get("n_lines"), "n_lines"));
  const std::string& bits = h.get("lines");
  if (static_cast<int>(bits.size()) != mask.n_lines)
    throw IoError(path + ": lines string length " + std::to_string(bits.size()) +
                  " does not match n_lines " + std::to_string(mask.n_lines));
  mask.lines.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') throw IoError(path + ": lines must be 0/1");
    mask.lines.push_back(c == '1');
  }
  return mask;
}

void write_kernels(const GrappaKernelSet& kernels, const std::string& path) {
  std::vector<std::pair<std::string, std::string>> lines = {
      {"format", "rtrecon-kernels"},
      {"version", "1"},
      {"n_coils", std::to_string(kernels.n_coils)},
      {"acs_begin", std::to_string(kernels.acs_begin)},
      {"acs_end", std::to_string(kernels.acs_end)},
      {"n_source_lines_per_side", std::to_string(kernels.config.n_source_lines_per_side)},
      {"kx_taps", std::to_string(kernels.config.kx_taps)},
      {"lambda_rel", fmt_double(kernels.config.lambda_rel)},
      {"kernels", std::to_string(kernels.kernels.size())},
  };
  std::string payload;
  for (const GrappaKernel& k : kernels.kernels) {
    std::string desc = std::to_string(k.geometry.kx_taps) + " " + fmt_double(k.residual) + " " +
                       std::to_string(k.weights.size());
    for (int o : k.geometry.source_offsets) desc += " " + std::to_string(o);
    lines.emplace_back("kernel", desc);
    payload += doubles_to_bytes(reinterpret_cast<const double*>(k.weights.data()),
                                k.weights.size() * 2);
  }
  write_header_and_payload(path, lines, payload);
}

GrappaKernelSet read_kernels(const std::string& path) {
  const Header h = read_header(path, "rtrecon-kernels");
  GrappaKernelSet set;
  set.n_coils = static_cast<int>(parse_int(h.get("n_coils"), "n_coils"));
  set.acs_begin = static_cast<int>(parse_int(h.get("acs_begin"), "acs_begin"));
  set.acs_end = static_cast<int>(parse_int(h.get("acs_end"), "acs_end"));
  set.config.n_source_lines_per_side =
      static_cast<int>(parse_int(h.get("n_source_lines_per_side"), "n_source_lines_per_side"));
  set.config.kx_taps = static_cast<int>(parse_int(h.get("kx_taps"), "kx_taps"));
  set.config.lambda_rel = parse_double(h.get("lambda_rel"), "lambda_rel");

  const auto descs = h.all("kernel");
  if (static_cast<int64_t>(descs.size()) != parse_int(h.get("kernels"), "kernels"))
    throw IoError(path + ": kernel count does not match header");

  size_t total = 0;
  std::vector<size_t> counts;
  for (const std::string& d : descs) {
    std::istringstream in(d);
    size_t n = 0;
    int taps = 0;
    double residual = 0.0;
    if (!(in >> taps >> residual >> n)) throw IoError(path + ": malformed kernel line '" + d + "'");
    counts.push_back(n);
    total += n;
  }
  const std::vector<double> scalars =
      payload_to_doubles(read_file_bytes(payload_path(path, h)), total * 2, "complex128", path);

  size_t cursor = 0;
  for (size_t ki = 0; ki < descs.size(); ++ki) {
    std::istringstream in(descs[ki]);
    GrappaKernel k;
    size_t n = 0;
    in >> k.geometry.kx_taps >> k.residual >> n;
    int off;
    while (in >> off) k.geometry.source_offsets.push_back(off);
    if (k.geometry.source_offsets.empty())
      throw IoError(path + ": kernel with no source offsets");
    k.weights.resize(n);
    for (size_t i = 0; i < n; ++i, ++cursor)
      k.weights[i] = cplx(scalars[2 * cursor], scalars[2 * cursor + 1]);
    set.kernels.push_back(std::move(k));
  }
  for (size_t i = 1; i < set.kernels.size(); ++i)
    if (!(set.kernels[i - 1].geometry < set.kernels[i].geometry))
      throw IoError(path + ": kernels not sorted by geometry");
  return set;
}

void write_compression(const CompressionMatrix& m, const std::string& path) {
  std::vector<std::pair<std::string, std::string>> lines = {
      {"format", "rtrecon-compression"},
      {"version", "1"},
      {"n_virtual", std::to_string(m.n_virtual)},
      {"n_physical", std::to_string(m.n_physical)},
  };
  std::string payload = doubles_to_bytes(reinterpret_cast<const double*>(m.weights.data()),
                                         m.weights.size() * 2);
  payload += doubles_to_bytes(m.singular_values.data(), m.singular_values.size());
  write_header_and_payload(path, lines, payload);
}

CompressionMatrix read_compression(const std::string& path) {
  const Header h = read_header(path, "rtrecon-compression");
  CompressionMatrix m;
  m.n_virtual = static_cast<int>(parse_int(h.get("n_virtual"), "n_virtual"));
  m.n_physical = static_cast<int>(parse_int(h.get("n_physical"), "n_physical"));
  if (m.n_virtual < 1 || m.n_physical < m.n_virtual)
    throw IoError(path + ": invalid compression dimensions");
  const size_t n_w = static_cast<size_t>(m.n_virtual) * m.n_physical;
  const std::vector<double> scalars = payload_to_doubles(
      read_file_bytes(payload_path(path, h)), n_w * 2 + m.n_physical, "float64", path);
  m.weights.resize(n_w);
  for (size_t i = 0; i < n_w; ++i) m.weights[i] = cplx(scalars[2 * i], scalars[2 * i + 1]);
  m.singular_values.assign(scalars.begin() + 2 * n_w, scalars.end());
  validate(m);
  return m;
}

void save_weights(const Enhancer& net, const NormalizationScales& scales,
                  const std::string& path) {
  // parameters() is a read-only traversal here; it is non-const only because
  // ParamRef hands out mutable tensor pointers for the optimizer
  Enhancer& mutable_net = const_cast<Enhancer&>(net);
  const NetworkConfig& cfg = mutable_net.config();
  if (static_cast<int>(scales.input_min.size()) != cfg.input_channels ||
      scales.input_min.size() != scales.input_max.size())
    throw ValidationError("save_weights: normalization scales do not match input channels");
  std::vector<std::pair<std::string, std::string>> lines = {
      {"format", "rtrecon-weights"},
      {"version", "1"},
      {"depth", std::to_string(cfg.depth)},
      {"base_filters", std::to_string(cfg.base_filters)},
      {"dropout_rate", fmt_double(cfg.dropout_rate)},
      {"input_channels", std::to_string(cfg.input_channels)},
      {"input_min", scale_csv(scales.input_min)},
      {"input_max", scale_csv(scales.input_max)},
      {"ref_min", fmt_double(scales.ref_min)},
      {"ref_max", fmt_double(scales.ref_max)},
  };
  const auto params = mutable_net.parameters();
  lines.emplace_back("params", std::to_string(params.size()));
  std::string payload;
  for (const ParamRef& p : params) {
    lines.emplace_back("param", p.name + " " + std::to_string(p.tensor->size()));
    payload += doubles_to_bytes(p.tensor->data.data(), p.tensor->size());
  }
  write_header_and_payload(path, lines, payload);
}

std::pair<Enhancer, NormalizationScales> load_weights(const std::string& path) {
  const Header h = read_header(path, "rtrecon-weights");
  NetworkConfig cfg;
  cfg.depth = static_cast<int>(parse_int(h.get("depth"), "depth"));
  cfg.base_filters = static_cast<int>(parse_int(h.get("base_filters"), "base_filters"));
  cfg.dropout_rate = parse_double(h.get("dropout_rate"), "dropout_rate");
  cfg.input_channels = static_cast<int>(parse_int(h.get("input_channels"), "input_channels"));
  validate(cfg);

  NormalizationScales scales;
  scales.input_min = parse_csv_doubles(h.get("input_min"), "input_min");
  scales.input_max = parse_csv_doubles(h.get("input_max"), "input_max");
  scales.ref_min = parse_double(h.get("ref_min"), "ref_min");
  scales.ref_max = parse_double(h.get("ref_max"), "ref_max");
  if (static_cast<int>(scales.input_min.size()) != cfg.input_channels ||
      scales.input_min.size() != scales.input_max.size())
    throw IoError(path + ": normalization scales do not match input channels");

  Enhancer net(cfg, 0);
  const auto params = net.parameters();
  const auto descs = h.all("param");
  if (descs.size() != params.size() ||
      static_cast<int64_t>(params.size()) != parse_int(h.get("params"), "params"))
    throw IoError(path + ": parameter list does not match this architecture");

  size_t total = 0;
  for (const ParamRef& p : params) total += p.tensor->size();
  const std::vector<double> scalars =
      payload_to_doubles(read_file_bytes(payload_path(path, h)), total, "float64", path);

  size_t cursor = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    std::istringstream in(descs[i]);
    std::string name;
    size_t numel = 0;
    if (!(in >> name >> numel) || name != params[i].name || numel != params[i].tensor->size())
      throw IoError(path + ": parameter '" + descs[i] + "' does not match expected '" +
                    params[i].name + " " + std::to_string(params[i].tensor->size()) + "'");
    std::copy(scalars.begin() + cursor, scalars.begin() + cursor + numel,
              params[i].tensor->data.begin());
    cursor += numel;
  }
  return {std::move(net), std::move(scales)};
}

void export_png(const RealImage& image, const std::string& path,
                std::optional<double> window_min, std::optional<double> window_max) {
  if (image.rows() < 1 || image.cols() < 1)
    throw ValidationError("export_png: empty image");
  if (!image.all_finite()) throw ValidationError("export_png: non-finite pixels");
  const double lo = window_min.value_or(image.min_value());
  const double hi = window_max.value_or(image.max_value());
  if (!(std::isfinite(lo) && std::isfinite(hi)) || hi < lo)
    throw ValidationError("export_png: bad window");

  const int rows = image.rows(), cols = image.cols();
  std::string raw;
  raw.reserve(static_cast<size_t>(rows) * (1 + 2 * cols));
  for (int r = 0; r < rows; ++r) {
    raw.push_back('\0');  // filter type 0 per scanline
    for (int c = 0; c < cols; ++c) {
      double t = hi > lo ? (image.at(r, c) - lo) / (hi - lo) : 0.5;
      t = std::clamp(t, 0.0, 1.0);
      const auto q = static_cast<uint16_t>(std::lround(t * 65535.0));
      raw.push_back(static_cast<char>(q >> 8));
      raw.push_back(static_cast<char>(q & 0xff));
    }
  }

  uLongf dest_len = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(dest_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &dest_len,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                9) != Z_OK)
    throw IoError("export_png: deflate failed for '" + path + "'");
  compressed.resize(dest_len);

  std::string ihdr;
  append_u32be(ihdr, static_cast<uint32_t>(cols));
  append_u32be(ihdr, static_cast<uint32_t>(rows));
  ihdr.push_back(16);   // bit depth
  ihdr.push_back(0);    // grayscale
  ihdr.push_back(0);    // deflate
  ihdr.push_back(0);    // adaptive filtering
  ihdr.push_back(0);    // no interlace

  std::string out(kPngSignature, 8);
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", "");
  write_file_bytes(path, out);
}

RealImage import_png_gray16(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature, 8) != 0)
    throw IoError(path + ": not a PNG file");

  int rows = 0, cols = 0;
  std::string idat;
  size_t at = 8;
  bool saw_end = false;
  while (at + 12 <= bytes.size() && !saw_end) {
    const uint32_t len = read_u32be(bytes, at);
    if (at + 12 + len > bytes.size()) throw IoError(path + ": truncated PNG chunk");
    const std::string type = bytes.substr(at + 4, 4);
    const std::string data = bytes.substr(at + 8, len);
    if (crc_of(type, data) != read_u32be(bytes, at + 8 + len))
      throw IoError(path + ": PNG chunk CRC mismatch");
    if (type == "IHDR") {
      if (len != 13) throw IoError(path + ": bad IHDR");
      cols = static_cast<int>(read_u32be(data, 0));
      rows = static_cast<int>(read_u32be(data, 4));
      if (static_cast<uint8_t>(data[8]) != 16 || static_cast<uint8_t>(data[9]) != 0 ||
          static_cast<uint8_t>(data[10]) != 0 || static_cast<uint8_t>(data[11]) != 0 ||
          static_cast<uint8_t>(data[12]) != 0)
        throw IoError(path + ": only 16-bit grayscale non-interlaced PNG supported");
    } else if (type == "IDAT") {
      idat += data;
    } else if (type == "IEND") {
      saw_end = true;
    }
    at += 12 + len;
  }
  if (!saw_end || rows < 1 || cols < 1) throw IoError(path + ": malformed PNG");

  const size_t expected = static_cast<size_t>(rows) * (1 + 2 * static_cast<size_t>(cols));
  std::string raw(expected, '\0');
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw IoError(path + ": inflate init failed");
  zs.next_in = reinterpret_cast<Bytef*>(idat.data());
  zs.avail_in = static_cast<uInt>(idat.size());
  zs.next_out = reinterpret_cast<Bytef*>(raw.data());
  zs.avail_out = static_cast<uInt>(raw.size());
  const int rc = inflate(&zs, Z_FINISH);
  const bool ok = rc == Z_STREAM_END && zs.avail_out == 0;
  inflateEnd(&zs);
  if (!ok) throw IoError(path + ": PNG pixel data does not match dimensions");

  RealImage out(rows, cols);
  size_t cursor = 0;
  for (int r = 0; r < rows; ++r) {
    if (raw[cursor] != 0) throw IoError(path + ": unsupported PNG scanline filter");
    ++cursor;
    for (int c = 0; c < cols; ++c) {
      const uint16_t q = static_cast<uint16_t>(
          (static_cast<uint8_t>(raw[cursor]) << 8) | static_cast<uint8_t>(raw[cursor + 1]));
      out.at(r, c) = q / 65535.0;
      cursor += 2;
    }
  }
  return out;
}

std::string format_number(double v, int significant_digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, v);
  return buf;
}

void emit_report(const std::vector<ReportRow>& rows, const std::string& csv_path,
                 const std::string& json_path) {
  std::string csv = "label,ssim,psnr,nmse,dice_hfc,hausdorff_hfc\n";
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  std::vector<SliceMetrics> slices;
  for (const ReportRow& row : rows) {
    const SliceMetrics& m = row.metrics;
    csv += row.label + "," + format_number(m.ssim) + "," + format_number(m.psnr) + "," +
           format_number(m.nmse) + "," + format_number(m.dice_hfc) + ",";
    if (m.hausdorff_hfc) csv += format_number(*m.hausdorff_hfc);
    csv += "\n";
    nlohmann::ordered_json jr;
    jr["label"] = row.label;
    jr["ssim"] = json_number(m.ssim);
    jr["psnr"] = json_number(m.psnr);
    jr["nmse"] = json_number(m.nmse);
    jr["dice_hfc"] = json_number(m.dice_hfc);
    jr["hausdorff_hfc"] =
        m.hausdorff_hfc ? json_number(*m.hausdorff_hfc) : nlohmann::ordered_json(nullptr);
    j["rows"].push_back(jr);
    slices.push_back(m);
  }
  if (!rows.empty()) {
    const MetricsSummary s = aggregate(slices);
    auto stat_cell = [](const Stat& st, bool mean) {
      return st.n ? format_number(mean ? st.mean : st.stddev) : std::string();
    };
    for (bool mean : {true, false}) {
      csv += std::string(mean ? "mean" : "std") + "," + stat_cell(s.ssim, mean) + "," +
             stat_cell(s.psnr, mean) + "," + stat_cell(s.nmse, mean) + "," +
             stat_cell(s.dice_hfc, mean) + "," + stat_cell(s.hausdorff_hfc, mean) + "\n";
    }
    nlohmann::ordered_json js;
    js["ssim"] = json_stat(s.ssim);
    js["psnr"] = json_stat(s.psnr);
    js["nmse"] = json_stat(s.nmse);
    js["dice_hfc"] = json_stat(s.dice_hfc);
    js["hausdorff_hfc"] = json_stat(s.hausdorff_hfc);
    j["summary"] = js;
  } else {
    j["summary"] = nlohmann::ordered_json(nullptr);
  }
  write_file_bytes(csv_path, csv);
  write_file_bytes(json_path, j.dump(2) + "\n");
}

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string checksum_bytes(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes.data(), bytes.size())));
  return buf;
}

std::string checksum_file(const std::string& path) {
  return checksum_bytes(read_file_bytes(path));
}

KeyValueConfig parse_config_text(const std::string& text) {
  KeyValueConfig out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw IoError("config line " + std::to_string(lineno) + ": expected key=value, got '" +
                    line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (out.count(key))
      throw IoError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

KeyValueConfig read_config(const std::string& path) {
  return parse_config_text(read_file_bytes(path));
}

std::string config_text(const KeyValueConfig& config) {
  std::string out;
  for (const auto& [k, v] : config) out += k + "=" + v + "\n";
  return out;
}

void write_config(const KeyValueConfig& config, const std::string& path) {
  write_file_bytes(path, config_text(config));
}

void RunManifest::add_value(const std::string& key, const std::string& value) {
  values.emplace_back(key, value);
}

void RunManifest::add_file(const std::string& path) {
  files.emplace_back(path, checksum_file(path));
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  std::string text;
  text += "format=rtrecon-manifest\nversion=1\n";
  text += "tool_version=" + manifest.tool_version + "\n";
  text += "config_hash=" + manifest.config_hash + "\n";
  for (const auto& [k, v] : manifest.values) text += "value " + k + "=" + v + "\n";
  for (const auto& [p, sum] : manifest.files) text += "file " + sum + " " + p + "\n";
  const std::string tmp = path + ".tmp";
  write_file_bytes(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move manifest into place at '" + path + "': " + ec.message());
}

RunManifest read_manifest(const std::string& path) {
  RunManifest m;
  m.tool_version.clear();
  std::istringstream in(read_file_bytes(path));
  std::string line;
  bool saw_format = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("value ", 0) == 0) {
      const std::string rest = line.substr(6);
      const size_t eq = rest.find('=');
      if (eq == std::string::npos) throw IoError(path + ": malformed manifest value line");
      m.values.emplace_back(rest.substr(0, eq), rest.substr(eq + 1));
    } else if (line.rfind("file ", 0) == 0) {
      const std::string rest = line.substr(5);
      const size_t sp = rest.find(' ');
      if (sp == std::string::npos) throw IoError(path + ": malformed manifest file line");
      m.files.emplace_back(rest.substr(sp + 1), rest.substr(0, sp));
    } else {
      const size_t eq = line.find('=');
      if (eq == std::string::npos) throw IoError(path + ": malformed manifest line '" + line + "'");
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "format") {
        if (value != "rtrecon-manifest") throw IoError(path + ": not a manifest");
        saw_format = true;
      } else if (key == "version") {
        if (value != "1") throw IoError(path + ": unsupported manifest version");
      } else if (key == "tool_version") {
        m.tool_version = value;
      } else if (key == "config_hash") {
        m.config_hash = value;
      } else {
        throw IoError(path + ": unknown manifest key '" + key + "'");
      }
    }
  }
  if (!saw_format) throw IoError(path + ": not a manifest");
  return m;
}

}  // namespace rtrecon
