#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtrecon/enhancer.hpp"
#include "rtrecon/errors.hpp"
#include "rtrecon/io.hpp"
#include "rtrecon/rng.hpp"

using namespace rtrecon;
namespace fs = std::filesystem;

namespace {

std::string work_dir() {
  static const std::string dir = [] {
    const fs::path p = fs::temp_directory_path() / "rtrecon-test-io";
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
  }();
  return dir;
}

std::string at(const std::string& name) { return work_dir() + "/" + name; }

KSpaceGrid random_kspace(int coils, int rows, int cols, uint64_t seed) {
  KSpaceGrid g(coils, rows, cols);
  Rng rng(seed);
  for (cplx& v : g.data()) v = cplx(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
  return g;
}

RealImage random_image(int rows, int cols, uint64_t seed, double lo = 0.0, double hi = 1.0) {
  RealImage im(rows, cols);
  Rng rng(seed);
  for (double& v : im.data()) v = rng.uniform(lo, hi);
  return im;
}

bool throws_with(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
  } catch (const IoError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("k-space grids round trip bit-identically") {
  const KSpaceGrid g = random_kspace(3, 8, 10, 1);
  write_grid(g, at("grid"));
  const KSpaceGrid back = read_kspace(at("grid"));
  CHECK(back.n_coils() == 3);
  CHECK(back.rows() == 8);
  CHECK(back.cols() == 10);
  CHECK(back.line_axis() == g.line_axis());
  CHECK(back.data() == g.data());

  CoilImageStack s(2, 8, 8, LineAxis::kRows);
  Rng rng(2);
  for (cplx& v : s.data()) v = cplx(rng.next_normal(), rng.next_normal());
  write_grid(s, at("stack"));
  const CoilImageStack sb = read_coil_images(at("stack"));
  CHECK(sb.line_axis() == LineAxis::kRows);
  CHECK(sb.data() == s.data());

  const RealImage im = random_image(5, 7, 3);
  write_image(im, at("img"));
  const RealImage ib = read_image(at("img"));
  CHECK(ib.data() == im.data());
}

TEST_CASE("grid readers reject truncation, size mismatch, and wrong kinds") {
  const KSpaceGrid g = random_kspace(2, 8, 8, 4);
  write_grid(g, at("trunc"));
  std::string raw = read_file_bytes(at("trunc.raw"));
  raw.resize(raw.size() - 8);
  write_file_bytes(at("trunc.raw"), raw);
  CHECK(throws_with([&] { read_kspace(at("trunc")); }, "truncated"));

  write_grid(g, at("extra"));
  raw = read_file_bytes(at("extra.raw"));
  raw += std::string(16, '\0');
  write_file_bytes(at("extra.raw"), raw);
  CHECK(throws_with([&] { read_kspace(at("extra")); }, "size mismatch"));

  // a complex payload is not an image, and vice versa
  write_grid(g, at("cplx"));
  CHECK(throws_with([&] { read_image(at("cplx")); }, "cannot be read as"));
  const RealImage im = random_image(4, 4, 5);
  write_image(im, at("real"));
  CHECK(throws_with([&] { read_kspace(at("real")); }, "cannot be read as"));

  write_grid(g, at("dtype"));
  std::string header = read_file_bytes(at("dtype"));
  const size_t pos = header.find("complex128");
  header.replace(pos, 10, "complex96!");
  write_file_bytes(at("dtype"), header);
  CHECK(throws_with([&] { read_kspace(at("dtype")); }, "unknown dtype"));
}

TEST_CASE("float32 image payloads are accepted on read") {
  // hand-written file: header plus little-endian float32 payload
  const std::vector<float> vals = {0.0f, 0.25f, -1.5f, 3.0f, 0.125f, 42.0f};
  std::string payload(vals.size() * 4, '\0');
  std::memcpy(payload.data(), vals.data(), payload.size());
  write_file_bytes(at("f32.raw"), payload);
  write_file_bytes(at("f32"),
                   "format=rtrecon-grid\nversion=1\nkind=image\ndtype=float32\n"
                   "rows=2\ncols=3\npayload=f32.raw\n");
  const RealImage im = read_image(at("f32"));
  REQUIRE(im.rows() == 2);
  REQUIRE(im.cols() == 3);
  for (size_t i = 0; i < vals.size(); ++i) CHECK(im.data()[i] == static_cast<double>(vals[i]));

  // complex64 file read as an image is rejected
  write_file_bytes(at("c64"),
                   "format=rtrecon-grid\nversion=1\nkind=image\ndtype=complex64\n"
                   "rows=2\ncols=3\npayload=f32.raw\n");
  CHECK(throws_with([&] { read_image(at("c64")); }, "cannot be read as a real image"));
}

TEST_CASE("masks round trip exactly") {
  SamplingMask mask;
  mask.profile = MaskProfile::kConventionalUniform;
  mask.seed = 123456789;
  mask.n_lines = 10;
  mask.lines = {1, 0, 0, 1, 1, 1, 0, 1, 0, 0};
  write_mask(mask, at("mask"));
  const SamplingMask back = read_mask(at("mask"));
  CHECK(back.profile == mask.profile);
  CHECK(back.seed == mask.seed);
  CHECK(back.n_lines == mask.n_lines);
  CHECK(back.lines == mask.lines);
}

TEST_CASE("kernel sets round trip bit-identically") {
  GrappaKernelSet set;
  set.n_coils = 2;
  set.acs_begin = 10;
  set.acs_end = 22;
  set.config.n_source_lines_per_side = 1;
  set.config.kx_taps = 3;
  set.config.lambda_rel = 1e-4;

  Rng rng(6);
  GrappaKernel a;
  a.geometry.source_offsets = {-3, -1};
  a.geometry.kx_taps = 3;
  a.residual = 0.001953125;
  a.weights.resize(2 * 2 * 2 * 3);
  for (cplx& w : a.weights) w = cplx(rng.next_normal(), rng.next_normal());
  GrappaKernel b;
  b.geometry.source_offsets = {-1, 1};
  b.geometry.kx_taps = 3;
  b.residual = 1.0 / 3.0;
  b.weights.resize(2 * 2 * 2 * 3);
  for (cplx& w : b.weights) w = cplx(rng.next_normal(), rng.next_normal());
  set.kernels = {a, b};  // sorted: {-3,-1} < {-1,1}

  write_kernels(set, at("kernels"));
  const GrappaKernelSet back = read_kernels(at("kernels"));
  CHECK(back.n_coils == set.n_coils);
  CHECK(back.acs_begin == set.acs_begin);
  CHECK(back.acs_end == set.acs_end);
  CHECK(back.config.n_source_lines_per_side == set.config.n_source_lines_per_side);
  CHECK(back.config.kx_taps == set.config.kx_taps);
  CHECK(back.config.lambda_rel == set.config.lambda_rel);
  REQUIRE(back.kernels.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.kernels[i].geometry == set.kernels[i].geometry);
    CHECK(back.kernels[i].residual == set.kernels[i].residual);
    CHECK(back.kernels[i].weights == set.kernels[i].weights);
  }

  set.kernels = {b, a};  // out of order is rejected on read
  write_kernels(set, at("unsorted"));
  CHECK(throws_with([&] { read_kernels(at("unsorted")); }, "not sorted"));
}

TEST_CASE("compression matrices round trip bit-identically") {
  const KSpaceGrid g = random_kspace(4, 8, 8, 7);
  const CompressionMatrix m = fit_compression(g, 2);
  write_compression(m, at("comp"));
  const CompressionMatrix back = read_compression(at("comp"));
  CHECK(back.n_virtual == m.n_virtual);
  CHECK(back.n_physical == m.n_physical);
  CHECK(back.weights == m.weights);
  CHECK(back.singular_values == m.singular_values);
}

TEST_CASE("network snapshots restore the exact model") {
  NetworkConfig cfg;
  cfg.depth = 2;
  cfg.base_filters = 2;
  cfg.input_channels = 2;
  cfg.dropout_rate = 0.03125;
  Enhancer net(cfg, 77);
  NormalizationScales scales;
  scales.input_min = {0.0, 0.125};
  scales.input_max = {1.0, 2.5};
  scales.ref_min = 0.25;
  scales.ref_max = 4.0;

  save_weights(net, scales, at("weights"));
  auto [loaded, back] = load_weights(at("weights"));

  CHECK(back.input_min == scales.input_min);
  CHECK(back.input_max == scales.input_max);
  CHECK(back.ref_min == scales.ref_min);
  CHECK(back.ref_max == scales.ref_max);
  CHECK(loaded.config().depth == 2);
  CHECK(loaded.config().dropout_rate == 0.03125);

  auto pa = net.parameters();
  auto pb = loaded.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].tensor->data == pb[i].tensor->data);
  }

  Tensor x({1, 2, 8, 8});
  Rng rng(8);
  for (double& v : x.data) v = rng.next_double();
  CHECK(net.forward(x).data == loaded.forward(x).data);

  // payload from a different architecture is rejected
  std::string header = read_file_bytes(at("weights"));
  header.replace(header.find("depth=2"), 7, "depth=1");
  write_file_bytes(at("weights"), header);
  CHECK(throws_with([&] { load_weights(at("weights")); }, "does not match"));
}

TEST_CASE("png export windows linearly and imports within quantization error") {
  const RealImage im = random_image(9, 13, 9, -3.0, 5.0);
  export_png(im, at("rand.png"));
  const RealImage back = import_png_gray16(at("rand.png"));
  REQUIRE(back.rows() == 9);
  REQUIRE(back.cols() == 13);
  const double lo = im.min_value(), hi = im.max_value();
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 13; ++c) {
      const double want = (im.at(r, c) - lo) / (hi - lo);
      CHECK(std::abs(back.at(r, c) - want) <= 1.0 / 65535.0);
    }
  CHECK(back.min_value() == 0.0);  // the min pixel maps to 0
  CHECK(back.max_value() == 1.0);  // the max pixel maps to 65535

  // constant image: uniform mid-gray
  export_png(RealImage(4, 4, 2.5), at("const.png"));
  const RealImage gray = import_png_gray16(at("const.png"));
  for (double v : gray.data()) CHECK(v == 32768.0 / 65535.0);

  // explicit window clips
  RealImage ramp(1, 3);
  ramp.data() = {-1.0, 0.5, 2.0};
  export_png(ramp, at("win.png"), 0.0, 1.0);
  const RealImage w = import_png_gray16(at("win.png"));
  CHECK(w.at(0, 0) == 0.0);
  CHECK(w.at(0, 1) == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(w.at(0, 2) == 1.0);

  CHECK_THROWS_AS(import_png_gray16(at("grid")), IoError);  // not a png
}

TEST_CASE("reports carry six significant digits, inf and missing values") {
  std::vector<ReportRow> rows;
  ReportRow r0;
  r0.label = "slice0";
  r0.metrics.ssim = 0.123456789;
  r0.metrics.psnr = 28.123456;
  r0.metrics.nmse = 0.000123456789;
  r0.metrics.dice_hfc = 1.0;
  r0.metrics.hausdorff_hfc = 5.0;
  ReportRow r1;
  r1.label = "slice1";
  r1.metrics.ssim = 1.0;
  r1.metrics.psnr = std::numeric_limits<double>::infinity();
  r1.metrics.nmse = 0.0;
  r1.metrics.dice_hfc = 1.0;
  r1.metrics.hausdorff_hfc = std::nullopt;
  rows = {r0, r1};

  emit_report(rows, at("rep.csv"), at("rep.json"));
  const std::string csv = read_file_bytes(at("rep.csv"));
  std::vector<std::string> lines;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);  // header + 2 rows + mean + std
  CHECK(lines[0] == "label,ssim,psnr,nmse,dice_hfc,hausdorff_hfc");
  CHECK(lines[1] == "slice0,0.123457,28.1235,0.000123457,1,5");
  CHECK(lines[2] == "slice1,1,inf,0,1,");  // inf psnr, absent hausdorff
  CHECK(lines[3].rfind("mean,", 0) == 0);
  CHECK(lines[4].rfind("std,", 0) == 0);
  // hausdorff aggregate covers only the present value
  CHECK(lines[3] == "mean,0.561728,inf,6.17284e-05,1,5");

  const auto j = nlohmann::json::parse(read_file_bytes(at("rep.json")));
  REQUIRE(j.at("rows").size() == 2);
  CHECK(j.at("rows")[0].at("ssim").get<double>() == doctest::Approx(0.123457));
  CHECK(j.at("rows")[1].at("psnr").get<std::string>() == "inf");
  CHECK(j.at("rows")[1].at("hausdorff_hfc").is_null());
  CHECK(j.at("summary").at("hausdorff_hfc").at("n").get<int>() == 1);

  // re-emission is byte-identical
  emit_report(rows, at("rep2.csv"), at("rep2.json"));
  CHECK(read_file_bytes(at("rep2.csv")) == csv);
  CHECK(read_file_bytes(at("rep2.json")) == read_file_bytes(at("rep.json")));

  // empty input: header-only files
  emit_report({}, at("empty.csv"), at("empty.json"));
  CHECK(read_file_bytes(at("empty.csv")) == "label,ssim,psnr,nmse,dice_hfc,hausdorff_hfc\n");
  const auto je = nlohmann::json::parse(read_file_bytes(at("empty.json")));
  CHECK(je.at("rows").empty());
  CHECK(je.at("summary").is_null());
}

TEST_CASE("checksums match published fnv-1a vectors") {
  CHECK(fnv1a("", 0) == 14695981039346656037ULL);
  CHECK(checksum_bytes("") == "cbf29ce484222325");
  CHECK(checksum_bytes("a") == "af63dc4c8601ec8c");
  CHECK(checksum_bytes("foobar") == "85944171f73967e8");
  write_file_bytes(at("sum.txt"), "foobar");
  CHECK(checksum_file(at("sum.txt")) == "85944171f73967e8");
  CHECK_THROWS_AS(checksum_file(at("missing-file")), IoError);
}

TEST_CASE("config files parse comments and round trip canonically") {
  const std::string text =
      "# run configuration\n"
      "\n"
      "  seed = 7\n"
      "mask.profile=nonuniform8421\n"
      "paths.out = runs/a b/out \n";
  const KeyValueConfig cfg = parse_config_text(text);
  REQUIRE(cfg.size() == 3);
  CHECK(cfg.at("seed") == "7");
  CHECK(cfg.at("mask.profile") == "nonuniform8421");
  CHECK(cfg.at("paths.out") == "runs/a b/out");

  write_config(cfg, at("cfg"));
  CHECK(read_config(at("cfg")) == cfg);
  CHECK(read_file_bytes(at("cfg")) == config_text(cfg));
  CHECK(config_text(cfg) ==
        "mask.profile=nonuniform8421\npaths.out=runs/a b/out\nseed=7\n");  // sorted

  CHECK_THROWS_AS(parse_config_text("a=1\na=2\n"), IoError);
  CHECK_THROWS_AS(parse_config_text("just some words\n"), IoError);
  CHECK_THROWS_AS(parse_config_text("=value\n"), IoError);
}

TEST_CASE("manifests list values and checksummed files and write atomically") {
  write_file_bytes(at("out1.bin"), "payload-one");
  write_file_bytes(at("out2.bin"), "payload-two");
  RunManifest m;
  m.config_hash = checksum_bytes("seed=7\n");
  m.add_value("seed.mask", "7");
  m.add_value("seed.train", "1");
  m.add_file(at("out1.bin"));
  m.add_file(at("out2.bin"));

  write_manifest(m, at("manifest"));
  CHECK(!fs::exists(at("manifest.tmp")));  // temp file renamed away

  const RunManifest back = read_manifest(at("manifest"));
  CHECK(back.tool_version == kToolVersion);
  CHECK(back.config_hash == m.config_hash);
  REQUIRE(back.values.size() == 2);
  CHECK(back.values[0] == std::make_pair(std::string("seed.mask"), std::string("7")));
  REQUIRE(back.files.size() == 2);
  CHECK(back.files[0].first == at("out1.bin"));
  CHECK(back.files[0].second == checksum_bytes("payload-one"));
  CHECK(back.files[1].second == checksum_bytes("payload-two"));

  write_file_bytes(at("bad-manifest"), "format=rtrecon-manifest\nversion=1\nwhat=ever\n");
  CHECK_THROWS_AS(read_manifest(at("bad-manifest")), IoError);
}
