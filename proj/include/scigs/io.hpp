#pragma once

// Binary file formats (all little-endian):
//
//   SCIF raw float image   "SCIF" u16 version=1, u32 H, u32 W, u32 C, H*W*C f32 (row-major, interleaved)
//   SCIM mask set          "SCIM" u16 version=1, u32 B, u32 H, u32 W, f32 overlap_ratio, u64 seed,
//                          B * ceil(H*W/8) bytes, row-major bits, MSB first within each byte
//   SCIG checkpoint        "SCIG" u16 version=1, scene blob, field blob, Adam states, u64 iteration,
//                          u32 length + config JSON text
//
// Plus 8-bit RGB PNG previews.

#include <png.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scigs/config.hpp"
#include "scigs/image.hpp"
#include "scigs/optim.hpp"
#include "scigs/sci.hpp"

namespace scigs::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline constexpr std::uint16_t kFormatVersion = 1;

class Writer {
 public:
  template <class T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string path) : buf_(std::move(data)), path_(std::move(path)) {}

  template <class T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(const char (&m)[5]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0) fail(std::string("bad magic, expected ") + m);
    const auto version = get<std::uint16_t>();
    if (version != kFormatVersion) fail("unsupported format version " + std::to_string(version));
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void expect_end() {
    if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes");
  }
  [[noreturn]] void fail(const std::string& what) const { throw IoError(path_ + ": " + what); }

 private:
  void need(std::size_t n) {
    if (buf_.size() - pos_ < n) fail("truncated file");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

// --- SCIF ------------------------------------------------------------------

inline std::vector<char> encode_image(const Image& img) {
  Writer w;
  w.magic("SCIF");
  w.put(kFormatVersion);
  w.put(static_cast<std::uint32_t>(img.height));
  w.put(static_cast<std::uint32_t>(img.width));
  w.put(static_cast<std::uint32_t>(img.channels));
  for (double v : img.data) w.put(static_cast<float>(v));
  return w.data();
}

inline Image decode_image(std::vector<char> data, const std::string& path = "<memory>") {
  Reader r(std::move(data), path);
  r.expect_magic("SCIF");
  const auto h = r.get<std::uint32_t>(), w = r.get<std::uint32_t>(), c = r.get<std::uint32_t>();
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w * c;
  if (r.remaining() != n * 4) r.fail("payload is " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(n * 4));
  Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (auto& v : img.data) v = r.get<float>();
  return img;
}

inline void save_image(const std::filesystem::path& path, const Image& img) { write_file(path, encode_image(img)); }
inline Image load_image(const std::filesystem::path& path) { return decode_image(read_file(path), path.string()); }

// --- SCIM ------------------------------------------------------------------

inline std::vector<char> encode_masks(const MaskSet& m) {
  Writer w;
  w.magic("SCIM");
  w.put(kFormatVersion);
  w.put(static_cast<std::uint32_t>(m.count));
  w.put(static_cast<std::uint32_t>(m.height));
  w.put(static_cast<std::uint32_t>(m.width));
  w.put(static_cast<float>(m.overlap_ratio));
  w.put(m.seed);
  const std::size_t plane = m.plane_size();
  const std::size_t bytes_per_mask = (plane + 7) / 8;
  for (int i = 0; i < m.count; ++i) {
    std::vector<std::uint8_t> packed(bytes_per_mask, 0);
    const auto bits = m.mask(i);
    for (std::size_t p = 0; p < plane; ++p)
      if (bits[p]) packed[p / 8] |= static_cast<std::uint8_t>(0x80u >> (p % 8));
    w.bytes(packed.data(), packed.size());
  }
  return w.data();
}

inline MaskSet decode_masks(std::vector<char> data, const std::string& path = "<memory>") {
  Reader r(std::move(data), path);
  r.expect_magic("SCIM");
  MaskSet m;
  m.count = static_cast<int>(r.get<std::uint32_t>());
  m.height = static_cast<int>(r.get<std::uint32_t>());
  m.width = static_cast<int>(r.get<std::uint32_t>());
  m.overlap_ratio = r.get<float>();
  m.seed = r.get<std::uint64_t>();
  if (m.count < 1 || m.height < 1 || m.width < 1) r.fail("mask dimensions must be positive");
  const std::size_t plane = m.plane_size();
  const std::size_t bytes_per_mask = (plane + 7) / 8;
  if (r.remaining() != bytes_per_mask * static_cast<std::size_t>(m.count)) r.fail("mask payload has the wrong length");
  m.bits.resize(plane * static_cast<std::size_t>(m.count));
  std::vector<std::uint8_t> packed(bytes_per_mask);
  for (int i = 0; i < m.count; ++i) {
    r.bytes(packed.data(), packed.size());
    for (std::size_t p = 0; p < plane; ++p)
      m.bits[static_cast<std::size_t>(i) * plane + p] = (packed[p / 8] >> (7 - p % 8)) & 1u;
  }
  return m;
}

inline void save_masks(const std::filesystem::path& path, const MaskSet& m) { write_file(path, encode_masks(m)); }
inline MaskSet load_masks(const std::filesystem::path& path) { return decode_masks(read_file(path), path.string()); }

// --- SCIG ------------------------------------------------------------------

struct Checkpoint {
  Model model;
  GaussianOptimizer gaussian_opt;
  AdamState field_opt;
  std::uint64_t iteration = 0;
  TrainConfig config;
};

namespace detail {

inline void put_adam(Writer& w, const AdamState& s) {
  w.put(static_cast<std::int64_t>(s.step));
  w.put(static_cast<std::uint64_t>(s.m.size()));
  w.bytes(s.m.data(), s.m.size() * sizeof(double));
  w.bytes(s.v.data(), s.v.size() * sizeof(double));
}

inline AdamState get_adam(Reader& r) {
  AdamState s;
  s.step = r.get<std::int64_t>();
  const auto n = r.get<std::uint64_t>();
  if (n > r.remaining() / 16) r.fail("optimizer state length exceeds file size");
  s.m.resize(n);
  s.v.resize(n);
  r.bytes(s.m.data(), n * sizeof(double));
  r.bytes(s.v.data(), n * sizeof(double));
  return s;
}

}  // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.magic("SCIG");
  w.put(kFormatVersion);
  const auto& scene = ck.model.scene;
  w.put(static_cast<std::uint32_t>(scene.size()));
  w.put(static_cast<std::uint32_t>(scene.sh_degree));
  w.bytes(scene.background.data(), 3 * sizeof(double));
  for (const auto& g : scene.gaussians) {
    w.bytes(g.mu.data(), 3 * sizeof(double));
    w.bytes(g.rot.data(), 4 * sizeof(double));
    w.bytes(g.log_scale.data(), 3 * sizeof(double));
    w.put(g.opacity_logit);
    w.bytes(g.sh.front().data(), 3 * g.sh.size() * sizeof(double));
  }
  const auto& f = ck.model.field;
  const auto& fc = f.config();
  w.put(static_cast<std::uint32_t>(fc.embed_levels));
  w.put(static_cast<std::uint32_t>(fc.depth));
  w.put(static_cast<std::uint32_t>(fc.width));
  w.put(static_cast<std::int32_t>(fc.resolved_skip()));
  w.put(static_cast<std::uint8_t>(fc.detach_base_positions ? 1 : 0));
  w.bytes(f.center().data(), 3 * sizeof(double));
  w.bytes(f.half_extent().data(), 3 * sizeof(double));
  for (int l = 0; l < f.num_layers(); ++l) {
    w.put(static_cast<std::uint32_t>(f.weight(l).rows()));
    w.put(static_cast<std::uint32_t>(f.weight(l).cols()));
    w.bytes(f.weight(l).data(), static_cast<std::size_t>(f.weight(l).size()) * sizeof(double));
    w.bytes(f.bias(l).data(), static_cast<std::size_t>(f.bias(l).size()) * sizeof(double));
  }
  for (const auto& g : ck.gaussian_opt.groups) detail::put_adam(w, g);
  detail::put_adam(w, ck.field_opt);
  w.put(ck.iteration);
  const std::string cfg = config_to_json(ck.config).dump();
  w.put(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg.data(), cfg.size());
  return w.data();
}

inline Checkpoint decode_checkpoint(std::vector<char> data, const std::string& path = "<memory>") {
  Reader r(std::move(data), path);
  r.expect_magic("SCIG");
  Checkpoint ck;
  auto& scene = ck.model.scene;
  const auto count = r.get<std::uint32_t>();
  scene.sh_degree = static_cast<int>(r.get<std::uint32_t>());
  if (scene.sh_degree < 0 || scene.sh_degree > kMaxShDegree) r.fail("invalid SH degree");
  r.bytes(scene.background.data(), 3 * sizeof(double));
  const std::size_t coeffs = static_cast<std::size_t>(sh_coeff_count(scene.sh_degree));
  if (count > r.remaining() / ((11 + 3 * coeffs) * sizeof(double))) r.fail("gaussian count exceeds file size");
  scene.gaussians.resize(count);
  for (auto& g : scene.gaussians) {
    r.bytes(g.mu.data(), 3 * sizeof(double));
    r.bytes(g.rot.data(), 4 * sizeof(double));
    r.bytes(g.log_scale.data(), 3 * sizeof(double));
    g.opacity_logit = r.get<double>();
    g.sh.resize(coeffs);
    r.bytes(g.sh.front().data(), 3 * coeffs * sizeof(double));
  }
  FieldConfig fc;
  fc.embed_levels = static_cast<int>(r.get<std::uint32_t>());
  fc.depth = static_cast<int>(r.get<std::uint32_t>());
  fc.width = static_cast<int>(r.get<std::uint32_t>());
  fc.skip_at = r.get<std::int32_t>();
  fc.detach_base_positions = r.get<std::uint8_t>() != 0;
  if (fc.embed_levels < 1 || fc.depth < 1 || fc.width < 1 || fc.skip_at < 0 || fc.skip_at >= fc.depth ||
      fc.depth > 1024 || fc.width > (1 << 16) || fc.embed_levels > 64)
    r.fail("invalid field dimensions");
  Vec3 center, half;
  r.bytes(center.data(), 3 * sizeof(double));
  r.bytes(half.data(), 3 * sizeof(double));
  TransformField field;
  try {
    field = TransformField(fc, center, half, 0);
  } catch (const InvalidParameter& e) {
    r.fail(e.what());
  }
  std::vector<Eigen::MatrixXd> ws;
  std::vector<Eigen::VectorXd> bs;
  for (int l = 0; l <= fc.depth; ++l) {
    const auto rows = r.get<std::uint32_t>(), cols = r.get<std::uint32_t>();
    if (rows != field.weight(l).rows() || cols != field.weight(l).cols()) r.fail("field layer shape mismatch");
    Eigen::MatrixXd wmat(rows, cols);
    Eigen::VectorXd b(rows);
    r.bytes(wmat.data(), static_cast<std::size_t>(wmat.size()) * sizeof(double));
    r.bytes(b.data(), static_cast<std::size_t>(b.size()) * sizeof(double));
    ws.push_back(std::move(wmat));
    bs.push_back(std::move(b));
  }
  field.set_layers(std::move(ws), std::move(bs));
  ck.model.field = std::move(field);
  for (std::size_t k = 0; k < kParamGroups.size(); ++k) {
    ck.gaussian_opt.groups[k] = detail::get_adam(r);
    if (ck.gaussian_opt.groups[k].size() != count * group_dim(kParamGroups[k], scene.sh_degree))
      r.fail("gaussian optimizer state does not match the scene");
  }
  ck.field_opt = detail::get_adam(r);
  if (ck.field_opt.size() != ck.model.field.parameter_count()) r.fail("field optimizer state does not match the field");
  ck.iteration = r.get<std::uint64_t>();
  const auto len = r.get<std::uint32_t>();
  std::string cfg(len, '\0');
  r.bytes(cfg.data(), len);
  r.expect_end();
  try {
    ck.config = parse_config(cfg);
  } catch (const ConfigError& e) {
    r.fail(std::string("embedded config: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}
inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

// --- PNG preview -----------------------------------------------------------

/// 8-bit preview: value * scale clamped to [0, 1]. Single-channel images are
/// written as gray, everything else uses the first three channels.
inline void save_png(const std::filesystem::path& path, const Image& img, double scale = 1.0) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError(path.string() + ": cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError(path.string() + ": PNG encoding failed");
  }
  const bool gray = img.channels == 1;
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               gray ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int out_ch = gray ? 1 : 3;
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * out_ch);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < out_ch; ++c) {
        const double v = std::clamp(img.at(y, x, std::min(c, img.channels - 1)) * scale, 0.0, 1.0);
        row[static_cast<std::size_t>(x) * out_ch + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError(path.string() + ": write failed");
}

}  // namespace scigs::io
