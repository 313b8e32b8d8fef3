#include "styleswin/io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <memory>
#include <sstream>

namespace styleswin {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + target.parent_path().string());
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint8_t to_byte(double x) {
  const double v = std::floor((x + 1.0) * 0.5 * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

namespace {

struct PngWriteHandle {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteHandle() { png_destroy_write_struct(&png, &info); }
};

struct PngReadHandle {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadHandle() { png_destroy_read_struct(&png, &info, nullptr); }
};

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

}  // namespace

void write_png_bytes(const std::string& path, std::int64_t height, std::int64_t width,
                     std::int64_t channels, const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw ShapeError("write_png: channels must be 1 or 3");
  if (std::int64_t(pixels.size()) != height * width * channels)
    throw ShapeError("write_png: pixel buffer size mismatch");
  std::string encoded;
  PngWriteHandle h;
  h.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!h.png) throw IoError("png: cannot allocate writer");
  h.info = png_create_info_struct(h.png);
  if (!h.info) throw IoError("png: cannot allocate info");
  if (setjmp(png_jmpbuf(h.png))) throw IoError("png: encoding failed for " + path);
  png_set_write_fn(h.png, &encoded, append_bytes, nullptr);
  png_set_IHDR(h.png, h.info, png_uint_32(width), png_uint_32(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(h.png, h.info);
  for (std::int64_t r = 0; r < height; ++r)
    png_write_row(h.png, const_cast<png_bytep>(pixels.data() + r * width * channels));
  png_write_end(h.png, nullptr);
  write_file_atomic(path, encoded);
}

void write_png(const std::string& path, const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("write_png expects [H,W,C]");
  std::vector<std::uint8_t> px(image.numel());
  const auto d = image.data();
  std::transform(d.begin(), d.end(), px.begin(), to_byte);
  write_png_bytes(path, image.dim(0), image.dim(1), image.dim(2), px);
}

Tensor read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot read " + path);
  PngReadHandle h;
  h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!h.png) throw IoError("png: cannot allocate reader");
  h.info = png_create_info_struct(h.png);
  if (!h.info) throw IoError("png: cannot allocate info");
  if (setjmp(png_jmpbuf(h.png))) throw IoError("png: decoding failed for " + path);
  png_init_io(h.png, fp.get());
  png_read_info(h.png, h.info);
  png_set_strip_16(h.png);
  png_set_strip_alpha(h.png);
  png_set_palette_to_rgb(h.png);
  png_set_expand_gray_1_2_4_to_8(h.png);
  png_set_gray_to_rgb(h.png);
  png_read_update_info(h.png, h.info);
  const auto width = std::int64_t(png_get_image_width(h.png, h.info));
  const auto height = std::int64_t(png_get_image_height(h.png, h.info));
  const auto rowbytes = png_get_rowbytes(h.png, h.info);
  if (std::int64_t(rowbytes) != width * 3) throw IoError("png: unsupported layout in " + path);
  std::vector<std::uint8_t> buf(height * rowbytes);
  for (std::int64_t r = 0; r < height; ++r) png_read_row(h.png, buf.data() + r * rowbytes, nullptr);
  std::vector<double> values(buf.size());
  std::transform(buf.begin(), buf.end(), values.begin(),
                 [](std::uint8_t b) { return double(b) / 255.0 * 2.0 - 1.0; });
  return Tensor::from({height, width, 3}, std::move(values));
}

Tensor tile_grid(const Tensor& images, std::int64_t columns) {
  if (images.rank() != 4) throw ShapeError("tile_grid expects [B,H,W,C]");
  const std::int64_t b = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  if (columns <= 0) columns = std::max<std::int64_t>(1, std::int64_t(std::ceil(std::sqrt(double(b)))));
  const std::int64_t rows = (b + columns - 1) / columns;
  Tensor grid = Tensor::full({rows * h, columns * w, c}, -1.0);
  auto g = grid.mutable_data();
  const auto d = images.data();
  for (std::int64_t n = 0; n < b; ++n) {
    const std::int64_t r0 = (n / columns) * h, c0 = (n % columns) * w;
    for (std::int64_t y = 0; y < h; ++y)
      std::copy_n(d.begin() + ((n * h + y) * w) * c, w * c,
                  g.begin() + ((r0 + y) * columns * w + c0) * c);
  }
  return grid;
}

void write_sample_grid(const Tensor& images, const std::string& path, std::int64_t columns) {
  write_png(path, tile_grid(images, columns));
}

void write_heatmap_png(const std::string& path, const std::vector<double>& values,
                       std::int64_t height, std::int64_t width) {
  if (std::int64_t(values.size()) != height * width) throw ShapeError("heatmap size mismatch");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  std::vector<std::uint8_t> px(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    px[i] = span > 0 ? std::uint8_t(std::lround((values[i] - *lo) / span * 255.0)) : 0;
  write_png_bytes(path, height, width, 1, px);
}

namespace {

std::string csv_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double csv_parse(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc()) throw IoError("metrics: malformed number '" + s + "'");
  return v;
}

}  // namespace

std::string metrics_header() {
  return "iter,loss_d,loss_g,r1,bcr,tv,lr_g,lr_d,grad_norm_g,grad_norm_d,blocking_score,"
         "proxy_distance";
}

std::string format_metrics_row(const MetricsRow& r) {
  std::string s = std::to_string(r.iter);
  for (double v : {r.loss_d, r.loss_g, r.r1, r.bcr, r.tv, r.lr_g, r.lr_d, r.grad_norm_g,
                   r.grad_norm_d, r.blocking_score, r.proxy_distance})
    s += "," + csv_double(v);
  return s;
}

MetricsWriter::MetricsWriter(const std::string& path, bool append) {
  const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  out_.open(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out_) throw IoError("cannot write " + path);
  if (fresh) out_ << metrics_header() << "\n";
}

void MetricsWriter::write(const MetricsRow& row) {
  out_ << format_metrics_row(row) << "\n";
  out_.flush();
  if (!out_) throw IoError("metrics write failed");
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != metrics_header())
    throw IoError("metrics: unexpected header in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 12) throw IoError("metrics: malformed row in " + path);
    MetricsRow r;
    r.iter = std::stoll(cells[0]);
    double* fields[] = {&r.loss_d, &r.loss_g, &r.r1, &r.bcr, &r.tv, &r.lr_g, &r.lr_d,
                        &r.grad_norm_g, &r.grad_norm_d, &r.blocking_score, &r.proxy_distance};
    for (int i = 0; i < 11; ++i) *fields[i] = csv_parse(cells[i + 1]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints: "SSWINCKP" | u32 version | u64 payload length | payload | u32 crc32(payload)

namespace {

constexpr char kMagic[8] = {'S', 'S', 'W', 'I', 'N', 'C', 'K', 'P'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void tensors(const ParamList& list) {
    pod<std::uint64_t>(list.size());
    for (const auto& [name, t] : list) {
      str(name);
      pod<std::uint32_t>(std::uint32_t(t.rank()));
      for (auto d : t.shape()) pod<std::int64_t>(d);
      const auto d = t.data();
      buf_.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
    }
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  ParamList tensors() {
    const auto count = pod<std::uint64_t>();
    ParamList list;
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string name = str();
      const auto rank = pod<std::uint32_t>();
      if (rank > 8) throw IntegrityError("checkpoint: implausible tensor rank");
      Shape shape(rank);
      std::int64_t numel = 1;
      for (auto& d : shape) {
        d = pod<std::int64_t>();
        if (d < 0) throw IntegrityError("checkpoint: negative dimension");
        numel *= d;
      }
      need(std::uint64_t(numel) * sizeof(double));
      std::vector<double> v(numel);
      std::memcpy(v.data(), bytes_.data() + pos_, numel * sizeof(double));
      pos_ += numel * sizeof(double);
      list.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(v)));
    }
    return list;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw IntegrityError("checkpoint: truncated payload");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

ParamList deep_copy(const ParamList& src) {
  ParamList out;
  for (const auto& [name, t] : src) out.emplace_back(name, t.detach());
  return out;
}

ParamList adam_list(const AdamState& s) {
  ParamList out;
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.emplace_back("m." + std::to_string(i), s.m[i].detach());
    out.emplace_back("v." + std::to_string(i), s.v[i].detach());
  }
  return out;
}

ParamList adam_handles(const AdamState& s) {
  ParamList out;
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.emplace_back("m." + std::to_string(i), s.m[i]);
    out.emplace_back("v." + std::to_string(i), s.v[i]);
  }
  return out;
}

void check_compatible(const ParamList& dst, const ParamList& src, const std::string& what) {
  if (dst.size() != src.size())
    throw IntegrityError("checkpoint: " + what + " tensor count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].first != src[i].first || dst[i].second.shape() != src[i].second.shape())
      throw IntegrityError("checkpoint: " + what + " mismatch at " + dst[i].first);
  }
}

}  // namespace

Checkpoint capture_checkpoint(const Trainer& trainer, const std::string& config_text) {
  Checkpoint c;
  c.iteration = trainer.iteration();
  c.config_text = config_text;
  c.generator = deep_copy(trainer.generator().parameters());
  c.discriminator = deep_copy(trainer.discriminator().parameters());
  c.ema = deep_copy(trainer.ema().parameters());
  c.buffers = deep_copy(trainer.discriminator().buffers());
  c.adam_g = adam_list(trainer.adam_g());
  c.adam_d = adam_list(trainer.adam_d());
  c.adam_g_step = trainer.adam_g().step;
  c.adam_d_step = trainer.adam_d().step;
  c.rng_latent = trainer.rng().latent.state();
  c.rng_augment = trainer.rng().augment.state();
  c.rng_data = trainer.rng().data.state();
  return c;
}

void restore_checkpoint(Trainer& trainer, const Checkpoint& ckpt) {
  const ParamList g = trainer.generator().parameters();
  const ParamList d = trainer.discriminator().parameters();
  const ParamList e = trainer.ema().parameters();
  const ParamList b = trainer.discriminator().buffers();
  const ParamList ag = adam_handles(trainer.adam_g());
  const ParamList ad = adam_handles(trainer.adam_d());
  check_compatible(g, ckpt.generator, "generator");
  check_compatible(d, ckpt.discriminator, "discriminator");
  check_compatible(e, ckpt.ema, "ema");
  check_compatible(b, ckpt.buffers, "buffers");
  check_compatible(ag, ckpt.adam_g, "adam_g");
  check_compatible(ad, ckpt.adam_d, "adam_d");
  Rng latent, augment, data;
  try {
    latent.set_state(ckpt.rng_latent);
    augment.set_state(ckpt.rng_augment);
    data.set_state(ckpt.rng_data);
  } catch (const ContractError&) {
    throw IntegrityError("checkpoint: malformed rng state");
  }
  copy_values(g, ckpt.generator);
  copy_values(d, ckpt.discriminator);
  copy_values(e, ckpt.ema);
  copy_values(b, ckpt.buffers);
  copy_values(ag, ckpt.adam_g);
  copy_values(ad, ckpt.adam_d);
  trainer.adam_g().step = ckpt.adam_g_step;
  trainer.adam_d().step = ckpt.adam_d_step;
  trainer.rng().latent = latent;
  trainer.rng().augment = augment;
  trainer.rng().data = data;
  trainer.set_iteration(ckpt.iteration);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer payload;
  payload.pod<std::int64_t>(ckpt.iteration);
  payload.str(ckpt.config_text);
  for (const auto* list : {&ckpt.generator, &ckpt.discriminator, &ckpt.ema, &ckpt.buffers,
                           &ckpt.adam_g, &ckpt.adam_d})
    payload.tensors(*list);
  payload.pod<std::int64_t>(ckpt.adam_g_step);
  payload.pod<std::int64_t>(ckpt.adam_d_step);
  payload.str(ckpt.rng_latent);
  payload.str(ckpt.rng_augment);
  payload.str(ckpt.rng_data);

  const std::string& body = payload.bytes();
  Writer file;
  file.bytes().append(kMagic, sizeof(kMagic));
  file.pod<std::uint32_t>(ckpt.version);
  file.pod<std::uint64_t>(body.size());
  file.bytes() += body;
  file.pod<std::uint32_t>(std::uint32_t(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  return file.bytes();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  constexpr std::size_t header = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError("checkpoint: bad magic or truncated header");
  Reader head(std::string_view(bytes).substr(sizeof(kMagic)));
  const auto version = head.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw VersionError("checkpoint: format version " + std::to_string(version) +
                       ", expected " + std::to_string(Checkpoint::kVersion));
  const auto length = head.pod<std::uint64_t>();
  if (bytes.size() != header + length + sizeof(std::uint32_t))
    throw IntegrityError("checkpoint: length mismatch (truncated or padded file)");
  const std::string_view body = std::string_view(bytes).substr(header, length);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + header + length, sizeof(stored));
  const auto actual = std::uint32_t(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  if (stored != actual) throw IntegrityError("checkpoint: checksum mismatch");

  Reader r(body);
  Checkpoint c;
  c.version = version;
  c.iteration = r.pod<std::int64_t>();
  c.config_text = r.str();
  for (auto* list : {&c.generator, &c.discriminator, &c.ema, &c.buffers, &c.adam_g, &c.adam_d})
    *list = r.tensors();
  c.adam_g_step = r.pod<std::int64_t>();
  c.adam_d_step = r.pod<std::int64_t>();
  c.rng_latent = r.str();
  c.rng_augment = r.str();
  c.rng_data = r.str();
  if (!r.done()) throw IntegrityError("checkpoint: trailing bytes in payload");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const VersionError& e) {
    throw VersionError(std::string(e.what()) + " [" + path + "]");
  } catch (const IntegrityError& e) {
    throw IntegrityError(std::string(e.what()) + " [" + path + "]");
  }
}

}  // namespace styleswin
