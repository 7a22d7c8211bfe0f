#include "gabor_adapt/imageio.hpp"

#include "gabor_adapt/errors.hpp"

#include <fftw3.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>

namespace gabor_adapt {

namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

// FFTW planning is not thread-safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

bool has_extension(const std::filesystem::path& p, std::initializer_list<const char*> exts) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* x) { return e == x; });
}

// Reads one whitespace/comment-delimited header token of a netpbm file.
std::string netpbm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int netpbm_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = netpbm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad netpbm header field '" + tok + "' in " + path.string());
  }
}

RawImage load_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = netpbm_token(in);
  const bool gray = magic == "P2" || magic == "P5";
  const bool color = magic == "P3" || magic == "P6";
  if (!gray && !color) throw FormatError("unsupported netpbm type '" + magic + "' in " + path.string());
  const bool ascii = magic == "P2" || magic == "P3";
  const int width = netpbm_int(in, path);
  const int height = netpbm_int(in, path);
  const int maxval = netpbm_int(in, path);
  if (width <= 0 || height <= 0) throw FormatError("zero-dimension image " + path.string());
  if (maxval <= 0 || maxval > 65535) throw FormatError("bad maxval in " + path.string());

  const int channels = color ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<double> raw(count);
  if (ascii) {
    for (auto& v : raw) v = netpbm_int(in, path);
  } else {
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> buf(count * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw FormatError("truncated raster in " + path.string());
    for (std::size_t i = 0; i < count; ++i) {
      raw[i] = bytes == 1 ? buf[i] : (buf[2 * i] << 8) | buf[2 * i + 1];
    }
  }

  RawImage img;
  img.pixels.resize(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels;
      const double v = color ? kLumaR * raw[i] + kLumaG * raw[i + 1] + kLumaB * raw[i + 2] : raw[i];
      img.pixels(y, x) = v / maxval;
    }
  }
  return img;
}

struct PngReadDeleter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadDeleter() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

RawImage load_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path.string());
  }

  PngReadDeleter guard;
  guard.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!guard.png) throw IoError("libpng initialisation failed");
  guard.info = png_create_info_struct(guard.png);
  if (!guard.info) throw IoError("libpng initialisation failed");
  if (setjmp(png_jmpbuf(guard.png))) throw FormatError("corrupt PNG: " + path.string());

  png_init_io(guard.png, fp.get());
  png_set_sig_bytes(guard.png, 8);
  png_read_png(guard.png, guard.info,
               PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING, nullptr);

  const int width = static_cast<int>(png_get_image_width(guard.png, guard.info));
  const int height = static_cast<int>(png_get_image_height(guard.png, guard.info));
  const int depth = png_get_bit_depth(guard.png, guard.info);
  const int channels = png_get_channels(guard.png, guard.info);
  if (width <= 0 || height <= 0) throw FormatError("zero-dimension image " + path.string());
  if (channels != 1 && channels != 3) throw FormatError("unsupported PNG channel layout in " + path.string());

  const double maxval = depth == 16 ? 65535.0 : 255.0;
  png_bytepp rows = png_get_rows(guard.png, guard.info);
  RawImage img;
  img.pixels.resize(height, width);
  for (int y = 0; y < height; ++y) {
    const png_bytep row = rows[y];
    for (int x = 0; x < width; ++x) {
      auto sample = [&](int c) -> double {
        const int i = x * channels + c;
        return depth == 16 ? (row[2 * i] << 8) | row[2 * i + 1] : row[i];
      };
      const double v = channels == 3 ? kLumaR * sample(0) + kLumaG * sample(1) + kLumaB * sample(2) : sample(0);
      img.pixels(y, x) = v / maxval;
    }
  }
  return img;
}

}  // namespace

void PipelineConfig::validate() const {
  if (patch_size < 4) throw ArgumentError("patch_size must be >= 4");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (whitening_cutoff < 0.0 || !std::isfinite(whitening_cutoff)) {
    throw ArgumentError("whitening_cutoff must be positive (or 0 for the default)");
  }
}

RawImage load_grayscale(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  if (has_extension(path, {".png"})) return load_png(path);
  if (has_extension(path, {".pgm", ".ppm", ".pnm"})) return load_netpbm(path);
  throw FormatError("unsupported raster format: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const RawImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.width()) * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::clamp(img.pixels(y, x), 0.0, 1.0);
      buf[static_cast<std::size_t>(y) * img.width() + x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

double whitening_gain(double f, double f0) {
  const double q = f / f0;
  return f * std::exp(-(q * q) * (q * q));
}

double default_whitening_cutoff(int width, int height) {
  return 0.8 * 0.5 * std::min(width, height);
}

RawImage whiten(const RawImage& img, const PipelineConfig& cfg) {
  const int h = img.height();
  const int w = img.width();
  if (h < 16 || w < 16) throw ArgumentError("whiten requires images of at least 16x16 pixels");
  if (!img.pixels.allFinite()) throw NumericError("non-finite pixel in whiten input");
  const double f0 = cfg.whitening_cutoff > 0.0 ? cfg.whitening_cutoff : default_whitening_cutoff(w, h);
  const double n = std::min(w, h);
  const int wc = w / 2 + 1;

  // FFTW works on row-major arrays; Eigen storage is column-major.
  std::vector<double> spatial(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) spatial[static_cast<std::size_t>(y) * w + x] = img.pixels(y, x);
  auto* spectrum = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * h * wc));
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> spectrum_guard(spectrum,
                                                                     [](void* p) { fftw_free(p); });
  fftw_plan forward, backward;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_2d(h, w, spatial.data(), spectrum, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_2d(h, w, spectrum, spatial.data(), FFTW_ESTIMATE);
  }
  fftw_execute(forward);
  for (int ky = 0; ky < h; ++ky) {
    const double fy = (ky <= h / 2 ? ky : ky - h) / static_cast<double>(h);
    for (int kx = 0; kx < wc; ++kx) {
      const double fx = kx / static_cast<double>(w);
      const double gain = whitening_gain(n * std::sqrt(fx * fx + fy * fy), f0) / (static_cast<double>(h) * w);
      spectrum[ky * wc + kx][0] *= gain;
      spectrum[ky * wc + kx][1] *= gain;
    }
  }
  fftw_execute(backward);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }

  RawImage out;
  out.pixels.resize(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.pixels(y, x) = spatial[static_cast<std::size_t>(y) * w + x];
  if (!out.pixels.allFinite()) throw NumericError("non-finite value after whitening");

  if (cfg.standardize) {
    out.pixels.array() -= out.pixels.mean();
    const double sd = std::sqrt(out.pixels.squaredNorm() / static_cast<double>(out.pixels.size()));
    // A constant input has no energy left after DC removal.
    if (sd > 1e-12) out.pixels /= sd;
    else out.pixels.setZero();
  }
  return out;
}

PatchBatch sample_patches(const std::vector<RawImage>& images, const PipelineConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw ArgumentError("sample_patches needs at least one image");
  const int p = cfg.patch_size;
  for (const auto& img : images) {
    if (img.width() < p || img.height() < p) throw ArgumentError("image smaller than patch size");
  }
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<int> pick_image(0, static_cast<int>(images.size()) - 1);

  PatchBatch batch;
  batch.patch_size = p;
  batch.patches.resize(cfg.batch_size, p * p);
  batch.origins.resize(cfg.batch_size);
  for (int b = 0; b < cfg.batch_size; ++b) {
    const int id = pick_image(rng);
    const auto& img = images[id];
    std::uniform_int_distribution<int> pick_x(0, img.width() - p);
    std::uniform_int_distribution<int> pick_y(0, img.height() - p);
    const int x = pick_x(rng);
    const int y = pick_y(rng);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) batch.patches(b, r * p + c) = img.pixels(y + r, x + c);
    batch.origins[b] = {id, x, y};
  }
  return batch;
}

void write_patch_csv(const std::filesystem::path& path, const PatchBatch& batch) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "image,x,y";
  for (int i = 0; i < batch.patches.cols(); ++i) out << ",p" << i;
  out << '\n';
  char buf[32];
  for (int b = 0; b < batch.size(); ++b) {
    const auto& o = batch.origins[b];
    out << o.image << ',' << o.x << ',' << o.y;
    for (int i = 0; i < batch.patches.cols(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", batch.patches(b, i));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PatchBatch read_patch_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty patch CSV " + path.string());
  const long columns = std::count(line.begin(), line.end(), ',') + 1;
  const long pixels = columns - 3;
  const int p = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pixels))));
  if (pixels <= 0 || static_cast<long>(p) * p != pixels) throw FormatError("patch CSV width is not a square patch");

  std::vector<std::vector<double>> rows;
  std::vector<PatchOrigin> origins;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("bad number '" + cell + "' in " + path.string());
      }
    }
    if (static_cast<long>(values.size()) != columns) throw FormatError("ragged row in " + path.string());
    origins.push_back({static_cast<int>(values[0]), static_cast<int>(values[1]), static_cast<int>(values[2])});
    rows.emplace_back(values.begin() + 3, values.end());
  }
  PatchBatch batch;
  batch.patch_size = p;
  batch.origins = std::move(origins);
  batch.patches.resize(static_cast<Eigen::Index>(rows.size()), pixels);
  for (std::size_t b = 0; b < rows.size(); ++b)
    for (long i = 0; i < pixels; ++i) batch.patches(static_cast<Eigen::Index>(b), i) = rows[b][i];
  return batch;
}

namespace {

constexpr char kCacheMagic[8] = {'G', 'A', 'P', 'A', 'T', 'C', 'H', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "cache format is little-endian");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("truncated patch cache " + path.string());
  return v;
}

}  // namespace

void write_patch_cache(const std::filesystem::path& path, const PatchBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kCacheMagic, sizeof kCacheMagic);
  put<std::int32_t>(out, batch.patch_size);
  put<std::int64_t>(out, batch.size());
  for (int b = 0; b < batch.size(); ++b) {
    put<std::int32_t>(out, batch.origins[b].image);
    put<std::int32_t>(out, batch.origins[b].x);
    put<std::int32_t>(out, batch.origins[b].y);
    for (int i = 0; i < batch.patches.cols(); ++i) put<double>(out, batch.patches(b, i));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PatchBatch read_patch_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof kCacheMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) throw FormatError("not a patch cache: " + path.string());
  PatchBatch batch;
  batch.patch_size = get<std::int32_t>(in, path);
  const auto count = get<std::int64_t>(in, path);
  if (batch.patch_size <= 0 || count < 0) throw FormatError("bad patch cache header in " + path.string());
  const int pixels = batch.patch_size * batch.patch_size;
  batch.patches.resize(count, pixels);
  batch.origins.resize(count);
  for (std::int64_t b = 0; b < count; ++b) {
    batch.origins[b].image = get<std::int32_t>(in, path);
    batch.origins[b].x = get<std::int32_t>(in, path);
    batch.origins[b].y = get<std::int32_t>(in, path);
    for (int i = 0; i < pixels; ++i) batch.patches(b, i) = get<double>(in, path);
  }
  return batch;
}

}  // namespace gabor_adapt
