#include "dgct/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dgct {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& where, const std::string& v) {
  double out = 0.0;
  const std::string t = trim(v);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(out)) {
    throw FormatError(where + ": invalid number '" + v + "'");
  }
  return out;
}

template <typename Int>
Int to_int(const std::string& where, const std::string& v) {
  Int out{};
  const std::string t = trim(v);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw FormatError(where + ": invalid integer '" + v + "'");
  }
  return out;
}

Vec3 to_vec3(const std::string& where, const std::string& v) {
  std::stringstream ss(v);
  std::string part;
  Vec3 out;
  int i = 0;
  while (std::getline(ss, part, ',')) {
    if (i >= 3) throw FormatError(where + ": expected three comma-separated numbers");
    out[i++] = to_double(where, part);
  }
  if (i != 3) throw FormatError(where + ": expected three comma-separated numbers");
  return out;
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z()); }

/// Splits key=value text, rejecting malformed lines and duplicate keys.
std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& what) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError(what + " line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (!out.emplace(key, trim(t.substr(eq + 1))).second) {
      throw FormatError(what + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void tag(const char (&t)[5]) { bytes_.insert(bytes_.end(), t, t + 4); }

  void section(const char (&t)[5], const std::vector<double>& values) {
    tag(t);
    u32(kFloat64);
    u64(values.size());
    for (double v : values) f64(v);
  }
  void section(const char (&t)[5], const std::string& text) {
    tag(t);
    u32(kText);
    u64(text.size());
    bytes_.insert(bytes_.end(), text.begin(), text.end());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

  static constexpr std::uint32_t kFloat64 = 1;
  static constexpr std::uint32_t kText = 2;

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}
  bool done() const { return pos_ == b_.size(); }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint: truncated file");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

void push_span(std::vector<double>& out, std::span<const double> s) {
  out.insert(out.end(), s.begin(), s.end());
}

void push_set(std::vector<double>& out, const GaussianSet& g) {
  push_span(out, g.center_values());
  push_span(out, g.log_scale_values());
  push_span(out, g.quat_values());
  push_span(out, g.density_values());
}

void push_planes(std::vector<double>& out, const PlaneGrid& p) {
  for (const auto& pl : p.all_planes()) push_span(out, pl);
}

void push_decoder(std::vector<double>& out, const DeformDecoder& d) {
  for (auto t : d.tensors()) push_span(out, t);
}

/// Sequential reader over a float64 payload.
class Cursor {
 public:
  Cursor(const std::vector<double>& v, std::string what) : v_(v), what_(std::move(what)) {}
  void take(std::span<double> dst) {
    if (v_.size() - pos_ < dst.size()) throw FormatError("checkpoint: section " + what_ + " too short");
    std::copy(v_.begin() + static_cast<std::ptrdiff_t>(pos_),
              v_.begin() + static_cast<std::ptrdiff_t>(pos_ + dst.size()), dst.begin());
    pos_ += dst.size();
  }
  double next() {
    double x = 0.0;
    take({&x, 1});
    return x;
  }
  void finish() const {
    if (pos_ != v_.size()) throw FormatError("checkpoint: section " + what_ + " has trailing data");
  }

 private:
  const std::vector<double>& v_;
  std::string what_;
  std::size_t pos_ = 0;
};

void take_set(Cursor& c, GaussianSet& g) {
  c.take(g.center_values());
  c.take(g.log_scale_values());
  c.take(g.quat_values());
  c.take(g.density_values());
}

void take_planes(Cursor& c, PlaneGrid& p) {
  for (auto& pl : p.all_planes()) c.take(pl);
}

void take_decoder(Cursor& c, DeformDecoder& d) {
  for (auto t : d.tensors()) c.take(t);
}

constexpr std::size_t kValuesPerKernel = 11;

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

void SimulationConfig::validate() const {
  if (!(period > 0.0)) throw InputDomainError("simulation: period must be > 0");
  if (n_proj < 1) throw InputDomainError("simulation: n_proj must be >= 1");
  if (!(duration > 0.0)) throw InputDomainError("simulation: duration must be > 0");
  if (!(edge_width > 0.0)) throw InputDomainError("simulation: edge_width must be > 0");
  geometry.validate();
}

BreathingPhantom SimulationConfig::phantom() const {
  BreathingPhantom p = default_phantom(period);
  p.edge_width = edge_width;
  return p;
}

SimulationConfig parse_simulation_config(const std::string& text, SimulationConfig c) {
  const std::string w = "simulation config";
  for (const auto& [key, value] : parse_kv(text, w)) {
    const std::string where = w + " key " + key;
    if (key == "period") c.period = to_double(where, value);
    else if (key == "n_proj") c.n_proj = to_int<int>(where, value);
    else if (key == "duration") c.duration = to_double(where, value);
    else if (key == "seed") c.seed = to_int<std::uint64_t>(where, value);
    else if (key == "edge_width") c.edge_width = to_double(where, value);
    else if (key == "dso") c.geometry.dso = to_double(where, value);
    else if (key == "dsd") c.geometry.dsd = to_double(where, value);
    else if (key == "det_w") c.geometry.det_w = to_double(where, value);
    else if (key == "det_h") c.geometry.det_h = to_double(where, value);
    else if (key == "nu") c.geometry.nu = to_int<int>(where, value);
    else if (key == "nv") c.geometry.nv = to_int<int>(where, value);
    else if (key == "bounds_min") c.geometry.bounds.lo = to_vec3(where, value);
    else if (key == "bounds_max") c.geometry.bounds.hi = to_vec3(where, value);
    else throw FormatError(w + ": unknown key '" + key + "'");
  }
  return c;
}

std::string format_simulation_config(const SimulationConfig& c) {
  std::ostringstream os;
  os << "period=" << fmt(c.period) << "\n"
     << "n_proj=" << c.n_proj << "\n"
     << "duration=" << fmt(c.duration) << "\n"
     << "seed=" << c.seed << "\n"
     << "edge_width=" << fmt(c.edge_width) << "\n"
     << "dso=" << fmt(c.geometry.dso) << "\n"
     << "dsd=" << fmt(c.geometry.dsd) << "\n"
     << "det_w=" << fmt(c.geometry.det_w) << "\n"
     << "det_h=" << fmt(c.geometry.det_h) << "\n"
     << "nu=" << c.geometry.nu << "\n"
     << "nv=" << c.geometry.nv << "\n"
     << "bounds_min=" << fmt(c.geometry.bounds.lo) << "\n"
     << "bounds_max=" << fmt(c.geometry.bounds.hi) << "\n";
  return os.str();
}

void write_image_raw(const fs::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(img.size() * 4);
  for (double v : img.data) put_f32(bytes, v);
  write_bytes(path, bytes);
}

Image read_image_raw(const fs::path& path, int nu, int nv) {
  const auto bytes = read_bytes(path);
  Image img(nu, nv);
  if (bytes.size() != img.size() * 4) {
    throw FormatError("'" + path.string() + "': expected " + std::to_string(img.size() * 4) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = get_f32(&bytes[i * 4]);
  return img;
}

void write_dataset(const fs::path& dir, const ProjectionSet& data) {
  fs::create_directories(dir);
  const ConeBeamGeometry& g = data.geometry;
  std::ostringstream geo;
  geo << "dso=" << fmt(g.dso) << "\n"
      << "dsd=" << fmt(g.dsd) << "\n"
      << "det_w=" << fmt(g.det_w) << "\n"
      << "det_h=" << fmt(g.det_h) << "\n"
      << "nu=" << g.nu << "\n"
      << "nv=" << g.nv << "\n"
      << "bounds_min=" << fmt(g.bounds.lo) << "\n"
      << "bounds_max=" << fmt(g.bounds.hi) << "\n";
  if (data.true_period) geo << "t_true_period=" << fmt(*data.true_period) << "\n";
  geo << "duration=" << fmt(data.duration) << "\n";
  write_text_file(dir / "geometry.txt", geo.str());

  std::ostringstream meta;
  meta << "index,timestamp,angle\n";
  for (std::size_t j = 0; j < data.items.size(); ++j) {
    meta << j << "," << fmt(data.items[j].timestamp) << "," << fmt(data.items[j].angle) << "\n";
    char name[32];
    std::snprintf(name, sizeof name, "proj_%04zu.raw", j);
    write_image_raw(dir / name, data.items[j].image);
  }
  write_text_file(dir / "meta.csv", meta.str());
}

ProjectionSet read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("dataset directory '" + dir.string() + "' not found");
  ProjectionSet data;
  ConeBeamGeometry& g = data.geometry;
  std::optional<double> duration;
  const std::string w = "geometry.txt";
  for (const auto& [key, value] : parse_kv(read_text_file(dir / "geometry.txt"), w)) {
    const std::string where = w + " key " + key;
    if (key == "dso") g.dso = to_double(where, value);
    else if (key == "dsd") g.dsd = to_double(where, value);
    else if (key == "det_w") g.det_w = to_double(where, value);
    else if (key == "det_h") g.det_h = to_double(where, value);
    else if (key == "nu") g.nu = to_int<int>(where, value);
    else if (key == "nv") g.nv = to_int<int>(where, value);
    else if (key == "bounds_min") g.bounds.lo = to_vec3(where, value);
    else if (key == "bounds_max") g.bounds.hi = to_vec3(where, value);
    else if (key == "t_true_period") data.true_period = to_double(where, value);
    else if (key == "duration") duration = to_double(where, value);
    else throw FormatError(w + ": unknown key '" + key + "'");
  }
  try {
    g.validate();
  } catch (const InputDomainError& e) {
    throw FormatError(std::string("geometry.txt: ") + e.what());
  }

  std::istringstream meta(read_text_file(dir / "meta.csv"));
  std::string line;
  if (!std::getline(meta, line) || trim(line) != "index,timestamp,angle") {
    throw FormatError("meta.csv: expected header 'index,timestamp,angle'");
  }
  int lineno = 1;
  while (std::getline(meta, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw FormatError("meta.csv line " + std::to_string(lineno) + ": expected 3 fields");
    }
    const std::string where = "meta.csv line " + std::to_string(lineno);
    const auto index = to_int<std::size_t>(where, a);
    if (index != data.items.size()) throw FormatError(where + ": indices must be 0, 1, 2, ...");
    Projection p;
    p.timestamp = to_double(where, b);
    p.angle = to_double(where, c);
    char name[32];
    std::snprintf(name, sizeof name, "proj_%04zu.raw", index);
    p.image = read_image_raw(dir / name, g.nu, g.nv);
    data.items.push_back(std::move(p));
  }
  if (data.items.empty()) throw FormatError("meta.csv: no projections");
  if (duration) {
    data.duration = *duration;
  } else {
    for (const auto& p : data.items) data.duration = std::max(data.duration, p.timestamp);
  }
  return data;
}

void write_volume(const fs::path& path, const Volume& vol) {
  std::vector<std::uint8_t> bytes{'D', 'T', 'V', 'L'};
  for (int a = 0; a < 3; ++a) {
    const auto v = static_cast<std::uint32_t>(vol.spec.res[a]);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  bytes.reserve(16 + vol.data.size() * 4);
  for (double v : vol.data) put_f32(bytes, v);
  write_bytes(path, bytes);
}

Volume read_volume(const fs::path& path, const Box& bounds) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "DTVL", 4) != 0) {
    throw FormatError("'" + path.string() + "': not a volume file");
  }
  VolumeSpec spec;
  spec.bounds = bounds;
  for (int a = 0; a < 3; ++a) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[4 + 4 * a + i]) << (8 * i);
    if (v == 0 || v > (1u << 16)) throw FormatError("'" + path.string() + "': bad resolution");
    spec.res[a] = static_cast<int>(v);
  }
  Volume vol(spec);
  if (bytes.size() != 16 + vol.data.size() * 4) {
    throw FormatError("'" + path.string() + "': size does not match header");
  }
  for (std::size_t i = 0; i < vol.data.size(); ++i) vol.data[i] = get_f32(&bytes[16 + 4 * i]);
  return vol;
}

std::vector<std::uint8_t> encode_checkpoint(const TrainState& s, const TrainConfig& cfg) {
  ByteWriter w;
  w.tag("DTCK");
  w.u32(kCheckpointVersion);
  w.section("CONF", format_train_config(cfg));

  const NormalizationBounds& b = s.model.field.bounds;
  w.section("BNDS", std::vector<double>{b.space.lo.x(), b.space.lo.y(), b.space.lo.z(),
                                        b.space.hi.x(), b.space.hi.y(), b.space.hi.z(),
                                        b.time.start, b.time.end, b.time.period_upper_bound});
  std::vector<double> v;
  push_set(v, s.model.gaussians);
  w.section("GAUS", v);
  v.clear();
  push_planes(v, s.model.field.planes);
  w.section("PLAN", v);
  v.clear();
  push_decoder(v, s.model.field.decoder);
  w.section("DECO", v);
  w.section("TAU_", std::vector<double>{s.model.period.tau});
  w.section("STEP", std::vector<double>{static_cast<double>(s.iteration),
                                        static_cast<double>(s.moments.gaussian_steps),
                                        static_cast<double>(s.moments.field_steps)});
  v.clear();
  const AdamMoments& m = s.moments;
  push_set(v, m.m_gaussians);
  push_set(v, m.v_gaussians);
  push_planes(v, m.m_planes);
  push_planes(v, m.v_planes);
  push_decoder(v, m.m_decoder);
  push_decoder(v, m.v_decoder);
  v.push_back(m.m_tau);
  v.push_back(m.v_tau);
  w.section("MOMS", v);
  v.clear();
  for (std::size_t k = 0; k < s.grad_count.size(); ++k) {
    v.push_back(s.grad_norm_sum[k]);
    v.insert(v.end(), s.grad_sum[k].data(), s.grad_sum[k].data() + 3);
    v.push_back(s.grad_count[k]);
  }
  w.section("DENS", v);
  w.section("RNG_", s.rng.state());
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "DTCK") throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::map<std::string, std::vector<double>> num;
  std::map<std::string, std::string> text;
  while (!r.done()) {
    const std::string tag = r.str(4);
    const std::uint32_t type = r.u32();
    const std::uint64_t count = r.u64();
    if (type == ByteWriter::kFloat64) {
      if (count > bytes.size() / 8) throw FormatError("checkpoint: truncated file");
      std::vector<double> v(count);
      for (auto& x : v) x = r.f64();
      num[tag] = std::move(v);
    } else if (type == ByteWriter::kText) {
      text[tag] = r.str(count);
    } else {
      throw FormatError("checkpoint: section " + tag + " has unknown type");
    }
  }
  auto need_num = [&](const char* tag) -> const std::vector<double>& {
    const auto it = num.find(tag);
    if (it == num.end()) throw FormatError(std::string("checkpoint: missing section ") + tag);
    return it->second;
  };
  auto need_text = [&](const char* tag) -> const std::string& {
    const auto it = text.find(tag);
    if (it == text.end()) throw FormatError(std::string("checkpoint: missing section ") + tag);
    return it->second;
  };

  Checkpoint ck;
  ck.config = parse_train_config(need_text("CONF"), desk_preset());
  const TrainConfig& cfg = ck.config;
  TrainState& s = ck.state;

  const auto& bn = need_num("BNDS");
  if (bn.size() != 9) throw FormatError("checkpoint: section BNDS has wrong length");
  NormalizationBounds& b = s.model.field.bounds;
  b.space.lo = Vec3(bn[0], bn[1], bn[2]);
  b.space.hi = Vec3(bn[3], bn[4], bn[5]);
  b.time.start = bn[6];
  b.time.end = bn[7];
  b.time.period_upper_bound = bn[8];

  const auto& gv = need_num("GAUS");
  if (gv.size() % kValuesPerKernel != 0) throw FormatError("checkpoint: section GAUS has wrong length");
  const std::size_t k = gv.size() / kValuesPerKernel;
  s.model.gaussians.resize(k);
  {
    Cursor c(gv, "GAUS");
    take_set(c, s.model.gaussians);
    c.finish();
  }
  try {
    s.model.field.planes = PlaneGrid(cfg.planes);
  } catch (const InputDomainError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  {
    Cursor c(need_num("PLAN"), "PLAN");
    take_planes(c, s.model.field.planes);
    c.finish();
  }
  s.model.field.decoder =
      DeformDecoder::initialized(cfg.planes.levels * cfg.planes.features, cfg.decoder_width, 0)
          .zeros_like();
  {
    Cursor c(need_num("DECO"), "DECO");
    take_decoder(c, s.model.field.decoder);
    c.finish();
  }
  const auto& tau = need_num("TAU_");
  if (tau.size() != 1) throw FormatError("checkpoint: section TAU_ has wrong length");
  s.model.period.tau = tau[0];

  const auto& step = need_num("STEP");
  if (step.size() != 3) throw FormatError("checkpoint: section STEP has wrong length");
  s.iteration = static_cast<std::int64_t>(step[0]);
  s.moments = AdamMoments::zeros_like(s.model);
  s.moments.gaussian_steps = static_cast<std::int64_t>(step[1]);
  s.moments.field_steps = static_cast<std::int64_t>(step[2]);
  {
    Cursor c(need_num("MOMS"), "MOMS");
    AdamMoments& m = s.moments;
    take_set(c, m.m_gaussians);
    take_set(c, m.v_gaussians);
    take_planes(c, m.m_planes);
    take_planes(c, m.v_planes);
    take_decoder(c, m.m_decoder);
    take_decoder(c, m.v_decoder);
    m.m_tau = c.next();
    m.v_tau = c.next();
    c.finish();
  }
  const auto& dens = need_num("DENS");
  if (dens.size() != 5 * k && !dens.empty()) {
    throw FormatError("checkpoint: section DENS has wrong length");
  }
  s.grad_norm_sum.assign(k, 0.0);
  s.grad_sum.assign(k, Vec3::Zero());
  s.grad_count.assign(k, 0);
  for (std::size_t i = 0; i < k && !dens.empty(); ++i) {
    s.grad_norm_sum[i] = dens[5 * i];
    s.grad_sum[i] = Vec3(dens[5 * i + 1], dens[5 * i + 2], dens[5 * i + 3]);
    s.grad_count[i] = static_cast<int>(dens[5 * i + 4]);
  }
  s.rng.set_state(need_text("RNG_"));
  return ck;
}

void save_checkpoint(const fs::path& path, const TrainState& state, const TrainConfig& cfg) {
  write_bytes(path, encode_checkpoint(state, cfg));
}

Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_bytes(path)); }

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "iter,l_render,l_pc,l_tv3d,l_tv4d,total,T_hat,lr_pos\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.iter) + "," + fmt(r.terms.render) + "," + fmt(r.terms.pc) + "," +
           fmt(r.terms.tv3d) + "," + fmt(r.terms.tv4d) + "," + fmt(r.terms.total) + "," +
           fmt(r.period) + "," + fmt(r.lr_position) + "\n";
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "t,volume\n";
  for (const CurvePoint& p : curve) out += fmt(p.t) + "," + fmt(p.volume) + "\n";
  return out;
}

}  // namespace dgct
