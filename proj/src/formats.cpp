#include "blade/formats.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "blade/image_io.hpp"

namespace blade {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

constexpr char kBankMagic[8] = {'B', 'L', 'A', 'D', 'E', 'F', 'B', '1'};
constexpr char kFlowMagic[8] = {'B', 'L', 'F', 'L', 'O', 'W', '0', '1'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void raw(const char* p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw IoError("truncated binary file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool magic(const char* m) {
    if (bytes_.size() < 8) return false;
    const bool ok = std::memcmp(bytes_.data(), m, 8) == 0;
    pos_ = 8;
    return ok;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void put_thresholds(Writer& w, const std::vector<double>& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.size()));
  for (double v : t) w.put<double>(v);
}

std::vector<double> get_thresholds(Reader& r) {
  const auto n = r.get<std::uint32_t>();
  if (n > 1u << 16) throw IoError("implausible threshold count in bank file");
  std::vector<double> t(n);
  for (double& v : t) v = r.get<double>();
  return t;
}

}  // namespace

std::vector<std::uint8_t> encode_bank(const FilterBank& bank) {
  bank.validate();
  Writer w;
  w.raw(kBankMagic, 8);
  w.put<std::uint32_t>(kBankVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.footprint.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.footprint.height));
  const SelectionConfig& s = bank.selection;
  w.put<std::uint32_t>(s.use_intensity ? 1u : 0u);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.orientation_bins));
  put_thresholds(w, s.strength_thresholds);
  put_thresholds(w, s.coherence_thresholds);
  put_thresholds(w, s.use_intensity ? s.intensity_thresholds : std::vector<double>{});
  w.put<double>(s.rho);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.num_filters()));
  for (double t : bank.taps) w.put<float>(static_cast<float>(t));
  return std::move(w.bytes);
}

FilterBank decode_bank(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (!r.magic(kBankMagic)) throw IoError("not a filter bank file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kBankVersion) {
    throw IoError("unsupported filter bank version " + std::to_string(version));
  }
  Footprint fp;
  fp.width = static_cast<int>(r.get<std::uint32_t>());
  fp.height = static_cast<int>(r.get<std::uint32_t>());
  const auto kinds = r.get<std::uint32_t>();
  if (kinds > 1) throw IoError("unknown feature kinds " + std::to_string(kinds));
  SelectionConfig s;
  s.orientation_bins = static_cast<int>(r.get<std::uint32_t>());
  s.strength_thresholds = get_thresholds(r);
  s.coherence_thresholds = get_thresholds(r);
  s.intensity_thresholds = get_thresholds(r);
  s.use_intensity = kinds == 1;
  s.rho = r.get<double>();
  const auto filters = r.get<std::uint32_t>();
  try {
    fp.validate();
    s.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid filter bank header: ") + e.what());
  }
  if (static_cast<int>(filters) != s.num_filters()) {
    throw IoError("filter count " + std::to_string(filters) +
                  " does not match the selection bins (" +
                  std::to_string(s.num_filters()) + ")");
  }
  std::vector<double> taps(static_cast<std::size_t>(filters) * fp.area());
  for (double& t : taps) t = r.get<float>();
  if (!r.done()) throw IoError("trailing bytes in filter bank file");
  return FilterBank(fp, std::move(s), std::move(taps));
}

void write_bank(const std::filesystem::path& path, const FilterBank& bank) {
  write_bytes(path, encode_bank(bank));
}

FilterBank read_bank(const std::filesystem::path& path) {
  return decode_bank(read_bytes(path));
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  flow.validate();
  Writer w;
  w.raw(kFlowMagic, 8);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(flow.width()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(flow.height()));
  for (std::size_t i = 0; i < flow.vx.size(); ++i) w.put<float>(static_cast<float>(flow.vx[i]));
  for (std::size_t i = 0; i < flow.vy.size(); ++i) w.put<float>(static_cast<float>(flow.vy[i]));
  write_bytes(path, w.bytes);
}

FlowField read_flow(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes);
  if (!r.magic(kFlowMagic)) throw IoError("not a flow file (bad magic): " + path.string());
  const auto w = r.get<std::uint32_t>();
  const auto h = r.get<std::uint32_t>();
  if (w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h * 8 + 16 != bytes.size()) {
    throw IoError("flow file size does not match its header: " + path.string());
  }
  Image vx(static_cast<int>(w), static_cast<int>(h));
  Image vy(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < vx.size(); ++i) vx[i] = r.get<float>();
  for (std::size_t i = 0; i < vy.size(); ++i) vy[i] = r.get<float>();
  return FlowField(std::move(vx), std::move(vy));
}

namespace {

std::string frame_name(std::size_t k) {
  std::ostringstream os;
  os << "frame_" << std::setw(4) << std::setfill('0') << k << ".png";
  return os.str();
}

}  // namespace

void write_sequence(const std::filesystem::path& dir, const FrameSequence& seq,
                    const SequenceMeta& meta) {
  seq.validate();
  std::filesystem::create_directories(dir);
  const WriteOptions opts{16, meta.peak};
  for (std::size_t k = 0; k < seq.size(); ++k) write_image(dir / frame_name(k), seq[k], opts);
  Json j = meta.info;
  j["dt"] = seq.dt;
  j["frames"] = seq.size();
  j["width"] = seq[0].width();
  j["height"] = seq[0].height();
  j["peak"] = meta.peak;
  write_json(dir / "meta.json", j);
}

FrameSequence read_sequence(const std::filesystem::path& dir, SequenceMeta* meta) {
  const Json j = read_json(dir / "meta.json");
  FrameSequence seq;
  try {
    seq.dt = j.at("dt").get<double>();
    const auto frames = j.at("frames").get<std::size_t>();
    const double peak = j.value("peak", 255.0);
    for (std::size_t k = 0; k < frames; ++k) {
      seq.frames.push_back(read_image(dir / frame_name(k), peak));
    }
    if (meta) {
      meta->info = j;
      meta->peak = peak;
    }
  } catch (const Json::exception& e) {
    throw IoError("bad sequence metadata in '" + dir.string() + "': " + e.what());
  }
  seq.validate();
  return seq;
}

Json scheme_to_json(const SchemeConfig& cfg) {
  return Json{{"pde", std::string(to_string(cfg.pde))},
              {"dt", cfg.dt},
              {"dx", cfg.dx},
              {"c", cfg.c},
              {"alpha", cfg.alpha},
              {"ced_c", cfg.ced_c},
              {"rho", cfg.rho},
              {"gamma", cfg.gamma},
              {"epsilon_reg", cfg.epsilon_reg},
              {"stop_time", cfg.stop_time}};
}

SchemeConfig scheme_from_json(const Json& j) {
  try {
    SchemeConfig cfg = SchemeConfig::defaults(parse_pde(j.at("pde").get<std::string>()));
    cfg.dt = j.value("dt", cfg.dt);
    cfg.dx = j.value("dx", cfg.dx);
    cfg.c = j.value("c", cfg.c);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.ced_c = j.value("ced_c", cfg.ced_c);
    cfg.rho = j.value("rho", cfg.rho);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.epsilon_reg = j.value("epsilon_reg", cfg.epsilon_reg);
    cfg.stop_time = j.value("stop_time", cfg.stop_time);
    return cfg;
  } catch (const Json::exception& e) {
    throw IoError(std::string("bad scheme parameters: ") + e.what());
  }
}

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed for '" + path.string() + "'");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

RunManifest::RunManifest(std::string command) {
  doc_["command"] = std::move(command);
  doc_["parameters"] = Json::object();
  doc_["seed"] = nullptr;
  doc_["inputs"] = Json::array();
  doc_["outputs"] = Json::array();
  doc_["metrics"] = Json::object();
}

void RunManifest::set_seed(std::uint64_t seed) { doc_["seed"] = seed; }

void RunManifest::add_input(const std::filesystem::path& path) {
  doc_["inputs"].push_back(Json{{"path", path.string()}, {"sha256", sha256_file(path)}});
}

void RunManifest::add_output(const std::filesystem::path& path) {
  doc_["outputs"].push_back(path.string());
}

void RunManifest::write(const std::filesystem::path& path) const { write_json(path, doc_); }

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IoError("cannot parse '" + path.string() + "': " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "iteration,loss\n" << std::setprecision(17);
  for (const LossPoint& p : curve) out << p.iteration << ',' << p.loss << '\n';
}

}  // namespace blade
