#include <bit>
#include <cstring>
#include <map>

#include "msps/fsutil.hpp"
#include "msps/msnet.hpp"

namespace msps {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'P', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated checkpoint");
  }
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.values()) put_f64(out, v);
}

Tensor config_tensor(const NetConfig& c) {
  return Tensor({7}, {static_cast<double>(c.r0), static_cast<double>(c.scale_multiplier),
                      static_cast<double>(c.image_channels), static_cast<double>(c.channels),
                      static_cast<double>(c.kernel), c.leaky_slope, c.multiscale ? 1.0 : 0.0});
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetWeights& weights) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_tensor(out, "config", config_tensor(weights.config));
  const auto names = weights.parameter_names();
  const auto params = weights.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) put_tensor(out, names[i], params[i]);
  atomic_write(path, out);
}

NetWeights load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader in(bytes, path.string());
  if (in.text(4) != std::string(kMagic, 4)) throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kVersion) throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, Tensor> tensors;
  while (!in.done()) {
    const std::string name = in.text(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank > 4) throw FormatError(path.string() + ": tensor " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = in.f64();
    tensors[name] = Tensor(std::move(shape), std::move(v), true);
  }

  auto cfg_it = tensors.find("config");
  if (cfg_it == tensors.end() || cfg_it->second.numel() != 7) throw FormatError(path.string() + ": missing config record");
  auto c = cfg_it->second.values();
  NetConfig config;
  config.r0 = static_cast<std::size_t>(c[0]);
  config.scale_multiplier = static_cast<std::size_t>(c[1]);
  config.image_channels = static_cast<std::size_t>(c[2]);
  config.channels = static_cast<std::size_t>(c[3]);
  config.kernel = static_cast<std::size_t>(c[4]);
  config.leaky_slope = c[5];
  config.multiscale = c[6] != 0.0;

  NetWeights w = NetWeights::init(config, 0);
  auto fill = [&](SubNet& net) {
    for (std::size_t i = 0; i < net.params.size(); ++i) {
      auto it = tensors.find(net.names[i]);
      if (it == tensors.end()) throw FormatError(path.string() + ": missing tensor " + net.names[i]);
      if (it->second.shape() != net.params[i].shape()) {
        throw ShapeError(path.string() + ": tensor " + net.names[i], net.params[i].shape(), it->second.shape());
      }
      net.params[i] = it->second;
    }
  };
  fill(w.stage1);
  fill(w.refine);
  return w;
}

}  // namespace msps
