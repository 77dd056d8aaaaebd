#include "devgan/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "devgan/errors.hpp"

namespace devgan::nn {
namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', 'K'};

std::string format_float(float v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

float parse_float(std::string_view s) {
  float v = 0.0f;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad float '" + std::string(s) + "'");
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad integer '" + std::string(s) + "'");
  return v;
}

std::string format_shape(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape(std::string_view s) {
  Shape out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::size_t stop = comma == std::string_view::npos ? s.size() : comma;
    out.push_back(parse_u64(s.substr(pos, stop - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string format_pair(Stride2 p) { return std::to_string(p.h) + "x" + std::to_string(p.w); }

Stride2 parse_pair(std::string_view s) {
  const auto x = s.find('x');
  if (x == std::string_view::npos) throw FormatError("bad size pair '" + std::string(s) + "'");
  return {parse_u64(s.substr(0, x)), parse_u64(s.substr(x + 1))};
}

std::string encode_layer(const Layer& layer) {
  const auto& s = layer.spec;
  std::string out = "layer " + std::string(to_string(s.kind));
  switch (s.kind) {
    case LayerKind::dense:
      out += " units=" + std::to_string(s.units);
      break;
    case LayerKind::conv2d:
      out += " filters=" + std::to_string(s.filters) + " kernel=" + format_pair(s.kernel) +
             " padding=" + (s.padding == Padding::same ? "same" : "valid") + " stride=" + format_pair(s.stride);
      break;
    case LayerKind::maxpool:
      out += " size=" + format_pair(s.pool) + " strides=" + format_pair(s.pool_stride);
      break;
    case LayerKind::reshape:
      out += " shape=" + format_shape(s.target_shape);
      break;
    case LayerKind::batchnorm:
      out += " momentum=" + format_float(s.momentum) + " epsilon=" + format_float(s.epsilon);
      break;
    case LayerKind::dropout:
      out += " rate=" + format_float(s.rate);
      break;
    case LayerKind::activation:
      out += " fn=" + std::string(to_string(s.activation)) + " alpha=" + format_float(s.alpha);
      break;
    case LayerKind::flatten:
      break;
  }
  out += std::string(" trainable=") + (layer.trainable ? "1" : "0");
  return out;
}

std::vector<std::string_view> split_words(std::string_view line) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto space = line.find(' ', pos);
    const auto stop = space == std::string_view::npos ? line.size() : space;
    if (stop > pos) words.push_back(line.substr(pos, stop - pos));
    pos = stop + 1;
  }
  return words;
}

std::map<std::string, std::string, std::less<>> key_values(const std::vector<std::string_view>& words,
                                                           std::size_t first) {
  std::map<std::string, std::string, std::less<>> kv;
  for (std::size_t i = first; i < words.size(); ++i) {
    const auto eq = words[i].find('=');
    if (eq == std::string_view::npos) throw FormatError("expected key=value, got '" + std::string(words[i]) + "'");
    kv.emplace(std::string(words[i].substr(0, eq)), std::string(words[i].substr(eq + 1)));
  }
  return kv;
}

const std::string& need(const std::map<std::string, std::string, std::less<>>& kv, std::string_view key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("missing field '" + std::string(key) + "'");
  return it->second;
}

std::pair<LayerSpec, bool> decode_layer(std::string_view line) {
  const auto words = split_words(line);
  if (words.size() < 2 || words[0] != "layer") throw FormatError("expected layer record, got '" + std::string(line) + "'");
  const auto kv = key_values(words, 2);
  LayerSpec s;
  s.kind = layer_kind_from_string(words[1]);
  switch (s.kind) {
    case LayerKind::dense:
      s.units = parse_u64(need(kv, "units"));
      break;
    case LayerKind::conv2d:
      s.filters = parse_u64(need(kv, "filters"));
      s.kernel = parse_pair(need(kv, "kernel"));
      s.padding = need(kv, "padding") == "same" ? Padding::same : Padding::valid;
      s.stride = parse_pair(need(kv, "stride"));
      break;
    case LayerKind::maxpool:
      s.pool = parse_pair(need(kv, "size"));
      s.pool_stride = parse_pair(need(kv, "strides"));
      break;
    case LayerKind::reshape:
      s.target_shape = parse_shape(need(kv, "shape"));
      break;
    case LayerKind::batchnorm:
      s.momentum = parse_float(need(kv, "momentum"));
      s.epsilon = parse_float(need(kv, "epsilon"));
      break;
    case LayerKind::dropout:
      s.rate = parse_float(need(kv, "rate"));
      break;
    case LayerKind::activation:
      s.activation = activation_from_string(need(kv, "fn"));
      s.alpha = parse_float(need(kv, "alpha"));
      break;
    case LayerKind::flatten:
      break;
  }
  return {s, need(kv, "trainable") == "1"};
}

// Tensors of one network in serialization order.
template <typename Net, typename Fn>
void for_each_tensor(Net& net, Fn&& fn) {
  auto& layers = net.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    auto& layer = layers[li];
    const std::string prefix = std::to_string(li) + "/";
    for (std::size_t i = 0; i < layer.params.size(); ++i) fn(prefix + "param" + std::to_string(i), layer.params[i]);
    for (std::size_t i = 0; i < layer.state.size(); ++i) fn(prefix + "state" + std::to_string(i), layer.state[i]);
    for (std::size_t i = 0; i < layer.slot_m.size(); ++i) fn(prefix + "m" + std::to_string(i), layer.slot_m[i]);
    for (std::size_t i = 0; i < layer.slot_v.size(); ++i) fn(prefix + "v" + std::to_string(i), layer.slot_v[i]);
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}
  std::string_view next() {
    if (pos_ >= text_.size()) throw FormatError("checkpoint header ended early");
    const auto nl = text_.find('\n', pos_);
    const auto stop = nl == std::string_view::npos ? text_.size() : nl;
    auto line = text_.substr(pos_, stop - pos_);
    pos_ = stop + 1;
    return line;
  }
  // "key value" record; returns value.
  std::string_view expect(std::string_view key) {
    auto line = next();
    if (line.substr(0, key.size()) != key || line.size() <= key.size() || line[key.size()] != ' ')
      throw FormatError("expected '" + std::string(key) + "' record, got '" + std::string(line) + "'");
    return line.substr(key.size() + 1);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(const void* data, std::size_t len) {
  return static_cast<std::uint32_t>(::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

const Network& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, net] : networks)
    if (n == name) return net;
  throw FormatError("checkpoint has no network named '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream header;
  header << "seed " << ckpt.seed << "\n";
  header << "step " << ckpt.step << "\n";
  header << "networks " << ckpt.networks.size() << "\n";
  std::vector<const Tensor*> payload;
  for (const auto& [name, net] : ckpt.networks) {
    const auto& c = net.compile_config();
    header << "network " << name << "\n";
    header << "input " << format_shape(net.input_shape()) << "\n";
    header << "compile optimizer=" << to_string(c.optimizer.kind) << " lr=" << format_float(c.optimizer.learning_rate)
           << " beta1=" << format_float(c.optimizer.beta1) << " beta2=" << format_float(c.optimizer.beta2)
           << " rho=" << format_float(c.optimizer.rho) << " epsilon=" << format_float(c.optimizer.epsilon)
           << " loss=" << to_string(c.loss) << " t=" << net.optimizer_step() << "\n";
    header << "layers " << net.layers().size() << "\n";
    for (const auto& layer : net.layers()) header << encode_layer(layer) << "\n";
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for_each_tensor(net, [&](const std::string& tname, const Tensor& t) { tensors.emplace_back(tname, &t); });
    header << "tensors " << tensors.size() << "\n";
    for (const auto& [tname, t] : tensors) {
      header << "tensor " << tname << " " << format_shape(t->shape()) << "\n";
      payload.push_back(t);
    }
  }
  header << "end\n";
  const std::string head = header.str();

  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(head.size()));
  out += head;
  for (const Tensor* t : payload)
    for (float v : t->data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16) throw FormatError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t head_len = get_u32(bytes, 8);
  if (12 + static_cast<std::size_t>(head_len) + 4 > bytes.size()) throw FormatError("checkpoint truncated in header");

  LineReader lines(std::string_view(bytes).substr(12, head_len));
  Checkpoint ckpt;
  ckpt.seed = parse_u64(lines.expect("seed"));
  ckpt.step = parse_u64(lines.expect("step"));
  const std::size_t count = parse_u64(lines.expect("networks"));
  std::vector<std::vector<Shape>> declared(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::string name(lines.expect("network"));
    Shape input = parse_shape(lines.expect("input"));
    const auto kv = key_values(split_words(lines.expect("compile")), 0);
    CompileConfig c;
    c.optimizer.kind = optimizer_from_string(need(kv, "optimizer"));
    c.optimizer.learning_rate = parse_float(need(kv, "lr"));
    c.optimizer.beta1 = parse_float(need(kv, "beta1"));
    c.optimizer.beta2 = parse_float(need(kv, "beta2"));
    c.optimizer.rho = parse_float(need(kv, "rho"));
    c.optimizer.epsilon = parse_float(need(kv, "epsilon"));
    c.loss = loss_from_string(need(kv, "loss"));
    const std::uint64_t t = parse_u64(need(kv, "t"));
    const std::size_t layer_count = parse_u64(lines.expect("layers"));
    std::vector<LayerSpec> specs;
    std::vector<bool> trainable;
    for (std::size_t i = 0; i < layer_count; ++i) {
      auto [spec, tr] = decode_layer(lines.next());
      specs.push_back(spec);
      trainable.push_back(tr);
    }
    Network net = Network::skeleton(std::move(input), std::move(specs), c, t);
    for (std::size_t i = 0; i < layer_count; ++i) net.layers()[i].trainable = trainable[i];
    const std::size_t tensor_count = parse_u64(lines.expect("tensors"));
    for (std::size_t i = 0; i < tensor_count; ++i) {
      const auto words = split_words(lines.expect("tensor"));
      if (words.size() != 2) throw FormatError("bad tensor record");
      declared[n].push_back(parse_shape(words[1]));
    }
    ckpt.networks.emplace_back(std::move(name), std::move(net));
  }
  if (lines.next() != "end") throw FormatError("checkpoint header missing end record");

  std::size_t pos = 12 + head_len;
  for (std::size_t n = 0; n < count; ++n) {
    std::size_t idx = 0;
    for_each_tensor(ckpt.networks[n].second, [&](const std::string& tname, Tensor& t) {
      if (idx >= declared[n].size() || declared[n][idx] != t.shape())
        throw FormatError("tensor " + tname + " shape does not match its layer");
      ++idx;
      if (pos + 4 * t.size() + 4 > bytes.size()) throw FormatError("checkpoint truncated in tensor " + tname);
      for (auto& v : t.data()) {
        v = std::bit_cast<float>(get_u32(bytes, pos));
        pos += 4;
      }
    });
    if (idx != declared[n].size()) throw FormatError("checkpoint declares extra tensors");
  }
  if (pos + 4 != bytes.size()) throw FormatError("checkpoint has trailing or missing bytes");
  if (get_u32(bytes, pos) != crc32_of(bytes.data(), pos)) throw FormatError("checkpoint CRC mismatch");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_checkpoint(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  Checkpoint ckpt;
  ckpt.step = net.optimizer_step();
  ckpt.networks.emplace_back("model", net);
  write_checkpoint(ckpt, path);
}

Network load_network(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.networks.size() != 1)
    throw FormatError(path.string() + ": expected a single-network file, found " +
                      std::to_string(ckpt.networks.size()));
  return std::move(ckpt.networks.front().second);
}

}  // namespace devgan::nn
