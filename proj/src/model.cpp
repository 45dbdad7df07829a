#include "robustft/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "robustft/errors.hpp"
#include "robustft/kv.hpp"
#include "robustft/random.hpp"

namespace robustft {

namespace {

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(sep, pos);
    out.emplace_back(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::size_t parse_size(std::string_view text) {
  const double v = parse_double(text);
  if (v < 0 || v != std::floor(v)) throw FormatError("expected a non-negative integer, got '" + std::string(text) + "'");
  return static_cast<std::size_t>(v);
}

struct ParamShape {
  std::string name;
  Shape shape;
  std::size_t fan_in;
  bool is_bias;
};

std::vector<ParamShape> parameter_layout(const ArchitectureDescriptor& d) {
  std::vector<ParamShape> out;
  std::size_t in_c = d.channels;
  for (std::size_t b = 0; b < d.blocks.size(); ++b) {
    for (std::size_t r = 0; r < d.blocks[b].repeats; ++r) {
      const std::string base = "conv" + std::to_string(b + 1) + "_" + std::to_string(r + 1);
      const std::size_t f = d.blocks[b].filters;
      out.push_back({base + ".weight", {f, in_c, 3, 3}, in_c * 9, false});
      out.push_back({base + ".bias", {f}, in_c * 9, true});
      in_c = f;
    }
  }
  const std::size_t pools = d.blocks.size();
  std::size_t features = in_c * (d.height >> pools) * (d.width >> pools);
  for (std::size_t i = 0; i < d.dense_widths.size(); ++i) {
    const std::string base = "fc" + std::to_string(i + 1);
    out.push_back({base + ".weight", {features, d.dense_widths[i]}, features, false});
    out.push_back({base + ".bias", {d.dense_widths[i]}, features, true});
    features = d.dense_widths[i];
  }
  out.push_back({"classifier.weight", {features, d.classes}, features, false});
  out.push_back({"classifier.bias", {d.classes}, features, true});
  return out;
}

// Little-endian byte writer/reader for the snapshot container.
class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class T>
  void le(T v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    bytes(&v, sizeof v);
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(buf_); }

  template <class T>
  static T byteswap(T v) {
    auto raw = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
  }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::string_view take(std::size_t n, const char* what) {
    if (n > data_.size() - pos_) {
      throw FormatError(std::string("snapshot truncated while reading ") + what + " (need " + std::to_string(n) +
                            " bytes, " + std::to_string(data_.size() - pos_) + " left)",
                        pos_);
    }
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  template <class T>
  T le(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof v, what).data(), sizeof v);
    if constexpr (std::endian::native == std::endian::big) v = Writer::byteswap(v);
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

void ArchitectureDescriptor::validate() const {
  if (classes < 2) throw ContractError("architecture: class count must be >= 2");
  if (blocks.empty()) throw ContractError("architecture: at least one conv block is required");
  if (height == 0 || width == 0 || channels == 0) throw ContractError("architecture: input dimensions must be positive");
  for (const auto& b : blocks) {
    if (b.filters == 0 || b.repeats == 0) throw ContractError("architecture: conv blocks need filters and repeats >= 1");
  }
  for (std::size_t w : dense_widths) {
    if (w == 0) throw ContractError("architecture: dense widths must be positive");
  }
  const std::size_t div = std::size_t{1} << blocks.size();
  if (height % div != 0 || width % div != 0) {
    throw ContractError("architecture: input " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by 2^" + std::to_string(blocks.size()) + " pooling stages");
  }
}

std::size_t ArchitectureDescriptor::tap_count() const {
  if (taps == TapPolicy::BlockOutputs) return blocks.size();
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.repeats;
  return n;
}

std::string ArchitectureDescriptor::to_text() const {
  KvDocument doc;
  auto& s = doc.add_section("architecture");
  s.set("input", std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels));
  std::string b;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) b += ',';
    b += std::to_string(blocks[i].filters) + "x" + std::to_string(blocks[i].repeats);
  }
  s.set("blocks", b);
  std::string d;
  for (std::size_t i = 0; i < dense_widths.size(); ++i) {
    if (i) d += ',';
    d += std::to_string(dense_widths[i]);
  }
  s.set("dense", d);
  s.set("classes", std::to_string(classes));
  s.set("taps", taps == TapPolicy::BlockOutputs ? "block" : "every_conv");
  return doc.to_text();
}

ArchitectureDescriptor ArchitectureDescriptor::parse(std::string_view text) {
  const auto doc = KvDocument::parse(text);
  const auto* s = doc.find("architecture");
  if (!s) throw FormatError("descriptor lacks an [architecture] section");
  ArchitectureDescriptor d;
  const auto input = split(s->require("input"), 'x');
  if (input.size() != 3) throw FormatError("descriptor input must be HxWxC");
  d.height = parse_size(input[0]);
  d.width = parse_size(input[1]);
  d.channels = parse_size(input[2]);
  d.blocks.clear();
  for (const auto& item : split(s->require("blocks"), ',')) {
    const auto fr = split(item, 'x');
    if (fr.size() != 2) throw FormatError("descriptor block must be FILTERSxREPEATS, got '" + item + "'");
    d.blocks.push_back({parse_size(fr[0]), parse_size(fr[1])});
  }
  d.dense_widths.clear();
  const std::string& dense = s->require("dense");
  if (!dense.empty()) {
    for (const auto& item : split(dense, ',')) d.dense_widths.push_back(parse_size(item));
  }
  d.classes = parse_size(s->require("classes"));
  const std::string& taps = s->require("taps");
  if (taps == "block") {
    d.taps = TapPolicy::BlockOutputs;
  } else if (taps == "every_conv") {
    d.taps = TapPolicy::EveryConv;
  } else {
    throw FormatError("descriptor tap policy must be 'block' or 'every_conv', got '" + taps + "'");
  }
  try {
    d.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what());
  }
  return d;
}

Model Model::create(const ArchitectureDescriptor& desc, std::uint64_t seed) {
  desc.validate();
  Model m;
  m.desc_ = desc;
  m.metadata.seed = seed;
  const RandomStream root(seed);
  std::uint64_t index = 0;
  for (const auto& p : parameter_layout(desc)) {
    Tensor t(p.shape);
    if (!p.is_bias) {
      RandomStream rng = root.split(index);
      const double limit = std::sqrt(6.0 / static_cast<double>(p.fan_in));
      for (double& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
    }
    ++index;
    m.params_.emplace_back(p.name, robustft::parameter(std::move(t)));
  }
  return m;
}

Model Model::zeros(const ArchitectureDescriptor& desc) {
  desc.validate();
  Model m;
  m.desc_ = desc;
  for (const auto& p : parameter_layout(desc)) m.params_.emplace_back(p.name, robustft::parameter(Tensor(p.shape)));
  return m;
}

const Var& Model::parameter(std::string_view name) const {
  for (const auto& [n, v] : params_) {
    if (n == name) return v;
  }
  throw ContractError("model has no parameter '" + std::string(name) + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v->value.numel();
  return n;
}

Model Model::clone() const {
  Model m;
  m.desc_ = desc_;
  m.metadata = metadata;
  for (const auto& [name, v] : params_) m.params_.emplace_back(name, robustft::parameter(v->value));
  return m;
}

void Model::zero_grad() {
  for (auto& [name, v] : params_) v->release_grad();
}

ForwardResult forward(const Model& model, const Tensor& batch, bool want_taps) {
  const auto& d = model.descriptor();
  if (batch.rank() != 4) throw DimensionError("forward: batch must be rank 4 [N,C,H,W], got " + shape_to_string(batch.shape()));
  if (batch.dim(1) != d.channels || batch.dim(2) != d.height || batch.dim(3) != d.width) {
    throw DimensionError("forward: batch " + shape_to_string(batch.shape()) + " does not match model input " +
                         std::to_string(d.channels) + "x" + std::to_string(d.height) + "x" + std::to_string(d.width));
  }
  ForwardResult result;
  const auto& params = model.parameters();
  std::size_t p = 0;
  Var x = constant(batch);
  for (const auto& block : d.blocks) {
    for (std::size_t r = 0; r < block.repeats; ++r) {
      x = relu(conv2d(x, params[p].second, params[p + 1].second, 1, 1));
      p += 2;
      const bool last = r + 1 == block.repeats;
      if (want_taps && (d.taps == TapPolicy::EveryConv || last)) result.taps.push_back(x);
    }
    x = maxpool2(x);
  }
  x = flatten(x);
  for (std::size_t i = 0; i < d.dense_widths.size(); ++i, p += 2) {
    x = relu(dense(x, params[p].second, params[p + 1].second));
  }
  result.logits = dense(x, params[p].second, params[p + 1].second);
  return result;
}

Tensor to_batch(std::span<const Image* const> images) {
  if (images.empty()) throw ContractError("to_batch: no images");
  const Image& first = *images.front();
  const std::size_t h = first.height, w = first.width, c = first.channels;
  Tensor out({images.size(), c, h, w});
  double* dst = out.raw();
  for (const Image* img : images) {
    if (img->height != h || img->width != w || img->channels != c) throw DimensionError("to_batch: images differ in shape");
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) *dst++ = img->at(y, x, ch);
      }
    }
  }
  return out;
}

Tensor to_batch(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return to_batch(std::span<const Image* const>(ptrs));
}

std::vector<int> predict_labels(const Model& model, const Tensor& batch) {
  NoGradGuard no_grad;
  const auto logits = forward(model, batch, false).logits->value;
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits.at(r, j) > logits.at(r, best)) best = j;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::string save_model(const Model& model) {
  Writer w;
  w.bytes(kSnapshotMagic, sizeof kSnapshotMagic);
  w.le<std::uint32_t>(kSnapshotVersion);
  KvDocument meta = KvDocument::parse(model.descriptor().to_text());
  auto& m = meta.add_section("metadata");
  m.set("epoch", std::to_string(model.metadata.epoch));
  m.set("seed", std::to_string(model.metadata.seed));
  m.set("stage", model.metadata.stage);
  const std::string text = meta.to_text();
  w.le<std::uint64_t>(text.size());
  w.bytes(text.data(), text.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& [name, v] : model.parameters()) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(v->value.rank()));
    for (std::size_t d : v->value.shape()) w.le<std::uint64_t>(d);
    for (double x : v->value.data()) w.f64(x);
  }
  return w.take();
}

Model load_model(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.take(sizeof kSnapshotMagic, "magic");
  if (std::memcmp(magic.data(), kSnapshotMagic, sizeof kSnapshotMagic) != 0) throw FormatError("not a model snapshot (bad magic)", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kSnapshotVersion) {
    throw VersionError("snapshot version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kSnapshotVersion) + ")",
                       version_at);
  }
  const auto text_len = r.le<std::uint64_t>("descriptor length");
  const std::size_t text_at = r.offset();
  const std::string text(r.take(text_len, "descriptor"));
  ArchitectureDescriptor desc;
  KvDocument meta;
  try {
    desc = ArchitectureDescriptor::parse(text);
    meta = KvDocument::parse(text);
  } catch (const FormatError& e) {
    throw FormatError(std::string("bad descriptor: ") + e.what(), text_at);
  }

  Model model;
  model.desc_ = desc;
  if (const auto* m = meta.find("metadata")) {
    if (const auto* v = m->find("epoch")) model.metadata.epoch = static_cast<std::int64_t>(parse_double(*v));
    if (const auto* v = m->find("seed")) model.metadata.seed = std::stoull(*v);
    if (const auto* v = m->find("stage")) model.metadata.stage = *v;
  }

  const auto layout = parameter_layout(desc);
  const std::size_t count_at = r.offset();
  const auto count = r.le<std::uint32_t>("tensor count");
  if (count != layout.size()) {
    throw FormatError("snapshot holds " + std::to_string(count) + " tensors, descriptor needs " + std::to_string(layout.size()),
                      count_at);
  }
  for (const auto& expected : layout) {
    const std::size_t entry_at = r.offset();
    const auto name_len = r.le<std::uint32_t>("tensor name length");
    const std::string name(r.take(name_len, "tensor name"));
    if (name != expected.name) throw FormatError("expected tensor '" + expected.name + "', found '" + name + "'", entry_at);
    const auto rank = r.le<std::uint32_t>("tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.le<std::uint64_t>("tensor dims"));
    if (shape != expected.shape) {
      throw FormatError("tensor '" + name + "' has shape " + shape_to_string(shape) + ", descriptor needs " +
                            shape_to_string(expected.shape),
                        entry_at);
    }
    Tensor t(shape);
    for (double& x : t.data()) x = std::bit_cast<double>(r.le<std::uint64_t>("tensor data"));
    model.params_.emplace_back(name, parameter(std::move(t)));
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor", r.offset());
  return model;
}

void save_model_file(const Model& model, const std::string& path) { write_file_atomic(path, save_model(model)); }

Model load_model_file(const std::string& path) {
  try {
    return load_model(read_text_file(path));
  } catch (const VersionError& e) {
    throw VersionError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace robustft
