#include "attrxfer/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "attrxfer/common.hpp"

namespace attrxfer {

namespace {

constexpr char kMagic[4] = {'A', 'X', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint: " + path);
  return v;
}

std::string get_str(std::istream& is, const std::string& path) {
  const auto n = get<std::uint32_t>(is, path);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("truncated checkpoint: " + path);
  return s;
}

std::vector<double> get_vec(std::istream& is, const std::string& path) {
  const auto n = get<std::uint64_t>(is, path);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

std::uint64_t Checkpoint::config_hash() const {
  std::string key = std::to_string(static_cast<std::uint32_t>(kind));
  for (std::size_t d : {net.vocab_size, net.embed_dim, net.attr_dim,
                        net.hidden_dim, net.cls_embed_dim,
                        net.cls_feature_maps})
    key += ":" + std::to_string(d);
  for (std::size_t w : net.cls_widths) key += "w" + std::to_string(w);
  return fnv1a64(key);
}

void Checkpoint::save(const std::string& path) const {
  atomic_write(
      path,
      [this](std::ostream& os) {
        os.write(kMagic, 4);
        put<std::uint32_t>(os, kVersion);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(kind));
        put<std::uint64_t>(os, config_hash());
        put<std::uint64_t>(os, vocab_hash);
        for (std::size_t d : {net.vocab_size, net.embed_dim, net.attr_dim,
                              net.hidden_dim, net.cls_embed_dim,
                              net.cls_feature_maps})
          put<std::uint64_t>(os, d);
        put<std::uint64_t>(os, net.cls_widths.size());
        for (std::size_t w : net.cls_widths) put<std::uint64_t>(os, w);
        put<std::uint64_t>(os, step);
        put<double>(os, best_valid);
        put<std::uint32_t>(os, bad_evals);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
        for (const auto& e : params) {
          put_str(os, e.name);
          put<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
          for (std::size_t d : e.shape) put<std::uint64_t>(os, d);
          put_vec(os, e.value);
        }
        put<std::uint8_t>(os, has_adam ? 1 : 0);
        if (has_adam) {
          put<double>(os, adam_cfg.lr);
          put<double>(os, adam_cfg.beta1);
          put<double>(os, adam_cfg.beta2);
          put<double>(os, adam_cfg.eps);
          put<std::uint64_t>(os, adam_step);
          for (const auto& m : adam_m) put_vec(os, m);
          for (const auto& v : adam_v) put_vec(os, v);
        }
      },
      /*binary=*/true);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) +
                  ": " + path);
  Checkpoint c;
  c.kind = static_cast<CkptKind>(get<std::uint32_t>(is, path));
  const auto stored_hash = get<std::uint64_t>(is, path);
  c.vocab_hash = get<std::uint64_t>(is, path);
  c.net.vocab_size = get<std::uint64_t>(is, path);
  c.net.embed_dim = get<std::uint64_t>(is, path);
  c.net.attr_dim = get<std::uint64_t>(is, path);
  c.net.hidden_dim = get<std::uint64_t>(is, path);
  c.net.cls_embed_dim = get<std::uint64_t>(is, path);
  c.net.cls_feature_maps = get<std::uint64_t>(is, path);
  const auto nw = get<std::uint64_t>(is, path);
  c.net.cls_widths.clear();
  for (std::uint64_t i = 0; i < nw; ++i)
    c.net.cls_widths.push_back(get<std::uint64_t>(is, path));
  c.step = get<std::uint64_t>(is, path);
  c.best_valid = get<double>(is, path);
  c.bad_evals = get<std::uint32_t>(is, path);
  const auto np = get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < np; ++i) {
    Checkpoint::Entry e;
    e.name = get_str(is, path);
    const auto rank = get<std::uint32_t>(is, path);
    for (std::uint32_t d = 0; d < rank; ++d)
      e.shape.push_back(get<std::uint64_t>(is, path));
    e.value = get_vec(is, path);
    if (e.value.size() != shape_numel(e.shape))
      throw IoError("corrupt checkpoint entry " + e.name + ": " + path);
    c.params.push_back(std::move(e));
  }
  c.has_adam = get<std::uint8_t>(is, path) != 0;
  if (c.has_adam) {
    c.adam_cfg.lr = get<double>(is, path);
    c.adam_cfg.beta1 = get<double>(is, path);
    c.adam_cfg.beta2 = get<double>(is, path);
    c.adam_cfg.eps = get<double>(is, path);
    c.adam_step = get<std::uint64_t>(is, path);
    for (std::uint32_t i = 0; i < np; ++i)
      c.adam_m.push_back(get_vec(is, path));
    for (std::uint32_t i = 0; i < np; ++i)
      c.adam_v.push_back(get_vec(is, path));
  }
  if (stored_hash != c.config_hash())
    throw IoError("checkpoint config hash mismatch: " + path);
  return c;
}

void capture_params(const ParamList& params, Checkpoint& ckpt) {
  ckpt.params.clear();
  for (const auto& p : params)
    ckpt.params.push_back({p.name, p.tensor.shape(), p.tensor.value()});
}

void restore_params(const Checkpoint& ckpt, const ParamList& params) {
  if (ckpt.params.size() != params.size())
    throw IoError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                  " tensors, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = ckpt.params[i];
    const auto& p = params[i];
    if (e.name != p.name)
      throw IoError("checkpoint tensor " + e.name + " does not match model tensor " +
                    p.name);
    if (e.shape != p.tensor.shape())
      throw IoError("checkpoint tensor " + e.name + " has shape " +
                    shape_str(e.shape) + ", model expects " +
                    shape_str(p.tensor.shape()));
    Tensor dst = p.tensor;  // handle copy, shared storage
    std::copy(e.value.begin(), e.value.end(), dst.raw_value().begin());
  }
}

void capture_adam(const AdamState& st, const ParamList& params, Checkpoint& ckpt) {
  if (!st.initialized()) {
    ckpt.has_adam = false;
    return;
  }
  if (st.m.size() != params.size())
    throw IoError("optimizer state does not match parameter list");
  ckpt.has_adam = true;
  ckpt.adam_cfg = st.cfg;
  ckpt.adam_step = st.step;
  ckpt.adam_m = st.m;
  ckpt.adam_v = st.v;
}

void restore_adam(const Checkpoint& ckpt, const ParamList& params, AdamState& st) {
  if (!ckpt.has_adam) throw IoError("checkpoint carries no optimizer state");
  if (ckpt.adam_m.size() != params.size())
    throw IoError("checkpoint optimizer state does not match parameter list");
  st.cfg = ckpt.adam_cfg;
  st.step = ckpt.adam_step;
  st.m = ckpt.adam_m;
  st.v = ckpt.adam_v;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (st.m[i].size() != params[i].tensor.numel())
      throw IoError("optimizer moment size mismatch on " + params[i].name);
}

void check_vocab_hash(const Checkpoint& ckpt, const Vocab& vocab,
                      const std::string& what) {
  if (ckpt.vocab_hash != vocab.hash())
    throw HashMismatch(what + ": checkpoint vocab hash " +
                       std::to_string(ckpt.vocab_hash) +
                       " != vocab file hash " + std::to_string(vocab.hash()));
}

}  // namespace attrxfer
