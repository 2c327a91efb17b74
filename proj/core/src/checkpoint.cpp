#include "dualmotion/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dualmotion/errors.hpp"

namespace dualmotion {

namespace {

constexpr char kMagic[8] = {'D', 'M', 'G', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    buf_.append(reinterpret_cast<const char*>(b), sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void put_tensor(const std::string& name, const Tensor& t) {
    put_string(name);
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::int32_t>(d);
    for (Scalar v : t.values()) put<double>(v);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor> get_tensor() {
    std::string name = get_string();
    const std::size_t at = pos_;
    const auto rank = get<std::uint32_t>();
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), at);
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = get<std::int32_t>();
      if (d < 0) throw FormatError("negative tensor dimension", pos_ - 4);
      count *= static_cast<std::size_t>(d);
    }
    need(count * sizeof(double));
    Tensor t(shape);
    for (auto& v : t.values()) v = get<double>();
    return {std::move(name), std::move(t)};
  }
  void expect(const char* p, std::size_t n, const char* what) {
    need(n);
    if (std::memcmp(buf_.data() + pos_, p, n) != 0) throw FormatError(what, pos_);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("truncated checkpoint", pos_);
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

struct Group {
  const char* name;
  const RMSprop* opt;
};

void restore_group(Reader& r, const std::string& expected, const ParamList& params) {
  const std::size_t at = r.pos();
  const std::string name = r.get_string();
  if (name != expected) throw FormatError("expected parameter group '" + expected + "', found '" + name + "'", at);
  const auto n = r.get<std::uint32_t>();
  if (n != params.size()) {
    throw FormatError("group '" + name + "' holds " + std::to_string(n) + " tensors, model expects " +
                          std::to_string(params.size()),
                      r.pos() - 4);
  }
  for (const auto& p : params) {
    const std::size_t tat = r.pos();
    auto [pname, t] = r.get_tensor();
    if (pname != p.name || t.shape() != p.var.shape()) {
      throw FormatError("tensor '" + pname + "' " + to_string(t.shape()) + " does not match '" + p.name + "' " +
                            to_string(p.var.shape()),
                        tat);
    }
    p.var.mutable_value() = std::move(t);
  }
}

void restore_optimizer(Reader& r, const std::string& expected, RMSprop& opt) {
  const std::size_t at = r.pos();
  const std::string name = r.get_string();
  if (name != expected) throw FormatError("expected optimizer state '" + expected + "', found '" + name + "'", at);
  opt.set_steps_taken(r.get<std::int64_t>());
  const auto n = r.get<std::uint32_t>();
  if (n != opt.state().size()) throw FormatError("optimizer state size mismatch for '" + name + "'", r.pos() - 4);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t tat = r.pos();
    auto [pname, t] = r.get_tensor();
    if (t.shape() != opt.state()[k].shape()) throw FormatError("optimizer tensor '" + pname + "' shape mismatch", tat);
    opt.state()[k] = std::move(t);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainingState& s) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  const KeyValues kv = to_key_values(s.model.config(), s.config);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put<std::int64_t>(s.optimizer_steps);
  w.put<std::int64_t>(s.generator_steps);
  w.put<std::int64_t>(s.critic_steps);
  w.put<std::uint64_t>(s.effective_seed);
  std::ostringstream rng;
  rng << s.rng;
  w.put_string(rng.str());
  const Group groups[] = {{"generator", &s.generator_opt},
                          {"frame_critic", &s.frame_critic_opt},
                          {"flow_critic", &s.flow_critic_opt}};
  w.put<std::uint32_t>(3);
  for (const auto& g : groups) {
    w.put_string(g.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.opt->params().size()));
    for (const auto& p : g.opt->params()) w.put_tensor(p.name, p.var.value());
  }
  w.put<std::uint32_t>(3);
  for (const auto& g : groups) {
    w.put_string(g.name);
    w.put<std::int64_t>(g.opt->steps_taken());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.opt->state().size()));
    for (std::size_t k = 0; k < g.opt->state().size(); ++k) w.put_tensor(g.opt->params()[k].name, g.opt->state()[k]);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp.string() + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw std::runtime_error("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  r.expect(kMagic, sizeof(kMagic), "not a dualmotion checkpoint (bad magic)");
  const std::size_t vat = r.pos();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), vat);
  KeyValues kv;
  const auto nkv = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < nkv; ++k) {
    std::string key = r.get_string();
    kv[key] = r.get_string();
  }
  ModelConfig mc;
  TrainingConfig tc;
  try {
    from_key_values(kv, mc, tc);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad config snapshot: ") + e.what(), vat + 4);
  }
  TrainingState s = TrainingState::create(mc, tc);
  s.optimizer_steps = r.get<std::int64_t>();
  s.generator_steps = r.get<std::int64_t>();
  s.critic_steps = r.get<std::int64_t>();
  s.effective_seed = r.get<std::uint64_t>();
  {
    const std::size_t at = r.pos();
    std::istringstream rng(r.get_string());
    rng >> s.rng;
    if (!rng) throw FormatError("bad RNG state", at);
  }
  if (r.get<std::uint32_t>() != 3) throw FormatError("expected 3 parameter groups", r.pos() - 4);
  restore_group(r, "generator", s.generator_opt.params());
  restore_group(r, "frame_critic", s.frame_critic_opt.params());
  restore_group(r, "flow_critic", s.flow_critic_opt.params());
  if (r.get<std::uint32_t>() != 3) throw FormatError("expected 3 optimizer states", r.pos() - 4);
  restore_optimizer(r, "generator", s.generator_opt);
  restore_optimizer(r, "frame_critic", s.frame_critic_opt);
  restore_optimizer(r, "flow_critic", s.flow_critic_opt);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload", r.pos());
  return s;
}

}  // namespace dualmotion
