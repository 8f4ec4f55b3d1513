#include "gcib/checkpoint.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

#include "gcib/io.hpp"

namespace gcib {

namespace {

constexpr char kMagic[8] = {'G', 'C', 'I', 'B', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u8(uint8_t x) { bytes_.push_back(static_cast<char>(x)); }
  void u32(uint32_t x) { raw(&x, sizeof x); }
  void u64(uint64_t x) { raw(&x, sizeof x); }
  void i32(int32_t x) { raw(&x, sizeof x); }
  void f64(double x) { raw(&x, sizeof x); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes_.append(s);
  }
  void mat(const Mat& m) {
    i32(m.rows);
    i32(m.cols);
    raw(m.a.data(), m.a.size() * sizeof(double));
  }
  const std::string& bytes() const { return bytes_; }

 private:
  void raw(const void* p, size_t n) {
    bytes_.append(static_cast<const char*>(p), n);
  }
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint32_t u32() { return scalar<uint32_t>(); }
  uint64_t u64() { return scalar<uint64_t>(); }
  int32_t i32() { return scalar<int32_t>(); }
  double f64() { return scalar<double>(); }
  std::string str() {
    const uint32_t n = u32();
    return std::string(take(n), n);
  }
  Mat mat() {
    Mat m;
    m.rows = i32();
    m.cols = i32();
    const size_t n = static_cast<size_t>(m.rows) * m.cols;
    m.a.resize(n);
    std::memcpy(m.a.data(), take(n * sizeof(double)), n * sizeof(double));
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  template <class T>
  T scalar() {
    T x;
    std::memcpy(&x, take(sizeof(T)), sizeof(T));
    return x;
  }
  const char* take(size_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string bytes_;
  size_t pos_ = 0;
};

void write_hyperparams(Writer& w, const Hyperparams& hp) {
  w.i32(hp.dim);
  w.i32(hp.layers_global);
  w.i32(hp.layers_domain);
  w.f64(hp.beta);
  w.f64(hp.lambda);
  w.f64(hp.gamma);
  w.f64(hp.tau);
  w.f64(hp.concrete_temp);
  w.f64(hp.rbf_sigma);
  w.f64(hp.lr);
  w.i32(hp.batch_size);
  w.i32(hp.hsic_batch);
  w.i32(hp.epochs);
  w.u64(hp.seed);
  w.u32(static_cast<uint32_t>(hp.eval_cutoffs.size()));
  for (int k : hp.eval_cutoffs) w.i32(k);
  w.u8(hp.gate_input == GateInput::prob ? 0 : 1);
  w.u8(hp.hsic_repr == HsicRepr::last ? 0 : 1);
}

Hyperparams read_hyperparams(Reader& r) {
  Hyperparams hp;
  hp.dim = r.i32();
  hp.layers_global = r.i32();
  hp.layers_domain = r.i32();
  hp.beta = r.f64();
  hp.lambda = r.f64();
  hp.gamma = r.f64();
  hp.tau = r.f64();
  hp.concrete_temp = r.f64();
  hp.rbf_sigma = r.f64();
  hp.lr = r.f64();
  hp.batch_size = r.i32();
  hp.hsic_batch = r.i32();
  hp.epochs = r.i32();
  hp.seed = r.u64();
  const uint32_t nk = r.u32();
  hp.eval_cutoffs.clear();
  for (uint32_t i = 0; i < nk; ++i) hp.eval_cutoffs.push_back(r.i32());
  hp.gate_input = r.u8() == 0 ? GateInput::prob : GateInput::logit;
  hp.hsic_repr = r.u8() == 0 ? HsicRepr::last : HsicRepr::mean;
  return hp;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  Writer w;
  w.u32(0x01020304u);  // endianness sentinel
  w.u32(ck.version);
  write_hyperparams(w, ck.hp);
  w.u8(static_cast<uint8_t>(ck.ablation));
  w.i32(ck.num_users);
  w.i32(ck.num_items);
  w.u32(static_cast<uint32_t>(ck.behavior_names.size()));
  for (const auto& name : ck.behavior_names) w.str(name);
  w.i32(ck.target);
  w.mat(ck.state.e0);
  w.u32(static_cast<uint32_t>(ck.state.mlp_w.size()));
  for (const auto& m : ck.state.mlp_w) w.mat(m);
  for (const auto& m : ck.state.mlp_b) w.mat(m);
  w.u64(ck.opt.step);
  w.u32(static_cast<uint32_t>(ck.opt.m.size()));
  for (const auto& m : ck.opt.m) w.mat(m);
  for (const auto& m : ck.opt.v) w.mat(m);
  w.u64(ck.trained_epochs);
  for (uint64_t s : ck.sampler_rng) w.u64(s);
  for (uint64_t s : ck.noise_rng) w.u64(s);

  std::string out(kMagic, sizeof kMagic);
  out += w.bytes();
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Reader r(bytes.substr(sizeof kMagic));
  if (r.u32() != 0x01020304u) throw std::runtime_error("checkpoint: wrong byte order");
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != 1) throw std::runtime_error("checkpoint: unsupported version");
  ck.hp = read_hyperparams(r);
  ck.ablation = static_cast<Ablation>(r.u8());
  ck.num_users = r.i32();
  ck.num_items = r.i32();
  const uint32_t nb = r.u32();
  for (uint32_t i = 0; i < nb; ++i) ck.behavior_names.push_back(r.str());
  ck.target = r.i32();
  ck.state.e0 = r.mat();
  const uint32_t naux = r.u32();
  for (uint32_t i = 0; i < naux; ++i) ck.state.mlp_w.push_back(r.mat());
  for (uint32_t i = 0; i < naux; ++i) ck.state.mlp_b.push_back(r.mat());
  ck.opt.step = r.u64();
  const uint32_t nparams = r.u32();
  for (uint32_t i = 0; i < nparams; ++i) ck.opt.m.push_back(r.mat());
  for (uint32_t i = 0; i < nparams; ++i) ck.opt.v.push_back(r.mat());
  ck.trained_epochs = r.u64();
  for (auto& s : ck.sampler_rng) s = r.u64();
  for (auto& s : ck.noise_rng) s = r.u64();
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return ck;
}

}  // namespace gcib
