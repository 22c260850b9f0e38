#include "adjd/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "adjd/errors.hpp"

namespace adjd {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'J', 'D'};

template <class T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == s_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (s_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

std::uint64_t element_count(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

long as_index(double v, const char* what) {
  if (v != std::floor(v) || v < 0) throw FormatError(std::string("checkpoint: bad integer in ") + what);
  return static_cast<long>(v);
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& Checkpoint::at(const std::string& name) const {
  if (const NamedArray* a = find(name)) return *a;
  throw FormatError("checkpoint: missing array '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string sched = nlohmann::json(ckpt.schedule).dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sched.size()));
  out += sched;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    if (element_count(a.dims) != a.data.size())
      throw ArgumentError("checkpoint: array '" + a.name + "' dims do not match its data");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) put<std::uint64_t>(out, d);
    for (double v : a.data) put<double>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const auto slen = r.get<std::uint32_t>("schedule length");
  const std::string sched = r.bytes(slen, "schedule");
  try {
    ckpt.schedule = nlohmann::json::parse(sched).get<NoiseSchedule>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad schedule block: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: bad schedule block: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>("array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.bytes(r.get<std::uint32_t>("name length"), "name");
    const auto ndim = r.get<std::uint32_t>("ndim");
    for (std::uint32_t k = 0; k < ndim; ++k) a.dims.push_back(r.get<std::uint64_t>("dims"));
    const std::uint64_t n = element_count(a.dims);
    if (n > (bytes.size() - r.pos()) / 8) throw FormatError("checkpoint truncated in array '" + a.name + "'");
    a.data.resize(n);
    for (auto& v : a.data) v = r.get<double>("data");
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after the last array");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ArgumentError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

NamedArray matrix_array(const std::string& name, const Eigen::MatrixXd& m) {
  NamedArray a{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  a.data.reserve(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.data.push_back(m(i, j));
  return a;
}

NamedArray vector_array(const std::string& name, const Eigen::VectorXd& v) {
  return {name, {static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

Eigen::MatrixXd array_matrix(const NamedArray& a) {
  if (a.dims.size() != 2) throw FormatError("checkpoint: '" + a.name + "' is not a matrix");
  Eigen::MatrixXd m(a.dims[0], a.dims[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = a.data[k++];
  return m;
}

Eigen::VectorXd array_vector(const NamedArray& a) {
  if (a.dims.size() != 1) throw FormatError("checkpoint: '" + a.name + "' is not a vector");
  return Eigen::Map<const Eigen::VectorXd>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
}

void put_denoiser(Checkpoint& ckpt, const Denoiser& model) {
  const DenoiserConfig& c = model.config();
  Eigen::VectorXd shape(5), hidden(c.hidden.size()), range(2);
  shape << c.state_dim, c.n_freqs, c.cond_dim, c.n_classes, c.activation == Activation::silu ? 1 : 0;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden[i] = static_cast<double>(c.hidden[i]);
  range << c.freq_min, c.freq_max;
  ckpt.arrays.push_back(vector_array("denoiser.shape", shape));
  ckpt.arrays.push_back(vector_array("denoiser.hidden", hidden));
  ckpt.arrays.push_back(vector_array("denoiser.freq_range", range));
  ckpt.arrays.push_back(vector_array("denoiser.freqs", model.freqs()));
  ckpt.arrays.push_back(vector_array("denoiser.params", model.flatten()));
  ckpt.arrays.push_back(matrix_array("denoiser.cond_table", model.cond_table()));
}

Denoiser get_denoiser(const Checkpoint& ckpt) {
  const Eigen::VectorXd shape = array_vector(ckpt.at("denoiser.shape"));
  const Eigen::VectorXd hidden = array_vector(ckpt.at("denoiser.hidden"));
  const Eigen::VectorXd range = array_vector(ckpt.at("denoiser.freq_range"));
  if (shape.size() != 5 || range.size() != 2) throw FormatError("checkpoint: bad denoiser header");
  DenoiserConfig c;
  c.state_dim = as_index(shape[0], "denoiser.shape");
  c.n_freqs = as_index(shape[1], "denoiser.shape");
  c.cond_dim = as_index(shape[2], "denoiser.shape");
  c.n_classes = as_index(shape[3], "denoiser.shape");
  c.activation = shape[4] == 1 ? Activation::silu : Activation::tanh;
  c.hidden.clear();
  for (double h : hidden) c.hidden.push_back(as_index(h, "denoiser.hidden"));
  c.freq_min = range[0];
  c.freq_max = range[1];
  Denoiser m(c);
  const Eigen::VectorXd params = array_vector(ckpt.at("denoiser.params"));
  const Eigen::MatrixXd table = array_matrix(ckpt.at("denoiser.cond_table"));
  const Eigen::VectorXd freqs = array_vector(ckpt.at("denoiser.freqs"));
  if (params.size() != m.num_params() || table.rows() != m.cond_table().rows() ||
      table.cols() != m.cond_table().cols() || freqs.size() != c.n_freqs)
    throw FormatError("checkpoint: denoiser arrays do not match its architecture");
  m.unflatten(params);
  m.cond_table() = table;
  m.set_freqs(freqs);
  return m;
}

void put_classifier(Checkpoint& ckpt, const ToyClassifier& clf) {
  const ClassifierConfig& c = clf.config();
  Eigen::VectorXd shape(2), hidden(c.hidden.size());
  shape << c.state_dim, c.n_classes;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden[i] = static_cast<double>(c.hidden[i]);
  ckpt.arrays.push_back(vector_array("classifier.shape", shape));
  ckpt.arrays.push_back(vector_array("classifier.hidden", hidden));
  ckpt.arrays.push_back(vector_array("classifier.params", clf.net().params()));
}

ToyClassifier get_classifier(const Checkpoint& ckpt) {
  const Eigen::VectorXd shape = array_vector(ckpt.at("classifier.shape"));
  if (shape.size() != 2) throw FormatError("checkpoint: bad classifier header");
  ClassifierConfig c;
  c.state_dim = as_index(shape[0], "classifier.shape");
  c.n_classes = as_index(shape[1], "classifier.shape");
  c.hidden.clear();
  for (double h : array_vector(ckpt.at("classifier.hidden"))) c.hidden.push_back(as_index(h, "classifier.hidden"));
  ToyClassifier clf(c);
  const Eigen::VectorXd params = array_vector(ckpt.at("classifier.params"));
  if (params.size() != clf.net().num_params())
    throw FormatError("checkpoint: classifier weights do not match its architecture");
  clf.net().set_params(params);
  return clf;
}

std::optional<std::string> schedule_mismatch(const NoiseSchedule& trained,
                                             const NoiseSchedule& requested) {
  if (trained == requested) return std::nullopt;
  return "schedule mismatch: model trained with " + nlohmann::json(trained).dump() +
         ", sampling with " + nlohmann::json(requested).dump();
}

}  // namespace adjd
