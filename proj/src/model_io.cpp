#include "vbsgpr/model_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace vbsgpr {
namespace {

constexpr const char* kMagic = "vbsgpr-model";

// %.17g keeps enough digits that parse(print(x)) == x for every double, so a
// load/save cycle reproduces the file exactly.
std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Writer {
  std::ostream& out;

  void raw(const std::string& key, const std::string& value) {
    out << key << ' ' << value << '\n';
  }
  void scalar(const std::string& key, double v) { raw(key, fmt(v)); }
  void integer(const std::string& key, long long v) { out << key << ' ' << v << '\n'; }
  void uinteger(const std::string& key, unsigned long long v) { out << key << ' ' << v << '\n'; }
  void vec(const std::string& key, const Eigen::VectorXd& v) {
    out << "vec " << key << ' ' << v.size() << '\n';
    for (Index i = 0; i < v.size(); ++i) {
      if (i) out << ' ';
      out << fmt(v[i]);
    }
    out << '\n';
  }
  void mat(const std::string& key, const Eigen::MatrixXd& m) {
    out << "mat " << key << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        if (c) out << ' ';
        out << fmt(m(r, c));
      }
      out << '\n';
    }
  }
};

struct Reader {
  std::istream& in;
  std::string path;
  Index line_no = 0;
  std::string line;

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << path << ": line " << line_no << ": " << what;
    throw ParseError(msg.str());
  }

  void next_line() {
    ++line_no;
    if (!std::getline(in, line)) fail("unexpected end of file");
  }

  std::vector<std::string> split() const {
    std::vector<std::string> toks;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
  }

  double to_double(const std::string& s) const {
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + s.size()) fail("bad number '" + s + "'");
    return v;
  }

  long long to_int(const std::string& s) const {
    const char* begin = s.c_str();
    char* end = nullptr;
    long long v = std::strtoll(begin, &end, 10);
    if (end != begin + s.size()) fail("bad integer '" + s + "'");
    return v;
  }

  std::uint64_t to_uint(const std::string& s) const {
    const char* begin = s.c_str();
    char* end = nullptr;
    unsigned long long v = std::strtoull(begin, &end, 10);
    if (end != begin + s.size()) fail("bad integer '" + s + "'");
    return static_cast<std::uint64_t>(v);
  }

  // Reads "key value" where value is the rest of the line (may be empty or
  // contain spaces).
  std::string rest(const std::string& key) {
    next_line();
    if (line.rfind(key, 0) != 0 ||
        (line.size() > key.size() && line[key.size()] != ' '))
      fail("expected key '" + key + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
  }

  std::string word(const std::string& key) {
    std::string v = rest(key);
    if (v.find(' ') != std::string::npos) fail("expected a single token for '" + key + "'");
    return v;
  }

  double scalar(const std::string& key) { return to_double(word(key)); }
  long long integer(const std::string& key) { return to_int(word(key)); }

  Eigen::VectorXd vec(const std::string& key) {
    next_line();
    auto toks = split();
    if (toks.size() != 3 || toks[0] != "vec" || toks[1] != key)
      fail("expected 'vec " + key + " <n>'");
    const Index n = static_cast<Index>(to_int(toks[2]));
    if (n < 0) fail("negative vector length");
    next_line();
    auto vals = split();
    if (static_cast<Index>(vals.size()) != n)
      fail("vector '" + key + "' has " + std::to_string(vals.size()) + " entries, header says " +
           std::to_string(n));
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = to_double(vals[static_cast<std::size_t>(i)]);
    return v;
  }

  Eigen::MatrixXd mat(const std::string& key) {
    next_line();
    auto toks = split();
    if (toks.size() != 4 || toks[0] != "mat" || toks[1] != key)
      fail("expected 'mat " + key + " <rows> <cols>'");
    const Index rows = static_cast<Index>(to_int(toks[2]));
    const Index cols = static_cast<Index>(to_int(toks[3]));
    if (rows < 0 || cols < 0) fail("negative matrix shape");
    Eigen::MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      next_line();
      auto vals = split();
      if (static_cast<Index>(vals.size()) != cols)
        fail("matrix '" + key + "' row has " + std::to_string(vals.size()) +
             " entries, header says " + std::to_string(cols));
      for (Index c = 0; c < cols; ++c) m(r, c) = to_double(vals[static_cast<std::size_t>(c)]);
    }
    return m;
  }
};

}  // namespace

void save_model(const std::string& path, const ModelArtifact& a) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw ParseError("cannot open '" + path + "' for writing");
  Writer w{file};

  w.integer(kMagic, a.format_version);
  w.raw("variant", variant_name(a.variant));
  w.integer("dim", a.dim);
  w.scalar("zeta", a.zeta);

  w.integer("features", static_cast<long long>(a.feature_names.size()));
  for (std::size_t i = 0; i < a.feature_names.size(); ++i)
    w.raw("feature " + std::to_string(i), a.feature_names[i]);
  w.raw("target", a.target_name);

  w.mat("inducing", a.inducing_inputs);
  w.vec("m", a.m);
  w.mat("S_chol", a.S_chol);
  w.vec("nu", a.nu);
  w.vec("xi", a.xi);
  w.scalar("alpha", a.alpha);
  w.scalar("beta", a.beta);

  w.scalar("noise_std", a.noise.noise_std);
  w.scalar("eps_signal_std", a.noise.eps_signal_std);
  w.vec("eps_inverted_lengthscales", a.noise.eps_inverted_lengthscales);
  w.mat("eps_inducing", a.noise.eps_inducing_inputs);

  w.integer("norm_active", a.norm.active ? 1 : 0);
  w.vec("x_mean", a.norm.x_mean);
  w.vec("x_std", a.norm.x_std);
  w.scalar("y_mean", a.norm.y_mean);
  w.scalar("y_std", a.norm.y_std);

  w.mat("centroids", a.block_centroids);

  w.integer("blocks", a.blocks);
  w.integer("iterations", a.iterations);
  w.integer("batch", a.batch);
  w.uinteger("seed", a.seed);
  w.scalar("step_a", a.step_a);
  w.scalar("step_tau", a.step_tau);
  w.scalar("step_kappa", a.step_kappa);
  w.raw("step_mode", a.step_mode);
  w.raw("prior_preset", a.prior_preset);

  w.integer("train_blocks", static_cast<long long>(a.train_blocks.size()));
  for (std::size_t b = 0; b < a.train_blocks.size(); ++b) {
    w.mat("block_X_" + std::to_string(b), a.train_blocks[b].X);
    w.vec("block_y_" + std::to_string(b), a.train_blocks[b].y);
  }
  file << "end\n";

  if (!file) throw ParseError("write to '" + path + "' failed");
}

ModelArtifact load_model(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ParseError("cannot open '" + path + "' for reading");
  Reader r{file, path};

  ModelArtifact a;
  {
    r.next_line();
    auto toks = r.split();
    if (toks.size() != 2 || toks[0] != kMagic)
      r.fail("not a model file (expected '" + std::string(kMagic) + " <version>')");
    long long version = r.to_int(toks[1]);
    if (version != 1)
      r.fail("unsupported model format version " + std::to_string(version) +
             " (this build reads version 1)");
    a.format_version = static_cast<int>(version);
  }
  a.variant = parse_variant(r.word("variant"));
  a.dim = static_cast<Index>(r.integer("dim"));
  a.zeta = r.scalar("zeta");

  const long long nfeat = r.integer("features");
  for (long long i = 0; i < nfeat; ++i)
    a.feature_names.push_back(r.rest("feature " + std::to_string(i)));
  a.target_name = r.rest("target");

  a.inducing_inputs = r.mat("inducing");
  a.m = r.vec("m");
  a.S_chol = r.mat("S_chol");
  a.nu = r.vec("nu");
  a.xi = r.vec("xi");
  a.alpha = r.scalar("alpha");
  a.beta = r.scalar("beta");

  a.noise.noise_std = r.scalar("noise_std");
  a.noise.eps_signal_std = r.scalar("eps_signal_std");
  a.noise.eps_inverted_lengthscales = r.vec("eps_inverted_lengthscales");
  a.noise.eps_inducing_inputs = r.mat("eps_inducing");

  a.norm.active = r.integer("norm_active") != 0;
  a.norm.x_mean = r.vec("x_mean");
  a.norm.x_std = r.vec("x_std");
  a.norm.y_mean = r.scalar("y_mean");
  a.norm.y_std = r.scalar("y_std");

  a.block_centroids = r.mat("centroids");

  a.blocks = static_cast<Index>(r.integer("blocks"));
  a.iterations = static_cast<Index>(r.integer("iterations"));
  a.batch = static_cast<Index>(r.integer("batch"));
  a.seed = r.to_uint(r.word("seed"));
  a.step_a = r.scalar("step_a");
  a.step_tau = r.scalar("step_tau");
  a.step_kappa = r.scalar("step_kappa");
  a.step_mode = r.word("step_mode");
  a.prior_preset = r.word("prior_preset");

  const long long nblocks = r.integer("train_blocks");
  for (long long b = 0; b < nblocks; ++b) {
    BlockData<double> block;
    block.X = r.mat("block_X_" + std::to_string(b));
    block.y = r.vec("block_y_" + std::to_string(b));
    a.train_blocks.push_back(std::move(block));
  }
  r.rest("end");
  return a;
}

LoadedModel instantiate_model(const ModelArtifact& a) {
  require(a.inducing_inputs.cols() == a.dim, "model: inducing sites do not match dim");
  require(a.m.size() == a.inducing_inputs.rows(), "model: m does not match inducing count");
  require(a.S_chol.rows() == a.m.size() && a.S_chol.cols() == a.m.size(),
          "model: S_chol does not match inducing count");
  require(a.nu.size() == a.dim && a.xi.size() == a.dim,
          "model: hyperparameter vectors do not match dim");
  require((a.xi.array() > 0).all(), "model: xi must be positive");
  require(a.beta > 0, "model: beta must be positive");

  LoadedModel loaded;
  loaded.artifact = a;
  loaded.inducing = build_sigma_II(a.inducing_inputs, a.zeta);
  loaded.state.m = a.m;
  loaded.state.S_chol = a.S_chol.triangularView<Eigen::Lower>();
  loaded.state.hyper.nu = a.nu;
  loaded.state.hyper.xi = a.xi;
  loaded.state.hyper.alpha = a.alpha;
  loaded.state.hyper.beta = a.beta;

  if (a.variant == Variant::PIC && !a.train_blocks.empty()) {
    require(static_cast<Index>(a.train_blocks.size()) == a.block_centroids.rows(),
            "model: stored blocks do not match centroid count");
    std::vector<Eigen::MatrixXd> Xblocks;
    for (const auto& b : a.train_blocks) Xblocks.push_back(b.X);
    loaded.block_noise = build_noise_blocks(a.variant, Xblocks, a.noise);
  }
  return loaded;
}

LoadedModel load_and_instantiate(const std::string& path) {
  return instantiate_model(load_model(path));
}

}  // namespace vbsgpr
