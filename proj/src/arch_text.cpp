#include "convscope/arch_text.hpp"

#include <map>
#include <set>
#include <sstream>

#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"

namespace convscope {

namespace {

std::map<std::string, std::string> parse_kv(std::istringstream& rest, int line_no) {
  std::map<std::string, std::string> kv;
  std::string token;
  while (rest >> token) {
    size_t eq = token.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= token.size())
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                        token + "'");
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return kv;
}

class KvReader {
 public:
  KvReader(std::map<std::string, std::string> kv, std::string context)
      : kv_(std::move(kv)), context_(std::move(context)) {}

  int get_int(const std::string& key) { return static_cast<int>(get_double(key)); }

  int get_int(const std::string& key, int fallback) {
    return kv_.count(key) ? get_int(key) : (used_.insert(key), fallback);
  }

  double get_double(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError(context_ + ": missing required key '" + key + "'");
    used_.insert(key);
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(context_ + ": bad numeric value for '" + key + "': " + it->second);
    }
  }

  double get_double(const std::string& key, double fallback) {
    return kv_.count(key) ? get_double(key) : (used_.insert(key), fallback);
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
      used_.insert(key);
      return fallback;
    }
    used_.insert(key);
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(context_ + ": bad boolean for '" + key + "': " + it->second);
  }

  void finish() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw ConfigError(context_ + ": unknown key '" + k + "'");
  }

 private:
  std::map<std::string, std::string> kv_;
  std::string context_;
  std::set<std::string> used_;
};

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ArchitectureSpec parse_arch_text(const std::string& text) {
  ArchitectureSpec arch;
  bool have_input = false;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    std::string ctx = "line " + std::to_string(line_no) + " (" + kind + ")";
    KvReader kv(parse_kv(ls, line_no), ctx);
    if (kind == "input") {
      if (have_input) throw ConfigError(ctx + ": duplicate input line");
      arch.input = {1, kv.get_int("c"), kv.get_int("h"), kv.get_int("w")};
      have_input = true;
      kv.finish();
      continue;
    }
    if (!have_input)
      throw ConfigError("architecture must start with an 'input c=.. h=.. w=..' line");
    LayerDesc d;
    if (kind == "conv") {
      d.kind = LayerKind::Conv;
      d.out_channels = kv.get_int("out");
      d.kernel = kv.get_int("k");
      d.stride = kv.get_int("stride", 1);
      d.pad = kv.get_int("pad", 0);
    } else if (kind == "relu") {
      d.kind = LayerKind::Relu;
    } else if (kind == "pool") {
      d.kind = LayerKind::MaxPool;
      d.kernel = kv.get_int("k");
      d.stride = kv.get_int("stride", 1);
      d.ceil_mode = kv.get_bool("ceil", false);
    } else if (kind == "lrn") {
      d.kind = LayerKind::Lrn;
      d.lrn.n_adj = kv.get_int("n", 5);
      d.lrn.k = kv.get_double("k", 2.0);
      d.lrn.alpha = kv.get_double("alpha", 1e-4);
      d.lrn.beta = kv.get_double("beta", 0.75);
    } else if (kind == "flatten") {
      d.kind = LayerKind::Flatten;
    } else if (kind == "fc") {
      d.kind = LayerKind::FullyConnected;
      d.units = kv.get_int("out");
    } else if (kind == "dropout") {
      d.kind = LayerKind::Dropout;
      d.rate = kv.get_double("p");
    } else if (kind == "softmax") {
      d.kind = LayerKind::SoftmaxClassifier;
      d.classes = kv.get_int("classes");
    } else {
      throw ConfigError(ctx + ": unknown layer kind");
    }
    kv.finish();
    arch.layers.push_back(d);
  }
  if (!have_input) throw ConfigError("architecture text has no input line");
  validate_arch(arch);
  return arch;
}

std::string print_arch_text(const ArchitectureSpec& arch) {
  std::ostringstream os;
  os << "input c=" << arch.input.c << " h=" << arch.input.h << " w=" << arch.input.w << "\n";
  for (const LayerDesc& d : arch.layers) {
    switch (d.kind) {
      case LayerKind::Conv:
        os << "conv out=" << d.out_channels << " k=" << d.kernel << " stride=" << d.stride
           << " pad=" << d.pad << "\n";
        break;
      case LayerKind::Relu:
        os << "relu\n";
        break;
      case LayerKind::MaxPool:
        os << "pool k=" << d.kernel << " stride=" << d.stride
           << " ceil=" << (d.ceil_mode ? "true" : "false") << "\n";
        break;
      case LayerKind::Lrn:
        os << "lrn n=" << d.lrn.n_adj << " k=" << format_double(d.lrn.k)
           << " alpha=" << format_double(d.lrn.alpha)
           << " beta=" << format_double(d.lrn.beta) << "\n";
        break;
      case LayerKind::Flatten:
        os << "flatten\n";
        break;
      case LayerKind::FullyConnected:
        os << "fc out=" << d.units << "\n";
        break;
      case LayerKind::Dropout:
        os << "dropout p=" << format_double(d.rate) << "\n";
        break;
      case LayerKind::SoftmaxClassifier:
        os << "softmax classes=" << d.classes << "\n";
        break;
    }
  }
  return os.str();
}

ArchitectureSpec load_arch(const std::string& path) {
  try {
    return parse_arch_text(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void save_arch(const ArchitectureSpec& arch, const std::string& path) {
  atomic_write_file(path, print_arch_text(arch));
}

}  // namespace convscope
