#include "convscope/rng.hpp"

#include <sstream>

#include "convscope/errors.hpp"

namespace convscope {

uint64_t Rng::uniform_index(uint64_t n) {
  if (n == 0) throw InvalidArgumentError("uniform_index: n must be positive");
  // Reject the tail of the 2^64 range that would bias small residues.
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  os << " " << (have_spare_ ? 1 : 0);
  if (have_spare_) os << " " << std::hexfloat << spare_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  int flag = 0;
  is >> flag;
  have_spare_ = flag != 0;
  spare_ = 0.0;
  if (have_spare_) is >> spare_;
  if (is.fail()) throw FormatError("rng state string is malformed");
}

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::InvalidArgument: return "invalid-argument";
    case ErrorCategory::Shape: return "shape";
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Format: return "format";
    case ErrorCategory::Integrity: return "integrity";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Input: return "input";
    case ErrorCategory::Internal: return "internal";
  }
  return "unknown";
}

}  // namespace convscope
