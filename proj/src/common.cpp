#include "advedit/common.hpp"

#include <cstdio>
#include <sstream>

namespace advedit {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string Rng::save() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::load(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw ParseError("rng: malformed generator state");
}

namespace {
uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

uint64_t Rng::derive(uint64_t seed, std::string_view stream, uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a64(stream)) + index);
}

}  // namespace advedit
