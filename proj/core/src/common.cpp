#include "prefviz/common.hpp"

#include <sstream>
#include <stdexcept>

namespace prefviz {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x70726566u};
  return Rng(seq);
}

std::string save_rng(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng(Rng& rng, const std::string& text) {
  std::istringstream in(text);
  in >> rng;
  if (!in) throw std::runtime_error("corrupt RNG state in checkpoint");
}

}  // namespace prefviz
