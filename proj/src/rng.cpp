#include "nti/rng.hpp"

namespace nti {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view run_id) {
  return splitmix64(seed ^ splitmix64(fnv1a64(run_id)));
}

Rng make_rng(std::uint64_t seed, std::string_view run_id) { return Rng(derive_seed(seed, run_id)); }

Vec standard_normal(Rng& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace nti
