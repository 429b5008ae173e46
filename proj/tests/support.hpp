#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "citecheck/gateway.hpp"

namespace testsupport {

inline std::string fixture(const std::string& rel) { return std::string(CITECHECK_FIXTURES) + "/" + rel; }

inline std::shared_ptr<citecheck::Gateway> stub_gateway(const citecheck::Json& rules = citecheck::Json::object(),
                                                        int max_parallel = 2) {
  auto stub = std::make_shared<citecheck::StubBackend>();
  stub->add_fixtures(rules);
  citecheck::GatewayOptions o;
  o.max_parallel = max_parallel;
  o.cache.enabled = false;
  return std::make_shared<citecheck::Gateway>(stub, o);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("citecheck_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Generators for property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  bool coin(double p = 0.5) { return uniform() < p; }
  std::string word() {
    static const char* kSyll[] = {"ka", "lo", "mi", "ne", "ri", "su", "ta", "vo", "xe", "zu", "pa", "qi"};
    std::string w;
    const int n = integer(1, 4);
    for (int i = 0; i < n; ++i) w += kSyll[integer(0, 11)];
    return w;
  }
  std::string sentence(int min_words = 4, int max_words = 12) {
    std::string s;
    const int n = integer(min_words, max_words);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + word();
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s + ".";
  }
};

}  // namespace testsupport
