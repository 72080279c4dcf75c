#pragma once

// Shared fixtures: the digit corpus location (real MNIST via QNTK_MNIST_DIR,
// synthetic lookalike otherwise) and the Monte Carlo dual-activation oracle.

#include "support/synthetic_digits.hpp"

#include "qntk/data.hpp"
#include "qntk/rng.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

namespace testsupport {

struct DigitCorpus {
  std::filesystem::path dir;
  bool real_mnist = false;

  std::string train_images() const { return (dir / "train-images-idx3-ubyte").string(); }
  std::string train_labels() const { return (dir / "train-labels-idx1-ubyte").string(); }
  std::string test_images() const { return (dir / "t10k-images-idx3-ubyte").string(); }
  std::string test_labels() const { return (dir / "t10k-labels-idx1-ubyte").string(); }
};

inline const DigitCorpus& digit_corpus() {
  static const DigitCorpus corpus = [] {
    DigitCorpus c;
    if (const char* env = std::getenv("QNTK_MNIST_DIR")) {
      c.dir = env;
      if (std::filesystem::exists(c.dir / "train-images-idx3-ubyte")) {
        c.real_mnist = true;
        return c;
      }
      std::cerr << "[fixture] QNTK_MNIST_DIR set but files missing, falling back\n";
    }
    c.dir = std::filesystem::temp_directory_path() / "qntk_digit_corpus_v1";
    generate_digit_corpus(c.dir, 300, 520, 0xd161757ULL);
    c.real_mnist = false;
    return c;
  }();
  return corpus;
}

// E[sigma(u) sigma(v)] over correlated standard normals, the defining
// expectation of the dual activation. Independent of the closed forms under
// test.
template <typename Sigma>
double monte_carlo_dual(Sigma&& sigma, double rho, int samples, std::uint64_t seed) {
  qntk::CounterRng rng(seed, 0x3c0ffee);
  const double w = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  double acc = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double u = rng.gaussian();
    const double v = rho * u + w * rng.gaussian();
    acc += sigma(u) * sigma(v);
  }
  return acc / samples;
}

}  // namespace testsupport
