#pragma once

#include <Eigen/Core>

namespace nti {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Conditioning vector. Logits over mixture components; softmax(logits) gives
/// the mixture weights the denoiser conditions on.
struct Embedding {
  Vec logits;

  static Embedding zeros(int k) { return Embedding{Vec::Zero(k)}; }
  int size() const { return static_cast<int>(logits.size()); }
  bool finite() const { return logits.allFinite(); }
};

inline bool identical(const Embedding& a, const Embedding& b) {
  return a.logits.size() == b.logits.size() && (a.logits.array() == b.logits.array()).all();
}

}  // namespace nti
