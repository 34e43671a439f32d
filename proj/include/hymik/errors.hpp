#pragma once

#include <stdexcept>
#include <string>

namespace hymik {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// sparse algebra
struct NonSymmetric : Error {
  explicit NonSymmetric(const std::string& msg) : Error(msg) {}
};
struct NotPositiveDefinite : Error {
  int pivot_index;  // position (original ordering) of the first non-positive pivot
  NotPositiveDefinite(const std::string& msg, int idx) : Error(msg), pivot_index(idx) {}
};
struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

// structure matrices
struct TooShort : Error {
  explicit TooShort(const std::string& msg) : Error(msg) {}
};
struct Disconnected : Error {
  int component_count;
  Disconnected(const std::string& msg, int ncomp) : Error(msg), component_count(ncomp) {}
};
struct AlreadyScaled : Error {
  explicit AlreadyScaled(const std::string& msg) : Error(msg) {}
};
struct UnderConstrained : Error {
  explicit UnderConstrained(const std::string& msg) : Error(msg) {}
};

// constraints
struct RankCheckFailed : Error {
  explicit RankCheckFailed(const std::string& msg) : Error(msg) {}
};
struct PolicyInfeasible : Error {
  explicit PolicyInfeasible(const std::string& msg) : Error(msg) {}
};
struct NotOrthonormal : Error {
  explicit NotOrthonormal(const std::string& msg) : Error(msg) {}
};
struct SingularGram : Error {
  explicit SingularGram(const std::string& msg) : Error(msg) {}
};

// likelihoods
struct NonFiniteEta : Error {
  explicit NonFiniteEta(const std::string& msg) : Error(msg) {}
};
struct InvalidDispersion : Error {
  explicit InvalidDispersion(const std::string& msg) : Error(msg) {}
};
struct UnsupportedFamily : Error {
  explicit UnsupportedFamily(const std::string& msg) : Error(msg) {}
};

// inference
struct FactorizationFailed : Error {
  explicit FactorizationFailed(const std::string& msg) : Error(msg) {}
};
struct OptimizerStalled : Error {
  explicit OptimizerStalled(const std::string& msg) : Error(msg) {}
};

// io / cli
struct ParseError : Error {
  long line;  // 1-based line number in the offending file, 0 if not line-specific
  ParseError(const std::string& msg, long line_no = 0) : Error(msg), line(line_no) {}
};
struct AsymmetricAdjacency : Error {
  explicit AsymmetricAdjacency(const std::string& msg) : Error(msg) {}
};
struct MissingCell : Error {
  explicit MissingCell(const std::string& msg) : Error(msg) {}
};
struct NegativeCount : Error {
  explicit NegativeCount(const std::string& msg) : Error(msg) {}
};

}  // namespace hymik
