#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace scoreis {

/// Counter-based random stream.
///
/// A stream is identified by (master_seed, stream_id). Its key is a hash of
/// both, and the i-th 64-bit draw is mix64(key + (i + 1) * golden), i.e. a
/// SplitMix64 sequence starting at the key. Draws therefore depend only on
/// (master_seed, stream_id, draw_index), which makes chain-level parallelism
/// irrelevant to the results. Normal deviates use Box-Muller on the stream's
/// own uniforms; the second deviate of each pair is cached.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double normal();

  /// Fill with independent standard normals, column-major order.
  template <typename Derived>
  void fill_normal(Eigen::MatrixBase<Derived>& out) {
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal();
  }

  Eigen::VectorXd normal_vector(Eigen::Index d);

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z);

/// Derive a child seed from a parent seed and a tag; used for sub-streams
/// (shards, rejection rounds, training epochs).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace scoreis
