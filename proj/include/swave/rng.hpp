#pragma once

#include <array>
#include <cstdint>

namespace swave {

/// Philox4x32-10 counter-based bijection (Salmon et al., Random123).
///
/// Maps a 128-bit counter and a 64-bit key to 128 pseudo-random bits. The
/// output for a given (key, counter) never depends on what was generated
/// before it, which is what makes per-path streams schedule independent.
class Philox4x32
{
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter counter, Key key);
};

/// Stream identifiers reserve the top 16 bits for the purpose of the stream
/// so that, e.g., path noise and bootstrap resampling never collide.
enum class StreamPurpose : std::uint16_t
{
    path_noise = 0,
    bootstrap = 1,
    diagnostic = 2,
};

std::uint64_t make_stream_id(StreamPurpose purpose, std::uint64_t index);

/// Private random stream for one Monte Carlo path.
///
/// Key = master seed, counter = (block index, stream id). Each Philox block
/// yields two uniforms and therefore one Box-Muller pair of normals.
class RngStream
{
  public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform();
    double normal();
    std::uint64_t next_u64();

    std::uint64_t blocks_consumed() const { return block_; }

  private:
    void refill();

    Philox4x32::Key key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    Philox4x32::Counter buffer_{};
    int buffered_words_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace swave
