#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "naw/fft.hpp"
#include "naw/frontend.hpp"
#include "naw/runner.hpp"

namespace naw {

/// Everything one live stream carries between chunks. Copyable so a stream
/// can be snapshotted and resumed; the engine itself stays immutable.
struct StreamState {
    std::vector<float> ctx;  ///< rolling input window, lookback + 2*chunk samples
    std::vector<std::vector<float>> stft_cache;       ///< enc_kt-1 past spectra frames
    std::vector<std::vector<float>> block_out_cache;  ///< dec_kt-1 past stack outputs
    DecoderPending pending;                           ///< transposed-conv overlap state
    std::vector<std::vector<float>> rec_h;            ///< per-block hidden, bins*hidden
    std::vector<std::vector<float>> rec_c;            ///< per-block cell, bins*hidden
    OlaState ola;
    int64_t chunk_index = 0;
    bool flushed = false;

    std::vector<float> out_fifo;  ///< synthesized samples not yet handed out
    std::vector<float> chunk_buf, spec_row, feat, dec_row;
    Workspace ws;
    int fft_size = 0;
    std::unique_ptr<RealFft> fft;

    StreamState();
    StreamState(const StreamState& other);
    StreamState& operator=(const StreamState& other);
    StreamState(StreamState&&) noexcept;
    StreamState& operator=(StreamState&&) noexcept;
    ~StreamState();
};

/// Chunk-by-chunk driver around a prepared ModelRunner. Each process_chunk
/// call consumes exactly `chunk` samples and returns exactly `chunk`
/// samples; the first latency_samples() returned are zeros, and flush()
/// drains the matching latency_samples() tail.
class StreamEngine {
public:
    StreamEngine(const ModelRunner& runner, bool pre_emphasis);

    const ModelRunner& runner() const { return runner_; }
    bool pre_emphasis() const { return pre_emphasis_; }

    StreamState init_state() const;
    std::vector<float> process_chunk(StreamState& state, std::span<const float> chunk) const;
    std::vector<float> flush(StreamState& state) const;

    /// Convenience wrapper: whole-chunk stream over `signal` plus flush.
    /// When chunk_ms is given, appends one wall-clock entry per chunk call.
    std::vector<float> run_stream(std::span<const float> signal,
                                  std::vector<double>* chunk_ms = nullptr) const;

private:
    void process_frame(StreamState& state, const float* frame) const;

    const ModelRunner& runner_;
    bool pre_emphasis_ = true;
    std::vector<float> window_;
};

/// Latency statistics of one streamed run. rtf is the mean chunk time over
/// the chunk duration; percentiles use the nearest-rank convention.
struct TimingSummary {
    int64_t chunks = 0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double max_ms = 0.0;
    double rtf = 0.0;
};

TimingSummary summarize_timings(const std::vector<double>& chunk_ms, double budget_ms);

}  // namespace naw
