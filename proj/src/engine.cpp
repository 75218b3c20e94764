#include "naw/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace naw {

StreamState::StreamState() = default;
StreamState::StreamState(StreamState&&) noexcept = default;
StreamState& StreamState::operator=(StreamState&&) noexcept = default;
StreamState::~StreamState() = default;

StreamState::StreamState(const StreamState& other)
    : ctx(other.ctx),
      stft_cache(other.stft_cache),
      block_out_cache(other.block_out_cache),
      pending(other.pending),
      rec_h(other.rec_h),
      rec_c(other.rec_c),
      ola(other.ola),
      chunk_index(other.chunk_index),
      flushed(other.flushed),
      out_fifo(other.out_fifo),
      chunk_buf(other.chunk_buf),
      spec_row(other.spec_row),
      feat(other.feat),
      dec_row(other.dec_row),
      ws(other.ws),
      fft_size(other.fft_size),
      fft(other.fft_size > 0 ? std::make_unique<RealFft>(other.fft_size) : nullptr) {}

StreamState& StreamState::operator=(const StreamState& other) {
    if (this != &other) {
        StreamState tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

StreamEngine::StreamEngine(const ModelRunner& runner, bool pre_emphasis)
    : runner_(runner), pre_emphasis_(pre_emphasis),
      window_(build_synthesis_window(runner.framing())) {}

StreamState StreamEngine::init_state() const {
    const FramingConfig& fr = runner_.framing();
    const ModelConfig& cfg = runner_.model();
    const int F = fr.n_bins(), D = cfg.channels;

    StreamState st;
    st.ctx.assign(static_cast<size_t>(fr.lookback) + 2 * fr.chunk, 0.0f);
    st.stft_cache.assign(static_cast<size_t>(cfg.stft_cache_frames()),
                         std::vector<float>(static_cast<size_t>(F) * 2, 0.0f));
    st.block_out_cache.assign(static_cast<size_t>(cfg.deconv_cache_frames()),
                              std::vector<float>(static_cast<size_t>(F) * D, 0.0f));
    st.pending = runner_.make_pending();
    st.rec_h.assign(static_cast<size_t>(cfg.blocks),
                    std::vector<float>(runner_.recurrent_floats(), 0.0f));
    st.rec_c = st.rec_h;
    st.ola = OlaState::init(fr);
    // Each call appends one synthesis chunk and pops one chunk of output, so
    // priming with the lookahead alone realizes the full chunk+lookahead lag.
    st.out_fifo.assign(static_cast<size_t>(fr.latency_samples() - fr.chunk), 0.0f);
    st.chunk_buf.assign(static_cast<size_t>(fr.chunk), 0.0f);
    st.spec_row.assign(static_cast<size_t>(F) * 2, 0.0f);
    st.feat.assign(static_cast<size_t>(F) * D, 0.0f);
    st.dec_row.assign(static_cast<size_t>(F) * 2, 0.0f);
    st.ws = runner_.make_workspace();
    st.fft_size = fr.fft_size();
    st.fft = std::make_unique<RealFft>(st.fft_size);
    return st;
}

void StreamEngine::process_frame(StreamState& st, const float* frame) const {
    const FramingConfig& fr = runner_.framing();
    const ModelConfig& cfg = runner_.model();
    const int F = fr.n_bins();

    const SpectralFrame bins =
        analysis_stft(*st.fft, {frame, static_cast<size_t>(st.fft_size)});
    for (int f = 0; f < F; ++f) {
        st.spec_row[static_cast<size_t>(f) * 2] = bins[static_cast<size_t>(f)].real();
        st.spec_row[static_cast<size_t>(f) * 2 + 1] = bins[static_cast<size_t>(f)].imag();
    }
    runner_.observe_site("enc.in", st.spec_row);

    if (runner_.bypass()) {
        st.dec_row = st.spec_row;
    } else {
        constexpr size_t kMaxTaps = 16;
        if (static_cast<size_t>(cfg.enc_kt) > kMaxTaps)
            throw std::invalid_argument("encoder time kernel too large for the stream driver");
        const float* win[kMaxTaps];
        for (size_t i = 0; i < st.stft_cache.size(); ++i) win[i] = st.stft_cache[i].data();
        win[st.stft_cache.size()] = st.spec_row.data();
        runner_.encode_frame(win, st.feat.data(), st.ws);
        for (int b = 0; b < cfg.blocks; ++b)
            runner_.block_frame(b, st.feat.data(), st.rec_h[static_cast<size_t>(b)].data(),
                                st.rec_c[static_cast<size_t>(b)].data(), st.ws);
        if (!st.block_out_cache.empty()) {
            std::rotate(st.block_out_cache.begin(), st.block_out_cache.begin() + 1,
                        st.block_out_cache.end());
            st.block_out_cache.back().assign(st.feat.begin(), st.feat.end());
        }
        runner_.decode_accumulate(st.feat.data(), st.pending, st.ws);
        runner_.decode_emit(st.pending, st.dec_row.data(), st.ws);
    }

    if (!st.stft_cache.empty()) {
        std::rotate(st.stft_cache.begin(), st.stft_cache.begin() + 1, st.stft_cache.end());
        st.stft_cache.back() = st.spec_row;
    }

    SpectralFrame spec(static_cast<size_t>(F));
    for (int f = 0; f < F; ++f)
        spec[static_cast<size_t>(f)] = {st.dec_row[static_cast<size_t>(f) * 2],
                                        st.dec_row[static_cast<size_t>(f) * 2 + 1]};
    const std::vector<float> synth = synthesis_chunk(*st.fft, fr, spec, st.ola, window_);
    st.out_fifo.insert(st.out_fifo.end(), synth.begin(), synth.end());
}

std::vector<float> StreamEngine::process_chunk(StreamState& st,
                                               std::span<const float> chunk) const {
    const FramingConfig& fr = runner_.framing();
    const int lc = fr.chunk;
    if (st.flushed) throw std::logic_error("process_chunk called on a flushed stream");
    if (static_cast<int>(chunk.size()) != lc)
        throw std::invalid_argument("process_chunk expects exactly " + std::to_string(lc) +
                                    " samples");

    std::copy(chunk.begin(), chunk.end(), st.chunk_buf.begin());
    if (pre_emphasis_)
        st.ola.emphasis_carry = naw::pre_emphasis(st.chunk_buf, st.ola.emphasis_carry);

    std::memmove(st.ctx.data(), st.ctx.data() + lc, sizeof(float) * (st.ctx.size() - lc));
    std::copy(st.chunk_buf.begin(), st.chunk_buf.end(), st.ctx.end() - lc);

    // Call i completes the frame whose lookahead ends at chunk i's last
    // sample; the very first frame is all zero-context plus that lookahead.
    process_frame(st, st.ctx.data());
    st.chunk_index += 1;

    std::vector<float> out(st.out_fifo.begin(), st.out_fifo.begin() + lc);
    st.out_fifo.erase(st.out_fifo.begin(), st.out_fifo.begin() + lc);
    return out;
}

std::vector<float> StreamEngine::flush(StreamState& st) const {
    if (st.flushed) return {};
    st.flushed = true;
    if (st.chunk_index == 0) return {};

    // Final frame: the newest chunk in context plus a zeroed lookahead.
    const FramingConfig& fr = runner_.framing();
    std::vector<float> frame(static_cast<size_t>(st.fft_size), 0.0f);
    std::copy(st.ctx.begin() + fr.chunk, st.ctx.end(), frame.begin());
    process_frame(st, frame.data());

    std::vector<float> out(st.out_fifo.begin(), st.out_fifo.end());
    st.out_fifo.clear();
    return out;
}

std::vector<float> StreamEngine::run_stream(std::span<const float> signal,
                                            std::vector<double>* chunk_ms) const {
    const int lc = runner_.framing().chunk;
    const size_t n_chunks = signal.size() / static_cast<size_t>(lc);
    StreamState st = init_state();
    std::vector<float> out;
    out.reserve(n_chunks * static_cast<size_t>(lc) +
                static_cast<size_t>(runner_.framing().latency_samples()));
    for (size_t i = 0; i < n_chunks; ++i) {
        const auto chunk = signal.subspan(i * static_cast<size_t>(lc), static_cast<size_t>(lc));
        if (chunk_ms) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::vector<float> got = process_chunk(st, chunk);
            const auto t1 = std::chrono::steady_clock::now();
            chunk_ms->push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            out.insert(out.end(), got.begin(), got.end());
        } else {
            const std::vector<float> got = process_chunk(st, chunk);
            out.insert(out.end(), got.begin(), got.end());
        }
    }
    const std::vector<float> tail = flush(st);
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
}

TimingSummary summarize_timings(const std::vector<double>& chunk_ms, double budget_ms) {
    TimingSummary t;
    t.chunks = static_cast<int64_t>(chunk_ms.size());
    if (chunk_ms.empty()) return t;
    std::vector<double> sorted = chunk_ms;
    std::sort(sorted.begin(), sorted.end());
    auto rank = [&sorted](double p) {
        const size_t r = static_cast<size_t>(
            std::ceil(p * static_cast<double>(sorted.size())));
        return sorted[std::max<size_t>(r, 1) - 1];
    };
    t.p50_ms = rank(0.50);
    t.p95_ms = rank(0.95);
    t.max_ms = sorted.back();
    const double mean =
        std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    t.rtf = mean / budget_ms;
    return t;
}

}  // namespace naw
