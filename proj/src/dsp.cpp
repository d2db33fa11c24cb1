#include "dk/dsp.hpp"

#include "dk/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

namespace dk::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 Cooley-Tukey, in place.
void fft_inplace(std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    if (n <= 1) return;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (j > i) std::swap(x[i], x[j]);
        std::size_t m = n >> 1;
        while (m >= 1 && j >= m) {
            j -= m;
            m >>= 1;
        }
        j += m;
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters over [0, nyquist], n_bins = nfft/2 + 1 spectrum bins.
Mat mel_filterbank(int n_mels, std::size_t nfft, int sample_rate) {
    const std::size_t n_bins = nfft / 2 + 1;
    Mat fb(static_cast<std::size_t>(n_mels), n_bins);
    const double nyquist = sample_rate / 2.0;
    const double mel_hi = hz_to_mel(nyquist);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (std::size_t m = 0; m < edges.size(); ++m)
        edges[m] = mel_to_hz(mel_hi * static_cast<double>(m) / static_cast<double>(n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
            double w = 0.0;
            if (f >= lo && f <= mid && mid > lo)
                w = (f - lo) / (mid - lo);
            else if (f > mid && f <= hi && hi > mid)
                w = (hi - f) / (hi - mid);
            fb.at(static_cast<std::size_t>(m), k) = w;
        }
    }
    return fb;
}

} // namespace

std::vector<AudioBuffer> segment_audio(const AudioBuffer& audio, double segment_seconds) {
    if (segment_seconds <= 0.0) throw Error("segment_audio: segment_seconds must be positive");
    if (audio.sample_rate <= 0) throw Error("segment_audio: invalid sample rate");
    const auto seg_len = static_cast<std::size_t>(
        std::llround(segment_seconds * static_cast<double>(audio.sample_rate)));
    std::vector<AudioBuffer> out;
    if (seg_len == 0 || audio.samples.size() < seg_len) return out;
    const std::size_t count = audio.samples.size() / seg_len;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        AudioBuffer seg;
        seg.sample_rate = audio.sample_rate;
        seg.samples.assign(audio.samples.begin() + static_cast<long>(i * seg_len),
                           audio.samples.begin() + static_cast<long>((i + 1) * seg_len));
        out.push_back(std::move(seg));
    }
    return out;
}

std::vector<double> preemphasize(const std::vector<double>& samples, double coeff) {
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double prev = i == 0 ? samples[0] : samples[i - 1];
        out[i] = samples[i] - coeff * prev;
    }
    return out;
}

Mat frame_signal(const AudioBuffer& audio, double window_ms, double overlap_ms) {
    if (!(window_ms > overlap_ms && overlap_ms > 0.0))
        throw Error("frame_signal: require window_ms > overlap_ms > 0");
    const auto w = static_cast<std::size_t>(
        std::llround(window_ms / 1000.0 * audio.sample_rate));
    const auto ov = static_cast<std::size_t>(
        std::llround(overlap_ms / 1000.0 * audio.sample_rate));
    const std::size_t hop = w - ov;
    if (w == 0 || hop == 0) throw Error("frame_signal: degenerate window/hop");
    const std::size_t n = audio.samples.size();
    if (n < w)
        throw DataError("frame_signal: segment too short (" + std::to_string(n) +
                        " samples, window needs " + std::to_string(w) + ")");
    const std::size_t frames = (n - w) / hop + 1;
    std::vector<double> window(w);
    for (std::size_t i = 0; i < w; ++i)
        window[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                           static_cast<double>(w - 1));
    Mat out(frames, w);
    for (std::size_t f = 0; f < frames; ++f) {
        const double* src = audio.samples.data() + f * hop;
        double* dst = out.row(f);
        for (std::size_t i = 0; i < w; ++i) dst[i] = src[i] * window[i];
    }
    return out;
}

Mat mfcc(const Mat& frames, int sample_rate, int n_mels, int n_cepstra, double log_floor) {
    if (n_cepstra > n_mels) throw Error("mfcc: n_cepstra must not exceed n_mels");
    if (frames.empty()) throw Error("mfcc: no frames");
    const std::size_t nfft = next_pow2(frames.cols);
    const std::size_t n_bins = nfft / 2 + 1;
    const Mat fb = mel_filterbank(n_mels, nfft, sample_rate);

    // Orthonormal DCT-II basis, n_cepstra x n_mels.
    Mat dct(static_cast<std::size_t>(n_cepstra), static_cast<std::size_t>(n_mels));
    for (int k = 0; k < n_cepstra; ++k) {
        const double s = k == 0 ? std::sqrt(1.0 / n_mels) : std::sqrt(2.0 / n_mels);
        for (int j = 0; j < n_mels; ++j)
            dct.at(k, j) = s * std::cos(kPi * k * (2.0 * j + 1.0) / (2.0 * n_mels));
    }

    Mat out(frames.rows, static_cast<std::size_t>(n_cepstra));
    std::vector<std::complex<double>> spec(nfft);
    std::vector<double> power(n_bins), mel_log(static_cast<std::size_t>(n_mels));
    for (std::size_t f = 0; f < frames.rows; ++f) {
        std::fill(spec.begin(), spec.end(), std::complex<double>(0.0, 0.0));
        for (std::size_t i = 0; i < frames.cols; ++i) spec[i] = frames.at(f, i);
        fft_inplace(spec);
        for (std::size_t k = 0; k < n_bins; ++k) power[k] = std::norm(spec[k]);
        for (int m = 0; m < n_mels; ++m) {
            double e = 0.0;
            const double* w = fb.row(static_cast<std::size_t>(m));
            for (std::size_t k = 0; k < n_bins; ++k) e += w[k] * power[k];
            mel_log[static_cast<std::size_t>(m)] = std::log(std::max(e, log_floor));
        }
        for (int k = 0; k < n_cepstra; ++k) {
            double c = 0.0;
            const double* basis = dct.row(static_cast<std::size_t>(k));
            for (int j = 0; j < n_mels; ++j) c += basis[j] * mel_log[static_cast<std::size_t>(j)];
            out.at(f, static_cast<std::size_t>(k)) = c;
        }
    }
    return out;
}

namespace {
// +-2 frame regression with edge replication; denominator 2*(1^2+2^2) = 10.
Mat delta_of(const Mat& x) {
    Mat d(x.rows, x.cols);
    const auto t_max = static_cast<long>(x.rows) - 1;
    for (long t = 0; t <= t_max; ++t) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            double num = 0.0;
            for (long n = 1; n <= 2; ++n) {
                const long ahead = std::min(t + n, t_max);
                const long behind = std::max(t - n, 0L);
                num += static_cast<double>(n) *
                       (x.at(static_cast<std::size_t>(ahead), c) -
                        x.at(static_cast<std::size_t>(behind), c));
            }
            d.at(static_cast<std::size_t>(t), c) = num / 10.0;
        }
    }
    return d;
}
} // namespace

Mat add_deltas(const Mat& cepstra) {
    if (cepstra.rows == 0) throw Error("add_deltas: empty input");
    const Mat d1 = delta_of(cepstra);
    const Mat d2 = delta_of(d1);
    Mat out(cepstra.rows, cepstra.cols * 3);
    for (std::size_t t = 0; t < cepstra.rows; ++t) {
        std::copy_n(cepstra.row(t), cepstra.cols, out.row(t));
        std::copy_n(d1.row(t), d1.cols, out.row(t) + cepstra.cols);
        std::copy_n(d2.row(t), d2.cols, out.row(t) + 2 * cepstra.cols);
    }
    return out;
}

std::vector<SegmentFeatures> featurize_recording(const AudioBuffer& audio,
                                                 const FeatureConfig& config,
                                                 const std::string& speaker_id,
                                                 const std::string& recording_id,
                                                 double region_start) {
    std::vector<SegmentFeatures> out;
    const auto segments = segment_audio(audio, config.segment_seconds);
    out.reserve(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) {
        AudioBuffer seg = segments[i];
        seg.samples = preemphasize(seg.samples, config.preemphasis);
        Mat frames = frame_signal(seg, config.window_ms, config.overlap_ms);
        Mat ceps = mfcc(frames, config.sample_rate, config.n_mels, config.n_cepstra,
                        config.log_floor);
        if (config.cepstral_mean_norm) {
            for (std::size_t c = 0; c < ceps.cols; ++c) {
                double mean = 0.0;
                for (std::size_t t = 0; t < ceps.rows; ++t) mean += ceps.at(t, c);
                mean /= static_cast<double>(ceps.rows);
                for (std::size_t t = 0; t < ceps.rows; ++t) ceps.at(t, c) -= mean;
            }
        }
        SegmentFeatures sf;
        sf.frames = add_deltas(ceps);
        sf.segment_start = region_start + static_cast<double>(i) * config.segment_seconds;
        sf.segment_duration = config.segment_seconds;
        sf.speaker_id = speaker_id;
        sf.recording_id = recording_id;
        out.push_back(std::move(sf));
    }
    return out;
}

std::size_t frames_per_segment(const FeatureConfig& config) {
    const auto n = static_cast<std::size_t>(
        std::llround(config.segment_seconds * config.sample_rate));
    const auto w = static_cast<std::size_t>(
        std::llround(config.window_ms / 1000.0 * config.sample_rate));
    const auto ov = static_cast<std::size_t>(
        std::llround(config.overlap_ms / 1000.0 * config.sample_rate));
    const std::size_t hop = w - ov;
    if (n < w) return 0;
    return (n - w) / hop + 1;
}

void write_feature_cache(const std::string& path, const Mat& features) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open feature cache for writing: " + path);
    f.write("DKF1", 4);
    const auto t = static_cast<std::uint32_t>(features.rows);
    const auto d = static_cast<std::uint32_t>(features.cols);
    f.write(reinterpret_cast<const char*>(&t), 4);
    f.write(reinterpret_cast<const char*>(&d), 4);
    f.write(reinterpret_cast<const char*>(features.data.data()),
            static_cast<std::streamsize>(features.data.size() * sizeof(double)));
    if (!f) throw DataError("short write on feature cache: " + path);
}

Mat read_feature_cache(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open feature cache: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "DKF1", 4) != 0)
        throw DataError("bad feature cache magic in " + path);
    std::uint32_t t = 0, d = 0;
    f.read(reinterpret_cast<char*>(&t), 4);
    f.read(reinterpret_cast<char*>(&d), 4);
    if (!f) throw DataError("truncated feature cache header in " + path);
    Mat out(t, d);
    f.read(reinterpret_cast<char*>(out.data.data()),
           static_cast<std::streamsize>(out.data.size() * sizeof(double)));
    if (!f) throw DataError("truncated feature cache payload in " + path);
    return out;
}

} // namespace dk::dsp
