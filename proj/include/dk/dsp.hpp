#pragma once

// Audio front-end: fixed-length temporal segmentation, Hamming-window framing,
// MFCC extraction and delta/double-delta stacking. All functions are pure;
// identical input and configuration give bit-identical features.

#include "dk/mat.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dk::dsp {

struct AudioBuffer {
    std::vector<double> samples; // amplitudes in [-1, 1]
    int sample_rate = 0;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

struct FeatureConfig {
    int sample_rate = 8000;
    double segment_seconds = 2.0;
    double window_ms = 25.0;
    double overlap_ms = 15.0;
    int n_mels = 24;
    int n_cepstra = 20;       // output width is 3 * n_cepstra
    double preemphasis = 0.97;
    double log_floor = 1e-10;
    bool cepstral_mean_norm = false;

    int feature_dim() const { return 3 * n_cepstra; }
    bool operator==(const FeatureConfig&) const = default;
};

struct SegmentFeatures {
    Mat frames; // T x d
    double segment_start = 0.0;
    double segment_duration = 0.0;
    std::string speaker_id;
    std::string recording_id;
};

// Consecutive non-overlapping chunks of exactly segment_seconds; a trailing
// remainder is discarded. Audio shorter than one segment yields an empty list.
std::vector<AudioBuffer> segment_audio(const AudioBuffer& audio, double segment_seconds);

// First-difference pre-emphasis with the first sample treated as repeated.
std::vector<double> preemphasize(const std::vector<double>& samples, double coeff);

// Hamming-windowed frames: hop = window - overlap,
// frame count = floor((N - W) / hop) + 1. Errors when N < W.
Mat frame_signal(const AudioBuffer& audio, double window_ms, double overlap_ms);

// Per frame: power spectrum (radix-2 FFT, zero-padded to the next power of
// two), mel filterbank energies, floored log, orthonormal DCT-II, first
// n_cepstra coefficients kept.
Mat mfcc(const Mat& frames, int sample_rate, int n_mels, int n_cepstra, double log_floor);

// Appends delta (regression over +-2 frames, edges replicated) and
// double-delta columns: T x c -> T x 3c.
Mat add_deltas(const Mat& cepstra);

// Full front-end for one labeled region of audio. region_start shifts the
// emitted segment timestamps (seconds within the recording).
std::vector<SegmentFeatures> featurize_recording(const AudioBuffer& audio,
                                                 const FeatureConfig& config,
                                                 const std::string& speaker_id = "",
                                                 const std::string& recording_id = "",
                                                 double region_start = 0.0);

// Number of frames one segment yields under this configuration.
std::size_t frames_per_segment(const FeatureConfig& config);

// Feature cache container: magic "DKF1", u32 T, u32 d (little-endian), then
// T*d little-endian f64 values row-major.
void write_feature_cache(const std::string& path, const Mat& features);
Mat read_feature_cache(const std::string& path);

} // namespace dk::dsp
