#pragma once

// Scoring: NMI and purity for clustering quality, and diarization error rate
// with boundary collars, overlap exclusion and optimal speaker mapping.

#include <string>
#include <vector>

namespace dk::metrics {

struct Interval {
    double start = 0.0;
    double end = 0.0;
    std::string speaker;
};

// Timeline of speaker intervals for one recording. Reference annotations may
// contain overlapping intervals of different speakers.
struct Annotation {
    std::string uri;
    std::vector<Interval> intervals;
};

struct LabeledSegment {
    double start = 0.0;
    double duration = 0.0;
    std::string label;
};

// Mutual information normalized by the arithmetic mean of the label
// entropies; two trivial partitions score 1 by convention.
double nmi(const std::vector<int>& predicted, const std::vector<int>& truth);
double purity(const std::vector<int>& predicted, const std::vector<int>& truth);

// Map arbitrary labels to dense ints (first appearance order).
std::vector<int> to_int_labels(const std::vector<std::string>& labels);

struct DerBreakdown {
    double miss = 0.0;
    double false_alarm = 0.0;
    double confusion = 0.0;
    double total = 0.0; // reference speech within the evaluation timeline

    double der() const { return (miss + false_alarm + confusion) / total; }
    double confusion_rate() const { return confusion / total; }
};

// Evaluation timeline = reference speech minus +-collar neighborhoods around
// every reference segment boundary, minus (optionally) regions where two or
// more reference speakers overlap. Speaker mapping is the exact
// maximum-overlap one-to-one assignment.
DerBreakdown der(const Annotation& reference, const Annotation& hypothesis, double collar,
                 bool skip_overlap);

// Adjacent same-label segments merged into maximal intervals.
Annotation segments_to_annotation(const std::vector<LabeledSegment>& segments,
                                  const std::string& uri);

} // namespace dk::metrics
