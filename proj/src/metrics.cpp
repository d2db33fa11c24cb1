#include "dk/metrics.hpp"

#include "dk/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace dk::metrics {

namespace {

constexpr double kTimeEps = 1e-12;

// Half-open interval lists [start, end), kept sorted and disjoint.
using Timeline = std::vector<std::pair<double, double>>;

Timeline tl_normalize(Timeline t) {
    std::sort(t.begin(), t.end());
    Timeline out;
    for (const auto& [s, e] : t) {
        if (e - s <= kTimeEps) continue;
        if (!out.empty() && s <= out.back().second + kTimeEps)
            out.back().second = std::max(out.back().second, e);
        else
            out.emplace_back(s, e);
    }
    return out;
}

Timeline tl_intersect(const Timeline& a, const Timeline& b) {
    Timeline out;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double s = std::max(a[i].first, b[j].first);
        const double e = std::min(a[i].second, b[j].second);
        if (e - s > kTimeEps) out.emplace_back(s, e);
        if (a[i].second < b[j].second)
            ++i;
        else
            ++j;
    }
    return out;
}

Timeline tl_subtract(const Timeline& a, const Timeline& b) {
    Timeline out;
    std::size_t j = 0;
    for (auto [s, e] : a) {
        double cur = s;
        while (j < b.size() && b[j].second <= cur) ++j;
        std::size_t jj = j;
        while (jj < b.size() && b[jj].first < e) {
            if (b[jj].first > cur + kTimeEps) out.emplace_back(cur, b[jj].first);
            cur = std::max(cur, b[jj].second);
            if (cur >= e) break;
            ++jj;
        }
        if (cur < e - kTimeEps) out.emplace_back(cur, e);
    }
    return tl_normalize(std::move(out));
}

double tl_total(const Timeline& t) {
    double d = 0.0;
    for (const auto& [s, e] : t) d += e - s;
    return d;
}

std::map<std::string, Timeline> per_speaker_timelines(const Annotation& ann) {
    std::map<std::string, Timeline> out;
    for (const auto& iv : ann.intervals) out[iv.speaker].emplace_back(iv.start, iv.end);
    for (auto& [spk, tl] : out) tl = tl_normalize(std::move(tl));
    return out;
}

// Regions where at least two reference speakers are simultaneously active.
Timeline overlap_regions(const std::map<std::string, Timeline>& speakers) {
    std::vector<std::pair<double, int>> events;
    for (const auto& [spk, tl] : speakers)
        for (const auto& [s, e] : tl) {
            events.emplace_back(s, +1);
            events.emplace_back(e, -1);
        }
    std::sort(events.begin(), events.end());
    Timeline out;
    int active = 0;
    double last = 0.0;
    for (const auto& [t, delta] : events) {
        if (active >= 2 && t > last) out.emplace_back(last, t);
        active += delta;
        last = t;
    }
    return tl_normalize(std::move(out));
}

// Exact maximum-weight one-to-one assignment via DP over subsets of the
// smaller side. Returns row -> column (or -1), for weights[rows][cols].
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& w) {
    const std::size_t rows = w.size();
    const std::size_t cols = rows ? w[0].size() : 0;
    if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);

    const bool transposed = cols > rows;
    const std::size_t big = transposed ? cols : rows;   // iterated side
    const std::size_t small = transposed ? rows : cols; // bitmask side
    if (small > 20)
        throw Error("speaker mapping: too many speakers for exact assignment (" +
                    std::to_string(small) + " > 20)");
    auto weight = [&](std::size_t b, std::size_t s) { return transposed ? w[s][b] : w[b][s]; };

    const std::size_t masks = std::size_t{1} << small;
    // best[mask] = max weight using a prefix of big-side items with small-side set `mask`
    std::vector<double> best(masks, -1.0);
    std::vector<std::vector<int>> choice(big, std::vector<int>(masks, -2));
    best[0] = 0.0;
    for (std::size_t b = 0; b < big; ++b) {
        std::vector<double> next(masks, -1.0);
        std::vector<int>& ch = choice[b];
        for (std::size_t mask = 0; mask < masks; ++mask) {
            if (best[mask] < 0.0) continue;
            if (best[mask] > next[mask]) { // leave item b unmatched
                next[mask] = best[mask];
                ch[mask] = -1;
            }
            for (std::size_t s = 0; s < small; ++s) {
                if (mask & (std::size_t{1} << s)) continue;
                const std::size_t nm = mask | (std::size_t{1} << s);
                const double v = best[mask] + weight(b, s);
                if (v > next[nm]) {
                    next[nm] = v;
                    ch[nm] = static_cast<int>(s);
                }
            }
        }
        best = std::move(next);
    }

    std::size_t arg = 0;
    for (std::size_t mask = 1; mask < masks; ++mask)
        if (best[mask] > best[arg]) arg = mask;

    std::vector<int> big_to_small(big, -1);
    std::size_t mask = arg;
    for (std::size_t b = big; b-- > 0;) {
        const int s = choice[b][mask];
        if (s >= 0) {
            big_to_small[b] = s;
            mask &= ~(std::size_t{1} << static_cast<unsigned>(s));
        }
    }

    std::vector<int> row_to_col(rows, -1);
    if (transposed) {
        for (std::size_t b = 0; b < big; ++b)
            if (big_to_small[b] >= 0) row_to_col[static_cast<std::size_t>(big_to_small[b])] =
                static_cast<int>(b);
    } else {
        row_to_col = big_to_small;
    }
    return row_to_col;
}

} // namespace

std::vector<int> to_int_labels(const std::vector<std::string>& labels) {
    std::unordered_map<std::string, int> ids;
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        auto [it, inserted] = ids.emplace(l, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    return out;
}

double nmi(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.empty()) throw Error("nmi: empty labelings");
    if (predicted.size() != truth.size())
        throw Error("nmi: length mismatch (" + std::to_string(predicted.size()) + " vs " +
                    std::to_string(truth.size()) + ")");
    const double n = static_cast<double>(predicted.size());

    std::map<int, double> cu, cv;
    std::map<std::pair<int, int>, double> joint;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        cu[predicted[i]] += 1.0;
        cv[truth[i]] += 1.0;
        joint[{predicted[i], truth[i]}] += 1.0;
    }

    double hu = 0.0, hv = 0.0, mi = 0.0;
    for (const auto& [k, c] : cu) hu -= c / n * std::log(c / n);
    for (const auto& [k, c] : cv) hv -= c / n * std::log(c / n);
    for (const auto& [uv, c] : joint)
        mi += c / n * std::log(n * c / (cu[uv.first] * cv[uv.second]));

    const double denom = (hu + hv) / 2.0;
    if (denom <= 0.0) return 1.0; // both partitions trivial
    return std::clamp(mi / denom, 0.0, 1.0);
}

double purity(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.empty()) throw Error("purity: empty labelings");
    if (predicted.size() != truth.size())
        throw Error("purity: length mismatch (" + std::to_string(predicted.size()) + " vs " +
                    std::to_string(truth.size()) + ")");
    std::map<int, std::map<int, std::size_t>> clusters;
    for (std::size_t i = 0; i < predicted.size(); ++i) ++clusters[predicted[i]][truth[i]];
    std::size_t agree = 0;
    for (const auto& [c, hist] : clusters) {
        std::size_t best = 0;
        for (const auto& [t, cnt] : hist) best = std::max(best, cnt);
        agree += best;
    }
    return static_cast<double>(agree) / static_cast<double>(predicted.size());
}

DerBreakdown der(const Annotation& reference, const Annotation& hypothesis, double collar,
                 bool skip_overlap) {
    if (!reference.uri.empty() && !hypothesis.uri.empty() && reference.uri != hypothesis.uri)
        throw Error("der: uri mismatch (" + reference.uri + " vs " + hypothesis.uri + ")");
    for (const auto& iv : reference.intervals)
        if (!(iv.end > iv.start))
            throw Error("der: reference interval with end <= start");

    auto ref_spk = per_speaker_timelines(reference);
    auto hyp_spk = per_speaker_timelines(hypothesis);

    Timeline ref_speech;
    for (const auto& [spk, tl] : ref_spk)
        ref_speech.insert(ref_speech.end(), tl.begin(), tl.end());
    ref_speech = tl_normalize(std::move(ref_speech));
    if (ref_speech.empty()) throw Error("der: reference has no speech");

    Timeline eval = ref_speech;
    if (collar > 0.0) {
        Timeline collars;
        for (const auto& iv : reference.intervals) {
            collars.emplace_back(iv.start - collar, iv.start + collar);
            collars.emplace_back(iv.end - collar, iv.end + collar);
        }
        eval = tl_subtract(eval, tl_normalize(std::move(collars)));
    }
    if (skip_overlap) eval = tl_subtract(eval, overlap_regions(ref_spk));
    if (eval.empty())
        throw Error("der: evaluation timeline empty after collar/overlap exclusion");

    std::vector<std::string> ref_names, hyp_names;
    std::vector<Timeline> ref_tl, hyp_tl;
    for (auto& [spk, tl] : ref_spk) {
        ref_names.push_back(spk);
        ref_tl.push_back(tl_intersect(tl, eval));
    }
    for (auto& [spk, tl] : hyp_spk) {
        hyp_names.push_back(spk);
        hyp_tl.push_back(tl_intersect(tl, eval));
    }

    std::vector<std::vector<double>> weights(ref_tl.size(),
                                             std::vector<double>(hyp_tl.size(), 0.0));
    for (std::size_t r = 0; r < ref_tl.size(); ++r)
        for (std::size_t h = 0; h < hyp_tl.size(); ++h)
            weights[r][h] = tl_total(tl_intersect(ref_tl[r], hyp_tl[h]));
    const std::vector<int> mapping = max_weight_assignment(weights);

    // Sweep elementary intervals between all boundaries.
    std::vector<double> bounds;
    for (const auto& tl : ref_tl)
        for (const auto& [s, e] : tl) {
            bounds.push_back(s);
            bounds.push_back(e);
        }
    for (const auto& tl : hyp_tl)
        for (const auto& [s, e] : tl) {
            bounds.push_back(s);
            bounds.push_back(e);
        }
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

    auto active = [](const Timeline& tl, double a, double b) {
        for (const auto& [s, e] : tl)
            if (s <= a + kTimeEps && e >= b - kTimeEps) return true;
        return false;
    };

    DerBreakdown out;
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        const double a = bounds[i], b = bounds[i + 1];
        const double dur = b - a;
        if (dur <= kTimeEps) continue;
        int r_active = 0, h_active = 0, matched = 0;
        std::vector<bool> hyp_on(hyp_tl.size(), false);
        for (std::size_t h = 0; h < hyp_tl.size(); ++h)
            if (active(hyp_tl[h], a, b)) {
                hyp_on[h] = true;
                ++h_active;
            }
        for (std::size_t r = 0; r < ref_tl.size(); ++r) {
            if (!active(ref_tl[r], a, b)) continue;
            ++r_active;
            if (mapping[r] >= 0 && hyp_on[static_cast<std::size_t>(mapping[r])]) ++matched;
        }
        if (r_active == 0 && h_active == 0) continue;
        out.total += dur * r_active;
        out.miss += dur * std::max(0, r_active - h_active);
        out.false_alarm += dur * std::max(0, h_active - r_active);
        out.confusion += dur * (std::min(r_active, h_active) - matched);
    }
    if (out.total <= 0.0)
        throw Error("der: no reference speech inside the evaluation timeline");
    return out;
}

Annotation segments_to_annotation(const std::vector<LabeledSegment>& segments,
                                  const std::string& uri) {
    Annotation ann;
    ann.uri = uri;
    std::vector<LabeledSegment> sorted = segments;
    std::sort(sorted.begin(), sorted.end(),
              [](const LabeledSegment& a, const LabeledSegment& b) { return a.start < b.start; });
    for (const auto& seg : sorted) {
        const double end = seg.start + seg.duration;
        if (!ann.intervals.empty() && ann.intervals.back().speaker == seg.label &&
            std::abs(ann.intervals.back().end - seg.start) <= 1e-9) {
            ann.intervals.back().end = end;
        } else {
            ann.intervals.push_back({seg.start, end, seg.label});
        }
    }
    return ann;
}

} // namespace dk::metrics
