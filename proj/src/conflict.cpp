#include "skylane/conflict.hpp"

#include <algorithm>
#include <cmath>

namespace skylane {

const char* to_string(VerticalClass v) {
    switch (v) {
    case VerticalClass::LL: return "LL";
    case VerticalClass::LA: return "LA";
    case VerticalClass::LD: return "LD";
    default: return "AD";
    }
}

const char* to_string(LateralClass l) {
    switch (l) {
    case LateralClass::HO: return "HO";
    case LateralClass::CR: return "CR";
    default: return "P";
    }
}

const char* to_string(SpeedClass s) {
    switch (s) {
    case SpeedClass::Similar: return "Similar";
    case SpeedClass::AC1Faster: return "AC1Faster";
    default: return "AC2Faster";
    }
}

std::string ConflictClass::label() const {
    return std::string(to_string(vertical)) + "/" + to_string(lateral) + "/" + to_string(speed);
}

int ConflictClass::index() const {
    return static_cast<int>(vertical) * 9 + static_cast<int>(lateral) * 3 + static_cast<int>(speed);
}

ConflictClass ConflictClass::from_index(int i) {
    if (i < 0 || i >= 36) throw std::out_of_range("conflict class index out of range");
    return {static_cast<VerticalClass>(i / 9), static_cast<LateralClass>((i / 3) % 3), static_cast<SpeedClass>(i % 3)};
}

ConflictClass ConflictClass::parse(const std::string& label) {
    for (const auto& c : all())
        if (c.label() == label) return c;
    throw std::invalid_argument("unknown conflict class '" + label + "'");
}

std::array<ConflictClass, 36> ConflictClass::all() {
    std::array<ConflictClass, 36> out;
    for (int i = 0; i < 36; ++i) out[static_cast<std::size_t>(i)] = from_index(i);
    return out;
}

bool check_separation(const AircraftState& a, const AircraftState& b, const SeparationMinima& minima) {
    return distance(a.position, b.position) < minima.lateral_nm &&
           std::abs(a.altitude_ft - b.altitude_ft) < minima.vertical_ft;
}

bool check_separation(const Sample& a, const Sample& b, const SeparationMinima& minima) {
    return distance(a.position, b.position) < minima.lateral_nm &&
           std::abs(a.altitude_ft - b.altitude_ft) < minima.vertical_ft;
}

namespace {

using SamplePair = std::pair<const Sample*, const Sample*>;

std::vector<SamplePair> aligned(const Trajectory& a, const Trajectory& b) {
    std::vector<SamplePair> out;
    std::size_t i = 0, j = 0;
    while (i < a.samples.size() && j < b.samples.size()) {
        const double ta = a.samples[i].t, tb = b.samples[j].t;
        if (std::abs(ta - tb) <= 1e-6) {
            out.emplace_back(&a.samples[i], &b.samples[j]);
            ++i;
            ++j;
        } else if (ta < tb) {
            ++i;
        } else {
            ++j;
        }
    }
    return out;
}

Cpa cpa_over(const std::vector<SamplePair>& pairs, std::size_t first, std::size_t last) {
    Cpa best;
    bool have = false;
    for (std::size_t k = first; k <= last; ++k) {
        const double d = distance(pairs[k].first->position, pairs[k].second->position);
        if (!have || d < best.distance_nm) {
            best = {pairs[k].first->t, d, std::abs(pairs[k].first->altitude_ft - pairs[k].second->altitude_ft)};
            have = true;
        }
    }
    return best;
}

}  // namespace

Cpa compute_cpa(const Trajectory& a, const Trajectory& b, const SeparationMinima& minima,
                std::optional<std::pair<double, double>> window) {
    const auto pairs = aligned(a, b);
    if (pairs.empty()) throw std::invalid_argument("compute_cpa: trajectories do not overlap in time");
    std::size_t first = 0, last = pairs.size() - 1;
    if (window) {
        bool found = false;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double t = pairs[k].first->t;
            if (t < window->first - 1e-6 || t > window->second + 1e-6) continue;
            if (!found) first = k;
            last = k;
            found = true;
        }
        if (!found) throw std::invalid_argument("compute_cpa: window contains no common samples");
    } else {
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            if (!check_separation(*pairs[k].first, *pairs[k].second, minima)) continue;
            first = k;
            last = k;
            while (last + 1 < pairs.size() && check_separation(*pairs[last + 1].first, *pairs[last + 1].second, minima))
                ++last;
            break;
        }
    }
    return cpa_over(pairs, first, last);
}

double track_difference_deg(double a, double b) {
    double d = std::fmod(std::abs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

ConflictClass classify(const Sample& ac1, const Sample& ac2, const ClassThresholds& th) {
    ConflictClass c;
    auto vsign = [&](double rate) { return std::abs(rate) <= th.level_rate_fpm ? 0 : (rate > 0 ? 1 : -1); };
    const int v1 = vsign(ac1.vertical_rate_fpm), v2 = vsign(ac2.vertical_rate_fpm);
    if (v1 == 0 && v2 == 0) {
        c.vertical = VerticalClass::LL;
    } else if (v1 * v2 < 0) {
        c.vertical = VerticalClass::AD;
    } else if (v1 > 0 || v2 > 0) {
        c.vertical = VerticalClass::LA;
    } else {
        c.vertical = VerticalClass::LD;
    }

    const double theta = track_difference_deg(ac1.track_deg, ac2.track_deg);
    if (theta <= th.parallel_max_deg) {
        c.lateral = LateralClass::P;
    } else if (theta >= th.head_on_min_deg) {
        c.lateral = LateralClass::HO;
    } else {
        c.lateral = LateralClass::CR;
    }

    const double dv = ac1.ground_speed_kt - ac2.ground_speed_kt;
    if (std::abs(dv) <= th.similar_speed_kt) {
        c.speed = SpeedClass::Similar;
    } else {
        c.speed = dv > 0 ? SpeedClass::AC1Faster : SpeedClass::AC2Faster;
    }
    return c;
}

bool record_less(const ConflictRecord& a, const ConflictRecord& b) {
    if (a.t_first != b.t_first) return a.t_first < b.t_first;
    if (a.ac1 != b.ac1) return a.ac1 < b.ac1;
    if (a.ac2 != b.ac2) return a.ac2 < b.ac2;
    if (a.source != b.source) return a.source < b.source;
    return a.t_last < b.t_last;
}

std::vector<ConflictRecord> detect_pair(const Trajectory& a, const Trajectory& b, const RolloutSource& source,
                                        const SeparationMinima& minima, const ClassThresholds& th) {
    const bool a_first = a.callsign < b.callsign;
    const Trajectory& t1 = a_first ? a : b;
    const Trajectory& t2 = a_first ? b : a;
    const auto pairs = aligned(t1, t2);
    std::vector<ConflictRecord> out;
    std::size_t k = 0;
    while (k < pairs.size()) {
        if (!check_separation(*pairs[k].first, *pairs[k].second, minima)) {
            ++k;
            continue;
        }
        std::size_t last = k;
        while (last + 1 < pairs.size() && check_separation(*pairs[last + 1].first, *pairs[last + 1].second, minima))
            ++last;
        ConflictRecord rec;
        rec.ac1 = t1.callsign;
        rec.ac2 = t2.callsign;
        rec.t_first = pairs[k].first->t;
        rec.t_last = pairs[last].first->t;
        rec.cpa = cpa_over(pairs, k, last);
        rec.source = source;
        const auto* s1 = t1.at(rec.cpa.t);
        const auto* s2 = t2.at(rec.cpa.t);
        rec.cls = classify(*s1, *s2, th);
        out.push_back(std::move(rec));
        k = last + 1;
    }
    return out;
}

namespace {

struct PairTask {
    const Rollout* rollout;
    std::size_t i;
    std::size_t j;
};

std::vector<PairTask> pair_tasks(const RolloutSet& rollouts) {
    std::vector<PairTask> tasks;
    for (const Rollout* r : rollouts.all()) {
        const auto n = r->trajectories.size();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) tasks.push_back({r, i, j});
    }
    return tasks;
}

TechnicalSafetyRecord merge(int revision, std::vector<std::vector<ConflictRecord>>&& slots) {
    TechnicalSafetyRecord tsr;
    tsr.revision = revision;
    for (auto& s : slots)
        for (auto& r : s) tsr.records.push_back(std::move(r));
    std::sort(tsr.records.begin(), tsr.records.end(), record_less);
    return tsr;
}

}  // namespace

TechnicalSafetyRecord detect(const RolloutSet& rollouts, const SeparationMinima& minima, const ClassThresholds& th) {
    const auto tasks = pair_tasks(rollouts);
    std::vector<std::vector<ConflictRecord>> slots(tasks.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(tasks.size()); ++k) {
        const auto& task = tasks[static_cast<std::size_t>(k)];
        slots[static_cast<std::size_t>(k)] = detect_pair(task.rollout->trajectories[task.i],
                                                         task.rollout->trajectories[task.j], task.rollout->source,
                                                         minima, th);
    }
    return merge(rollouts.revision, std::move(slots));
}

TechnicalSafetyRecord detect_serial(const RolloutSet& rollouts, const SeparationMinima& minima,
                                    const ClassThresholds& th) {
    const auto tasks = pair_tasks(rollouts);
    std::vector<std::vector<ConflictRecord>> slots;
    slots.reserve(tasks.size());
    for (const auto& task : tasks) {
        slots.push_back(detect_pair(task.rollout->trajectories[task.i], task.rollout->trajectories[task.j],
                                    task.rollout->source, minima, th));
    }
    return merge(rollouts.revision, std::move(slots));
}

const ConflictRecord& earliest_conflict(const TechnicalSafetyRecord& tsr) {
    if (tsr.records.empty()) throw EmptyRecordError("earliest_conflict: safety record is empty");
    return *std::min_element(tsr.records.begin(), tsr.records.end(), record_less);
}

}  // namespace skylane
