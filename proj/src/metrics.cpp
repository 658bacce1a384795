#include "kinflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kinflow {

double trajectory_error(const PooledTrajectory& cond, const PooledTrajectory& tracked) {
    require(cond.frames() == tracked.frames() && cond.objects() == tracked.objects(),
            "trajectory_error: track shapes must match");
    require(cond.image_width == tracked.image_width && cond.image_height == tracked.image_height,
            "trajectory_error: image dims must match");

    double sum = 0.0;
    for (Index i = 0; i < cond.frames(); ++i) {
        for (Index n = 0; n < cond.objects(); ++n) {
            const double dx = cond.x(i, n) - tracked.x(i, n);
            const double dy = cond.y(i, n) - tracked.y(i, n);
            sum += std::sqrt(dx * dx + dy * dy);
        }
    }
    return sum / static_cast<double>(cond.frames() * cond.objects());
}

AudioEnvelope audio_envelope(const Eigen::ArrayXd& samples, int sample_rate,
                             double window_seconds, double hop_seconds) {
    require(sample_rate > 0, "audio_envelope: sample rate must be positive");
    require(hop_seconds > 0.0 && window_seconds >= hop_seconds,
            "audio_envelope: need window >= hop > 0");

    const auto window = static_cast<Index>(std::lround(window_seconds * sample_rate));
    const auto hop = static_cast<Index>(std::lround(hop_seconds * sample_rate));
    require(window >= 1 && hop >= 1, "audio_envelope: window and hop must span at least a sample");
    require(samples.size() >= window, "audio_envelope: clip shorter than one window");

    const Index count = (samples.size() - window) / hop + 1;
    AudioEnvelope env;
    env.hop_seconds = static_cast<double>(hop) / sample_rate;
    env.window_seconds = static_cast<double>(window) / sample_rate;
    env.values.resize(count);
    for (Index k = 0; k < count; ++k) {
        double acc = 0.0;
        for (Index i = 0; i < window; ++i) {
            const double s = samples[k * hop + i];
            acc += s * s;
        }
        env.values[k] = std::sqrt(acc / static_cast<double>(window));
    }
    return env;
}

namespace {

std::vector<double> strict_local_maxima(const Eigen::ArrayXd& signal, double theta,
                                        double time_offset, double dt) {
    std::vector<double> times;
    for (Index i = 1; i + 1 < signal.size(); ++i) {
        if (signal[i] >= theta && signal[i] > signal[i - 1] && signal[i] > signal[i + 1]) {
            times.push_back(time_offset + static_cast<double>(i) * dt);
        }
    }
    return times;
}

}  // namespace

EventList extract_events(const KinematicTrack& kt, double theta) {
    require(theta > 0.0, "extract_events: theta must be positive");

    Eigen::ArrayXd mean_amag = kt.amag.rowwise().mean();
    EventList events;
    events.source = EventList::Source::trajectory;
    events.times = strict_local_maxima(mean_amag, theta, 0.0, kt.tau);
    return events;
}

EventList onsets(const AudioEnvelope& env, double theta) {
    require(theta > 0.0, "onsets: theta must be positive");

    EventList events;
    events.source = EventList::Source::audio;
    if (env.values.size() < 2) {
        return events;
    }
    Eigen::ArrayXd diff = env.values.tail(env.values.size() - 1) -
                          env.values.head(env.values.size() - 1);
    // diff[j] belongs to window j+1; onset time is that window's center
    events.times =
        strict_local_maxima(diff, theta, env.time_at(1), env.hop_seconds);
    return events;
}

double ete(const EventList& a, const EventList& b, double cap) {
    require(cap >= 0.0, "ete: cap must be nonnegative");

    const std::size_t na = a.times.size(), nb = b.times.size();
    if (na == 0 && nb == 0) {
        return 0.0;
    }

    std::vector<bool> used_a(na, false), used_b(nb, false);
    const std::size_t matches = std::min(na, nb);

    double matched_sum = 0.0;
    for (std::size_t m = 0; m < matches; ++m) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0, best_j = 0;
        for (std::size_t i = 0; i < na; ++i) {
            if (used_a[i]) continue;
            for (std::size_t j = 0; j < nb; ++j) {
                if (used_b[j]) continue;
                const double d = std::abs(a.times[i] - b.times[j]);
                if (d < best) {
                    best = d;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        used_a[best_i] = true;
        used_b[best_j] = true;
        matched_sum += best;
    }

    const std::size_t unmatched = std::max(na, nb) - matches;
    const double total = matched_sum + cap * static_cast<double>(unmatched);
    return total / static_cast<double>(matches + unmatched);
}

double pearson(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
    require(a.size() == b.size() && a.size() >= 2, "pearson: need two aligned samples");
    if (a.maxCoeff() == a.minCoeff() || b.maxCoeff() == b.minCoeff()) {
        return 0.0;  // constant signal: correlation undefined, reported as 0
    }
    const double ma = a.mean(), mb = b.mean();
    const Eigen::ArrayXd da = a - ma, db = b - mb;
    return (da * db).sum() / std::sqrt(da.square().sum() * db.square().sum());
}

Eigen::ArrayXd resample_to_times(const Eigen::ArrayXd& values, double tau,
                                 const Eigen::ArrayXd& times) {
    require(values.size() >= 1 && tau > 0.0, "resample_to_times: bad inputs");

    Eigen::ArrayXd out(times.size());
    const Index last = values.size() - 1;
    for (Index k = 0; k < times.size(); ++k) {
        const double pos = times[k] / tau;
        if (pos <= 0.0) {
            out[k] = values[0];
        } else if (pos >= static_cast<double>(last)) {
            out[k] = values[last];
        } else {
            const auto lo = static_cast<Index>(std::floor(pos));
            const double frac = pos - static_cast<double>(lo);
            out[k] = values[lo] * (1.0 - frac) + values[lo + 1] * frac;
        }
    }
    return out;
}

double maic(const KinematicTrack& kt, const AudioEnvelope& env) {
    require(env.values.size() >= 2, "maic: need at least 2 envelope samples");

    const double traj_duration = static_cast<double>(kt.frames()) * kt.tau;
    const double audio_duration =
        static_cast<double>(env.values.size() - 1) * env.hop_seconds + env.window_seconds;
    require(std::abs(traj_duration - audio_duration) <= env.hop_seconds + 1e-9,
            "maic: clip durations must agree within one hop");

    Eigen::ArrayXd motion = kt.vmag.rowwise().mean();
    Eigen::ArrayXd times(env.values.size());
    for (Index k = 0; k < env.values.size(); ++k) {
        times[k] = env.time_at(k);
    }
    const Eigen::ArrayXd resampled = resample_to_times(motion, kt.tau, times);
    return pearson(resampled, env.values);
}

}  // namespace kinflow
