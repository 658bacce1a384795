#pragma once

#include "kinflow/kinematics.hpp"
#include "kinflow/trajectory.hpp"

#include <vector>

namespace kinflow {

// Mean L2 pixel distance between conditioning and observed tracks, averaged
// over every (frame, object) pair.
double trajectory_error(const PooledTrajectory& cond, const PooledTrajectory& tracked);

// Short-time RMS energy. Window k covers samples [k*H, k*H + W); its
// timestamp is the window center.
struct AudioEnvelope {
    Eigen::ArrayXd values;
    double hop_seconds = 0.0;
    double window_seconds = 0.0;

    double time_at(Index k) const {
        return static_cast<double>(k) * hop_seconds + 0.5 * window_seconds;
    }
};

AudioEnvelope audio_envelope(const Eigen::ArrayXd& samples, int sample_rate,
                             double window_seconds = 0.02, double hop_seconds = 0.01);

struct EventList {
    enum class Source { trajectory, audio };
    std::vector<double> times;  // strictly increasing, seconds
    Source source = Source::trajectory;
};

// Trajectory events: frames where the object-mean acceleration magnitude is
// a strict local maximum and at least theta. Frame i sits at time i*tau.
EventList extract_events(const KinematicTrack& kt, double theta);

// Audio onsets: indices where the positive first difference of the envelope
// is a strict local maximum and at least theta.
EventList onsets(const AudioEnvelope& env, double theta);

// Greedy matching: repeatedly pair the globally closest remaining events
// (symmetric in the two lists). Mean of matched |dt| with every unmatched
// event contributing `cap`; two empty lists give 0.
double ete(const EventList& a, const EventList& b, double cap = 0.5);

// Pearson correlation between the object-mean velocity magnitude (linearly
// resampled to envelope timestamps) and the envelope. Either signal being
// constant yields 0 by convention. Clip durations must agree within one hop.
double maic(const KinematicTrack& kt, const AudioEnvelope& env);

double pearson(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

// Piecewise-linear resampling of per-frame values (frame i at time i*tau)
// onto arbitrary timestamps, clamped at both ends.
Eigen::ArrayXd resample_to_times(const Eigen::ArrayXd& values, double tau,
                                 const Eigen::ArrayXd& times);

}  // namespace kinflow
