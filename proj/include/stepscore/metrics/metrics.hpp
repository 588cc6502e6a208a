#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepscore/codec/note.hpp"
#include "stepscore/codec/quantize.hpp"
#include "stepscore/codec/smf.hpp"

namespace stepscore::metrics {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sorted beat times in seconds.
using BeatTimes = std::vector<double>;

/// Symbolic beat tracking. Onsets are counted per slot (a sixteenth of a
/// quarter note); a slot is a beat when its count rises above the previous
/// slot, is not exceeded by the next one, and is at least the mean count over
/// the clip. Beat times are the slot times under the file's tempo map.
BeatTimes detect_beats(std::span<const codec::Note> notes, const codec::SmfData& timing);
/// Constant-tempo form.
BeatTimes detect_beats(std::span<const codec::Note> notes, int ticks_per_quarter, double bpm);

/// |gen| / |ref|, unclamped.
double bcs(const BeatTimes& gen, const BeatTimes& ref);
/// Number of one-to-one matches with |g − r| ≤ tol (greedy in time order,
/// which is maximal for equal windows).
std::size_t aligned_beats(const BeatTimes& gen, const BeatTimes& ref, double tol);
/// aligned / |ref|, clamped to [0, 1].
double bhs(const BeatTimes& gen, const BeatTimes& ref, double tol = 0.1);
/// 0.5 · (e^(−|bcs − 1|) + bhs).
double bas(double bcs, double bhs);

/// Mean over non-empty bars of the entropy (bits) of the bar's pitch-class
/// histogram. Each bar is a list of MIDI pitches.
double phe(const std::vector<std::vector<int>>& bars);
/// Mean over all unordered pairs of non-empty bars of 1 − |g_i ⊕ g_j| / 64,
/// where g marks the slots (0–63) holding an onset. Each bar lists its slots.
double gs(const std::vector<std::vector<int>>& bars);

/// Pitches per bar; drums are left out because they carry no pitch class.
std::vector<std::vector<int>> bar_pitches(const codec::QuantizedClip& clip);
/// Onset slots per bar, all instruments.
std::vector<std::vector<int>> bar_onsets(const codec::QuantizedClip& clip);

struct MetricReport {
  std::string clip_id;
  // beat counts: generated, reference, aligned (fractional only in a mean)
  double bg = 0.0;
  double bt = 0.0;
  double ba = 0.0;
  double bcs = 0.0;
  double bhs = 0.0;
  double bas = 0.0;
  std::optional<double> phe;  // undefined without pitched notes
  std::optional<double> gs;   // undefined with fewer than two non-empty bars
};

/// Scores generated music against reference beats. The reference beats are
/// the dance annotation (frames at `fps`) when given, otherwise the beats
/// detected in the reference file. PHE and GS describe the generated music.
MetricReport evaluate_pair(const std::string& clip_id, const codec::SmfData& generated, const codec::SmfData& reference,
                           const std::vector<int>* dance_beats = nullptr, double fps = 20.0, double tol = 0.1);

/// Column means; PHE and GS average over the clips where they are defined.
MetricReport mean_report(std::span<const MetricReport> reports);

/// Header, one row per report, then a "mean" row.
void write_csv(std::ostream& out, std::span<const MetricReport> reports);

}  // namespace stepscore::metrics
