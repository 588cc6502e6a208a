#include "stepscore/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <cstdio>
#include <map>

namespace stepscore::metrics {

namespace {

template <typename ToSeconds>
BeatTimes detect(std::span<const codec::Note> notes, int ticks_per_quarter, ToSeconds seconds) {
  if (notes.empty()) return {};
  const std::int64_t tps = codec::ticks_per_slot_for(ticks_per_quarter);
  if (tps <= 0) throw MetricError("detect_beats: resolution below 16 ticks per quarter");
  std::map<std::int64_t, int> density;
  for (const auto& n : notes) ++density[(2 * n.onset + tps) / (2 * tps)];
  const std::int64_t last = density.rbegin()->first;
  double mean = 0.0;
  for (const auto& [slot, count] : density) mean += count;
  mean /= static_cast<double>(last + 1);

  auto at = [&](std::int64_t s) {
    const auto it = density.find(s);
    return it == density.end() ? 0 : it->second;
  };
  BeatTimes beats;
  for (const auto& [slot, count] : density) {
    if (count > at(slot - 1) && count >= at(slot + 1) && count >= mean) beats.push_back(seconds(slot * tps));
  }
  return beats;
}

}  // namespace

BeatTimes detect_beats(std::span<const codec::Note> notes, const codec::SmfData& timing) {
  return detect(notes, timing.ticks_per_quarter, [&](std::int64_t tick) { return timing.seconds_at(tick); });
}

BeatTimes detect_beats(std::span<const codec::Note> notes, int ticks_per_quarter, double bpm) {
  const double seconds_per_tick = 60.0 / (bpm * ticks_per_quarter);
  return detect(notes, ticks_per_quarter,
                [&](std::int64_t tick) { return static_cast<double>(tick) * seconds_per_tick; });
}

double bcs(const BeatTimes& gen, const BeatTimes& ref) {
  if (ref.empty()) throw MetricError("bcs: reference has no beats");
  return static_cast<double>(gen.size()) / static_cast<double>(ref.size());
}

std::size_t aligned_beats(const BeatTimes& gen, const BeatTimes& ref, double tol) {
  if (tol <= 0) throw MetricError("bhs: tolerance must be positive");
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t matched = 0;
  while (i < gen.size() && j < ref.size()) {
    if (std::abs(gen[i] - ref[j]) <= tol) {
      ++matched;
      ++i;
      ++j;
    } else if (gen[i] < ref[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return matched;
}

double bhs(const BeatTimes& gen, const BeatTimes& ref, double tol) {
  if (ref.empty()) throw MetricError("bhs: reference has no beats");
  const double ratio = static_cast<double>(aligned_beats(gen, ref, tol)) / static_cast<double>(ref.size());
  return std::clamp(ratio, 0.0, 1.0);
}

double bas(double bcs_value, double bhs_value) {
  const double coverage = bcs_value <= 1.0 ? std::exp(bcs_value - 1.0) : std::exp(1.0 - bcs_value);
  return 0.5 * (coverage + bhs_value);
}

double phe(const std::vector<std::vector<int>>& bars) {
  double total = 0.0;
  int counted = 0;
  for (const auto& bar : bars) {
    if (bar.empty()) continue;
    std::array<double, 12> h{};
    for (int p : bar) h[static_cast<std::size_t>(((p % 12) + 12) % 12)] += 1.0;
    double entropy = 0.0;
    for (double c : h) {
      if (c == 0.0) continue;
      const double q = c / static_cast<double>(bar.size());
      entropy -= q * std::log2(q);
    }
    total += entropy;
    ++counted;
  }
  if (counted == 0) throw MetricError("phe: every bar is empty");
  return total / counted;
}

double gs(const std::vector<std::vector<int>>& bars) {
  std::vector<std::bitset<codec::kSlotsPerMeasure>> grooves;
  for (const auto& bar : bars) {
    if (bar.empty()) continue;
    std::bitset<codec::kSlotsPerMeasure> g;
    for (int s : bar) {
      if (s < 0 || s >= codec::kSlotsPerMeasure) throw MetricError("gs: slot " + std::to_string(s) + " out of range");
      g.set(static_cast<std::size_t>(s));
    }
    grooves.push_back(g);
  }
  if (grooves.size() < 2) throw MetricError("gs: need at least two non-empty bars");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < grooves.size(); ++i) {
    for (std::size_t j = i + 1; j < grooves.size(); ++j) {
      total += 1.0 - static_cast<double>((grooves[i] ^ grooves[j]).count()) / codec::kSlotsPerMeasure;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<std::vector<int>> bar_pitches(const codec::QuantizedClip& clip) {
  std::vector<std::vector<int>> out;
  for (const auto& m : clip.measures) {
    std::vector<int> bar;
    for (const auto& e : m.events)
      for (const auto& n : e.notes)
        if (n.instrument != codec::kDrumInstrument) bar.push_back(n.pitch);
    out.push_back(std::move(bar));
  }
  return out;
}

std::vector<std::vector<int>> bar_onsets(const codec::QuantizedClip& clip) {
  std::vector<std::vector<int>> out;
  for (const auto& m : clip.measures) {
    std::vector<int> bar;
    for (const auto& e : m.events)
      if (!e.notes.empty()) bar.push_back(e.slot);
    out.push_back(std::move(bar));
  }
  return out;
}

MetricReport evaluate_pair(const std::string& clip_id, const codec::SmfData& generated, const codec::SmfData& reference,
                           const std::vector<int>* dance_beats, double fps, double tol) {
  try {
    MetricReport r;
    r.clip_id = clip_id;
    BeatTimes ref;
    if (dance_beats) {
      for (int f : *dance_beats) ref.push_back(f / fps);
      std::sort(ref.begin(), ref.end());
    } else {
      ref = detect_beats(reference.notes, reference);
    }
    const BeatTimes gen = detect_beats(generated.notes, generated);
    r.bg = static_cast<double>(gen.size());
    r.bt = static_cast<double>(ref.size());
    r.ba = static_cast<double>(aligned_beats(gen, ref, tol));
    r.bcs = bcs(gen, ref);
    r.bhs = bhs(gen, ref, tol);
    r.bas = bas(r.bcs, r.bhs);
    const auto clip = codec::quantize(generated.notes, codec::ticks_per_slot_for(generated.ticks_per_quarter));
    const auto pitches = bar_pitches(clip);
    if (std::any_of(pitches.begin(), pitches.end(), [](const auto& b) { return !b.empty(); })) r.phe = phe(pitches);
    const auto onsets = bar_onsets(clip);
    if (std::count_if(onsets.begin(), onsets.end(), [](const auto& b) { return !b.empty(); }) >= 2) r.gs = gs(onsets);
    return r;
  } catch (const std::exception& e) {
    throw MetricError("clip " + clip_id + ": " + e.what());
  }
}

MetricReport mean_report(std::span<const MetricReport> reports) {
  MetricReport m;
  m.clip_id = "mean";
  if (reports.empty()) return m;
  double phe_sum = 0;
  double gs_sum = 0;
  int phe_n = 0;
  int gs_n = 0;
  for (const auto& r : reports) {
    m.bg += r.bg;
    m.bt += r.bt;
    m.ba += r.ba;
    m.bcs += r.bcs;
    m.bhs += r.bhs;
    m.bas += r.bas;
    if (r.phe) {
      phe_sum += *r.phe;
      ++phe_n;
    }
    if (r.gs) {
      gs_sum += *r.gs;
      ++gs_n;
    }
  }
  const double n = static_cast<double>(reports.size());
  m.bg /= n;
  m.bt /= n;
  m.ba /= n;
  m.bcs /= n;
  m.bhs /= n;
  m.bas /= n;
  if (phe_n > 0) m.phe = phe_sum / phe_n;
  if (gs_n > 0) m.gs = gs_sum / gs_n;
  return m;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : std::string(); }

std::string count(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, v == std::floor(v) ? "%.0f" : "%.6f", v);
  return buf;
}

void row(std::ostream& out, const MetricReport& r) {
  out << r.clip_id << ',' << count(r.bg) << ',' << count(r.bt) << ',' << count(r.ba) << ',' << fixed(r.bcs) << ',' << fixed(r.bhs) << ','
      << fixed(r.bas) << ',' << fixed(r.phe) << ',' << fixed(r.gs) << '\n';
}

}  // namespace

void write_csv(std::ostream& out, std::span<const MetricReport> reports) {
  out << "clip_id,Bg,Bt,Ba,BCS,BHS,BAS,PHE,GS\n";
  for (const auto& r : reports) row(out, r);
  row(out, mean_report(reports));
}

}  // namespace stepscore::metrics
