#include "stepscore/codec/smf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <tuple>

namespace stepscore::codec {

namespace {

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::string context)
      : data_(data), context_(std::move(context)) {}

  bool done() const { return pos_ >= data_.size(); }
  std::size_t pos() const { return pos_; }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint8_t peek() {
    need(1);
    return data_[pos_];
  }
  std::uint32_t be(int n) {
    need(static_cast<std::size_t>(n));
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }
  std::uint32_t vlq() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return v;
    }
    throw CodecError(context_ + ": variable-length quantity longer than 4 bytes");
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw CodecError(context_ + ": unexpected end of data at byte " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string context_;
};

enum class Kind : std::uint8_t { NoteOff, Program, NoteOn, Tempo };

struct RawEvent {
  std::int64_t tick;
  int chunk;
  int seq;
  Kind kind;
  int channel;
  int a;
  int b;
};

void parse_track(std::span<const std::uint8_t> body, int chunk, std::vector<RawEvent>& events,
                 std::int64_t& end_tick) {
  Reader r(body, "MTrk chunk " + std::to_string(chunk));
  std::int64_t tick = 0;
  int status = 0;
  int seq = 0;
  while (!r.done()) {
    tick += r.vlq();
    end_tick = std::max(end_tick, tick);
    int byte = r.peek();
    if (byte & 0x80) {
      r.u8();
      if (byte < 0xF0) status = byte;
    } else if (status == 0) {
      throw CodecError("MTrk chunk " + std::to_string(chunk) + ": running status with no prior status");
    } else {
      byte = status;
    }

    if (byte == 0xFF) {
      const int type = r.u8();
      const auto len = r.vlq();
      auto payload = r.take(len);
      if (type == 0x51 && len == 3) {
        const int us = (payload[0] << 16) | (payload[1] << 8) | payload[2];
        events.push_back({tick, chunk, seq++, Kind::Tempo, 0, us, 0});
      } else if (type == 0x2F) {
        break;
      }
      continue;
    }
    if (byte == 0xF0 || byte == 0xF7) {
      r.take(r.vlq());
      continue;
    }
    if (byte >= 0xF0) {
      throw CodecError("MTrk chunk " + std::to_string(chunk) + ": unsupported system message");
    }

    const int kind = byte & 0xF0;
    const int channel = byte & 0x0F;
    const int a = r.u8() & 0x7F;
    const int b = (kind == 0xC0 || kind == 0xD0) ? 0 : (r.u8() & 0x7F);
    if (kind == 0x90 && b > 0) {
      events.push_back({tick, chunk, seq++, Kind::NoteOn, channel, a, b});
    } else if (kind == 0x80 || kind == 0x90) {
      events.push_back({tick, chunk, seq++, Kind::NoteOff, channel, a, 0});
    } else if (kind == 0xC0) {
      events.push_back({tick, chunk, seq++, Kind::Program, channel, a, 0});
    }
  }
}

struct Pending {
  std::int64_t onset;
  int velocity;
  int instrument;
  int track;
};

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = v & 0x7F;
  while ((v >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

}  // namespace

double SmfData::seconds_at(std::int64_t tick) const {
  double seconds = 0.0;
  std::int64_t last_tick = 0;
  int us = 500000;
  for (const auto& t : tempo) {
    if (t.tick >= tick) break;
    seconds += static_cast<double>(t.tick - last_tick) * us / (1e6 * ticks_per_quarter);
    last_tick = t.tick;
    us = t.us_per_quarter;
  }
  return seconds + static_cast<double>(tick - last_tick) * us / (1e6 * ticks_per_quarter);
}

double SmfData::initial_bpm() const {
  if (tempo.empty() || tempo.front().tick != 0) return kDefaultBpm;
  return 60e6 / tempo.front().us_per_quarter;
}

SmfData parse_smf(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "SMF");
  if (bytes.size() < 14) throw CodecError("SMF: file shorter than a header chunk");
  const auto id = r.take(4);
  if (!std::equal(id.begin(), id.end(), "MThd")) throw CodecError("SMF: missing MThd header chunk");
  const auto header_len = r.be(4);
  if (header_len < 6) throw CodecError("SMF: malformed MThd length " + std::to_string(header_len));
  SmfData out;
  out.format = static_cast<int>(r.be(2));
  const auto ntracks = r.be(2);
  const auto division = r.be(2);
  r.take(header_len - 6);
  if (out.format > 2) throw CodecError("SMF: unknown format " + std::to_string(out.format));
  if (out.format == 2) throw CodecError("SMF: format 2 (sequential tracks) is not supported");
  if (division & 0x8000) throw CodecError("SMF: SMPTE timing is not supported");
  if (division == 0) throw CodecError("SMF: zero ticks per quarter");
  out.ticks_per_quarter = static_cast<int>(division);

  std::vector<RawEvent> events;
  int chunk = 0;
  while (!r.done()) {
    const auto cid = r.take(4);
    const auto len = r.be(4);
    const auto body = r.take(len);
    if (!std::equal(cid.begin(), cid.end(), "MTrk")) continue;
    parse_track(body, chunk++, events, out.end_tick);
  }
  if (static_cast<std::uint32_t>(chunk) != ntracks && chunk == 0) {
    throw CodecError("SMF: header announces tracks but no MTrk chunk found");
  }

  std::stable_sort(events.begin(), events.end(), [](const RawEvent& x, const RawEvent& y) {
    return std::tie(x.tick, x.chunk, x.seq) < std::tie(y.tick, y.chunk, y.seq);
  });

  std::array<int, 16> program{};
  std::map<std::tuple<int, int, int>, std::deque<Pending>> sounding;
  for (const auto& e : events) {
    switch (e.kind) {
      case Kind::Tempo:
        if (!out.tempo.empty() && out.tempo.back().tick == e.tick) {
          out.tempo.back().us_per_quarter = e.a;
        } else {
          out.tempo.push_back({e.tick, e.a});
        }
        break;
      case Kind::Program:
        program[e.channel] = e.a;
        break;
      case Kind::NoteOn: {
        const int instrument = e.channel == kDrumChannel ? kDrumInstrument : program[e.channel];
        const int track = out.format == 0 ? e.channel : e.chunk;
        sounding[{e.chunk, e.channel, e.a}].push_back({e.tick, e.b, instrument, track});
        break;
      }
      case Kind::NoteOff: {
        auto it = sounding.find({e.chunk, e.channel, e.a});
        if (it == sounding.end() || it->second.empty()) break;
        const Pending p = it->second.front();
        it->second.pop_front();
        out.notes.push_back({p.track, p.onset, e.a, std::max<std::int64_t>(1, e.tick - p.onset),
                             p.instrument, p.velocity});
        break;
      }
    }
  }
  for (auto& [key, queue] : sounding) {
    for (const auto& p : queue) {
      ++out.dangling_notes;
      out.notes.push_back({p.track, p.onset, std::get<2>(key),
                           std::max<std::int64_t>(1, out.end_tick - p.onset), p.instrument,
                           p.velocity});
    }
  }
  sort_canonical(out.notes);
  return out;
}

std::vector<std::uint8_t> write_smf(std::span<const Note> notes, double bpm,
                                    std::vector<std::string>* warnings) {
  for (const auto& n : notes) validate(n);
  if (!(bpm > 0.0)) throw CodecError("write_smf: tempo must be positive");

  int ntracks = 1;
  std::map<std::pair<int, int>, int> channel_of;
  for (const auto& n : notes) {
    ntracks = std::max(ntracks, n.track + 1);
    if (!n.is_drum()) channel_of.emplace(std::make_pair(n.track, n.instrument), 0);
  }
  static constexpr std::array<int, 15> kMelodic{0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 13, 14, 15};
  int next = 0;
  for (auto& [key, ch] : channel_of) ch = kMelodic[next++ % kMelodic.size()];
  if (channel_of.size() > kMelodic.size() && warnings != nullptr) {
    warnings->push_back("write_smf: " + std::to_string(channel_of.size()) +
                        " track/instrument pairs multiplexed onto 15 melodic channels");
  }

  // rank orders same-tick events inside a chunk: offs, then program changes, then ons
  struct Out {
    std::int64_t tick;
    int chunk;
    int rank;
    int channel;
    int a;
    int b;
    int instrument;
  };
  std::vector<Out> evs;
  for (const auto& n : notes) {
    const int ch = n.is_drum() ? kDrumChannel : channel_of.at({n.track, n.instrument});
    evs.push_back({n.onset, n.track, 2, ch, n.pitch, n.velocity, n.instrument});
    evs.push_back({n.onset + n.duration, n.track, 0, ch, n.pitch, 64, n.instrument});
  }
  std::sort(evs.begin(), evs.end(), [](const Out& x, const Out& y) {
    return std::tie(x.tick, x.chunk, x.rank, x.channel, x.a, x.b, x.instrument) <
           std::tie(y.tick, y.chunk, y.rank, y.channel, y.a, y.b, y.instrument);
  });
  // program changes are inserted in playback order so shared channels stay correct
  std::array<int, 16> current;
  current.fill(-1);
  std::vector<Out> final_events;
  final_events.reserve(evs.size() + channel_of.size());
  for (const auto& e : evs) {
    if (e.rank == 2 && e.channel != kDrumChannel && current[e.channel] != e.instrument) {
      current[e.channel] = e.instrument;
      final_events.push_back({e.tick, e.chunk, 1, e.channel, e.instrument, 0, e.instrument});
    }
    final_events.push_back(e);
  }

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  put_be(out, 6, 4);
  put_be(out, 1, 2);
  put_be(out, static_cast<std::uint32_t>(ntracks), 2);
  put_be(out, kWriteTicksPerQuarter, 2);

  const auto us = static_cast<std::uint32_t>(std::lround(60e6 / bpm));
  for (int t = 0; t < ntracks; ++t) {
    std::vector<std::uint8_t> body;
    std::int64_t last = 0;
    if (t == 0) {
      put_vlq(body, 0);
      body.insert(body.end(), {0xFF, 0x51, 0x03});
      put_be(body, us, 3);
    }
    for (const auto& e : final_events) {
      if (e.chunk != t) continue;
      put_vlq(body, static_cast<std::uint32_t>(e.tick - last));
      last = e.tick;
      switch (e.rank) {
        case 0:
          body.push_back(static_cast<std::uint8_t>(0x80 | e.channel));
          body.push_back(static_cast<std::uint8_t>(e.a));
          body.push_back(static_cast<std::uint8_t>(e.b));
          break;
        case 1:
          body.push_back(static_cast<std::uint8_t>(0xC0 | e.channel));
          body.push_back(static_cast<std::uint8_t>(e.a));
          break;
        default:
          body.push_back(static_cast<std::uint8_t>(0x90 | e.channel));
          body.push_back(static_cast<std::uint8_t>(e.a));
          body.push_back(static_cast<std::uint8_t>(e.b));
          break;
      }
    }
    put_vlq(body, 0);
    body.insert(body.end(), {0xFF, 0x2F, 0x00});
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    put_be(out, static_cast<std::uint32_t>(body.size()), 4);
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CodecError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CodecError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

SmfData read_smf_file(const std::filesystem::path& path) { return parse_smf(read_binary(path)); }

void write_smf_file(const std::filesystem::path& path, std::span<const Note> notes, double bpm,
                    std::vector<std::string>* warnings) {
  write_binary(path, write_smf(notes, bpm, warnings));
}

}  // namespace stepscore::codec
