#include "traitfuse/dataset.hpp"

#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "traitfuse/errors.hpp"
#include "traitfuse/mprt.hpp"

namespace traitfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw DataError(what + " must be an [x, y, z] array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

KeypointFrame frame_from_json(const json& j) {
  KeypointFrame f;
  f.frame_index = j.at("frame").get<std::int64_t>();
  f.t = j.at("t").get<double>();
  const auto& h = j.at("head");
  f.head.roll = h.at("roll").get<double>();
  f.head.pitch = h.at("pitch").get<double>();
  f.head.yaw = h.at("yaw").get<double>();
  f.head.translation = {h.at("tx").get<double>(), h.at("ty").get<double>(), h.at("tz").get<double>()};
  for (const auto& [name, v] : j.at("joints").items()) f.joints[name] = vec3_from(v, "joint '" + name + "'");
  if (j.contains("aus")) {
    for (const auto& [name, v] : j.at("aus").items()) f.aus[name] = v.get<double>();
  }
  return f;
}

json frame_to_json(const KeypointFrame& f) {
  json joints = json::object();
  for (const auto& [name, p] : f.joints) joints[name] = vec3_json(p);
  json aus = json::object();
  for (const auto& [name, v] : f.aus) aus[name] = v;
  const auto& h = f.head;
  return json{{"frame", f.frame_index},
              {"t", f.t},
              {"head",
               {{"roll", h.roll},
                {"pitch", h.pitch},
                {"yaw", h.yaw},
                {"tx", h.translation.x},
                {"ty", h.translation.y},
                {"tz", h.translation.z}}},
              {"joints", joints},
              {"aus", aus}};
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != N) throw DataError(what + " must hold " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

KeypointStream parse_keypoints(std::istream& in) {
  KeypointStream stream;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      stream.push_back(frame_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("keypoints line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("keypoints line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_stream(stream);
  return stream;
}

KeypointStream load_keypoints(const fs::path& path) {
  auto in = open_in(path);
  try {
    return parse_keypoints(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_keypoints(std::ostream& out, const KeypointStream& stream) {
  for (const auto& f : stream) out << frame_to_json(f).dump() << '\n';
}

void save_keypoints(const fs::path& path, const KeypointStream& stream) {
  auto out = open_out(path);
  write_keypoints(out, stream);
  if (!out) throw IoError("cannot write " + path.string());
}

void write_behaviour_csv(std::ostream& out, const KeypointStream& stream, const RuleTable& rules) {
  validate_stream(stream);
  out << "frame,t";
  for (auto b : all_behaviours()) out << ',' << behaviour_name(b);
  out << '\n';
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto v = encode_frame(stream, i, rules);
    out << stream[i].frame_index << ',' << format_double(stream[i].t);
    for (double c : v.values) out << ',' << format_double(c);
    out << '\n';
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  auto in = open_in(path);
  DatasetManifest m;
  std::size_t index = 0;
  try {
    const json j = json::parse(in);
    for (const auto& e : j.at("videos")) {
      ManifestEntry v;
      v.id = e.at("id").get<std::string>();
      v.fps = e.at("fps").get<double>();
      v.frame_count = e.at("frame_count").get<std::size_t>();
      v.keypoints = e.value("keypoints", std::string());
      for (const auto& c : e.at("chunks")) {
        ManifestChunk ch;
        ch.face = c.at("face").get<std::string>();
        ch.context = c.at("context").get<std::string>();
        ch.audio = c.at("audio").get<std::string>();
        if (c.contains("behaviour")) {
          BehaviourVector b;
          b.values = fixed_array<kBehaviourCount>(c.at("behaviour"), "behaviour");
          ch.behaviour = b;
        }
        v.chunks.push_back(std::move(ch));
      }
      v.transcript = e.at("transcript").get<std::string>();
      const auto meta = fixed_array<kMetadataDim>(e.at("metadata"), "metadata");
      v.metadata.ethnicity = {meta[0], meta[1], meta[2]};
      v.metadata.gender = {meta[3], meta[4]};
      v.metadata.age = meta[5];
      v.metadata.attractiveness = meta[6];
      v.targets.values = fixed_array<kTraitCount>(e.at("targets"), "targets");
      v.split = split_from_name(e.at("split").get<std::string>());
      m.videos.push_back(std::move(v));
      ++index;
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": video " + std::to_string(index) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": video " + std::to_string(index) + ": " + e.what());
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json videos = json::array();
  for (const auto& v : manifest.videos) {
    json chunks = json::array();
    for (const auto& c : v.chunks) {
      json jc{{"face", c.face}, {"context", c.context}, {"audio", c.audio}};
      if (c.behaviour) jc["behaviour"] = c.behaviour->values;
      chunks.push_back(std::move(jc));
    }
    json e{{"id", v.id},
           {"fps", v.fps},
           {"frame_count", v.frame_count},
           {"chunks", chunks},
           {"transcript", v.transcript},
           {"metadata", v.metadata.values()},
           {"targets", v.targets.values},
           {"split", std::string(split_name(v.split))}};
    if (!v.keypoints.empty()) e["keypoints"] = v.keypoints;
    videos.push_back(std::move(e));
  }
  auto out = open_out(path);
  out << json{{"videos", videos}}.dump(1) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

Dataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();
  Dataset data;
  for (const auto& e : manifest.videos) {
    const auto ranges = chunk_video(e.frame_count, e.fps);
    if (ranges.size() != e.chunks.size()) {
      throw DataError("video '" + e.id + "': " + std::to_string(e.chunks.size()) + " chunks listed, chunking " +
                      std::to_string(e.frame_count) + " frames at " + format_double(e.fps) + " fps gives " +
                      std::to_string(ranges.size()));
    }
    std::optional<KeypointStream> stream;
    VideoSample s;
    s.id = e.id;
    s.metadata = e.metadata;
    s.targets = e.targets;
    s.split = e.split;
    s.transcript = read_mprt(root / e.transcript);
    for (std::size_t k = 0; k < e.chunks.size(); ++k) {
      const auto& c = e.chunks[k];
      ChunkFeatures ch{read_mprt(root / c.face), read_mprt(root / c.context), read_mprt(root / c.audio), {}};
      if (c.behaviour) {
        ch.behaviour = *c.behaviour;
      } else {
        if (e.keypoints.empty()) {
          throw DataError("video '" + e.id + "' chunk " + std::to_string(k) + ": no behaviour vector or keypoints");
        }
        if (!stream) stream = load_keypoints(root / e.keypoints);
        ch.behaviour = encode_chunk(*stream, ranges[k]);
      }
      s.chunks.push_back(std::move(ch));
    }
    data.videos.push_back(std::move(s));
  }
  return data;
}

}  // namespace traitfuse
