#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsrnet/numerics.hpp"

namespace tsrnet {

enum class Stream { Rgb = 0, Flow = 1 };
inline constexpr std::array<Stream, 2> kStreams{Stream::Rgb, Stream::Flow};

inline std::string stream_name(Stream s) { return s == Stream::Rgb ? "rgb" : "flow"; }

inline Stream parse_stream(const std::string& s) {
  if (s == "rgb" || s == "RGB") return Stream::Rgb;
  if (s == "flow" || s == "FLOW") return Stream::Flow;
  fail(ErrorKind::Format, "unknown stream tag '" + s + "'");
}

/// Per-frame features of one video stream. Row i is frame i (frame-major), so the
/// matrix is n x d in memory.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) fail(ErrorKind::Shape, "feature matrix needs d >= 1 and n >= 1");
  }
  FeatureMatrix(std::size_t frames, std::size_t dim, std::vector<double> data)
      : FeatureMatrix(Matrix(frames, dim, std::move(data))) {}

  std::size_t frames() const noexcept { return values_.rows(); }
  std::size_t dim() const noexcept { return values_.cols(); }
  std::span<const double> frame(std::size_t i) const { return values_.row(i); }
  const Matrix& values() const noexcept { return values_; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  Matrix values_;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace detail

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

// Layout: "TSRF" | u32 version | u32 d | u32 n | n*d float32, all little-endian.
inline std::vector<std::uint8_t> encode_features(const FeatureMatrix& m) {
  std::vector<std::uint8_t> out{'T', 'S', 'R', 'F'};
  out.reserve(kFeatureHeaderBytes + 4 * m.frames() * m.dim());
  detail::put_u32(out, kFeatureFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(m.dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.frames()));
  for (std::size_t i = 0; i < m.frames(); ++i) {
    const auto row = m.frame(i);
    for (std::size_t j = 0; j < m.dim(); ++j) {
      const float f = static_cast<float>(row[j]);
      if (!std::isfinite(row[j]) || !std::isfinite(f))
        fail(ErrorKind::Encoding,
             "non-finite feature value at frame " + std::to_string(i) + ", column " + std::to_string(j));
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      detail::put_u32(out, bits);
    }
  }
  return out;
}

inline FeatureMatrix decode_features(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFeatureHeaderBytes) fail(ErrorKind::Truncation, "feature buffer shorter than header");
  if (std::memcmp(bytes.data(), "TSRF", 4) != 0) fail(ErrorKind::Format, "bad feature magic");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kFeatureFormatVersion) fail(ErrorKind::Version, "unsupported feature version " + std::to_string(version));
  const std::uint64_t d = detail::get_u32(bytes, 8);
  const std::uint64_t n = detail::get_u32(bytes, 12);
  if (d == 0 || n == 0) fail(ErrorKind::Format, "feature header declares an empty matrix");
  if (bytes.size() != kFeatureHeaderBytes + 4 * n * d)
    fail(ErrorKind::Truncation, "feature payload length " + std::to_string(bytes.size() - kFeatureHeaderBytes) +
                                    " does not match header d=" + std::to_string(d) + " n=" + std::to_string(n));
  std::vector<double> data(n * d);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const std::uint32_t bits = detail::get_u32(bytes, kFeatureHeaderBytes + 4 * k);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    if (!std::isfinite(f)) fail(ErrorKind::Format, "non-finite value in feature payload");
    data[k] = f;
  }
  return FeatureMatrix(n, d, std::move(data));
}

/// Rounds every entry to the nearest float so the in-memory matrix equals what a
/// disk round trip would produce.
inline FeatureMatrix quantize_to_float(const FeatureMatrix& m) {
  auto data = m.values().data();
  for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  return FeatureMatrix(m.frames(), m.dim(), std::move(data));
}

struct Segment {
  int label = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class Split { Source, Train, Test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::Source: return "source";
    case Split::Train: return "train";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "source") return Split::Source;
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  fail(ErrorKind::Format, "unknown split '" + s + "'");
}

struct VideoRecord {
  std::string id;
  Split split = Split::Train;
  bool trimmed = false;
  std::size_t frames = 0;
  double fps = 30.0;
  std::vector<int> labels;
  std::vector<Segment> segments;
  std::array<std::string, 2> feature_paths;  // indexed by Stream

  double duration() const { return static_cast<double>(frames) / fps; }
  const std::string& feature_path(Stream s) const { return feature_paths[static_cast<int>(s)]; }
};

struct Manifest {
  std::uint32_t version = 1;
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::array<std::size_t, 2> dims{0, 0};
  std::vector<VideoRecord> videos;
};

inline void validate_record(const VideoRecord& v, int num_classes) {
  if (v.id.empty()) fail(ErrorKind::Format, "video record without id");
  if (v.frames < 1) fail(ErrorKind::Format, v.id + ": frame count must be >= 1");
  if (!(v.fps > 0.0) || !std::isfinite(v.fps)) fail(ErrorKind::Format, v.id + ": fps must be positive");
  for (int c : v.labels)
    if (c < 0 || c >= num_classes) fail(ErrorKind::Format, v.id + ": label out of range");
  const double dur = v.duration();
  for (const auto& s : v.segments) {
    if (s.label < 0 || s.label >= num_classes) fail(ErrorKind::Format, v.id + ": segment label out of range");
    if (!(0.0 <= s.t_start && s.t_start < s.t_end && s.t_end <= dur))
      fail(ErrorKind::Format, v.id + ": segment outside [0, n/fps] or empty");
  }
  if (v.trimmed && v.labels.size() != 1) fail(ErrorKind::Format, v.id + ": trimmed video must carry exactly one label");
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  using nlohmann::json;
  json videos = json::array();
  for (const auto& v : m.videos) {
    json segs = json::array();
    for (const auto& s : v.segments) segs.push_back({{"class", s.label}, {"t_start", s.t_start}, {"t_end", s.t_end}});
    videos.push_back({{"id", v.id},
                      {"split", split_name(v.split)},
                      {"trimmed", v.trimmed},
                      {"frames", v.frames},
                      {"fps", v.fps},
                      {"labels", v.labels},
                      {"segments", segs},
                      {"features", {{"rgb", v.feature_paths[0]}, {"flow", v.feature_paths[1]}}}});
  }
  return {{"version", m.version},
          {"num_classes", m.num_classes},
          {"class_names", m.class_names},
          {"feature_dims", {{"rgb", m.dims[0]}, {"flow", m.dims[1]}}},
          {"videos", videos}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != 1) fail(ErrorKind::Version, "unsupported manifest version " + std::to_string(m.version));
    m.num_classes = j.at("num_classes").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.dims[0] = j.at("feature_dims").at("rgb").get<std::size_t>();
    m.dims[1] = j.at("feature_dims").at("flow").get<std::size_t>();
    for (const auto& jv : j.at("videos")) {
      VideoRecord v;
      v.id = jv.at("id").get<std::string>();
      v.split = parse_split(jv.at("split").get<std::string>());
      v.trimmed = jv.at("trimmed").get<bool>();
      v.frames = jv.at("frames").get<std::size_t>();
      v.fps = jv.at("fps").get<double>();
      v.labels = jv.at("labels").get<std::vector<int>>();
      for (const auto& js : jv.at("segments"))
        v.segments.push_back({js.at("class").get<int>(), js.at("t_start").get<double>(), js.at("t_end").get<double>()});
      v.feature_paths[0] = jv.at("features").at("rgb").get<std::string>();
      v.feature_paths[1] = jv.at("features").at("flow").get<std::string>();
      m.videos.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed manifest: ") + e.what());
  }
  if (m.num_classes < 2) fail(ErrorKind::Format, "manifest needs at least two classes");
  if (static_cast<int>(m.class_names.size()) != m.num_classes) fail(ErrorKind::Format, "class_names length != num_classes");
  std::set<std::string> ids;
  for (const auto& v : m.videos) {
    validate_record(v, m.num_classes);
    if (!ids.insert(v.id).second) fail(ErrorKind::Format, "duplicate video id " + v.id);
  }
  return m;
}

/// A manifest plus every feature matrix it references, loaded into memory.
struct Dataset {
  Manifest manifest;
  std::vector<std::array<FeatureMatrix, 2>> features;  // parallel to manifest.videos

  const FeatureMatrix& feature(std::size_t video, Stream s) const { return features[video][static_cast<int>(s)]; }

  std::vector<std::size_t> indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest.videos.size(); ++i)
      if (manifest.videos[i].split == split) out.push_back(i);
    return out;
  }
};

inline constexpr const char* kManifestName = "manifest.json";

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const auto text = detail::read_text(dir / kManifestName);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("manifest is not valid JSON: ") + e.what());
  }
  ds.manifest = manifest_from_json(j);
  for (const auto& v : ds.manifest.videos) {
    std::array<FeatureMatrix, 2> pair;
    for (Stream s : kStreams) {
      const auto path = dir / v.feature_path(s);
      if (!std::filesystem::exists(path)) fail(ErrorKind::Io, v.id + ": missing feature file " + path.string());
      FeatureMatrix fm = decode_features(detail::read_bytes(path));
      if (fm.frames() != v.frames || fm.dim() != ds.manifest.dims[static_cast<int>(s)])
        fail(ErrorKind::Format, v.id + ": feature header (d, n) does not match the manifest for stream " + stream_name(s));
      pair[static_cast<int>(s)] = std::move(fm);
    }
    ds.features.push_back(std::move(pair));
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ds.manifest.videos.size(); ++i)
    for (Stream s : kStreams)
      detail::write_bytes(dir / ds.manifest.videos[i].feature_path(s), encode_features(ds.feature(i, s)));
  detail::write_text(dir / kManifestName, manifest_to_json(ds.manifest).dump(2) + "\n");
}

/// Parameters of the labeled Gaussian generator used for desk-scale runs.
struct SyntheticSpec {
  int num_classes = 8;
  std::size_t dim = 16;
  std::size_t source_per_class = 50;
  std::size_t target_train = 200;
  std::size_t target_test = 100;
  std::size_t frames_min = 60;
  std::size_t frames_max = 120;
  std::size_t trimmed_frames_min = 16;
  std::size_t trimmed_frames_max = 32;
  double action_fraction_min = 0.3;
  double action_fraction_max = 0.6;
  int runs_min = 1;
  int runs_max = 3;
  double separation = 4.0;
  double noise = 1.0;
  double shift = 1.0;  // magnitude of the source-domain offset; direction drawn from the seed
  double fps = 10.0;
  std::uint64_t seed = 0;
};

inline void validate_spec(const SyntheticSpec& s) {
  if (s.num_classes < 2) fail(ErrorKind::Spec, "synthetic spec needs at least two classes");
  if (s.dim < 1) fail(ErrorKind::Spec, "synthetic spec needs dim >= 1");
  if (s.frames_min < 1 || s.frames_min > s.frames_max) fail(ErrorKind::Spec, "empty untrimmed frame-count range");
  if (s.trimmed_frames_min < 1 || s.trimmed_frames_min > s.trimmed_frames_max)
    fail(ErrorKind::Spec, "empty trimmed frame-count range");
  if (!(0.0 < s.action_fraction_min && s.action_fraction_min <= s.action_fraction_max && s.action_fraction_max < 1.0))
    fail(ErrorKind::Spec, "action fraction range must lie in (0, 1) and be nonempty");
  if (s.runs_min < 1 || s.runs_min > s.runs_max) fail(ErrorKind::Spec, "empty action-run range");
  if (!(s.separation > 0.0)) fail(ErrorKind::Spec, "class separation must be positive");
  if (!(s.noise >= 0.0) || !(s.shift >= 0.0)) fail(ErrorKind::Spec, "noise and shift must be non-negative");
  if (!(s.fps > 0.0)) fail(ErrorKind::Spec, "fps must be positive");
}

namespace detail {

inline Vector random_direction(Rng& rng, std::size_t dim) {
  Vector v(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (double& x : v) x = rng.normal();
    norm = l2_norm(v);
  }
  for (double& x : v) x /= norm;
  return v;
}

/// C class means plus one background mean (last entry), pairwise at least
/// `separation` apart. Means lie on the sphere of radius `separation`.
inline std::vector<Vector> separated_means(Rng& rng, int classes, std::size_t dim, double separation) {
  const std::size_t count = static_cast<std::size_t>(classes) + 1;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<Vector> means;
    for (std::size_t k = 0; k < count; ++k) {
      Vector v = random_direction(rng, dim);
      for (double& x : v) x *= separation;
      means.push_back(std::move(v));
    }
    bool ok = true;
    for (std::size_t a = 0; a < count && ok; ++a)
      for (std::size_t b = a + 1; b < count && ok; ++b)
        ok = std::sqrt(squared_distance(means[a], means[b])) >= separation;
    if (ok) return means;
  }
  fail(ErrorKind::Spec, "could not place separated class means; raise dim or lower class count");
}

/// Splits `total` into `parts` integers, each >= minimum; order is random.
inline std::vector<std::size_t> random_composition(Rng& rng, std::size_t total, std::size_t parts,
                                                   std::size_t minimum) {
  std::vector<std::size_t> out(parts, minimum);
  const std::size_t extra = total - parts * minimum;
  std::vector<std::size_t> cuts;
  for (std::size_t k = 0; k + 1 < parts; ++k) cuts.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(extra))));
  std::sort(cuts.begin(), cuts.end());
  std::size_t prev = 0;
  for (std::size_t k = 0; k < parts; ++k) {
    const std::size_t cut = k + 1 < parts ? cuts[k] : extra;
    out[k] += cut - prev;
    prev = cut;
  }
  return out;
}

struct StreamGeometry {
  std::vector<Vector> means;  // classes..., background last
  Vector shift;
};

inline void add_frame(std::vector<double>& data, std::span<const double> mean, std::span<const double> offset,
                      double noise, Rng& rng) {
  for (std::size_t j = 0; j < mean.size(); ++j) {
    double v = mean[j] + (offset.empty() ? 0.0 : offset[j]);
    if (noise > 0.0) v += noise * rng.normal();
    data.push_back(v);
  }
}

}  // namespace detail

inline constexpr std::size_t kMinRunFrames = 3;
inline constexpr std::size_t kMinGapFrames = 2;

/// Builds the three splits (trimmed source, untrimmed train, untrimmed test).
/// Each split draws from its own generator derived from the seed, so output is
/// a pure function of the SyntheticSpec.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  validate_spec(spec);
  Dataset ds;
  auto& m = ds.manifest;
  m.num_classes = spec.num_classes;
  for (int c = 0; c < spec.num_classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
  m.dims = {spec.dim, spec.dim};

  std::array<detail::StreamGeometry, 2> geo;
  for (Stream s : kStreams) {
    Rng rng(derive_seed(spec.seed, 100 + static_cast<int>(s)));
    auto& g = geo[static_cast<int>(s)];
    g.means = detail::separated_means(rng, spec.num_classes, spec.dim, spec.separation);
    g.shift = detail::random_direction(rng, spec.dim);
    for (double& x : g.shift) x *= spec.shift;
  }
  const std::size_t background = static_cast<std::size_t>(spec.num_classes);

  auto make_id = [](const std::string& prefix, std::size_t k) {
    std::string num = std::to_string(k);
    return prefix + "_" + std::string(num.size() < 5 ? 5 - num.size() : 0, '0') + num;
  };
  auto attach_paths = [](VideoRecord& v) {
    for (Stream s : kStreams) v.feature_paths[static_cast<int>(s)] = "features/" + v.id + "." + stream_name(s) + ".tsrf";
  };

  // Trimmed source videos: pure action frames, offset by the domain shift.
  {
    Rng rng(derive_seed(spec.seed, 1));
    std::size_t k = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
      for (std::size_t i = 0; i < spec.source_per_class; ++i, ++k) {
        VideoRecord v;
        v.id = make_id("src", k);
        v.split = Split::Source;
        v.trimmed = true;
        v.frames = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.trimmed_frames_min),
                                                            static_cast<std::int64_t>(spec.trimmed_frames_max)));
        v.fps = spec.fps;
        v.labels = {c};
        v.segments = {{c, 0.0, v.duration()}};
        attach_paths(v);
        std::array<FeatureMatrix, 2> feats;
        for (Stream s : kStreams) {
          const auto& g = geo[static_cast<int>(s)];
          std::vector<double> data;
          data.reserve(v.frames * spec.dim);
          for (std::size_t f = 0; f < v.frames; ++f) detail::add_frame(data, g.means[c], g.shift, spec.noise, rng);
          feats[static_cast<int>(s)] = quantize_to_float(FeatureMatrix(v.frames, spec.dim, std::move(data)));
        }
        m.videos.push_back(std::move(v));
        ds.features.push_back(std::move(feats));
      }
    }
  }

  // Untrimmed target videos: 1..3 action runs of one class among background.
  auto untrimmed_split = [&](Split split, std::size_t count, const std::string& prefix, std::uint64_t tag) {
    Rng rng(derive_seed(spec.seed, tag));
    for (std::size_t k = 0; k < count; ++k) {
      VideoRecord v;
      v.id = make_id(prefix, k);
      v.split = split;
      v.fps = spec.fps;
      const int c = static_cast<int>(k % static_cast<std::size_t>(spec.num_classes));
      v.labels = {c};
      const std::size_t n = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(spec.frames_min), static_cast<std::int64_t>(spec.frames_max)));
      std::size_t runs = static_cast<std::size_t>(rng.uniform_int(spec.runs_min, spec.runs_max));
      const double fraction = rng.uniform(spec.action_fraction_min, spec.action_fraction_max);
      const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
      std::size_t action = std::max(runs * kMinRunFrames, wanted);
      while (runs > 1 && action + (runs - 1) * kMinGapFrames > n) {
        --runs;
        action = std::max(runs * kMinRunFrames, wanted);
      }
      action = std::clamp<std::size_t>(action, 1, n);
      v.frames = n;
      const auto run_lengths =
          detail::random_composition(rng, action, runs, std::min(kMinRunFrames, action / runs));
      // Interior gaps need a minimum length; the two outer gaps may be empty.
      const std::size_t bg = n - action;
      std::vector<std::size_t> gaps = detail::random_composition(rng, bg - (runs - 1) * kMinGapFrames, runs + 1, 0);
      for (std::size_t g = 1; g < runs; ++g) gaps[g] += kMinGapFrames;

      std::vector<int> frame_label(n, -1);
      std::size_t pos = 0;
      for (std::size_t r = 0; r < runs; ++r) {
        pos += gaps[r];
        for (std::size_t f = 0; f < run_lengths[r]; ++f) frame_label[pos + f] = c;
        v.segments.push_back({c, static_cast<double>(pos) / v.fps, static_cast<double>(pos + run_lengths[r]) / v.fps});
        pos += run_lengths[r];
      }
      attach_paths(v);
      std::array<FeatureMatrix, 2> feats;
      for (Stream s : kStreams) {
        const auto& g = geo[static_cast<int>(s)];
        std::vector<double> data;
        data.reserve(n * spec.dim);
        for (std::size_t f = 0; f < n; ++f) {
          const auto& mean = frame_label[f] < 0 ? g.means[background] : g.means[static_cast<std::size_t>(frame_label[f])];
          detail::add_frame(data, mean, {}, spec.noise, rng);
        }
        feats[static_cast<int>(s)] = quantize_to_float(FeatureMatrix(n, spec.dim, std::move(data)));
      }
      m.videos.push_back(std::move(v));
      ds.features.push_back(std::move(feats));
    }
  };
  untrimmed_split(Split::Train, spec.target_train, "train", 2);
  untrimmed_split(Split::Test, spec.target_test, "test", 3);
  return ds;
}

/// Ground-truth frame labels of an untrimmed record (-1 = background),
/// reconstructed from its segments.
inline std::vector<int> frame_labels(const VideoRecord& v) {
  std::vector<int> out(v.frames, -1);
  for (const auto& s : v.segments) {
    const auto b = static_cast<std::size_t>(std::llround(s.t_start * v.fps));
    const auto e = std::min(v.frames, static_cast<std::size_t>(std::llround(s.t_end * v.fps)));
    for (std::size_t f = b; f < e; ++f) out[f] = s.label;
  }
  return out;
}

}  // namespace tsrnet
