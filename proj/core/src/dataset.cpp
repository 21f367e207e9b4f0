#include "manifold_kin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <string>

#include "manifold_kin/errors.hpp"
#include "manifold_kin/io.hpp"
#include "manifold_kin/rng.hpp"
#include "manifold_kin/threads.hpp"

namespace mkin {

namespace {

constexpr std::uint64_t kStreamRaw = 0x7261775f736d70ULL;      // sample_raw draws
constexpr std::uint64_t kStreamCurate = 0x6375725f6b6579ULL;   // curation resampling keys
constexpr std::uint64_t kStreamMixture = 0x6d69785f736d70ULL;  // mixture draws

constexpr char kMagic[4] = {'K', 'M', 'P', 'D'};
constexpr std::uint32_t kVersion = 1;

bool pose_equal(const std::optional<Pose>& a, const std::optional<Pose>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return (a->position.array() == b->position.array()).all() &&
         (a->orientation.coeffs().array() == b->orientation.coeffs().array()).all();
}

/// Fixed draw order: left position, left orientation, right position,
/// right orientation, alpha, then the optional unilateral decision.
/// Never reorder -- sampling streams are part of the artifact contract.
CommandSample draw_uniform(const CommandSpace& space, Rng& rng) {
  CommandSample c;
  Pose left;
  left.position = rng.uniform_in_box(space.left_volume.lo, space.left_volume.hi);
  left.orientation = rng.uniform_quaternion();
  Pose right;
  right.position = rng.uniform_in_box(space.right_volume.lo, space.right_volume.hi);
  right.orientation = rng.uniform_quaternion();
  c.left_target = left;
  c.right_target = right;
  c.alpha = rng.uniform(space.alpha_lo, space.alpha_hi);
  if (space.unilateral_fraction > 0 && rng.next_double() < space.unilateral_fraction) {
    if (rng.next_double() < 0.5) {
      c.left_target.reset();
    } else {
      c.right_target.reset();
    }
  }
  c.branch = SampleBranch::uniform;
  return c;
}

void json_vec3(std::string& out, const Eigen::Vector3d& v) {
  out += '[';
  out += format_double(v.x());
  out += ',';
  out += format_double(v.y());
  out += ',';
  out += format_double(v.z());
  out += ']';
}

void json_box(std::string& out, const Box& b) {
  out += "{\"hi\":";
  json_vec3(out, b.hi);
  out += ",\"lo\":";
  json_vec3(out, b.lo);
  out += '}';
}

/// Canonical metadata JSON: fixed key order, shortest round-trip
/// doubles, no whitespace. Byte stability makes dataset files
/// reproducible.
std::string meta_to_json(const DatasetMeta& m) {
  std::string out = "{\"prune_threshold\":";
  out += format_double(m.prune_threshold);
  out += ",\"raw_count\":";
  out += std::to_string(m.raw_count);
  out += ",\"retained_count\":";
  out += std::to_string(m.retained_count);
  out += ",\"seed\":";
  out += std::to_string(m.seed);
  out += ",\"space\":{\"alpha_hi\":";
  out += format_double(m.space.alpha_hi);
  out += ",\"alpha_lo\":";
  out += format_double(m.space.alpha_lo);
  out += ",\"left\":";
  json_box(out, m.space.left_volume);
  out += ",\"right\":";
  json_box(out, m.space.right_volume);
  out += ",\"unilateral_fraction\":";
  out += format_double(m.space.unilateral_fraction);
  out += "},\"target_count\":";
  out += std::to_string(m.target_count);
  out += '}';
  return out;
}

Eigen::Vector3d vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("dataset metadata: malformed 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Box box_from_json(const nlohmann::json& j) {
  Box b;
  b.lo = vec3_from_json(j.at("lo"));
  b.hi = vec3_from_json(j.at("hi"));
  return b;
}

DatasetMeta meta_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset metadata: ") + e.what());
  }
  try {
    DatasetMeta m;
    m.prune_threshold = j.at("prune_threshold").get<double>();
    m.raw_count = j.at("raw_count").get<std::uint64_t>();
    m.retained_count = j.at("retained_count").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("space");
    m.space.alpha_hi = s.at("alpha_hi").get<double>();
    m.space.alpha_lo = s.at("alpha_lo").get<double>();
    m.space.left_volume = box_from_json(s.at("left"));
    m.space.right_volume = box_from_json(s.at("right"));
    m.space.unilateral_fraction = s.at("unilateral_fraction").get<double>();
    m.target_count = j.at("target_count").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset metadata: ") + e.what());
  }
}

void write_target(BinaryWriter& w, const std::optional<Pose>& t) {
  w.f64(t ? 1.0 : 0.0);
  const Pose p = t.value_or(Pose{});
  w.f64(p.position.x());
  w.f64(p.position.y());
  w.f64(p.position.z());
  w.f64(p.orientation.w());
  w.f64(p.orientation.x());
  w.f64(p.orientation.y());
  w.f64(p.orientation.z());
}

std::optional<Pose> read_target(BinaryReader& r) {
  const double flag = r.f64();
  Pose p;
  p.position.x() = r.f64();
  p.position.y() = r.f64();
  p.position.z() = r.f64();
  const double w = r.f64();
  const double x = r.f64();
  const double y = r.f64();
  const double z = r.f64();
  p.orientation = Eigen::Quaterniond(w, x, y, z);
  if (flag == 0.0) return std::nullopt;
  return p;
}

}  // namespace

bool operator==(const Box& a, const Box& b) {
  return (a.lo.array() == b.lo.array()).all() && (a.hi.array() == b.hi.array()).all();
}

bool operator==(const CommandSample& a, const CommandSample& b) {
  // branch is provenance, not value
  return pose_equal(a.left_target, b.left_target) && pose_equal(a.right_target, b.right_target) &&
         a.alpha == b.alpha;
}

bool operator==(const CommandSpace& a, const CommandSpace& b) {
  return a.left_volume == b.left_volume && a.right_volume == b.right_volume &&
         a.alpha_lo == b.alpha_lo && a.alpha_hi == b.alpha_hi &&
         a.unilateral_fraction == b.unilateral_fraction;
}

bool operator==(const DatasetRecord& a, const DatasetRecord& b) {
  return a.command == b.command && a.q_solution.size() == b.q_solution.size() &&
         (a.q_solution.array() == b.q_solution.array()).all() &&
         a.ik_position_error == b.ik_position_error &&
         a.ik_orientation_error == b.ik_orientation_error &&
         a.manipulability_left == b.manipulability_left &&
         a.manipulability_right == b.manipulability_right;
}

bool operator==(const DatasetMeta& a, const DatasetMeta& b) {
  return a.seed == b.seed && a.chain_hash == b.chain_hash && a.space == b.space &&
         a.prune_threshold == b.prune_threshold && a.raw_count == b.raw_count &&
         a.retained_count == b.retained_count && a.target_count == b.target_count;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.meta == b.meta && a.records == b.records;
}

CommandSpace CommandSpace::default_space() {
  CommandSpace s;
  s.left_volume.lo = {0.0, 0.0, -0.35};
  s.left_volume.hi = {0.55, 0.55, 0.45};
  s.right_volume.lo = {0.0, -0.55, -0.35};
  s.right_volume.hi = {0.55, 0.0, 0.45};
  return s;
}

void validate_space(const CommandSpace& space) {
  for (const Box* b : {&space.left_volume, &space.right_volume}) {
    for (int i = 0; i < 3; ++i) {
      if (!(b->lo[i] < b->hi[i])) {
        throw InputError("command space: volume has zero or negative extent on axis " +
                         std::to_string(i));
      }
    }
  }
  const Box& l = space.left_volume;
  const Box& r = space.right_volume;
  const bool mirrored = l.lo.x() == r.lo.x() && l.hi.x() == r.hi.x() && l.lo.z() == r.lo.z() &&
                        l.hi.z() == r.hi.z() && r.lo.y() == -l.hi.y() && r.hi.y() == -l.lo.y();
  if (!mirrored) {
    throw InputError("command space: volumes are not mirror images across the sagittal plane");
  }
  if (space.alpha_lo != 0.1 || space.alpha_hi != 10.0) {
    throw InputError("command space: alpha range must be [0.1, 10]");
  }
  if (space.unilateral_fraction < 0.0 || space.unilateral_fraction > 1.0) {
    throw InputError("command space: unilateral_fraction outside [0, 1]");
  }
}

std::vector<CommandSample> sample_raw(const CommandSpace& space, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InputError("sample_raw: n must be >= 1");
  validate_space(space);
  std::vector<CommandSample> out(n);
  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, kStreamRaw, static_cast<std::uint64_t>(i)));
      out[static_cast<std::size_t>(i)] = draw_uniform(space, rng);
    }
  });
  return out;
}

Dataset curate(const KinematicChain& chain, const std::vector<CommandSample>& raw,
               const CurateOptions& opts) {
  if (raw.empty()) throw InputError("curate: raw sample list is empty");
  if (opts.target_count < 1) throw InputError("curate: target_count must be >= 1");
  if (raw.size() < opts.target_count) {
    throw InputError("curate: need at least target_count raw samples, got " +
                     std::to_string(raw.size()) + " < " + std::to_string(opts.target_count));
  }
  if (!(opts.prune_threshold > 0)) throw InputError("curate: prune_threshold must be positive");

  std::vector<IkProblem> problems(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    problems[i].left_target = raw[i].left_target;
    problems[i].right_target = raw[i].right_target;
    problems[i].alpha = raw[i].alpha;
  }
  const std::vector<IkResult> solved = batch_solve(chain, problems, opts.ik);

  std::vector<std::size_t> survivors;
  double best_error = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < solved.size(); ++i) {
    if (!solved[i].error.empty()) {
      throw ValidationError("curate: sample " + std::to_string(i) + ": " + solved[i].error);
    }
    const double pe = solved[i].max_position_error();
    best_error = std::min(best_error, pe);
    if (pe <= opts.prune_threshold) survivors.push_back(i);
  }
  if (survivors.empty()) {
    std::ostringstream msg;
    msg << "curate: zero survivors of " << raw.size() << " raw samples (best position error "
        << best_error << " m, prune threshold " << opts.prune_threshold << " m)";
    throw ValidationError(msg.str());
  }

  // Manipulability of each survivor's solution, per arm.
  std::vector<double> manip_left(survivors.size()), manip_right(survivors.size());
  parallel_for(static_cast<std::int64_t>(survivors.size()), [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t k = begin; k < end; ++k) {
      const JointConfig& q = solved[survivors[static_cast<std::size_t>(k)]].q;
      const auto jl = geometric_jacobian(chain, q, Side::left);
      const auto jr = geometric_jacobian(chain, q, Side::right);
      manip_left[static_cast<std::size_t>(k)] =
          manipulability(arm_position_jacobian(chain, jl, Side::left));
      manip_right[static_cast<std::size_t>(k)] =
          manipulability(arm_position_jacobian(chain, jr, Side::right));
    }
  });

  // Weighted sampling without replacement: order survivors by
  // log(u)/w (the log-domain Efraimidis-Spirakis key) and keep the
  // largest target_count. Keys derive from the raw index, so the
  // selection is independent of chunking.
  std::vector<std::size_t> selected;
  if (survivors.size() <= opts.target_count) {
    selected = survivors;
  } else {
    std::vector<std::pair<double, std::size_t>> keyed(survivors.size());
    for (std::size_t k = 0; k < survivors.size(); ++k) {
      const double w =
          opts.uniform_weights ? 1.0 : std::min(manip_left[k], manip_right[k]) + 1e-6;
      Rng rng(derive_seed(opts.seed, kStreamCurate, survivors[k]));
      const double u = std::max(rng.next_double(), 0x1.0p-53);
      keyed[k] = {std::log(u) / w, survivors[k]};
    }
    std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(opts.target_count),
                     keyed.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    keyed.resize(opts.target_count);
    selected.reserve(opts.target_count);
    for (const auto& [key, idx] : keyed) selected.push_back(idx);
    std::sort(selected.begin(), selected.end());
  }

  Dataset d;
  d.meta.seed = opts.seed;
  d.meta.chain_hash = chain.hash;
  d.meta.space = opts.space;
  d.meta.prune_threshold = opts.prune_threshold;
  d.meta.raw_count = raw.size();
  d.meta.retained_count = survivors.size();
  d.meta.target_count = opts.target_count;
  d.records.reserve(selected.size());
  // manipulability arrays are indexed by survivor rank, so map back
  std::vector<std::size_t> rank_of(raw.size(), 0);
  for (std::size_t k = 0; k < survivors.size(); ++k) rank_of[survivors[k]] = k;
  for (const std::size_t i : selected) {
    DatasetRecord rec;
    rec.command = raw[i];
    rec.q_solution = solved[i].q;
    rec.ik_position_error = solved[i].max_position_error();
    double oe = 0;
    if (solved[i].left_orientation_error) oe = std::max(oe, *solved[i].left_orientation_error);
    if (solved[i].right_orientation_error) oe = std::max(oe, *solved[i].right_orientation_error);
    rec.ik_orientation_error = oe;
    rec.manipulability_left = manip_left[rank_of[i]];
    rec.manipulability_right = manip_right[rank_of[i]];
    d.records.push_back(std::move(rec));
  }
  return d;
}

std::vector<CommandSample> mixture_sample(const CommandSpace& space, const Dataset& dataset,
                                          double beta, const PerturbationScale& scale,
                                          std::size_t n, std::uint64_t seed) {
  if (beta < 0.0 || beta > 1.0) throw InputError("mixture_sample: beta outside [0, 1]");
  if (scale.position < 0 || scale.rotation < 0) {
    throw InputError("mixture_sample: negative perturbation scale");
  }
  if (n < 1) throw InputError("mixture_sample: n must be >= 1");
  validate_space(space);
  if (beta < 1.0 && dataset.records.empty()) {
    throw InputError("mixture_sample: empty dataset requires beta = 1");
  }

  std::vector<CommandSample> out(n);
  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, kStreamMixture, static_cast<std::uint64_t>(i)));
      if (rng.next_double() < beta) {
        out[static_cast<std::size_t>(i)] = draw_uniform(space, rng);
        continue;
      }
      CommandSample c = dataset.records[rng.below(dataset.records.size())].command;
      for (std::optional<Pose>* t : {&c.left_target, &c.right_target}) {
        if (!*t) continue;
        Pose& p = **t;
        for (int a = 0; a < 3; ++a) p.position[a] += scale.position * rng.normal();
        Eigen::Vector3d rot;
        for (int a = 0; a < 3; ++a) rot[a] = scale.rotation * rng.normal();
        const double angle = rot.norm();
        if (angle > 0) {
          p.orientation = axis_rotation(rot / angle, angle) * p.orientation;
          p.canonicalize();
        }
      }
      c.branch = SampleBranch::prior;
      out[static_cast<std::size_t>(i)] = c;
    }
  });
  return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  BinaryWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u64(dataset.records.size());
  w.bytes(dataset.meta.chain_hash.data(), dataset.meta.chain_hash.size());
  w.str(meta_to_json(dataset.meta));
  for (const DatasetRecord& rec : dataset.records) {
    write_target(w, rec.command.left_target);
    write_target(w, rec.command.right_target);
    w.f64(rec.command.alpha);
    w.u32(static_cast<std::uint32_t>(rec.q_solution.size()));
    for (Eigen::Index j = 0; j < rec.q_solution.size(); ++j) w.f64(rec.q_solution[j]);
    w.f64(rec.ik_position_error);
    w.f64(rec.ik_orientation_error);
    w.f64(rec.manipulability_left);
    w.f64(rec.manipulability_right);
  }
  w.u32(w.crc());
  w.save(path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  if (r.size() < 4 + 4 + 8 + 32 + 4 + 4) throw FormatError("dataset file: truncated header");
  const std::uint32_t stored_crc = [&] {
    BinaryReader tail = r;
    tail.seek(r.size() - 4);
    return tail.u32();
  }();
  if (stored_crc != r.crc_of_prefix(r.size() - 4)) {
    throw FormatError("dataset file: checksum mismatch");
  }

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("dataset file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("dataset file: unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64();

  Dataset d;
  r.bytes(d.meta.chain_hash.data(), d.meta.chain_hash.size());
  const std::string meta_json = r.str();
  const Sha256 hash = d.meta.chain_hash;
  d.meta = meta_from_json(meta_json);
  d.meta.chain_hash = hash;

  d.records.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    DatasetRecord& rec = d.records[i];
    rec.command.left_target = read_target(r);
    rec.command.right_target = read_target(r);
    rec.command.alpha = r.f64();
    const std::uint32_t nq = r.u32();
    rec.q_solution.resize(nq);
    for (std::uint32_t j = 0; j < nq; ++j) rec.q_solution[j] = r.f64();
    rec.ik_position_error = r.f64();
    rec.ik_orientation_error = r.f64();
    rec.manipulability_left = r.f64();
    rec.manipulability_right = r.f64();
  }
  r.u32();  // checksum, already verified
  if (r.remaining() != 0) throw FormatError("dataset file: trailing bytes");
  return d;
}

Dataset read_dataset(const std::filesystem::path& path, const Sha256& expected_chain_hash) {
  Dataset d = read_dataset(path);
  if (d.meta.chain_hash != expected_chain_hash) {
    throw ValidationError("dataset file: chain hash mismatch (dataset was generated for a different chain)");
  }
  return d;
}

}  // namespace mkin
