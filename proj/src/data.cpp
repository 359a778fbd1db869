#include "mtscale/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

#include "mtscale/errors.hpp"

namespace mtscale {

namespace fs = std::filesystem;

const NamedSequence& SequenceSet::at(std::string_view id) const {
  for (const auto& s : sequences)
    if (s.id == id) return s;
  throw ContractError("no sequence with id '" + std::string(id) + "'");
}

void validate(const SequenceSet& set) {
  require(!set.sequences.empty(), "SequenceSet is empty");
  for (const auto& s : set.sequences) {
    require(s.data.cols() == set.dims, "sequence '" + s.id + "' has " + std::to_string(s.data.cols()) +
                                           " dims, set declares " + std::to_string(set.dims));
    require(s.data.rows() >= 2, "sequence '" + s.id + "' has fewer than 2 timesteps");
    require(s.data.all_finite(), "sequence '" + s.id + "' contains non-finite values");
  }
}

// ---------------------------------------------------------------------------
// Case 1

double case1_time(std::size_t k) {
  return (static_cast<double>(k) - 50.0) / 50.0 * std::numbers::pi;
}

std::pair<double, double> case1_x1(double t) { return {std::sin(2.0 * t), std::sin(t)}; }

std::pair<double, double> case1_x2(double t) {
  const double first = std::sin(2.0 * t) * std::cos(3.0 * t);
  if (t == 0.0) return {first, 1.5 * 1.0 - 0.5};
  return {first, (std::sin(3.0 * t) / (2.0 * t)) * (std::sin(t) / t) - 0.5};
}

SequenceSet gen_case1() {
  constexpr std::size_t kSteps = 100;
  SequenceSet set;
  set.dims = 2;
  set.generator = "case1";
  set.params = {{"steps", kSteps}, {"t", "(k-50)/50*pi, k=0..99"}};
  set.seed = 0;
  Matrix x1(kSteps, 2), x2(kSteps, 2);
  for (std::size_t k = 0; k < kSteps; ++k) {
    const double t = case1_time(k);
    std::tie(x1(k, 0), x1(k, 1)) = case1_x1(t);
    std::tie(x2(k, 0), x2(k, 1)) = case1_x2(t);
  }
  set.sequences.push_back({"X1", std::move(x1)});
  set.sequences.push_back({"X2", std::move(x2)});
  return set;
}

// ---------------------------------------------------------------------------
// Commands

const CommandDictionary& default_dictionary() {
  static const CommandDictionary dict{
      {{"slide left", 0.0}, {"slide right", 0.1}, {"touch", 0.2}, {"reach", 0.3}, {"push", 0.4},
       {"pull", 0.5}, {"point", 0.6}, {"grasp", 0.7}, {"lift", 0.8}},
      {{"tractor", 0.0}, {"hammer", 0.1}, {"ball", 0.2}, {"bus", 0.3}, {"modi", 0.4},
       {"car", 0.5}, {"cup", 0.6}, {"cubes", 0.7}, {"spiky", 0.8}}};
  return dict;
}

namespace {

double lookup(const std::vector<std::pair<std::string, double>>& map, std::string_view word,
              const char* kind) {
  for (const auto& [w, v] : map)
    if (w == word) return v;
  std::string vocab;
  for (const auto& [w, v] : map) vocab += (vocab.empty() ? "" : ", ") + w;
  throw ContractError("unknown " + std::string(kind) + " '" + std::string(word) + "'; valid: " + vocab);
}

}  // namespace

Vector encode_command(std::string_view verb, std::string_view noun, const CommandDictionary& dict) {
  return {lookup(dict.verbs, verb, "verb"), lookup(dict.nouns, noun, "noun")};
}

// ---------------------------------------------------------------------------
// Multimodal stand-in

void validate(const MultimodalSpec& s) {
  require(s.n_actions >= 1 && s.n_actions <= 9, "MultimodalSpec.n_actions must be in [1,9]");
  require(s.n_objects >= 1 && s.n_objects <= 9, "MultimodalSpec.n_objects must be in [1,9]");
  require(s.n_locations >= 1, "MultimodalSpec.n_locations must be >= 1");
  require(s.seq_len >= 2, "MultimodalSpec.seq_len must be >= 2");
  require(s.motor_dims >= 1, "MultimodalSpec.motor_dims must be >= 1");
  require(s.noise_std >= 0.0 && std::isfinite(s.noise_std), "MultimodalSpec.noise_std must be >= 0");
  require(s.full_sweep || s.n_sequences >= 1, "MultimodalSpec.n_sequences must be >= 1");
  require(s.full_sweep || s.n_sequences <= s.n_actions * s.n_objects * s.n_locations,
          "MultimodalSpec.n_sequences exceeds the number of distinct (action, object, location) combinations");
}

namespace {

std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint64_t v : {a, b, c, d}) {
    h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h *= 0x100000001B3ULL;
  }
  return h;
}

struct Component {
  double amp, freq, phase;
};

Matrix motor_trajectory(const MultimodalSpec& spec, std::size_t action, std::size_t object,
                        std::size_t location, double action_value, Rng& noise) {
  const std::size_t steps = spec.seq_len;
  const double two_pi = 2.0 * std::numbers::pi;
  const double half = static_cast<double>(steps) / 2.0;
  Matrix out(steps, spec.motor_dims);
  for (std::size_t m = 0; m < spec.motor_dims; ++m) {
    // Early profile: object and location only.
    Rng shape(mix_key(object, location, m, 0x11));
    std::vector<Component> comps(2 + shape.below(2));
    for (auto& c : comps) c = {shape.uniform(0.1, 0.4), shape.uniform(0.5, 3.0), shape.uniform(0.0, two_pi)};
    // Late profile: switched on halfway through, shaped by the action.
    Rng late(mix_key(action, m, 0x22, 0x33));
    const double late_amp = (action_value - 0.4) * 0.6 + late.uniform(-0.05, 0.05);
    const double late_freq = 1.0 + static_cast<double>(action) * 0.25;
    const double late_phase = late.uniform(0.0, two_pi);

    double bound = std::abs(late_amp);
    for (const auto& c : comps) bound += c.amp;
    const double scale = 0.9 / bound;

    for (std::size_t k = 0; k < steps; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(steps);
      double v = 0.0;
      for (const auto& c : comps) v += c.amp * std::sin(two_pi * c.freq * s + c.phase);
      if (static_cast<double>(k) >= half) {
        const double since = (static_cast<double>(k) - half) / static_cast<double>(steps);
        const double ramp = std::min(1.0, since * 10.0);
        v += ramp * late_amp * std::sin(two_pi * late_freq * since + late_phase);
      }
      v *= scale;
      if (spec.noise_std > 0.0) v += spec.noise_std * noise.normal();
      out(k, m) = std::clamp(v, -1.0, 1.0);
    }
  }
  return out;
}

}  // namespace

SequenceSet gen_multimodal(const MultimodalSpec& spec) {
  validate(spec);
  const auto& dict = default_dictionary();
  Rng rng(spec.seed);

  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> combos;
  if (spec.full_sweep) {
    for (std::size_t a = 0; a < spec.n_actions; ++a)
      for (std::size_t o = 0; o < spec.n_objects; ++o)
        combos.emplace_back(a, o, rng.below(spec.n_locations));
  } else {
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
    while (combos.size() < spec.n_sequences) {
      std::tuple<std::size_t, std::size_t, std::size_t> c{
          rng.below(spec.n_actions), rng.below(spec.n_objects), rng.below(spec.n_locations)};
      if (seen.insert(c).second) combos.push_back(c);
    }
  }

  SequenceSet set;
  set.dims = 2 + spec.motor_dims;
  set.generator = "multimodal-synthetic";
  set.synthetic = true;
  set.seed = spec.seed;
  set.params = {{"n_actions", spec.n_actions},     {"n_objects", spec.n_objects},
                {"n_locations", spec.n_locations}, {"n_sequences", combos.size()},
                {"seq_len", spec.seq_len},         {"motor_dims", spec.motor_dims},
                {"noise_std", spec.noise_std},     {"full_sweep", spec.full_sweep},
                {"layout", "dims 0-1 command (verb, noun); dims 2.. synthetic motor trajectories"}};

  Rng noise(mix_key(spec.seed, 0x44, 0x55, 0x66));
  for (std::size_t i = 0; i < combos.size(); ++i) {
    const auto [a, o, l] = combos[i];
    const double verb = dict.verbs[a].second;
    const double noun = dict.nouns[o].second;
    Matrix motor = motor_trajectory(spec, a, o, l, verb, noise);
    Matrix data(spec.seq_len, set.dims);
    for (std::size_t k = 0; k < spec.seq_len; ++k) {
      data(k, 0) = verb;
      data(k, 1) = noun;
      for (std::size_t m = 0; m < spec.motor_dims; ++m) data(k, 2 + m) = motor(k, m);
    }
    char id[64];
    std::snprintf(id, sizeof id, "mm%03zu_a%zu_o%zu_l%zu", i, a, o, l);
    set.sequences.push_back({id, std::move(data)});
  }
  return set;
}

// ---------------------------------------------------------------------------
// CSV + manifest

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& values) {
  require(header.size() == values.cols(), "write_csv: header has " + std::to_string(header.size()) +
                                              " columns, data has " + std::to_string(values.cols()));
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) f << (c ? "," : "") << header[c];
  f << '\n';
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) f << (c ? "," : "") << format_double(values(r, c));
    f << '\n';
  }
  if (!f) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError(path.string() + ": empty file");
  CsvTable table;
  table.header = split_fields(line);
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != table.header.size())
      throw IoError(path.string() + ": row " + std::to_string(rows + 1) + " has " +
                    std::to_string(fields.size()) + " fields, header has " +
                    std::to_string(table.header.size()));
    for (const auto& s : fields) {
      double v = 0.0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError(path.string() + ": row " + std::to_string(rows + 1) + ": not a number: '" + s + "'");
      values.push_back(v);
    }
    ++rows;
  }
  table.values = Matrix(rows, table.header.size(), std::move(values));
  return table;
}

void save_set(const SequenceSet& set, const fs::path& dir) {
  validate(set);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  std::vector<std::string> header;
  for (std::size_t d = 0; d < set.dims; ++d) header.push_back("d" + std::to_string(d));

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : set.sequences) {
    const std::string file = s.id + ".csv";
    write_csv(dir / file, header, s.data);
    entries.push_back({{"id", s.id},
                       {"file", file},
                       {"T", s.data.rows()},
                       {"D", s.data.cols()},
                       {"generator", set.generator},
                       {"params", set.params},
                       {"seed", set.seed}});
  }
  const nlohmann::json manifest{{"generator", set.generator}, {"synthetic", set.synthetic},
                                {"params", set.params},       {"seed", set.seed},
                                {"dims", set.dims},           {"sequences", entries}};
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
}

SequenceSet load_set(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw IoError("missing manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }

  SequenceSet set;
  try {
    set.generator = manifest.at("generator").get<std::string>();
    set.synthetic = manifest.value("synthetic", false);
    set.params = manifest.value("params", nlohmann::json::object());
    set.seed = manifest.value("seed", std::uint64_t{0});
    set.dims = manifest.at("dims").get<std::size_t>();
    std::string first_file;
    for (const auto& e : manifest.at("sequences")) {
      const std::string file = e.at("file").get<std::string>();
      CsvTable t = read_csv(dir / file);
      if (t.values.cols() != set.dims) {
        throw IoError((dir / file).string() + ": has " + std::to_string(t.values.cols()) +
                      " dims but " + (first_file.empty() ? "manifest" : first_file) + " has " +
                      std::to_string(set.dims));
      }
      if (t.values.rows() != e.at("T").get<std::size_t>())
        throw IoError((dir / file).string() + ": manifest says T=" + e.at("T").dump() + ", file has " +
                      std::to_string(t.values.rows()) + " rows");
      if (first_file.empty()) first_file = (dir / file).string();
      set.sequences.push_back({e.at("id").get<std::string>(), std::move(t.values)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  try {
    validate(set);
  } catch (const ContractError& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return set;
}

}  // namespace mtscale
