#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtscale/numerics.hpp"

namespace mtscale {

struct NamedSequence {
  std::string id;
  Matrix data;  // T × D
};

struct SequenceSet {
  std::vector<NamedSequence> sequences;
  std::size_t dims = 0;
  std::string generator;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  bool synthetic = false;

  std::size_t size() const { return sequences.size(); }
  const NamedSequence& at(std::string_view id) const;
};

// Throws ContractError on ragged dims, T < 2 or non-finite values.
void validate(const SequenceSet& set);

// Two 2-D sequences over t = (k - 50)/50 · π, k = 0..99:
//   X1 = (sin 2t, sin t)
//   X2 = (sin 2t · cos 3t, (sin 3t / 2t) · (sin t / t) - 0.5)
// with the t = 0 singularities of X2 replaced by their limits.
SequenceSet gen_case1();

// Closed-form value of the case-1 sequences at parameter t (limits at t = 0).
std::pair<double, double> case1_x1(double t);
std::pair<double, double> case1_x2(double t);
double case1_time(std::size_t k);

struct CommandDictionary {
  std::vector<std::pair<std::string, double>> verbs;
  std::vector<std::pair<std::string, double>> nouns;
};

// 9 verbs and 9 nouns, each mapped onto 0.0, 0.1, ..., 0.8.
const CommandDictionary& default_dictionary();

// [verb value, noun value]; unknown words raise ContractError listing the vocabulary.
Vector encode_command(std::string_view verb, std::string_view noun,
                      const CommandDictionary& dict = default_dictionary());

struct MultimodalSpec {
  std::size_t n_actions = 9;
  std::size_t n_objects = 9;
  std::size_t n_locations = 6;
  std::size_t n_sequences = 20;
  std::size_t seq_len = 100;
  std::size_t motor_dims = 41;
  double noise_std = 0.01;
  std::uint64_t seed = 7;
  // Every action × object pair once (location drawn at random); ignores n_sequences.
  bool full_sweep = false;
};

void validate(const MultimodalSpec& spec);

// Synthetic stand-in for recorded manipulation data. Dims 0-1 hold the
// encoded (verb, noun) command for the whole sequence; the remaining
// motor_dims are smooth trajectories in [-1, 1] whose second half depends on
// the action value.
SequenceSet gen_multimodal(const MultimodalSpec& spec);

// Directory layout: manifest.json plus one CSV per sequence.
void save_set(const SequenceSet& set, const std::filesystem::path& dir);
SequenceSet load_set(const std::filesystem::path& dir);

// Plain numeric CSV with a single header row.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& values);
CsvTable read_csv(const std::filesystem::path& path);

// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);

}  // namespace mtscale
