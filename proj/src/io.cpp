#include "p2/io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace p2 {

using ordered_json = nlohmann::ordered_json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open file: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write file: " + path);
  return out;
}

ordered_json parse_json(const std::string& path) {
  auto in = open_in(path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw config_error("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

Vocabulary load_vocabulary(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    names.push_back(line);
  }
  if (names.size() < 2) throw config_error("vocabulary file needs at least two entries: " + path);
  if (names.back() != "<mask>")
    throw config_error("vocabulary file must end with the <mask> entry: " + path);
  return Vocabulary(std::move(names));
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  if (!vocab.has_names()) throw precondition_error("cannot save an unnamed vocabulary");
  auto out = open_out(path);
  for (const auto& name : vocab.names()) out << name << "\n";
}

EmpiricalDistribution ingest_corpus(const std::string& path, const Vocabulary& vocab) {
  auto in = open_in(path);
  std::vector<Sequence> lines;
  std::string line;
  int line_no = 0;
  int length = -1;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    Sequence seq;
    std::string word;
    int column = 0;
    while (ss >> word) {
      ++column;
      auto tok = vocab.token_of(word);
      if (!tok)
        throw precondition_error("line " + std::to_string(line_no) + ", token " +
                                 std::to_string(column) + ": unknown symbol '" + word + "'");
      if (vocab.is_mask(*tok))
        throw precondition_error("line " + std::to_string(line_no) +
                                 ": corpus sequences may not contain the mask symbol");
      seq.push_back(*tok);
    }
    if (seq.empty()) continue;
    if (length < 0) length = static_cast<int>(seq.size());
    if (static_cast<int>(seq.size()) != length)
      throw precondition_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(length) + " tokens, got " +
                               std::to_string(seq.size()));
    lines.push_back(std::move(seq));
  }
  if (lines.empty()) throw precondition_error("corpus file is empty: " + path);

  std::vector<Sequence> support;
  std::vector<double> counts;
  for (const Sequence& s : lines) {
    bool found = false;
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (support[i] == s) {
        counts[i] += 1.0;
        found = true;
        break;
      }
    }
    if (!found) {
      support.push_back(s);
      counts.push_back(1.0);
    }
  }
  for (double& c : counts) c /= static_cast<double>(lines.size());
  return EmpiricalDistribution(std::move(support), std::move(counts), vocab);
}

void save_distribution(const EmpiricalDistribution& dist, const Vocabulary& vocab,
                       const std::string& path) {
  ordered_json j;
  j["schema_version"] = "1";
  j["L"] = dist.length();
  j["vocab"] = vocab.names();
  ordered_json support = ordered_json::array();
  for (const Sequence& s : dist.support()) {
    ordered_json row = ordered_json::array();
    for (Token t : s) row.push_back(static_cast<int>(t));
    support.push_back(std::move(row));
  }
  j["support"] = std::move(support);
  j["probs"] = dist.probs();
  open_out(path) << j.dump(2) << "\n";
}

std::pair<EmpiricalDistribution, Vocabulary> load_distribution(const std::string& path) {
  ordered_json j = parse_json(path);
  for (const char* key : {"L", "vocab", "support", "probs"})
    if (!j.contains(key)) throw config_error("distribution file missing key '" + std::string(key) + "'");
  Vocabulary vocab(j["vocab"].get<std::vector<std::string>>());
  int L = j["L"].get<int>();
  std::vector<Sequence> support;
  for (const auto& row : j["support"]) {
    Sequence s;
    for (const auto& v : row) s.push_back(static_cast<Token>(v.get<int>()));
    if (static_cast<int>(s.size()) != L)
      throw config_error("distribution file: support entry length does not match L");
    support.push_back(std::move(s));
  }
  std::vector<double> probs = j["probs"].get<std::vector<double>>();
  return {EmpiricalDistribution(std::move(support), std::move(probs), vocab), vocab};
}

void save_planner_model(const TrainablePlannerModel& model, const std::string& path) {
  ordered_json features;
  features["schema"] = "position-onehot+token-onehot+mask-decile+context-agreement";
  features["length"] = model.length;
  features["vocab_size"] = model.vocab_size;
  ordered_json modes = ordered_json::array();
  for (Token t : model.context_modes) modes.push_back(static_cast<int>(t));
  features["context_modes"] = std::move(modes);
  features["learning_rate"] = model.learning_rate;

  ordered_json j;
  j["version"] = model.version;
  j["features"] = std::move(features);
  j["weights"] = model.weights;
  j["trained_on"] = model.trained_on;
  j["seed"] = model.seed;
  open_out(path) << j.dump(2) << "\n";
}

TrainablePlannerModel load_planner_model(const std::string& path) {
  ordered_json j = parse_json(path);
  for (const char* key : {"version", "features", "weights", "trained_on", "seed"})
    if (!j.contains(key)) throw config_error("planner model file missing key '" + std::string(key) + "'");
  TrainablePlannerModel m;
  m.version = j["version"].get<std::string>();
  if (m.version != "1") throw config_error("unsupported planner model version: " + m.version);
  const auto& f = j["features"];
  m.length = f["length"].get<int>();
  m.vocab_size = f["vocab_size"].get<int>();
  for (const auto& v : f["context_modes"]) m.context_modes.push_back(static_cast<Token>(v.get<int>()));
  m.learning_rate = f["learning_rate"].get<double>();
  m.weights = j["weights"].get<std::vector<double>>();
  m.trained_on = j["trained_on"].get<std::string>();
  m.seed = j["seed"].get<std::uint64_t>();
  m.validate();
  return m;
}

std::string sequence_to_string(const Sequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += vocab.name(seq[i]);
  }
  return out;
}

void save_sequences(const std::vector<Sequence>& seqs, const Vocabulary& vocab,
                    const std::string& path) {
  auto out = open_out(path);
  for (const Sequence& s : seqs) out << sequence_to_string(s, vocab) << "\n";
}

std::vector<Sequence> load_sequences(const std::string& path, const Vocabulary& vocab) {
  auto in = open_in(path);
  std::vector<Sequence> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    Sequence seq;
    std::string word;
    while (ss >> word) {
      auto tok = vocab.token_of(word);
      if (!tok) throw precondition_error("unknown symbol in sequence file: " + word);
      seq.push_back(*tok);
    }
    if (!seq.empty()) out.push_back(std::move(seq));
  }
  return out;
}

void save_trajectory_jsonl(const std::vector<std::pair<Sequence, Trajectory>>& chains,
                           const Vocabulary& vocab, const std::string& path) {
  auto out = open_out(path);
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t t = 0; t < chains[c].second.size(); ++t) {
      const StepRecord& rec = chains[c].second[t];
      ordered_json j;
      j["chain"] = c;
      j["step"] = t + 1;
      j["state"] = sequence_to_string(rec.state, vocab);
      j["update"] = rec.update_positions;
      j["remask"] = rec.remask_positions;
      out << j.dump() << "\n";
    }
  }
}

std::string config_hash(const std::map<std::string, std::string>& kv) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](char c) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  };
  for (const auto& [key, value] : kv) {
    for (char c : key) mix(c);
    mix('=');
    for (char c : value) mix(c);
    mix('\n');
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace p2
