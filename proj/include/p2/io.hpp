#ifndef P2_IO_HPP
#define P2_IO_HPP

#include <map>
#include <string>

#include "p2/planner.hpp"
#include "p2/sampler.hpp"

namespace p2 {

// Vocabulary file: one symbol name per line, the mask as the final entry
// "<mask>"; line count equals d.
Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

// Corpus file: whitespace-separated symbol names, one sequence per line.
// Lines must share one length and contain no mask symbol. Duplicate lines
// accumulate empirical frequency.
EmpiricalDistribution ingest_corpus(const std::string& path, const Vocabulary& vocab);

// Distribution persistence: {"L", "vocab", "support", "probs"} with 1-based
// token indices. Extra keys are tolerated on load.
void save_distribution(const EmpiricalDistribution& dist, const Vocabulary& vocab,
                       const std::string& path);
std::pair<EmpiricalDistribution, Vocabulary> load_distribution(const std::string& path);

// Planner model persistence: {"version", "features", "weights", "trained_on",
// "seed"} with the feature schema descriptor carrying the dimensions.
void save_planner_model(const TrainablePlannerModel& model, const std::string& path);
TrainablePlannerModel load_planner_model(const std::string& path);

// Sample files: one sequence of space-separated symbol names per line.
void save_sequences(const std::vector<Sequence>& seqs, const Vocabulary& vocab,
                    const std::string& path);
std::vector<Sequence> load_sequences(const std::string& path, const Vocabulary& vocab);

// Trajectory dump: one JSON object per line with the post-step state string,
// the kept set, and the remask set.
void save_trajectory_jsonl(const std::vector<std::pair<Sequence, Trajectory>>& chains,
                           const Vocabulary& vocab, const std::string& path);

std::string sequence_to_string(const Sequence& seq, const Vocabulary& vocab);

// FNV-1a hash of canonical "key=value" lines; names run directories.
std::string config_hash(const std::map<std::string, std::string>& kv);

}  // namespace p2

#endif
