#pragma once

// Genetic programming over transparent expression structures. Every operator
// keeps each variable at most once and never nests a shape directly in a shape.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "share/datasets.hpp"
#include "share/evaluator.hpp"
#include "share/expr.hpp"

namespace share {

struct SearchConfig {
  std::size_t population_size = 500;
  // Includes the initial random population.
  std::size_t generations = 10;
  std::size_t tournament_size = 10;
  double p_crossover = 0.4;
  double p_subtree_mutation = 0.2;
  double p_point_mutation = 0.2;
  double p_hoist_mutation = 0.05;
  double p_point_replace = 0.2;
  double parsimony_coefficient = 0.0;
  std::size_t max_init_depth = 4;
  // Pick internal nodes 90% of the time when choosing subtrees (otherwise uniform).
  bool weighted_subtree_selection = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = all hardware threads
  TrainConfig inner;
  CompileOptions compile;

  void validate() const;
};

struct ScoredProgram {
  ExprTree tree;
  std::string canonical_key;
  double val_mse = 0.0;
  double val_r2 = 0.0;
  double fitness = 0.0;
  std::size_t n_shapes = 0;
  std::size_t size = 0;
  std::size_t depth = 0;
  std::uint64_t train_seed = 0;
  std::string error;  // non-empty when training failed
  std::shared_ptr<const CompiledModel> fitted;

  bool failed() const { return !error.empty(); }
};

struct FrontierReport {
  std::map<std::size_t, ScoredProgram> rows;
};

/// Best validation R^2 per shape count. Ties: smaller size, then smaller key. Failed programs are skipped.
FrontierReport best_per_shape_count(const std::vector<ScoredProgram>& evaluated);

/// Random transparent tree over variables 0..n_vars-1.
ExprTree random_grow(std::mt19937_64& rng, std::size_t n_vars, std::size_t max_depth,
                     const std::vector<std::string>& names = {});

/// Random transparent subtree using only variables from `pool`.
Node grow_subtree(std::mt19937_64& rng, const VarSet& pool, std::size_t max_depth, bool parent_is_shape);

/// Preorder index of a random node.
std::size_t pick_node(std::mt19937_64& rng, const Node& root, bool weighted);

/// Returns nothing when no donor subtree fits the variables the parent can spare.
std::optional<ExprTree> crossover(std::mt19937_64& rng, const ExprTree& parent, const ExprTree& donor,
                                  bool weighted = false);
ExprTree subtree_mutation(std::mt19937_64& rng, const ExprTree& parent, std::size_t max_depth,
                          bool weighted = false);
ExprTree point_mutation(std::mt19937_64& rng, const ExprTree& parent, double p_replace);
ExprTree hoist_mutation(std::mt19937_64& rng, const ExprTree& parent, bool weighted = false);

/// Index of the lowest fitness among `k` draws with replacement; ties keep the earliest draw.
std::size_t tournament(std::mt19937_64& rng, const std::vector<double>& fitness, std::size_t k);

/// Per-program training seed: leading bytes of SHA-256(key) mixed with the run seed.
std::uint64_t program_seed(const std::string& canonical_key, std::uint64_t run_seed);

struct GenerationStats {
  std::size_t generation = 0;
  std::size_t new_trainings = 0;
  std::size_t cache_size = 0;
  double best_fitness = 0.0;
  std::string best_key;
};

struct SearchResult {
  FrontierReport frontier;
  std::vector<ScoredProgram> evaluated;  // in order of first evaluation
  std::vector<GenerationStats> generations;
  std::size_t n_trainings = 0;
};

using ProgressFn = std::function<void(const GenerationStats&)>;

/// Scores a program with inner-loop training (the function evolve uses for fitness).
ScoredProgram score_program(const ExprTree& tree, const Dataset& data, const SearchConfig& cfg);

SearchResult evolve(const Dataset& data, const SearchConfig& cfg, const ProgressFn& progress = {});

}  // namespace share
