#include "share/gp.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>
#include <unordered_map>

#include "share/error.hpp"
#include "share/io.hpp"

namespace share {

void SearchConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::ConfigError, fmt::format("{} must lie in [0, 1]", name));
  };
  prob(p_crossover, "p_crossover");
  prob(p_subtree_mutation, "p_subtree_mutation");
  prob(p_point_mutation, "p_point_mutation");
  prob(p_hoist_mutation, "p_hoist_mutation");
  prob(p_point_replace, "p_point_replace");
  if (p_crossover + p_subtree_mutation + p_point_mutation + p_hoist_mutation > 1.0 + 1e-12) {
    throw Error(ErrorCode::ConfigError, "operator probabilities sum to more than 1");
  }
  if (population_size < 1 || generations < 1 || tournament_size < 1 || max_init_depth < 1) {
    throw Error(ErrorCode::ConfigError, "population, generations, tournament size and depth must be positive");
  }
  if (parsimony_coefficient < 0.0) throw Error(ErrorCode::ConfigError, "parsimony_coefficient must be >= 0");
}

namespace {

const BinaryOp kSearchOps[] = {BinaryOp::Add, BinaryOp::Mul, BinaryOp::Div};

template <class T>
T take_random(std::mt19937_64& rng, std::vector<T>& v) {
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  const std::size_t i = pick(rng);
  T out = v[i];
  v.erase(v.begin() + static_cast<long>(i));
  return out;
}

enum class Choice { Add, Mul, Div, Shape, Var };

}  // namespace

Node grow_subtree(std::mt19937_64& rng, const VarSet& pool_set, std::size_t max_depth, bool parent_is_shape) {
  if (pool_set.empty()) throw Error(ErrorCode::InvalidArgument, "cannot grow a tree without variables");
  std::vector<std::size_t> pool(pool_set.begin(), pool_set.end());
  struct Grower {
    std::mt19937_64& rng;
    std::vector<std::size_t>& pool;

    Node run(std::size_t depth, bool parent_is_shape) {
      std::vector<Choice> kinds;
      if (pool.size() >= 2 && depth >= 2) {
        kinds.push_back(Choice::Add);
        kinds.push_back(Choice::Mul);
        kinds.push_back(Choice::Div);
      }
      if (!parent_is_shape && depth >= 2) kinds.push_back(Choice::Shape);
      kinds.push_back(Choice::Var);
      std::uniform_int_distribution<std::size_t> pick(0, kinds.size() - 1);
      const Choice choice = kinds[pick(rng)];
      if (choice == Choice::Var) return Node::variable(take_random(rng, pool));
      if (choice == Choice::Shape) return Node::shape(0, run(depth - 1, true));
      const BinaryOp op = choice == Choice::Add ? BinaryOp::Add : choice == Choice::Mul ? BinaryOp::Mul : BinaryOp::Div;
      // Hold one variable back so the right operand is never empty.
      const std::size_t reserved = take_random(rng, pool);
      Node lhs = run(depth - 1, false);
      pool.push_back(reserved);
      std::sort(pool.begin(), pool.end());
      Node rhs = run(depth - 1, false);
      return Node::binary(op, std::move(lhs), std::move(rhs));
    }
  };
  Grower g{rng, pool};
  Node out = g.run(max_depth, parent_is_shape);
  renumber_shapes(out);
  return out;
}

ExprTree random_grow(std::mt19937_64& rng, std::size_t n_vars, std::size_t max_depth,
                     const std::vector<std::string>& names) {
  if (n_vars == 0) throw Error(ErrorCode::InvalidArgument, "need at least one variable");
  if (!names.empty() && names.size() != n_vars) throw Error(ErrorCode::InvalidArgument, "name count mismatch");
  VarSet pool;
  for (std::size_t i = 0; i < n_vars; ++i) pool.insert(i);
  ExprTree tree;
  tree.root = grow_subtree(rng, pool, std::max<std::size_t>(1, max_depth), false);
  if (names.empty()) {
    for (std::size_t i = 0; i < n_vars; ++i) tree.var_names.push_back(fmt::format("x{}", i + 1));
  } else {
    tree.var_names = names;
  }
  return tree;
}

std::size_t pick_node(std::mt19937_64& rng, const Node& root, bool weighted) {
  const std::vector<const Node*> nodes = preorder(root);
  if (!weighted || nodes.size() == 1) {
    std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
    return pick(rng);
  }
  std::vector<double> w;
  w.reserve(nodes.size());
  for (const Node* n : nodes) w.push_back(n->is_leaf() ? 0.1 : 0.9);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return pick(rng);
}

namespace {

VarSet all_vars(std::size_t n) {
  VarSet s;
  for (std::size_t i = 0; i < n; ++i) s.insert(i);
  return s;
}

std::size_t tree_vars(const ExprTree& t) {
  std::size_t n = t.n_vars();
  for (std::size_t v : active_vars(t.root)) n = std::max(n, v + 1);
  return n;
}

// Variables that may appear in whatever replaces the subtree at `site`.
VarSet allowed_for(const ExprTree& parent, const Node& site) {
  VarSet allowed = active_vars(site);
  const VarSet used = active_vars(parent.root);
  for (std::size_t v : all_vars(tree_vars(parent))) {
    if (!used.count(v)) allowed.insert(v);
  }
  return allowed;
}

bool subset_of(const VarSet& a, const VarSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

bool parent_is_shape(const Node& root, std::size_t index) {
  const std::vector<std::size_t> parents = parent_indices(root);
  if (parents[index] == std::numeric_limits<std::size_t>::max()) return false;
  return preorder(root)[parents[index]]->kind == NodeKind::Shape;
}

}  // namespace

std::optional<ExprTree> crossover(std::mt19937_64& rng, const ExprTree& parent, const ExprTree& donor, bool weighted) {
  ExprTree child = parent;
  const std::size_t site = pick_node(rng, child.root, weighted);
  Node* target = preorder_mut(child.root)[site];
  const VarSet allowed = allowed_for(parent, *target);

  const std::vector<const Node*> donor_nodes = preorder(donor.root);
  std::vector<std::size_t> admissible;
  std::vector<double> weights;
  for (std::size_t i = 0; i < donor_nodes.size(); ++i) {
    if (subset_of(active_vars(*donor_nodes[i]), allowed)) {
      admissible.push_back(i);
      weights.push_back(weighted ? (donor_nodes[i]->is_leaf() ? 0.1 : 0.9) : 1.0);
    }
  }
  if (admissible.empty()) return std::nullopt;
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  *target = *donor_nodes[admissible[pick(rng)]];
  collapse_shape_chains(child.root);
  return child;
}

ExprTree subtree_mutation(std::mt19937_64& rng, const ExprTree& parent, std::size_t max_depth, bool weighted) {
  ExprTree child = parent;
  const std::size_t site = pick_node(rng, child.root, weighted);
  const bool under_shape = parent_is_shape(child.root, site);
  Node* target = preorder_mut(child.root)[site];
  const VarSet allowed = allowed_for(parent, *target);
  *target = grow_subtree(rng, allowed, std::max<std::size_t>(1, max_depth), under_shape);
  collapse_shape_chains(child.root);
  return child;
}

ExprTree point_mutation(std::mt19937_64& rng, const ExprTree& parent, double p_replace) {
  ExprTree child = parent;
  std::bernoulli_distribution select(p_replace);
  std::vector<Node*> picked_vars;
  for (Node* n : preorder_mut(child.root)) {
    if (!select(rng)) continue;
    if (n->kind == NodeKind::Binary) {
      std::vector<BinaryOp> others;
      for (BinaryOp op : kSearchOps) {
        if (op != n->op) others.push_back(op);
      }
      std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
      n->op = others[pick(rng)];
    } else if (n->kind == NodeKind::Variable) {
      picked_vars.push_back(n);
    }
  }
  if (!picked_vars.empty()) {
    const VarSet used = active_vars(parent.root);
    std::vector<std::size_t> pool;
    for (const Node* n : picked_vars) pool.push_back(n->var);
    for (std::size_t v : all_vars(tree_vars(parent))) {
      if (!used.count(v)) pool.push_back(v);
    }
    std::sort(pool.begin(), pool.end());
    for (Node* n : picked_vars) n->var = take_random(rng, pool);
  }
  return child;
}

ExprTree hoist_mutation(std::mt19937_64& rng, const ExprTree& parent, bool weighted) {
  ExprTree child = parent;
  const std::size_t site = pick_node(rng, child.root, weighted);
  Node* target = preorder_mut(child.root)[site];
  const std::size_t inner = pick_node(rng, *target, weighted);
  Node hoisted = *preorder(*target)[inner];
  *target = std::move(hoisted);
  collapse_shape_chains(child.root);
  return child;
}

std::size_t tournament(std::mt19937_64& rng, const std::vector<double>& fitness, std::size_t k) {
  if (fitness.empty() || k == 0) throw Error(ErrorCode::InvalidArgument, "tournament needs contestants");
  std::uniform_int_distribution<std::size_t> pick(0, fitness.size() - 1);
  std::size_t best = pick(rng);
  for (std::size_t i = 1; i < k; ++i) {
    const std::size_t c = pick(rng);
    if (fitness[c] < fitness[best]) best = c;
  }
  return best;
}

std::uint64_t program_seed(const std::string& canonical_key, std::uint64_t run_seed) {
  const std::string digest = sha256_hex(canonical_key);
  return std::stoull(digest.substr(0, 16), nullptr, 16) ^ run_seed;
}

FrontierReport best_per_shape_count(const std::vector<ScoredProgram>& evaluated) {
  FrontierReport report;
  for (const ScoredProgram& p : evaluated) {
    if (p.failed() || !std::isfinite(p.val_r2) || !std::isfinite(p.val_mse)) continue;
    auto it = report.rows.find(p.n_shapes);
    if (it == report.rows.end()) {
      report.rows.emplace(p.n_shapes, p);
      continue;
    }
    const ScoredProgram& cur = it->second;
    const bool better = p.val_r2 > cur.val_r2 ||
                        (p.val_r2 == cur.val_r2 &&
                         (p.size < cur.size || (p.size == cur.size && p.canonical_key < cur.canonical_key)));
    if (better) it->second = p;
  }
  return report;
}

ScoredProgram score_program(const ExprTree& tree, const Dataset& data, const SearchConfig& cfg) {
  ScoredProgram sp;
  sp.tree = canonicalize(tree);
  sp.canonical_key = render(sp.tree);
  const StructuralMetrics m = structural_metrics(sp.tree);
  sp.size = m.size;
  sp.depth = m.depth;
  sp.n_shapes = m.n_shapes;
  sp.train_seed = program_seed(sp.canonical_key, cfg.seed);
  try {
    const CompiledModel model = compile(sp.tree, sp.train_seed, cfg.compile);
    TrainConfig inner = cfg.inner;
    inner.seed = sp.train_seed;
    TrainResult res = train(model, data.X_train(), data.y_train(), data.X_val(), data.y_val(), inner);
    sp.val_mse = res.val_mse;
    sp.val_r2 = res.val_r2;
    sp.fitted = std::make_shared<const CompiledModel>(std::move(res.model));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateTarget || e.code() == ErrorCode::ConfigError) throw;
    sp.error = e.what();
    sp.val_mse = std::numeric_limits<double>::infinity();
    sp.val_r2 = -std::numeric_limits<double>::infinity();
  }
  sp.fitness = sp.failed() ? std::numeric_limits<double>::infinity()
                           : sp.val_mse + cfg.parsimony_coefficient * static_cast<double>(sp.size);
  return sp;
}

namespace {

void run_parallel(std::size_t n_jobs, std::size_t n_threads, const std::function<void(std::size_t)>& job) {
  n_threads = std::min(n_threads, n_jobs);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n_jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n_threads);
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n_jobs; i = next++) job(i);
      } catch (...) {
        errors[t] = std::current_exception();
        next = n_jobs;
      }
    });
  }
  for (std::thread& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

SearchResult evolve(const Dataset& data, const SearchConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (data.n_train == 0 || data.n_train >= data.rows()) {
    throw Error(ErrorCode::InvalidArgument, "dataset needs both a training and a validation split");
  }
  const Eigen::VectorXd yv = data.y_val();
  if ((yv.array() - yv.mean()).square().sum() == 0.0) {
    throw Error(ErrorCode::DegenerateTarget, "validation target has zero variance");
  }
  const std::size_t n_vars = data.column_names.size();
  const std::size_t threads =
      cfg.threads > 0 ? cfg.threads : std::max<std::size_t>(1, std::thread::hardware_concurrency());

  SearchResult result;
  std::unordered_map<std::string, std::size_t> cache;
  std::mt19937_64 rng(cfg.seed);

  std::vector<ExprTree> population;
  population.reserve(cfg.population_size);
  for (std::size_t i = 0; i < cfg.population_size; ++i) {
    population.push_back(random_grow(rng, n_vars, cfg.max_init_depth, data.column_names));
  }

  std::vector<double> fitness;
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    if (gen > 0) {
      std::vector<ExprTree> next;
      next.reserve(cfg.population_size);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double c1 = cfg.p_crossover;
      const double c2 = c1 + cfg.p_subtree_mutation;
      const double c3 = c2 + cfg.p_hoist_mutation;
      const double c4 = c3 + cfg.p_point_mutation;
      for (std::size_t i = 0; i < cfg.population_size; ++i) {
        const ExprTree& parent = population[tournament(rng, fitness, cfg.tournament_size)];
        const double r = u(rng);
        if (r < c1) {
          const ExprTree& donor = population[tournament(rng, fitness, cfg.tournament_size)];
          std::optional<ExprTree> child = crossover(rng, parent, donor, cfg.weighted_subtree_selection);
          next.push_back(child ? std::move(*child) : parent);
        } else if (r < c2) {
          next.push_back(subtree_mutation(rng, parent, cfg.max_init_depth, cfg.weighted_subtree_selection));
        } else if (r < c3) {
          next.push_back(hoist_mutation(rng, parent, cfg.weighted_subtree_selection));
        } else if (r < c4) {
          next.push_back(point_mutation(rng, parent, cfg.p_point_replace));
        } else {
          next.push_back(parent);
        }
      }
      population = std::move(next);
    }

    // Train each canonical form at most once per run.
    std::vector<std::string> keys;
    keys.reserve(population.size());
    std::vector<std::size_t> fresh;
    std::unordered_map<std::string, bool> queued;
    for (std::size_t i = 0; i < population.size(); ++i) {
      keys.push_back(canonical_render(population[i]));
      if (!cache.count(keys.back()) && queued.emplace(keys.back(), true).second) fresh.push_back(i);
    }
    std::vector<ScoredProgram> scored(fresh.size());
    run_parallel(fresh.size(), threads, [&](std::size_t j) { scored[j] = score_program(population[fresh[j]], data, cfg); });
    for (ScoredProgram& sp : scored) {
      cache.emplace(sp.canonical_key, result.evaluated.size());
      result.evaluated.push_back(std::move(sp));
    }
    result.n_trainings += fresh.size();

    fitness.assign(population.size(), 0.0);
    GenerationStats stats;
    stats.generation = gen;
    stats.new_trainings = fresh.size();
    stats.cache_size = cache.size();
    stats.best_fitness = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < population.size(); ++i) {
      const ScoredProgram& sp = result.evaluated[cache.at(keys[i])];
      fitness[i] = sp.fitness;
      if (sp.fitness < stats.best_fitness || stats.best_key.empty()) {
        stats.best_fitness = sp.fitness;
        stats.best_key = sp.canonical_key;
      }
    }
    result.generations.push_back(stats);
    if (progress) progress(stats);
  }
  result.frontier = best_per_shape_count(result.evaluated);
  return result;
}

}  // namespace share
