#include "gml/episodes.hpp"

#include <algorithm>
#include <string>

namespace gml {

namespace {

constexpr std::uint64_t kClassTag = 0x636c73u;
constexpr std::uint64_t kNodeTag = 0x6e6f64u;
constexpr std::uint64_t kFallbackTag = 0x666261u;

/// First `count` entries of a seeded partial Fisher-Yates over `pool`.
std::vector<int> draw_without_replacement(std::vector<int> pool, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

std::vector<int> class_pool(const std::vector<int>& labels, int cls) {
  std::vector<int> pool;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] == cls) pool.push_back(static_cast<int>(v));
  }
  return pool;
}

}  // namespace

TaskSet sample_task_set(const AttributedGraph& graph, const NoisyLabeling& labeling,
                        Split split, int n_way, int k_shot, int k_query, int m_tasks,
                        std::uint64_t seed) {
  if (n_way < 2) throw DataError("sample_task_set: n_way must be at least 2");
  if (k_shot < 1 || k_query < 1) throw DataError("sample_task_set: k_shot and k_query must be positive");
  if (m_tasks < 1) throw DataError("sample_task_set: m_tasks must be positive");
  if (labeling.labels.size() != graph.num_nodes) {
    throw DataError("sample_task_set: labeling does not match graph");
  }
  const std::vector<int>& split_cls = graph.split_classes(static_cast<int>(split));
  if (split_cls.size() < static_cast<std::size_t>(n_way)) {
    throw DataError("sample_task_set: split has " + std::to_string(split_cls.size()) +
                    " classes, need " + std::to_string(n_way));
  }

  Rng cls_rng(derive_seed(seed, kClassTag));
  Rng node_rng(derive_seed(seed, kNodeTag));
  Rng fallback_rng(derive_seed(seed, kFallbackTag));

  const std::vector<int> chosen =
      draw_without_replacement(split_cls, static_cast<std::size_t>(n_way), cls_rng);

  const std::size_t per_task = static_cast<std::size_t>(k_shot) + k_query;
  std::vector<std::vector<int>> pools(chosen.size());
  std::vector<std::vector<int>> remaining(chosen.size());
  std::vector<std::size_t> cursor(chosen.size(), 0);
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    pools[c] = class_pool(labeling.labels, chosen[c]);
    if (pools[c].size() < per_task) {
      throw DataError("sample_task_set: class " + std::to_string(chosen[c]) + " has " +
                      std::to_string(pools[c].size()) + " weakly-labeled nodes, need " +
                      std::to_string(per_task));
    }
    remaining[c] = pools[c];
    node_rng.shuffle(remaining[c]);
  }

  TaskSet ts;
  ts.tasks.resize(m_tasks);
  for (int t = 0; t < m_tasks; ++t) {
    FewShotTask& task = ts.tasks[t];
    task.class_list = chosen;
    task.k_shot = k_shot;
    task.k_query = k_query;
    task.support.reserve(chosen.size() * k_shot);
    task.query.reserve(chosen.size() * k_query);
    for (std::size_t c = 0; c < chosen.size(); ++c) {
      std::vector<int> picks;
      picks.reserve(per_task);
      while (picks.size() < per_task && cursor[c] < remaining[c].size()) {
        picks.push_back(remaining[c][cursor[c]++]);
      }
      while (picks.size() < per_task) {  // pool exhausted: reuse across tasks
        const int candidate = pools[c][fallback_rng.uniform_index(pools[c].size())];
        if (std::find(picks.begin(), picks.end(), candidate) == picks.end()) {
          picks.push_back(candidate);
        }
      }
      for (int j = 0; j < k_shot; ++j) task.support.push_back({picks[j], chosen[c]});
      for (int j = 0; j < k_query; ++j) task.query.push_back({picks[k_shot + j], chosen[c]});
    }
  }
  return ts;
}

InterpolatedEpisode build_interpolation_groups(const TaskSet& task_set) {
  if (task_set.tasks.empty()) throw DataError("build_interpolation_groups: empty task set");
  const FewShotTask& first = task_set.tasks.front();
  for (const FewShotTask& t : task_set.tasks) {
    if (t.class_list != first.class_list || t.k_shot != first.k_shot ||
        t.k_query != first.k_query) {
      throw DataError("build_interpolation_groups: tasks are not aligned");
    }
  }
  const int m = task_set.m_tasks();
  InterpolatedEpisode ep;
  ep.class_list = first.class_list;
  ep.m_tasks = m;
  auto regroup = [&](Subset role, int per_class, auto member_of) {
    std::vector<InterpolationGroup>& out =
        role == Subset::support ? ep.support_groups : ep.query_groups;
    for (int c = 0; c < first.n_way(); ++c) {
      for (int j = 0; j < per_class; ++j) {
        InterpolationGroup g;
        g.role = role;
        g.shared_label = first.class_list[c];
        g.members.reserve(m);
        for (int t = 0; t < m; ++t) {
          const TaskMember& mem = member_of(task_set.tasks[t], c * per_class + j);
          if (mem.label != g.shared_label) {
            throw DataError("build_interpolation_groups: slot labels disagree");
          }
          g.members.push_back(mem.node);
        }
        out.push_back(std::move(g));
      }
    }
  };
  regroup(Subset::support, first.k_shot,
          [](const FewShotTask& t, int i) -> const TaskMember& { return t.support[i]; });
  regroup(Subset::query, first.k_query,
          [](const FewShotTask& t, int i) -> const TaskMember& { return t.query[i]; });
  return ep;
}

FewShotTask sample_meta_test_task(const AttributedGraph& graph, int n_way, int k_shot,
                                  int k_query, std::uint64_t seed) {
  if (n_way < 2) throw DataError("sample_meta_test_task: n_way must be at least 2");
  if (k_shot < 1 || k_query < 1) {
    throw DataError("sample_meta_test_task: k_shot and k_query must be positive");
  }
  const std::vector<int>& split_cls = graph.splits.test_classes;
  if (split_cls.size() < static_cast<std::size_t>(n_way)) {
    throw DataError("sample_meta_test_task: test split has too few classes");
  }
  Rng cls_rng(derive_seed(seed, kClassTag));
  Rng node_rng(derive_seed(seed, kNodeTag));
  const std::vector<int> chosen =
      draw_without_replacement(split_cls, static_cast<std::size_t>(n_way), cls_rng);
  const std::size_t per_task = static_cast<std::size_t>(k_shot) + k_query;

  FewShotTask task;
  task.class_list = chosen;
  task.k_shot = k_shot;
  task.k_query = k_query;
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    std::vector<int> pool = class_pool(graph.labels, chosen[c]);
    if (pool.size() < per_task) {
      throw DataError("sample_meta_test_task: class " + std::to_string(chosen[c]) +
                      " has too few nodes");
    }
    const std::vector<int> picks = draw_without_replacement(std::move(pool), per_task, node_rng);
    for (int j = 0; j < k_shot; ++j) task.support.push_back({picks[j], chosen[c]});
    for (int j = 0; j < k_query; ++j) task.query.push_back({picks[k_shot + j], chosen[c]});
  }
  return task;
}

}  // namespace gml
