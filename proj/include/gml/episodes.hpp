#pragma once

// Episodic task construction: M parallel N-way-K-shot tasks over the same
// sampled classes, regrouped slot-by-slot into interpolation groups.  All
// sampling is driven by named sub-streams of one seed, so a task set is a
// pure function of (graph, labeling, seed).

#include <cstdint>
#include <vector>

#include "gml/graph.hpp"
#include "gml/noise.hpp"

namespace gml {

enum class Subset { support, query };

enum class Split { train = 0, val = 1, test = 2 };

struct TaskMember {
  int node = -1;
  int label = -1;  // weak label under the labeling the task was drawn from
};

/// One N-way K-shot task.  support (N*K) and query (N*K') are class-major:
/// block c holds the members of class_list[c], in draw order.
struct FewShotTask {
  std::vector<int> class_list;
  std::vector<TaskMember> support;
  std::vector<TaskMember> query;
  int k_shot = 0;
  int k_query = 0;

  int n_way() const { return static_cast<int>(class_list.size()); }
};

/// M tasks over one shared class list.
struct TaskSet {
  std::vector<FewShotTask> tasks;
  const std::vector<int>& class_list() const { return tasks.front().class_list; }
  int m_tasks() const { return static_cast<int>(tasks.size()); }
};

/// One member node per task, all sharing a weak label (same class slot and
/// within-class index across the M tasks).
struct InterpolationGroup {
  std::vector<int> members;  // size M
  int shared_label = -1;
  Subset role = Subset::support;
};

struct InterpolatedEpisode {
  std::vector<int> class_list;
  std::vector<InterpolationGroup> support_groups;  // N*K, class-major
  std::vector<InterpolationGroup> query_groups;    // N*K'
  int m_tasks = 0;
};

/// Samples M aligned tasks from one split of a (weak) labeling.
///
/// Classes: N drawn uniformly without replacement from the split's class
/// list.  Nodes: per class, a seeded shuffle of the class pool is consumed
/// across tasks without replacement; once exhausted, further draws fall back
/// to uniform draws with replacement across tasks — but never duplicate a
/// node within one task.  Support and query are disjoint within a task.
///
/// Throws DataError if the split has fewer than N classes or any sampled
/// class has fewer than K + K' weakly-labeled nodes.
TaskSet sample_task_set(const AttributedGraph& graph, const NoisyLabeling& labeling,
                        Split split, int n_way, int k_shot, int k_query, int m_tasks,
                        std::uint64_t seed);

/// Slot-aligned regrouping of a task set: group (c, j) collects the j-th
/// member of class slot c from every task.  Returns N*K support and N*K'
/// query groups of M members each.
InterpolatedEpisode build_interpolation_groups(const TaskSet& task_set);

/// Single clean-label task from the test split (no fallback draws; support
/// and query disjoint).
FewShotTask sample_meta_test_task(const AttributedGraph& graph, int n_way, int k_shot,
                                  int k_query, std::uint64_t seed);

}  // namespace gml
