// Task sampling, slot-aligned interpolation groups, and the clean meta-test
// task.  Fixtures are small SBM graphs; weak labelings are either the clean
// labels or a seeded corruption.

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"
#include "gml/episodes.hpp"
#include "gml/noise.hpp"
#include "gml/sbm.hpp"

using namespace gml;

namespace {

AttributedGraph episode_fixture(int nodes_per_class = 12, std::uint64_t seed = 13) {
  SbmParams params;
  params.classes = 6;
  params.nodes_per_class = nodes_per_class;
  params.dim = 4;
  params.train_classes = 3;
  params.val_classes = 1;
  params.test_classes = 2;
  params.seed = seed;
  return generate_sbm(params);
}

NoisyLabeling clean_labeling(const AttributedGraph& g) {
  NoisyLabeling l;
  l.labels = g.labels;
  l.flipped.assign(g.labels.size(), 0);
  return l;
}

std::vector<int> support_nodes(const FewShotTask& t) {
  std::vector<int> out;
  for (const TaskMember& m : t.support) out.push_back(m.node);
  return out;
}

}  // namespace

TEST_CASE("sample_task_set: shapes, class-major layout, label consistency") {
  // 24 nodes/class: weak pools stay comfortably above K + K' = 7 after the
  // eps=0.3 corruption.
  const AttributedGraph g = episode_fixture(24);
  const NoisyLabeling weak = corrupt_labels(g, NoiseKind::symmetric, 0.3, 41);
  const TaskSet ts = sample_task_set(g, weak, Split::train, 2, 3, 4, 3, 1001);

  REQUIRE(ts.m_tasks() == 3);
  REQUIRE(ts.class_list().size() == 2);
  for (const int c : ts.class_list()) {
    CHECK(std::count(g.splits.train_classes.begin(), g.splits.train_classes.end(), c) == 1);
  }
  for (const FewShotTask& t : ts.tasks) {
    CHECK(t.class_list == ts.class_list());
    REQUIRE(t.support.size() == 2 * 3);
    REQUIRE(t.query.size() == 2 * 4);
    CHECK(t.k_shot == 3);
    CHECK(t.k_query == 4);
    for (int c = 0; c < 2; ++c) {
      for (int j = 0; j < 3; ++j) {
        const TaskMember& m = t.support[c * 3 + j];
        CHECK(m.label == t.class_list[c]);
        // The member's weak label really is the class it was drawn for.
        CHECK(weak.labels[m.node] == m.label);
      }
      for (int j = 0; j < 4; ++j) {
        const TaskMember& m = t.query[c * 4 + j];
        CHECK(m.label == t.class_list[c]);
        CHECK(weak.labels[m.node] == m.label);
      }
    }
    // Support and query never share a node within one task.
    const std::vector<int> sup_vec = support_nodes(t);
    const std::set<int> sup(sup_vec.begin(), sup_vec.end());
    for (const TaskMember& m : t.query) CHECK(sup.count(m.node) == 0);
  }
}

TEST_CASE("sample_task_set is a pure function of the seed") {
  const AttributedGraph g = episode_fixture();
  const NoisyLabeling weak = clean_labeling(g);
  const TaskSet a = sample_task_set(g, weak, Split::train, 2, 2, 2, 2, 555);
  const TaskSet b = sample_task_set(g, weak, Split::train, 2, 2, 2, 2, 555);
  REQUIRE(a.tasks.size() == b.tasks.size());
  for (std::size_t t = 0; t < a.tasks.size(); ++t) {
    CHECK(a.tasks[t].class_list == b.tasks[t].class_list);
    CHECK(support_nodes(a.tasks[t]) == support_nodes(b.tasks[t]));
  }
  const TaskSet c = sample_task_set(g, weak, Split::train, 2, 2, 2, 2, 556);
  bool differs = a.tasks[0].class_list != c.tasks[0].class_list ||
                 support_nodes(a.tasks[0]) != support_nodes(c.tasks[0]);
  CHECK(differs);
}

TEST_CASE("sample_task_set validates its arguments") {
  const AttributedGraph g = episode_fixture();
  const NoisyLabeling weak = clean_labeling(g);
  CHECK_THROWS_AS(sample_task_set(g, weak, Split::train, 1, 2, 2, 1, 0), DataError);
  CHECK_THROWS_AS(sample_task_set(g, weak, Split::train, 2, 0, 2, 1, 0), DataError);
  CHECK_THROWS_AS(sample_task_set(g, weak, Split::train, 2, 2, 0, 1, 0), DataError);
  CHECK_THROWS_AS(sample_task_set(g, weak, Split::train, 2, 2, 2, 0, 0), DataError);
  // Val split has one class: any n_way >= 2 must fail.
  CHECK_THROWS_AS(sample_task_set(g, weak, Split::val, 2, 2, 2, 1, 0), DataError);
  // Labeling length mismatch.
  NoisyLabeling short_l = weak;
  short_l.labels.pop_back();
  CHECK_THROWS_AS(sample_task_set(g, short_l, Split::train, 2, 2, 2, 1, 0), DataError);
  // A class pool smaller than K + K'.
  CHECK_THROWS_AS(sample_task_set(g, weak, Split::train, 2, 7, 6, 1, 0), DataError);
}

TEST_CASE("pool exhaustion falls back to reuse without within-task duplicates") {
  // 12 nodes per class, K + K' = 6: tasks 1-2 fit in the pool, tasks 3-4 are
  // fallback draws.
  const AttributedGraph g = episode_fixture(12);
  const NoisyLabeling weak = clean_labeling(g);
  const int m = 4;
  const TaskSet ts = sample_task_set(g, weak, Split::train, 2, 2, 4, m, 77);

  for (const FewShotTask& t : ts.tasks) {
    for (int c = 0; c < t.n_way(); ++c) {
      std::vector<int> nodes;
      for (int j = 0; j < t.k_shot; ++j) nodes.push_back(t.support[c * t.k_shot + j].node);
      for (int j = 0; j < t.k_query; ++j) nodes.push_back(t.query[c * t.k_query + j].node);
      std::set<int> unique(nodes.begin(), nodes.end());
      // Never a duplicate node within one task, even after fallback.
      CHECK(unique.size() == nodes.size());
    }
  }

  // The first two tasks together consume each class pool exactly.
  for (int c = 0; c < 2; ++c) {
    std::set<int> consumed;
    for (int t = 0; t < 2; ++t) {
      const FewShotTask& task = ts.tasks[t];
      for (int j = 0; j < task.k_shot; ++j) consumed.insert(task.support[c * task.k_shot + j].node);
      for (int j = 0; j < task.k_query; ++j) consumed.insert(task.query[c * task.k_query + j].node);
    }
    CHECK(consumed.size() == 12);
    for (const int v : consumed) CHECK(g.labels[v] == ts.class_list()[c]);
  }
}

TEST_CASE("no fallback when the pool covers all tasks") {
  // 24 nodes per class, M * (K + K') = 4 * 6 = 24: all draws come from the
  // one shuffled pool, so no node repeats anywhere in the task set.
  const AttributedGraph g = episode_fixture(24);
  const NoisyLabeling weak = clean_labeling(g);
  const TaskSet ts = sample_task_set(g, weak, Split::train, 2, 2, 4, 4, 88);
  std::vector<int> all;
  for (const FewShotTask& t : ts.tasks) {
    for (const TaskMember& m : t.support) all.push_back(m.node);
    for (const TaskMember& m : t.query) all.push_back(m.node);
  }
  std::set<int> unique(all.begin(), all.end());
  CHECK(unique.size() == all.size());
}

TEST_CASE("build_interpolation_groups aligns slots across tasks") {
  const AttributedGraph g = episode_fixture();
  const NoisyLabeling weak = corrupt_labels(g, NoiseKind::symmetric, 0.2, 5);
  const TaskSet ts = sample_task_set(g, weak, Split::train, 3, 2, 3, 4, 2023);
  const InterpolatedEpisode ep = build_interpolation_groups(ts);

  CHECK(ep.class_list == ts.class_list());
  CHECK(ep.m_tasks == 4);
  REQUIRE(ep.support_groups.size() == 3 * 2);
  REQUIRE(ep.query_groups.size() == 3 * 3);

  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < 2; ++j) {
      const InterpolationGroup& grp = ep.support_groups[c * 2 + j];
      CHECK(grp.role == Subset::support);
      CHECK(grp.shared_label == ep.class_list[c]);
      REQUIRE(grp.members.size() == 4);
      for (int t = 0; t < 4; ++t) {
        // Member t is exactly the (c, j) support slot of task t.
        CHECK(grp.members[t] == ts.tasks[t].support[c * 2 + j].node);
      }
    }
    for (int j = 0; j < 3; ++j) {
      const InterpolationGroup& grp = ep.query_groups[c * 3 + j];
      CHECK(grp.role == Subset::query);
      CHECK(grp.shared_label == ep.class_list[c]);
      for (int t = 0; t < 4; ++t) {
        CHECK(grp.members[t] == ts.tasks[t].query[c * 3 + j].node);
      }
    }
  }
}

TEST_CASE("build_interpolation_groups with M=1 wraps each member singly") {
  const AttributedGraph g = episode_fixture();
  const NoisyLabeling weak = clean_labeling(g);
  const TaskSet ts = sample_task_set(g, weak, Split::train, 2, 2, 2, 1, 3);
  const InterpolatedEpisode ep = build_interpolation_groups(ts);
  REQUIRE(ep.support_groups.size() == 4);
  for (std::size_t i = 0; i < ep.support_groups.size(); ++i) {
    REQUIRE(ep.support_groups[i].members.size() == 1);
    CHECK(ep.support_groups[i].members[0] == ts.tasks[0].support[i].node);
  }
}

TEST_CASE("build_interpolation_groups rejects misaligned task sets") {
  const AttributedGraph g = episode_fixture();
  const NoisyLabeling weak = clean_labeling(g);
  TaskSet ts = sample_task_set(g, weak, Split::train, 2, 2, 2, 2, 10);

  SUBCASE("empty set") {
    TaskSet empty;
    CHECK_THROWS_AS(build_interpolation_groups(empty), DataError);
  }
  SUBCASE("class lists differ") {
    std::swap(ts.tasks[1].class_list[0], ts.tasks[1].class_list[1]);
    CHECK_THROWS_AS(build_interpolation_groups(ts), DataError);
  }
  SUBCASE("slot label disagrees") {
    ts.tasks[1].support[0].label = ts.tasks[1].class_list[1];
    CHECK_THROWS_AS(build_interpolation_groups(ts), DataError);
  }
  SUBCASE("shot counts differ") {
    ts.tasks[1].k_shot += 1;
    CHECK_THROWS_AS(build_interpolation_groups(ts), DataError);
  }
}

TEST_CASE("sample_meta_test_task draws clean labels from the test split") {
  const AttributedGraph g = episode_fixture(15);
  const FewShotTask t = sample_meta_test_task(g, 2, 1, 5, 321);
  REQUIRE(t.class_list.size() == 2);
  for (const int c : t.class_list) {
    CHECK(std::count(g.splits.test_classes.begin(), g.splits.test_classes.end(), c) == 1);
  }
  std::vector<int> all;
  for (const TaskMember& m : t.support) {
    CHECK(m.label == g.labels[m.node]);  // clean ground truth, not a weak label
    all.push_back(m.node);
  }
  for (const TaskMember& m : t.query) {
    CHECK(m.label == g.labels[m.node]);
    all.push_back(m.node);
  }
  std::set<int> unique(all.begin(), all.end());
  CHECK(unique.size() == all.size());  // strict without-replacement, no fallback
}

TEST_CASE("sample_meta_test_task varies with the seed and validates inputs") {
  const AttributedGraph g = episode_fixture(15);
  std::set<std::vector<int>> supports;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    supports.insert(support_nodes(sample_meta_test_task(g, 2, 2, 3, seed)));
  }
  CHECK(supports.size() >= 19);  // draws are distinct across nearly all seeds

  CHECK_THROWS_AS(sample_meta_test_task(g, 3, 1, 1, 0), DataError);  // test split has 2 classes
  CHECK_THROWS_AS(sample_meta_test_task(g, 1, 1, 1, 0), DataError);
  CHECK_THROWS_AS(sample_meta_test_task(g, 2, 0, 1, 0), DataError);
  CHECK_THROWS_AS(sample_meta_test_task(g, 2, 1, 0, 0), DataError);
  CHECK_THROWS_AS(sample_meta_test_task(g, 2, 8, 8, 0), DataError);  // 16 > 15 per class
}

TEST_CASE("class draws are roughly uniform across seeds") {
  const AttributedGraph g = episode_fixture();
  const NoisyLabeling weak = clean_labeling(g);
  std::vector<int> counts(3, 0);
  const int trials = 600;
  for (int s = 0; s < trials; ++s) {
    const TaskSet ts =
        sample_task_set(g, weak, Split::train, 2, 1, 1, 1, static_cast<std::uint64_t>(s));
    for (const int c : ts.class_list()) counts[static_cast<std::size_t>(c)] += 1;
  }
  // Each of the 3 train classes appears in 2-of-3 draws: expect 400 each.
  for (const int c : counts) {
    CHECK(c > 340);
    CHECK(c < 460);
  }
}
