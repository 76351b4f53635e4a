#pragma once

// Stochastic-block-model benchmark generator: planted communities with
// Gaussian feature clusters whose class means sit at an exact mutual
// distance (seeded orthonormal directions).  Edge and feature draws use one
// derived stream per row/node, so generation is deterministic for any thread
// count and the parallel and serial paths emit identical graphs.

#include <cstdint>

#include "gml/graph.hpp"

namespace gml {

struct SbmParams {
  int classes = 10;
  int nodes_per_class = 60;
  double p_in = 0.1;    // within-class edge probability
  double p_out = 0.01;  // cross-class edge probability
  int dim = 16;
  double separation = 4.0;  // pairwise distance between class means
  double feature_std = 1.0;
  int train_classes = 6;
  int val_classes = 2;
  int test_classes = 2;
  std::uint64_t seed = 7;
};

/// Generates the attributed graph: block community edges, features sampled
/// around the class means, contiguous class blocks, splits over ordered
/// class ids.  Throws DataError for invalid parameters (probabilities
/// outside [0,1], split counts not summing to `classes`, ...).
AttributedGraph generate_sbm(const SbmParams& params);
/// Serial reference; must produce a bitwise-identical graph.
AttributedGraph generate_sbm_serial(const SbmParams& params);

}  // namespace gml
