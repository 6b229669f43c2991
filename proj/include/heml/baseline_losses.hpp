#pragma once

#include <span>
#include <string>
#include <vector>

#include "heml/distance.hpp"
#include "heml/matrix.hpp"

namespace heml {

struct TripletConfig {
    double margin = 0.3;
    enum class Mining { all, hard } mining = Mining::all;
};

struct RankedListConfig {
    double alpha = 1.2;
    double beta = 0.4;
};

struct InfoNceConfig {
    double temperature = 0.07;
    enum class Variant { single, multi_in, multi_out } variant = Variant::single;
    bool hard_mining = false;
    int hard_count = 15;
};

// Hinge on representative distances: max(d_p - d_n + margin, 0).
// mining==all uses mean distances; mining==hard uses the farthest positive
// and the nearest negative.
double triplet_loss(std::span<const double> query,
                    const EmbeddingMatrix& positives,
                    const EmbeddingMatrix& negatives,
                    const TripletConfig& cfg,
                    Metric metric = Metric::euclidean);

// log(1 + sum_n exp(q.n - q.p)) over the hardest positive (lowest q.p) and
// the hard_count most-similar negatives by dot product. This is one concrete
// reading of the cited N-pair construction restricted to tripletwise use;
// swap the body, keep the interface, if another reading is wanted.
double npair_loss(std::span<const double> query,
                  const EmbeddingMatrix& positives,
                  const EmbeddingMatrix& negatives,
                  int hard_count);

// Mean hinge (d_pq - (alpha - beta)) over positives beyond alpha - beta plus
// mean hinge (alpha - d_nq) over negatives inside alpha. Per-set means follow
// the weighting-free variant of the cited construction.
double ranked_list_loss(std::span<const double> query,
                        const EmbeddingMatrix& positives,
                        const EmbeddingMatrix& negatives,
                        const RankedListConfig& cfg,
                        Metric metric = Metric::euclidean);

// Softmax contrastive loss over dot-product similarities. Variant single
// requires exactly one positive; the multi variants differ in whether the
// sum over positives sits inside or outside the log. With hard_mining the
// key set is reduced to the positives plus the hard_count most-similar
// negatives.
double infonce_loss(std::span<const double> query,
                    const EmbeddingMatrix& positives,
                    const EmbeddingMatrix& negatives,
                    const InfoNceConfig& cfg);

// Query-side gradients of the losses above, for the training loop (keys are
// detached). Each returns the loss and writes d(loss)/d(query).
double triplet_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                         const EmbeddingMatrix& negatives, const TripletConfig& cfg,
                         Metric metric, std::span<double> query_grad);
double npair_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                       const EmbeddingMatrix& negatives, int hard_count,
                       std::span<double> query_grad);
double ranked_list_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                             const EmbeddingMatrix& negatives, const RankedListConfig& cfg,
                             Metric metric, std::span<double> query_grad);
double infonce_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                         const EmbeddingMatrix& negatives, const InfoNceConfig& cfg,
                         std::span<double> query_grad);

}  // namespace heml
