#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "heml/matrix.hpp"

namespace heml {

// Per-query positive/negative key sets. Indices are logical dictionary
// positions (0 = oldest entry). Past entries sharing the query's identity
// appear in neither set, and the query's own entry appears in neither set.
struct LabeledSets {
    EmbeddingMatrix positives;
    EmbeddingMatrix negatives;
    std::vector<std::size_t> positive_indices;
    std::vector<std::size_t> negative_indices;
};

// Fixed-capacity FIFO of encoded key features with identity labels. Each
// entry remembers the batch it arrived with so labeling can tell current
// keys from past ones. Enqueueing beyond capacity evicts the oldest entries.
class KeyDictionary {
  public:
    explicit KeyDictionary(std::size_t capacity, std::size_t dim);

    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    std::size_t count() const { return count_; }
    std::uint64_t current_batch_seq() const { return batch_seq_; }

    // Appends all rows of `keys` as one batch. Throws std::invalid_argument
    // if the batch is larger than the capacity or shapes disagree.
    void enqueue_batch(const EmbeddingMatrix& keys, const std::vector<IdentityLabel>& labels);

    // Logical access, position 0 = oldest surviving entry.
    std::span<const double> feature(std::size_t logical_index) const;
    IdentityLabel label(std::size_t logical_index) const;
    std::uint64_t batch_seq_of(std::size_t logical_index) const;
    bool is_current(std::size_t logical_index) const;

    // Labeling rule: negatives are every entry with a different
    // identity, past or current; positives are current-batch entries sharing
    // the query's identity, minus the query's own entry. Past same-identity
    // entries are left out entirely unless include_past_positives is set
    // (the "positives also at large" ablation), which pulls them back in as
    // positives. query_entry_index must point at a current-batch entry.
    LabeledSets label_dictionary(IdentityLabel query_label, std::size_t query_entry_index,
                                 bool include_past_positives = false) const;

    // Snapshot format: "MRID", u32 dim, u32 count, then count entries of
    // (dim float32 features, u32 label, u64 batch_seq), little-endian.
    void save_snapshot(std::ostream& out) const;
    void save_snapshot(const std::string& path) const;
    static KeyDictionary load_snapshot(std::istream& in, std::size_t capacity = 0);
    static KeyDictionary load_snapshot(const std::string& path, std::size_t capacity = 0);

  private:
    std::size_t physical(std::size_t logical_index) const {
        return (head_ + logical_index) % capacity_;
    }

    std::size_t capacity_;
    std::size_t dim_;
    std::size_t count_ = 0;
    std::size_t head_ = 0;  // physical slot of the oldest entry
    std::uint64_t batch_seq_ = 0;
    std::vector<double> features_;  // capacity x dim ring
    std::vector<IdentityLabel> labels_;
    std::vector<std::uint64_t> batch_seqs_;
};

}  // namespace heml
