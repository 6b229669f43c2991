#include "heml/key_dictionary.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"

namespace heml {

KeyDictionary::KeyDictionary(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim) {
    if (capacity == 0 || dim == 0)
        throw std::invalid_argument("KeyDictionary: capacity and dim must be > 0");
    features_.resize(capacity * dim, 0.0);
    labels_.resize(capacity);
    batch_seqs_.resize(capacity, 0);
}

void KeyDictionary::enqueue_batch(const EmbeddingMatrix& keys,
                                  const std::vector<IdentityLabel>& labels) {
    if (keys.rows != labels.size())
        throw std::invalid_argument("enqueue_batch: keys.rows != labels length");
    if (keys.dim != dim_)
        throw std::invalid_argument("enqueue_batch: key dimension != dictionary dimension");
    if (keys.rows > capacity_)
        throw std::invalid_argument("enqueue_batch: batch larger than capacity");
    ++batch_seq_;
    for (std::size_t i = 0; i < keys.rows; ++i) {
        std::size_t slot;
        if (count_ < capacity_) {
            slot = (head_ + count_) % capacity_;
            ++count_;
        } else {
            // full: overwrite the oldest entry and advance the head
            slot = head_;
            head_ = (head_ + 1) % capacity_;
        }
        auto src = keys.row(i);
        std::copy(src.begin(), src.end(), features_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
        labels_[slot] = labels[i];
        batch_seqs_[slot] = batch_seq_;
    }
}

std::span<const double> KeyDictionary::feature(std::size_t logical_index) const {
    if (logical_index >= count_)
        throw std::invalid_argument("KeyDictionary::feature: index out of range");
    return {features_.data() + physical(logical_index) * dim_, dim_};
}

IdentityLabel KeyDictionary::label(std::size_t logical_index) const {
    if (logical_index >= count_)
        throw std::invalid_argument("KeyDictionary::label: index out of range");
    return labels_[physical(logical_index)];
}

std::uint64_t KeyDictionary::batch_seq_of(std::size_t logical_index) const {
    if (logical_index >= count_)
        throw std::invalid_argument("KeyDictionary::batch_seq_of: index out of range");
    return batch_seqs_[physical(logical_index)];
}

bool KeyDictionary::is_current(std::size_t logical_index) const {
    return batch_seq_of(logical_index) == batch_seq_;
}

LabeledSets KeyDictionary::label_dictionary(IdentityLabel query_label,
                                            std::size_t query_entry_index,
                                            bool include_past_positives) const {
    if (query_entry_index >= count_)
        throw std::invalid_argument("label_dictionary: query index out of range");
    if (!is_current(query_entry_index))
        throw std::invalid_argument("label_dictionary: query entry is not from the current batch");

    LabeledSets sets;
    for (std::size_t i = 0; i < count_; ++i) {
        std::size_t slot = physical(i);
        if (labels_[slot] != query_label) {
            sets.negative_indices.push_back(i);
        } else if (i != query_entry_index &&
                   (batch_seqs_[slot] == batch_seq_ || include_past_positives)) {
            sets.positive_indices.push_back(i);
        }
        // past same-identity entries (and the query itself) land in neither set
    }

    sets.positives = EmbeddingMatrix(sets.positive_indices.size(), dim_);
    for (std::size_t i = 0; i < sets.positive_indices.size(); ++i)
        sets.positives.set_row(i, feature(sets.positive_indices[i]));
    sets.negatives = EmbeddingMatrix(sets.negative_indices.size(), dim_);
    for (std::size_t i = 0; i < sets.negative_indices.size(); ++i)
        sets.negatives.set_row(i, feature(sets.negative_indices[i]));
    return sets;
}

void KeyDictionary::save_snapshot(std::ostream& out) const {
    io::write_magic(out, "MRID");
    io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(count_));
    for (std::size_t i = 0; i < count_; ++i) {
        auto f = feature(i);
        for (double v : f) io::write_raw<float>(out, static_cast<float>(v));
        io::write_raw<std::uint32_t>(out, label(i).id);
        io::write_raw<std::uint64_t>(out, batch_seq_of(i));
    }
}

void KeyDictionary::save_snapshot(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_snapshot: cannot open " + path);
    save_snapshot(out);
}

KeyDictionary KeyDictionary::load_snapshot(std::istream& in, std::size_t capacity) {
    io::expect_magic(in, "MRID");
    auto dim = io::read_raw<std::uint32_t>(in);
    auto count = io::read_raw<std::uint32_t>(in);
    if (capacity != 0 && count > capacity)
        throw std::invalid_argument("load_snapshot: snapshot holds more entries than capacity");
    KeyDictionary dict(capacity == 0 ? std::max<std::size_t>(count, 1) : capacity, dim);
    std::vector<double> row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        for (auto& v : row) v = io::read_raw<float>(in);
        auto label = io::read_raw<std::uint32_t>(in);
        auto seq = io::read_raw<std::uint64_t>(in);
        std::size_t slot = (dict.head_ + dict.count_) % dict.capacity_;
        std::copy(row.begin(), row.end(),
                  dict.features_.begin() + static_cast<std::ptrdiff_t>(slot * dim));
        dict.labels_[slot] = IdentityLabel(label);
        dict.batch_seqs_[slot] = seq;
        ++dict.count_;
        dict.batch_seq_ = std::max(dict.batch_seq_, seq);
    }
    return dict;
}

KeyDictionary KeyDictionary::load_snapshot(const std::string& path, std::size_t capacity) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_snapshot: cannot open " + path);
    return load_snapshot(in, capacity);
}

}  // namespace heml
