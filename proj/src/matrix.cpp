#include "heml/matrix.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace heml {

void GroupedBatch::validate() const {
    if (groups < 2 || per_group < 2)
        throw std::invalid_argument("GroupedBatch: need C >= 2 and N >= 2");
    if (features.rows != size() || labels.size() != size())
        throw std::invalid_argument("GroupedBatch: features/labels size != C * N");
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& l : labels) ++counts[l.id];
    if (counts.size() != groups)
        throw std::invalid_argument("GroupedBatch: label count != C distinct identities");
    for (const auto& [id, n] : counts)
        if (n != per_group)
            throw std::invalid_argument("GroupedBatch: identity " + std::to_string(id) +
                                        " occurs " + std::to_string(n) + " times, expected N");
}

void DistanceList::sort_ascending() {
    if (values.size() != sample_indices.size())
        throw std::invalid_argument("DistanceList: values and sample_indices differ in length");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return sample_indices[a] < sample_indices[b];
    });
    std::vector<double> v(values.size());
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        v[i] = values[order[i]];
        idx[i] = sample_indices[order[i]];
    }
    values = std::move(v);
    sample_indices = std::move(idx);
    sorted = true;
}

}  // namespace heml
