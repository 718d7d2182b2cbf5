#pragma once

#include <functional>
#include <vector>

#include "waveud/errors.hpp"
#include "waveud/tensor.hpp"

namespace waveud {

// Define-by-run gradient tape. Ops append one backward rule per recorded
// node; backward() seeds the scalar loss with 1 and replays the rules in
// reverse recording order. Leaf gradients accumulate, so callers owning
// persistent parameters zero them between passes (AdamW::zero_grad does).
template <typename T>
class Tape {
public:
    void record(std::function<void()> backward_rule) { nodes_.push_back(std::move(backward_rule)); }

    std::size_t size() const { return nodes_.size(); }

    void backward(const TensorPtr<T>& loss) {
        if (loss->size() != 1)
            throw usage_error("backward: loss must be scalar, got shape " + loss->shape_str());
        loss->grad()[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

} // namespace waveud
