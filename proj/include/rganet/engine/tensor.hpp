#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rganet {

using Index = std::int64_t;

/// Raised when tensor extents or parameter shapes do not line up.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Rank-4 extents in NCHW order.
struct Shape4 {
    Index n = 0, c = 0, h = 0, w = 0;

    Shape4() = default;
    Shape4(Index n_, Index c_, Index h_, Index w_) : n(n_), c(c_), h(h_), w(w_) {}

    Index numel() const { return n * c * h * w; }

    bool operator==(const Shape4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    bool operator!=(const Shape4& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <typename Scalar>
class Tape;

/// Dense NCHW tensor with shared, copy-on-construct storage. Ops never
/// mutate an input tensor; they allocate fresh storage for their output.
/// `node`/`tape` tie the tensor into an active gradient tape when set.
template <typename Scalar>
class Tensor {
public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Tensor() = default;

    explicit Tensor(Shape4 s)
        : shape_(s), data_(std::make_shared<Storage>(Storage::Zero(s.numel()))) {}

    Tensor(Shape4 s, std::shared_ptr<Storage> d) : shape_(s), data_(std::move(d)) {
        check(static_cast<Index>(data_->size()) == shape_.numel(),
              "tensor data length " + std::to_string(data_->size()) +
                  " does not match shape " + shape_.str());
    }

    static Tensor zeros(Shape4 s) { return Tensor(s); }

    static Tensor full(Shape4 s, Scalar v) {
        Tensor t(s);
        t.data_->setConstant(v);
        return t;
    }

    static Tensor from_values(Shape4 s, const std::vector<Scalar>& v) {
        check(static_cast<Index>(v.size()) == s.numel(),
              "value count does not match shape " + s.str());
        Tensor t(s);
        for (Index i = 0; i < s.numel(); ++i) (*t.data_)(i) = v[static_cast<size_t>(i)];
        return t;
    }

    const Shape4& shape() const { return shape_; }
    Index numel() const { return shape_.numel(); }
    bool defined() const { return static_cast<bool>(data_); }

    const Storage& array() const { return *data_; }
    const std::shared_ptr<Storage>& storage() const { return data_; }

    /// Writable view of the underlying buffer. Used while a tensor is being
    /// built (initializers, loaders, tests); shared with every copy of this
    /// tensor, so never call it on a value that already fed an op.
    Storage& raw() { return *data_; }

    Index offset(Index n, Index c, Index h, Index w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    Scalar operator()(Index n, Index c, Index h, Index w) const {
        return (*data_)(offset(n, c, h, w));
    }

    Scalar scalar() const {
        check(numel() == 1, "expected a scalar tensor, got shape " + shape_.str());
        return (*data_)(0);
    }

    /// Cast element type (always deep-copies; drops any tape link).
    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_);
        out.raw() = data_->template cast<Other>();
        return out;
    }

    bool all_finite() const { return data_->isFinite().all(); }

    // Tape linkage; -1 means untracked.
    int node = -1;
    Tape<Scalar>* tape = nullptr;

private:
    Shape4 shape_{};
    std::shared_ptr<Storage> data_;
};

/// First active tape among a set of (possibly null) tensors.
template <typename Scalar>
Tape<Scalar>* tape_of(std::initializer_list<const Tensor<Scalar>*> ts) {
    for (const Tensor<Scalar>* t : ts)
        if (t && t->tape) return t->tape;
    return nullptr;
}

} // namespace rganet
