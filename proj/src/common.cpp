#include "adafuse/common.hpp"

namespace adafuse {

ParamTensor& ParamStore::add(ParamTensor t) {
    if (has(t.name())) {
        throw UsageError("duplicate tensor name '" + t.name() + "'");
    }
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name() == name) return true;
    }
    return false;
}

ParamTensor& ParamStore::at(const std::string& name) {
    for (auto& t : tensors_) {
        if (t.name() == name) return t;
    }
    throw UsageError("no tensor named '" + name + "'");
}

const ParamTensor& ParamStore::at(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name() == name) return t;
    }
    throw UsageError("no tensor named '" + name + "'");
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

void ParamStore::check_finite() const {
    for (const auto& t : tensors_) t.check_finite();
}

void ParamStore::zero() {
    for (auto& t : tensors_) t.fill(0.0);
}

ParamStore ParamStore::zeros_like(const ParamStore& other) {
    ParamStore out;
    for (const auto& t : other) {
        if (t.rank() == 1) {
            out.add(ParamTensor(t.name(), t.shape()[0]));
        } else {
            out.add(ParamTensor(t.name(), t.shape()[0], t.shape()[1]));
        }
    }
    return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

}  // namespace adafuse
