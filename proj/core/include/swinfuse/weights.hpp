#pragma once

#include "swinfuse/errors.hpp"
#include "swinfuse/tensor.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace swinfuse {

// Ordered name -> tensor container backing the SWNF weight file.
class WeightStore {
public:
    void add(std::string name, Tensor<float> tensor);
    bool contains(const std::string& name) const;
    const Tensor<float>& get(const std::string& name) const;   // FormatError when missing
    std::size_t count() const { return entries_.size(); }

    const std::vector<std::pair<std::string, Tensor<float>>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, Tensor<float>>> entries_;
};

// SWNF file format, bit-exact:
//   magic "SWNF" | u32le version=1 | u32le tensor count
//   per tensor: u32le name length | name bytes | u32le rank | u32le dims[rank]
//               | f32le data
//   u32le CRC32 of all preceding bytes
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

} // namespace swinfuse
