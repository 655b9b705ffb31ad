#include "adaptlab/parameters.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdio>
#include <memory>

namespace adaptlab {

ParameterStore::ParameterStore(const ParameterStore& other) : index_(other.index_) {
  entries_.reserve(other.entries_.size());
  for (const auto& p : other.entries_) entries_.push_back({p.name, p.group, p.value.clone()});
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Tensor ParameterStore::add(const std::string& name, const std::string& group, Tensor value) {
  ADAPTLAB_REQUIRE(!contains(name), "duplicate parameter name: " + name);
  ADAPTLAB_REQUIRE(!group.empty(), "parameter " + name + " needs a group");
  index_.emplace(name, entries_.size());
  entries_.push_back({name, group, std::move(value)});
  return entries_.back().value;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  ADAPTLAB_REQUIRE(it != index_.end(), "unknown parameter: " + name);
  return entries_[it->second].value;
}

const Tensor& ParameterStore::get(const std::string& name) const { return entry(name).value; }

const Parameter& ParameterStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  ADAPTLAB_REQUIRE(it != index_.end(), "unknown parameter: " + name);
  return entries_[it->second];
}

std::vector<std::string> ParameterStore::names_in_group(const std::string& group) const {
  std::vector<std::string> out;
  for (const auto& p : entries_)
    if (p.group == group) out.push_back(p.name);
  return out;
}

std::set<std::string> ParameterStore::groups() const {
  std::set<std::string> out;
  for (const auto& p : entries_) out.insert(p.group);
  return out;
}

std::size_t ParameterStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.numel();
  return n;
}

void ParameterStore::set_trainable(const std::set<std::string>& names) {
  for (const auto& n : names) ADAPTLAB_REQUIRE(contains(n), "unknown parameter: " + n);
  for (auto& p : entries_) p.value.set_requires_grad(names.count(p.name) != 0);
}

std::set<std::string> ParameterStore::trainable_names() const {
  std::set<std::string> out;
  for (const auto& p : entries_)
    if (p.value.requires_grad()) out.insert(p.name);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : entries_) p.value.zero_grad();
}

std::size_t ParameterStore::copy_matching(const ParameterStore& other, const std::set<std::string>& groups) {
  std::size_t copied = 0;
  for (auto& p : entries_) {
    if (!groups.count(p.group) || !other.contains(p.name)) continue;
    const Tensor& src = other.get(p.name);
    if (src.shape() != p.value.shape()) continue;
    auto dst = p.value.mutable_values();
    std::copy(src.values().begin(), src.values().end(), dst.begin());
    ++copied;
  }
  return copied;
}

GradientMap forward_backward(const Tensor& loss, ParameterStore& params) {
  ADAPTLAB_REQUIRE(loss.defined() && loss.numel() == 1, "forward_backward needs a scalar loss");
  params.zero_grad();
  backward(loss);
  GradientMap out;
  for (const auto& p : params.entries()) {
    if (!p.value.requires_grad()) continue;
    std::vector<double> g = p.value.has_grad() ? std::vector<double>(p.value.grad().begin(), p.value.grad().end())
                                               : std::vector<double>(p.value.numel(), 0.0);
    out.emplace(p.name, Tensor(p.value.shape(), std::move(g)));
  }
  return out;
}

std::string hash_parameters(const ParameterStore& params, const std::set<std::string>& names) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  auto feed_u64 = [&](std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    EVP_DigestUpdate(ctx.get(), bytes, 8);
  };
  for (const auto& p : params.entries()) {
    if (!names.count(p.name)) continue;
    EVP_DigestUpdate(ctx.get(), p.name.data(), p.name.size());
    feed_u64(p.value.rank());
    for (auto d : p.value.shape()) feed_u64(d);
    for (double v : p.value.values()) feed_u64(std::bit_cast<std::uint64_t>(v));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string hash_group(const ParameterStore& params, const std::string& group) {
  auto names = params.names_in_group(group);
  return hash_parameters(params, std::set<std::string>(names.begin(), names.end()));
}

}  // namespace adaptlab
