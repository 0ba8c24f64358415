// Model checkpoint file.
//
//   "MDGM", u16 version
//   repeated until EOF:
//     u32 name length, name bytes, u32 rank, rank x u32 dims, f32 row-major data
// All integers and floats little-endian.
#pragma once

#include "mdgmix/io.hpp"
#include "mdgmix/model.hpp"

#include <map>

namespace mdgmix {

inline constexpr char kCheckpointMagic[4] = {'M', 'D', 'G', 'M'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& os, ModelState& state) {
  os.write(kCheckpointMagic, 4);
  io::detail::put_u16(os, kCheckpointVersion);
  for (const auto& p : named_parameters(state)) {
    io::detail::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    io::detail::put_u32(os, 2);
    io::detail::put_u32(os, static_cast<std::uint32_t>(p.value->rows()));
    io::detail::put_u32(os, static_cast<std::uint32_t>(p.value->cols()));
    for (Eigen::Index i = 0; i < p.value->rows(); ++i)
      for (Eigen::Index j = 0; j < p.value->cols(); ++j) io::detail::put_f32(os, (*p.value)(i, j));
  }
}

inline void save_checkpoint(const std::filesystem::path& path, ModelState state) {
  auto out = io::detail::open_out(path, true);
  save_checkpoint(out, state);
}

inline ModelState load_checkpoint(std::istream& is, const std::string& name = "checkpoint") {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ValidationError(name + ": bad magic (expected MDGM)");
  const auto version = io::detail::get_u16(is, name + " version");
  if (version != kCheckpointVersion) throw ValidationError(name + ": unsupported version " + std::to_string(version));

  std::map<std::string, Matrix> found;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = io::detail::get_u32(is, name + " entry");
    if (len > 4096) throw ValidationError(name + ": implausible parameter name length");
    std::string pname(len, '\0');
    if (!is.read(pname.data(), len)) throw ValidationError(name + ": truncated parameter name");
    const auto rank = io::detail::get_u32(is, name + " rank");
    if (rank < 1 || rank > 2) throw ValidationError(name + ": parameter " + pname + " has unsupported rank");
    std::uint32_t dims[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r) dims[r] = io::detail::get_u32(is, name + " dims");
    const std::uint32_t rows = rank == 2 ? dims[0] : 1;
    const std::uint32_t cols = rank == 2 ? dims[1] : dims[0];
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = io::detail::get_f32(is, name + " data");
    found[pname] = std::move(m);
  }
  ModelState state;
  for (const auto& p : named_parameters(state)) {
    auto it = found.find(std::string(p.name));
    if (it == found.end()) throw ValidationError(name + ": missing parameter " + std::string(p.name));
    *p.value = std::move(it->second);
  }
  const auto h = state.encoder.w1.cols();
  if (state.encoder.w2.rows() != h || state.encoder.w2.cols() != h || state.discriminator.w.rows() != h ||
      state.discriminator.w.cols() != 2 || state.decomposer.w.rows() != h ||
      state.discriminator.b.cols() != 2 || state.decomposer.b.cols() != state.decomposer.w.cols())
    throw DimensionError(name + ": inconsistent parameter shapes");
  return state;
}

inline ModelState load_checkpoint(const std::filesystem::path& path) {
  auto in = io::detail::open_in(path, true);
  return load_checkpoint(in, path.string());
}

/// FNV-1a over the exact bytes of the encoder weights (double precision).
inline std::uint64_t encoder_hash(const EncoderParams& enc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Matrix* m : {&enc.w1, &enc.w2}) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m->data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(m->size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace mdgmix
