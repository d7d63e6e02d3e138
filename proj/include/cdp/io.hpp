#pragma once

#include "cdp/embedding.hpp"
#include "cdp/tensor.hpp"

#include <string>
#include <vector>

namespace cdp::io {

// Binary layouts (all integers little-endian, all reals IEEE-754 binary32):
//
//   CDPT: 'C''D''P''T', u8 version=1, u32 N, u32 P, u32 T, u32 reserved=0,
//         then N*N*P*T floats in (i, j, k, t) row-major order.
//   CDPE: 'C''D''P''E', u8 version=1, u32 N, u32 T, u32 dim,
//         then N*T*dim floats in (clip, advance, component) row-major order.
//
// Each payload file is accompanied by a UTF-8 JSON sidecar carrying the
// non-numeric metadata (clip ids, prompt strings, provenance, captions).

struct TensorSidecar {
    std::vector<std::string> clip_ids;
    std::vector<std::string> prompts;
    Provenance provenance = Provenance::exact;
    /// Optional caption text, flat [j][k][t]; empty when the producing
    /// pipeline had no caption source.
    std::vector<std::string> captions;
};

struct EmbeddingSidecar {
    std::vector<std::string> clip_ids;
};

void write_tensor(const std::string& path, const SimilarityTensor& tensor);
SimilarityTensor read_tensor(const std::string& path);

void write_tensor_sidecar(const std::string& path, const TensorSidecar& sidecar);
TensorSidecar read_tensor_sidecar(const std::string& path);

void write_embeddings(const std::string& path, const ClipSet& clips);
/// Reads a CDPE payload and pairs it with the clip ids from its sidecar.
ClipSet read_embeddings(const std::string& path, const std::string& sidecar_path);

void write_embedding_sidecar(const std::string& path, const EmbeddingSidecar& sidecar);
EmbeddingSidecar read_embedding_sidecar(const std::string& path);

}  // namespace cdp::io
