#pragma once

#include <string>
#include <vector>

#include "rtcan/types.hpp"

namespace rtcan {

// Dataset file formats. UTF-8, LF or CRLF, decimal floating point.
//
//   EDA CSV:       subject_id,stimulus_id,sampling_hz,s0,s1,...   (no header,
//                  variable trailing sample columns, one row per trace)
//   Annotations:   subject_id,stimulus_id,valence,arousal          (header row)
//   Features:      stimulus_id,f0,...,f{D-1}                       (header row
//                  declares the feature dimension D)
//
// Readers tolerate a header on every format; writers emit the layouts above.

std::vector<EdaTrace> read_eda_csv(const std::string& path);
void write_eda_csv(const std::string& path, const std::vector<EdaTrace>& traces);

std::vector<AnnotationRecord> read_annotations_csv(const std::string& path);
void write_annotations_csv(const std::string& path,
                           const std::vector<AnnotationRecord>& records);

std::vector<StimulusFeatures> read_stimulus_features_csv(const std::string& path);
void write_stimulus_features_csv(const std::string& path,
                                 const std::vector<StimulusFeatures>& rows);

// Decomposition output, one file per trace: t_s,origin,phasic,tonic,driver,residual.
void write_decomposition_csv(const std::string& path, double sampling_hz,
                             const DecomposedEda& d);

// 64-bit FNV-1a over the file bytes, hex-encoded; used by run manifests.
std::string file_digest(const std::string& path);

}  // namespace rtcan
