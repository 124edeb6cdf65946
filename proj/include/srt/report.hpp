#pragma once

#include <map>
#include <string>
#include <vector>

#include "srt/data.hpp"
#include "srt/model.hpp"
#include "srt/optimizer.hpp"

namespace srt {

// ---------------------------------------------------------------------------
// Flat key=value configuration text ('#' starts a comment anywhere on a
// line).  Parsing and rendering round-trip exactly, so a config echoed into
// a report re-parses to the same settings.
// ---------------------------------------------------------------------------

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::string& path);
std::string render_config(const ConfigMap& map);

// Training settings plus the two "auto" ridge markers (resolved against the
// dataset's feature count once it is known).
struct ResolvedConfig {
    TrainConfig train;
    bool lambda_omega_auto = true;
    bool lambda_beta_auto = true;
};

// Overlays config-file entries onto `base`.  Unknown keys and unparsable
// values raise InvalidInputError.  lambda_omega / lambda_beta accept the
// literal value "auto".
ResolvedConfig apply_config(const ConfigMap& map, const TrainConfig& base = {});

// Fills auto ridges: lambda_omega = 2/(p * #branches), lambda_beta =
// 2/(p * #leaves) at the configured depth.
void resolve_auto_lambdas(ResolvedConfig& rc, int p);

// Full settings back as a ConfigMap (auto ridges echo as "auto").
ConfigMap describe_config(const ResolvedConfig& rc);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Model persistence (JSON; row per heap node).
// ---------------------------------------------------------------------------

struct ModelFile {
    SrtModel model;
    std::vector<std::string> feature_names;
    PreprocessParams normalization;
};

void save_model(const std::string& path, const ModelFile& mf);
ModelFile load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Iteration trace: one line per inner iteration,
//   k, macro_it, node_t, step_kind, E_after_bn, E_after_ln
// ---------------------------------------------------------------------------

std::string render_trace(const std::vector<IterRecord>& trace);

// Writes '#'-prefixed summary lines (initial/best error, clustering score
// when present) followed by the record lines.
void save_trace(const std::string& path, const FitReport& report);

} // namespace srt
